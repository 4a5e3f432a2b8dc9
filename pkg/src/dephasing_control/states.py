"""Register states, density matrices and the field-diagonalizing bases.

Qubit levels are ordered ``|g> = 0``, ``|e> = 1`` and qubit 0 is the most
significant factor of the computational index. All bases live in the frame
rotating at the qubit frequency, so the carrier phases in the textbook
definitions are unity:

* single qubit: ``|+-> = (|e> +- |g>) / sqrt 2`` (digits 0, 1);
* pair ``(k, k')``: ``|Psi+->  = (|eg> +- |ge>) / sqrt 2`` (digits 0, 1) and
  ``|Phi+-> = (|ee> +- |gg>) / sqrt 2`` (digits 2, 3), ``k`` written first.

A diagonal basis is labelled by its pairing; its index is the mixed-radix
number formed by the units' digits, units ordered by their lowest qubit.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

__all__ = [
    "COMPUTATIONAL",
    "SINGLE_DIAG",
    "TWO_DIAG",
    "BasisMap",
    "QuantumState",
    "DensityMatrix",
    "basis_transform",
    "basis_matrix",
    "kron_states",
    "embed_operator",
    "assemble_units",
    "ket",
]

COMPUTATIONAL = "computational"
SINGLE_DIAG = "single-diag"
TWO_DIAG = "two-diag"
_TAGS = (COMPUTATIONAL, SINGLE_DIAG, TWO_DIAG)

_S = 1 / np.sqrt(2)
# columns: unit basis states in the unit's computational coordinates
_SINGLE_COLS = np.array([[_S, -_S],     # |g> component of |+>, |->
                         [_S, _S]], dtype=complex)
_PAIR_COLS = np.zeros((4, 4), dtype=complex)
_GG, _GE, _EG, _EE = range(4)
_PAIR_COLS[[_EG, _GE], 0] = _S, _S      # Psi+
_PAIR_COLS[[_EG, _GE], 1] = _S, -_S     # Psi-
_PAIR_COLS[[_EE, _GG], 2] = _S, _S      # Phi+
_PAIR_COLS[[_EE, _GG], 3] = _S, -_S     # Phi-

_SINGLE_LABELS = ("+", "-")
_PAIR_LABELS = ("Psi+", "Psi-", "Phi+", "Phi-")


def ket(label: str) -> np.ndarray:
    """Product state from characters ``g e 0 1 + - u d`` (``u``/``d`` = up/down).

    ``|up/down> = (i|1> +- |0>) / sqrt 2`` with ``|1> = |e>``.
    """
    single = {
        "g": [1, 0], "0": [1, 0], "e": [0, 1], "1": [0, 1],
        "+": [_S, _S], "-": [-_S, _S],
        "u": [_S, 1j * _S], "d": [-_S, 1j * _S],
    }
    return kron_states([np.array(single[c], dtype=complex) for c in label])


def kron_states(vectors: Sequence[np.ndarray]) -> np.ndarray:
    out = np.ones(1, dtype=complex)
    for v in vectors:
        out = np.kron(out, v)
    return out


def _check_pairing(n_qubits: int, pairing) -> tuple:
    pairs = tuple(tuple(sorted(int(q) for q in p)) for p in (pairing or ()))
    used = set()
    for p in pairs:
        if len(p) != 2 or p[0] == p[1]:
            raise ValueError(f"pair {p} must hold two distinct qubits")
        if p[1] >= n_qubits:
            raise ValueError(f"pair {p} outside a {n_qubits}-qubit register")
        if used & set(p):
            raise ValueError(f"incompatible pairing {pairs}: qubits shared between pairs")
        used |= set(p)
    return tuple(sorted(pairs))


def _units(n_qubits: int, pairs: tuple) -> list:
    paired = {q for p in pairs for q in p}
    units = list(pairs) + [(q,) for q in range(n_qubits) if q not in paired]
    return sorted(units, key=lambda u: u[0])


def assemble_units(ops: Sequence[np.ndarray], units: Sequence[tuple], n_qubits: int) -> np.ndarray:
    """Tensor product of per-unit operators placed on their qubits.

    ``ops[i]`` has shape (..., d_i, d_i) acting on qubits ``units[i]`` (in that
    order); leading batch axes are broadcast. The units must cover the register.
    """
    order = [q for u in units for q in u]
    if sorted(order) != list(range(n_qubits)):
        raise ValueError("units must partition the register")
    out = ops[0]
    for op in ops[1:]:
        batch = np.broadcast_shapes(out.shape[:-2], op.shape[:-2])
        a, b = out.shape[-1], op.shape[-1]
        out = (out[..., :, None, :, None] * op[..., None, :, None, :]).reshape(batch + (a * b, a * b))
    batch = out.shape[:-2]
    nb = len(batch)
    tensor = out.reshape(batch + (2,) * (2 * n_qubits))
    inv = np.argsort(order)
    axes = list(range(nb)) + [nb + i for i in inv] + [nb + n_qubits + i for i in inv]
    return tensor.transpose(axes).reshape(batch + (2**n_qubits, 2**n_qubits))


def embed_operator(op: np.ndarray, qubits: Sequence[int], n_qubits: int) -> np.ndarray:
    """Operator on ``qubits`` tensored with identities on the rest."""
    rest = [(q,) for q in range(n_qubits) if q not in qubits]
    return assemble_units([np.asarray(op, dtype=complex)] + [np.eye(2)] * len(rest),
                          [tuple(qubits)] + rest, n_qubits)


@dataclass(frozen=True)
class BasisMap:
    """Index <-> digit-string bookkeeping of a diagonal basis.

    With no pairs every digit is binary (``0 -> |+>``, ``1 -> |->``); a pair
    contributes a quartary digit (``Psi+, Psi-, Phi+, Phi-``).
    """

    n_qubits: int
    pairing: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "pairing", _check_pairing(self.n_qubits, self.pairing))

    @property
    def units(self) -> list:
        return _units(self.n_qubits, self.pairing)

    @property
    def radices(self) -> list:
        return [2 ** len(u) for u in self.units]

    @property
    def dim(self) -> int:
        return 2**self.n_qubits

    def digits(self, index: int) -> tuple:
        if not 0 <= index < self.dim:
            raise IndexError(index)
        out = []
        for r in reversed(self.radices):
            index, d = divmod(index, r)
            out.append(d)
        return tuple(reversed(out))

    def index(self, digits: Sequence[int]) -> int:
        if len(digits) != len(self.radices):
            raise ValueError("wrong number of digits")
        out = 0
        for d, r in zip(digits, self.radices):
            if not 0 <= d < r:
                raise ValueError(f"digit {d} out of range for radix {r}")
            out = out * r + d
        return out

    def label(self, index: int) -> str:
        names = []
        for d, u in zip(self.digits(index), self.units):
            names.append((_PAIR_LABELS if len(u) == 2 else _SINGLE_LABELS)[d])
        return "|" + ",".join(names) + ">"

    def matrix(self) -> np.ndarray:
        """Unitary whose columns are the basis states in computational coordinates."""
        units = self.units
        out = np.ones((1, 1), dtype=complex)
        for u in units:
            out = np.kron(out, _PAIR_COLS if len(u) == 2 else _SINGLE_COLS)
        # rows are computational indices in unit order; columns stay mixed-radix
        order = [q for u in units for q in u]
        n = self.n_qubits
        rows = out.reshape((2,) * n + (self.dim,)).transpose(list(np.argsort(order)) + [n])
        return rows.reshape(self.dim, self.dim)


def basis_matrix(tag: str, n_qubits: int, pairing=()) -> np.ndarray:
    if tag not in _TAGS:
        raise ValueError(f"unknown basis tag {tag!r}")
    if tag == COMPUTATIONAL:
        return np.eye(2**n_qubits, dtype=complex)
    if tag == SINGLE_DIAG:
        return BasisMap(n_qubits, ()).matrix()
    if not pairing:
        raise ValueError("two-diag basis needs a pairing")
    return BasisMap(n_qubits, pairing).matrix()


def _n_qubits(dim: int) -> int:
    n = int(round(np.log2(dim)))
    if 2**n != dim:
        raise ValueError(f"dimension {dim} is not a power of two")
    return n


@dataclass(frozen=True, eq=False)
class QuantumState:
    amplitudes: np.ndarray
    basis: str = COMPUTATIONAL
    pairing: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "amplitudes", np.asarray(self.amplitudes, dtype=complex).reshape(-1))
        if self.basis not in _TAGS:
            raise ValueError(f"unknown basis tag {self.basis!r}")
        object.__setattr__(self, "pairing", tuple(tuple(p) for p in self.pairing))
        _n_qubits(self.amplitudes.size)

    @property
    def n_qubits(self) -> int:
        return _n_qubits(self.amplitudes.size)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def density(self) -> "DensityMatrix":
        a = self.amplitudes
        return DensityMatrix(np.outer(a, a.conj()), self.basis, self.pairing)

    def to_json(self) -> str:
        return _dump("state", self.basis, self.pairing, self.amplitudes)

    @classmethod
    def from_json(cls, text: str) -> "QuantumState":
        kind, basis, pairing, data = _load(text)
        return cls(data, basis, pairing)


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    entries: np.ndarray
    basis: str = COMPUTATIONAL
    pairing: tuple = ()

    def __post_init__(self):
        rho = np.asarray(self.entries, dtype=complex)
        if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
            raise ValueError("density matrix must be square")
        object.__setattr__(self, "entries", rho)
        object.__setattr__(self, "pairing", tuple(tuple(p) for p in self.pairing))
        if self.basis not in _TAGS:
            raise ValueError(f"unknown basis tag {self.basis!r}")
        _n_qubits(rho.shape[0])

    @property
    def n_qubits(self) -> int:
        return _n_qubits(self.entries.shape[0])

    @property
    def trace(self) -> complex:
        return complex(np.trace(self.entries))

    def hermiticity_error(self) -> float:
        return float(np.max(np.abs(self.entries - self.entries.conj().T)))

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(0.5 * (self.entries + self.entries.conj().T))[0])

    def to_json(self) -> str:
        return _dump("density", self.basis, self.pairing, self.entries)

    @classmethod
    def from_json(cls, text: str) -> "DensityMatrix":
        kind, basis, pairing, data = _load(text)
        return cls(data, basis, pairing)


def _dump(kind, basis, pairing, data) -> str:
    flat = np.asarray(data).reshape(-1)
    doc = {
        "kind": kind,
        "basis": basis,
        "pairing": [list(p) for p in pairing],
        "dimension": int(np.asarray(data).shape[0]),
        "entries": [[float(z.real), float(z.imag)] for z in flat],
    }
    return json.dumps(doc)


def _load(text: str):
    doc = json.loads(text)
    dim = int(doc["dimension"])
    flat = np.array([complex(re, im) for re, im in doc["entries"]])
    data = flat if doc["kind"] == "state" else flat.reshape(dim, dim)
    return doc["kind"], doc["basis"], tuple(tuple(p) for p in doc.get("pairing", [])), data


def basis_transform(obj, to: str, pairing=None, frm: str | None = None):
    """Change the basis of a state, density matrix or raw array.

    ``frm`` defaults to the object's own tag (raw arrays: computational);
    ``pairing`` defaults to the object's pairing and is required whenever
    either side is the two-qubit diagonal basis.
    """
    if isinstance(obj, (QuantumState, DensityMatrix)):
        frm = obj.basis if frm is None else frm
        src_pairing = obj.pairing
    else:
        frm = COMPUTATIONAL if frm is None else frm
        src_pairing = ()
    pairing = src_pairing if pairing is None else tuple(tuple(p) for p in pairing)
    if isinstance(obj, QuantumState):
        data = obj.amplitudes
    elif isinstance(obj, DensityMatrix):
        data = obj.entries
    else:
        data = np.asarray(obj, dtype=complex)
    n = _n_qubits(data.shape[0])
    b_from = basis_matrix(frm, n, src_pairing if frm == TWO_DIAG and src_pairing else pairing)
    b_to = basis_matrix(to, n, pairing)
    m = b_to.conj().T @ b_from
    out_pairing = pairing if to == TWO_DIAG else ()
    if data.ndim == 1:
        res = m @ data
        return QuantumState(res, to, out_pairing) if isinstance(obj, QuantumState) else res
    res = m @ data @ m.conj().T
    return DensityMatrix(res, to, out_pairing) if isinstance(obj, DensityMatrix) else res
