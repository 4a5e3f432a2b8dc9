"""Fidelities of noisy protocols: state fidelity, Monte Carlo and Haar averages."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from .evolution import _n_qubits, ideal_unitary, realization_unitaries
from .noise import NoiseModel
from .states import COMPUTATIONAL, DensityMatrix, QuantumState, basis_transform

__all__ = [
    "FidelityReport",
    "fidelity",
    "error",
    "haar_state",
    "haar_states",
    "state_fidelity_mc",
    "average_fidelity_mc",
]

PSD_TOLERANCE = 1e-10


@dataclass(frozen=True)
class FidelityReport:
    fidelity: float
    std_err: float
    n_realizations: int
    n_initial_states: int
    method: str

    @property
    def error(self) -> float:
        return 1.0 - self.fidelity

    def to_dict(self) -> dict:
        d = asdict(self)
        d["error"] = self.error
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=list(self.to_dict()), lineterminator="\n")
        writer.writeheader()
        writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in self.to_dict().items()})
        return buf.getvalue()


def _as_matrix(x) -> np.ndarray:
    if isinstance(x, QuantumState):
        v = basis_transform(x, COMPUTATIONAL).amplitudes
        return np.outer(v, v.conj())
    if isinstance(x, DensityMatrix):
        return basis_transform(x, COMPUTATIONAL).entries
    a = np.asarray(x, dtype=complex)
    return np.outer(a, a.conj()) if a.ndim == 1 else a


def fidelity(target, rho) -> float:
    """``Tr(sqrt(target) rho sqrt(target))``, equal to ``<psi|rho|psi>`` for a pure target.

    This is the unsquared form, linear in ``rho``. Raises ``ValueError``
    when the target is not positive semidefinite.
    """
    t = _as_matrix(target)
    r = _as_matrix(rho)
    if t.shape != r.shape:
        raise ValueError(f"shape mismatch {t.shape} vs {r.shape}")
    t = 0.5 * (t + t.conj().T)
    w, v = np.linalg.eigh(t)
    if w.min() < -PSD_TOLERANCE:
        raise ValueError(f"target is not positive semidefinite (min eigenvalue {w.min():.3g})")
    s = (v * np.sqrt(np.clip(w, 0.0, None))) @ v.conj().T
    return float(np.real(np.trace(s @ r @ s)))


def error(report: FidelityReport) -> float:
    return report.error


def haar_state(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-random pure state: normalized complex Gaussian vector."""
    z = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    return z / np.linalg.norm(z)


def haar_states(dim: int, count: int, seed) -> np.ndarray:
    """``count`` Haar states as columns, from a stream independent of the noise."""
    seed = list(seed) if isinstance(seed, (list, tuple)) else [int(seed)]
    rng = np.random.default_rng([*seed, 2**31 - 1])
    return np.stack([haar_state(dim, rng) for _ in range(count)], axis=1)


def _split_axes(data_qubits, n_qubits):
    rest = [q for q in range(n_qubits) if q not in data_qubits]
    return list(data_qubits) + rest, rest


def _embed_data(states: np.ndarray, data_qubits: Sequence[int], n_qubits: int) -> np.ndarray:
    """Columns ``psi_data (x) |g...g>_rest`` in computational ordering."""
    order, rest = _split_axes(data_qubits, n_qubits)
    count = states.shape[1]
    staged = np.zeros((2**len(data_qubits), 2**len(rest), count), dtype=complex)
    staged[:, 0, :] = states
    staged = staged.reshape((2,) * n_qubits + (count,))
    full = staged.transpose(list(np.argsort(order)) + [n_qubits])
    return full.reshape(2**n_qubits, count)


def _data_rest(states: np.ndarray, data_qubits, n_qubits: int) -> np.ndarray:
    """Reshape (..., d, S) to (..., d_data, d_rest, S)."""
    order, rest = _split_axes(data_qubits, n_qubits)
    lead = states.shape[:-2]
    S = states.shape[-1]
    nl = len(lead)
    t = states.reshape(lead + (2,) * n_qubits + (S,))
    t = t.transpose(list(range(nl)) + [nl + q for q in order] + [nl + n_qubits])
    return t.reshape(lead + (2**len(data_qubits), 2**len(rest), S))


def _overlap_fidelities(out: np.ndarray, targets: np.ndarray, data_qubits, n_qubits: int) -> np.ndarray:
    """``<phi| Tr_rest(|out><out|) |phi>`` for batches ``out`` (R, d, S), targets (d_data, S)."""
    amp = np.einsum("ds,rdas->ras", targets.conj(), _data_rest(out, data_qubits, n_qubits))
    return np.sum(np.abs(amp) ** 2, axis=1)


def _reduce_pure(states: np.ndarray, data_qubits, n_qubits: int, tol: float = 1e-8) -> np.ndarray:
    """Data factor of product states ``phi (x) |g..g>``; errors otherwise."""
    out = _data_rest(states, data_qubits, n_qubits)[:, 0, :]
    if np.any(np.abs(np.linalg.norm(out, axis=0) - 1.0) > tol):
        raise ValueError("noiseless protocol does not return the other qubits to |g>; pass target_unitary")
    return out


def average_fidelity_mc(schedule, model: NoiseModel, n_states: int, n_realizations: int, seed,
                        target_unitary: np.ndarray | None = None, data_qubits: Sequence[int] | None = None,
                        dt: float | None = None, workers: int = 1, batch_size: int = 250) -> FidelityReport:
    """Monte Carlo fidelity averaged over noise and Haar-random data states.

    Data qubits start in Haar states, the remaining qubits in ``|g>``. The
    noisy output, reduced to the data qubits, is compared with the image of
    the input under ``target_unitary`` (acting on the data qubits; default:
    the noiseless protocol, which must then leave the rest in ``|g>``).
    """
    if n_states < 1 or n_realizations < 1:
        raise ValueError("counts must be at least 1")
    n = _n_qubits(schedule)
    data_qubits = list(range(n)) if data_qubits is None else [int(q) for q in data_qubits]
    psi_data = haar_states(2**len(data_qubits), n_states, seed)
    inputs = _embed_data(psi_data, data_qubits, n)
    if target_unitary is None:
        targets = _reduce_pure(ideal_unitary(schedule) @ inputs, data_qubits, n)
    else:
        targets = np.asarray(target_unitary, dtype=complex) @ psi_data
    F = np.empty((n_realizations, n_states))
    for idx, U in realization_unitaries(schedule, model, n_realizations, seed, dt, batch_size, workers):
        F[idx.start:idx.stop] = _overlap_fidelities(U @ inputs, targets, data_qubits, n)
    return _report(F, "monte-carlo-haar")


def state_fidelity_mc(psi0, target, schedule, model: NoiseModel, n_realizations: int, seed,
                      dt: float | None = None, workers: int = 1, batch_size: int = 250) -> FidelityReport:
    """Monte Carlo fidelity of one input state against a pure target state."""
    v = basis_transform(psi0 if isinstance(psi0, QuantumState) else QuantumState(psi0),
                        COMPUTATIONAL).amplitudes
    t = basis_transform(target if isinstance(target, QuantumState) else QuantumState(target),
                        COMPUTATIONAL).amplitudes
    F = np.empty((n_realizations, 1))
    for idx, U in realization_unitaries(schedule, model, n_realizations, seed, dt, batch_size, workers):
        F[idx.start:idx.stop, 0] = np.abs((U @ v) @ t.conj()) ** 2
    return _report(F, "monte-carlo-state")


def _report(F: np.ndarray, method: str) -> FidelityReport:
    """Mean and standard error; realization and state sampling variances add."""
    R, S = F.shape
    var = 0.0
    if R > 1:
        var += F.mean(axis=1).var(ddof=1) / R
    if S > 1:
        var += F.mean(axis=0).var(ddof=1) / S
    se = math.sqrt(var) if (R > 1 or S > 1) else float("nan")
    return FidelityReport(float(F.mean()), se, R, S, method)
