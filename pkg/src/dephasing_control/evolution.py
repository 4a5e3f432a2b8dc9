"""Hamiltonian assembly, noisy propagation and the second-order ensemble solution.

Everything is written in the frame rotating at the common qubit frequency,
so ``omega_0`` never appears. The rotating-wave Hamiltonian is::

    H(t) = sum_j delta_j(t) |e><e|_j
         + sum_j Omega_j(t) (|e><g|_j + h.c.)
         + sum_pairs Omega^Psi(t) (|ge><eg| + h.c.) + Omega^Phi(t) (|ee><gg| + h.c.)

Because every qubit belongs to exactly one unit (an undriven or singly driven
qubit, or a driven pair) the unit Hamiltonians commute and each step
propagator factorizes into 2x2 blocks: ``{g, e}`` for single units and
``{ge, eg}``, ``{gg, ee}`` for pairs. Each step is a fourth-order Magnus
step (exact field phase increment, exact integral of the linearly
interpolated noise, Gauss-Legendre commutator term) exponentiated in closed
form.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from functools import lru_cache
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .functional import nested_integral
from .noise import NoiseModel, NoiseRealization, sample_deltas
from .pulses import ROTATION_FACTOR, Schedule, ScheduleError, modulation
from .states import (COMPUTATIONAL, SINGLE_DIAG, TWO_DIAG, BasisMap, DensityMatrix, QuantumState,
                     assemble_units, basis_transform, embed_operator)

__all__ = [
    "NumericalError",
    "MonteCarloStats",
    "Channel",
    "segments",
    "total_duration",
    "default_step",
    "integration_grid",
    "build_hamiltonian",
    "propagators",
    "ideal_unitary",
    "propagate",
    "realization_unitaries",
    "monte_carlo_density",
    "noise_channels",
    "second_order_density",
    "second_order_state_fidelity",
    "haar_second_order_fidelity",
    "interaction_to_rotating",
]

NORM_TOLERANCE = 1e-10
_CHUNK = 2048

_SIGMA_PLUS = np.array([[0, 0], [1, 0]], dtype=complex)   # |e><g| with g=0, e=1
_N_E = np.diag([0.0, 1.0]).astype(complex)


class NumericalError(RuntimeError):
    """Propagation lost unitarity beyond tolerance."""


@dataclass
class MonteCarloStats:
    n_realizations: int
    std_err_real: np.ndarray
    std_err_imag: np.ndarray
    seed: object = None


def segments(schedule) -> list:
    """``[(offset, Schedule), ...]`` for a schedule or a sequence of schedules."""
    seq = [schedule] if isinstance(schedule, Schedule) else list(schedule)
    if not seq:
        raise ScheduleError("empty protocol")
    n = {s.n_qubits for s in seq}
    if len(n) != 1:
        raise ScheduleError("all segments must act on the same register")
    out, offset = [], 0.0
    for s in seq:
        out.append((offset, s))
        offset += s.duration
    return out


def total_duration(schedule) -> float:
    return sum(s.duration for _, s in segments(schedule))


def _n_qubits(schedule) -> int:
    return segments(schedule)[0][1].n_qubits


def default_step(schedule, model: NoiseModel) -> float:
    """``min(t_c, sigma_min) / 50`` over all pulses of the protocol."""
    sigma = min(s.min_sigma for _, s in segments(schedule))
    scale = min(model.t_c, sigma)
    if not math.isfinite(scale):
        scale = model.t_c
    return scale / 50.0


def integration_grid(schedule, dt: float) -> np.ndarray:
    """Piecewise-uniform grid with nodes on every segment boundary."""
    parts = [np.zeros(1)]
    for offset, s in segments(schedule):
        if s.duration <= 0:
            continue
        n = max(1, int(math.ceil(s.duration / dt - 1e-9)))
        parts.append(offset + np.linspace(0.0, s.duration, n + 1)[1:])
    return np.concatenate(parts)


def build_hamiltonian(schedule: Schedule, realization: NoiseRealization | None, t: float) -> np.ndarray:
    """Full ``2^N x 2^N`` rotating-frame Hamiltonian at time ``t``."""
    n = schedule.n_qubits
    if not -1e-12 <= t <= schedule.duration * (1 + 1e-12) + 1e-12:
        raise ValueError(f"t={t} outside schedule duration {schedule.duration}")
    if realization is not None:
        if realization.n_qubits != n:
            raise ValueError(f"realization has {realization.n_qubits} qubits, schedule {n}")
        if t > realization.grid[-1] * (1 + 1e-12) + 1e-12:
            raise ValueError(f"t={t} beyond the realization grid")
        delta = realization.at(t)
    else:
        delta = np.zeros(n)
    H = np.zeros((2**n, 2**n), dtype=complex)
    for j in range(n):
        H += delta[j] * embed_operator(_N_E, [j], n)
    gg, ge, eg, ee = np.eye(4)
    for f in schedule.fields:
        amp = float(f.envelope(t))
        if f.kind.kind == "single":
            op = _SIGMA_PLUS + _SIGMA_PLUS.T
        elif f.kind.kind == "psi":
            op = np.outer(ge, eg) + np.outer(eg, ge)
        else:
            op = np.outer(ee, gg) + np.outer(gg, ee)
        H += amp * embed_operator(op, f.kind.qubits, n)
    return H


def _expm2(p, q, b, d=0.0):
    """exp(-i [[p, b - i d], [b + i d, q]]) for real arrays broadcast together; shape (..., 2, 2)."""
    p, q, b, d = np.broadcast_arrays(p, q, b, d)
    c = 0.5 * (p + q)
    a = 0.5 * (p - q)
    r = np.sqrt(a * a + b * b + d * d)
    cos = np.cos(r)
    sinc = np.sinc(r / np.pi)
    phase = np.exp(-1j * c)
    out = np.empty(p.shape + (2, 2), dtype=complex)
    out[..., 0, 0] = phase * (cos - 1j * a * sinc)
    out[..., 1, 1] = phase * (cos + 1j * a * sinc)
    out[..., 0, 1] = phase * sinc * (-1j * b - d)
    out[..., 1, 0] = phase * sinc * (-1j * b + d)
    return out


def _ordered_product(steps: np.ndarray) -> np.ndarray:
    """``steps[..., -1, :, :] @ ... @ steps[..., 0, :, :]`` by pairwise reduction."""
    while steps.shape[-3] > 1:
        if steps.shape[-3] % 2:
            eye = np.broadcast_to(np.eye(steps.shape[-1], dtype=complex),
                                  steps.shape[:-3] + (1,) + steps.shape[-2:])
            steps = np.concatenate([steps, eye], axis=-3)
        steps = steps[..., 1::2, :, :] @ steps[..., 0::2, :, :]
    return steps[..., 0, :, :]


def _phase_steps(field_, tau):
    if field_ is None:
        return np.zeros(tau.size - 1)
    return np.diff(field_.phase(tau))


_GAUSS = 0.5 / math.sqrt(3.0)


def _gauss_envelope(field_, tau):
    """Drive amplitude at the two Gauss-Legendre points of every step."""
    if field_ is None:
        z = np.zeros(tau.size - 1)
        return z, z
    mid, h = 0.5 * (tau[1:] + tau[:-1]), np.diff(tau)
    return field_.envelope(mid - _GAUSS * h), field_.envelope(mid + _GAUSS * h)


def _block(field_, tau, p_mid, q_mid, p_jump, q_jump):
    """Fourth-order Magnus step of ``[[p(t), Omega(t)], [Omega(t), q(t)]]``.

    The first Magnus term uses the exact phase increment and the exact
    integral of the linearly interpolated noise; the commutator term is the
    two-point Gauss-Legendre estimate, a sigma_y component for these blocks.
    """
    h = np.diff(tau)
    b1, b2 = _gauss_envelope(field_, tau)
    a_mid = 0.5 * (p_mid - q_mid)
    a_half = _GAUSS * 0.5 * (p_jump - q_jump)
    d = (math.sqrt(3.0) / 6.0) * h**2 * (a_mid * (b1 - b2) + a_half * (b1 + b2))
    return _expm2(p_mid * h, q_mid * h, _phase_steps(field_, tau), d)


def _unit_blocks(unit, tau, dmid, djump):
    """2x2 step blocks for one unit: list of arrays (R, S, 2, 2).

    ``dmid`` holds the noise at step midpoints and ``djump`` its change
    across each step.
    """
    if not unit.is_pair:
        (q,) = unit.qubits
        return [_block(unit.single, tau, 0.0, dmid[:, q], 0.0, djump[:, q])]
    k, kk = unit.qubits
    psi = _block(unit.psi, tau, dmid[:, kk], dmid[:, k], djump[:, kk], djump[:, k])      # (ge, eg)
    phi = _block(unit.phi, tau, 0.0, dmid[:, k] + dmid[:, kk], 0.0, djump[:, k] + djump[:, kk])  # (gg, ee)
    return [psi, phi]


def _blocks_to_unit(unit, blocks):
    if not unit.is_pair:
        return blocks[0]
    psi, phi = blocks
    out = np.zeros(psi.shape[:-2] + (4, 4), dtype=complex)
    out[..., 1:3, 1:3] = psi
    out[..., 0, 0], out[..., 0, 3] = phi[..., 0, 0], phi[..., 0, 1]
    out[..., 3, 0], out[..., 3, 3] = phi[..., 1, 0], phi[..., 1, 1]
    return out


def _segment_unitary(schedule: Schedule, tau, dmid, djump):
    """Batch unitary (R, d, d) of one segment on local nodes ``tau``."""
    units = schedule.units
    ops = []
    for unit in units:
        total = None
        n_steps = tau.size - 1
        for i0 in range(0, n_steps, _CHUNK):
            i1 = min(n_steps, i0 + _CHUNK)
            blocks = _unit_blocks(unit, tau[i0:i1 + 1], dmid[:, :, i0:i1], djump[:, :, i0:i1])
            prods = [_ordered_product(b) for b in blocks]
            total = prods if total is None else [p @ t for p, t in zip(prods, total)]
        ops.append(_blocks_to_unit(unit, total))
    return assemble_units(ops, [u.qubits for u in units], schedule.n_qubits)


def _interp_nodes(grid, nodes):
    idx = np.clip(np.searchsorted(grid, nodes, side="right") - 1, 0, max(grid.size - 2, 0))
    if grid.size == 1:
        return idx, np.zeros_like(nodes)
    w = (nodes - grid[idx]) / (grid[idx + 1] - grid[idx])
    return idx, w


def propagators(schedule, deltas: np.ndarray | None = None, grid=None) -> np.ndarray:
    """Final unitaries, shape (R, 2^N, 2^N), for noise batches ``deltas`` (R, N, M+1).

    Without noise a single exact step per segment is taken and the result
    has a batch axis of length one.
    """
    segs = segments(schedule)
    n = segs[0][1].n_qubits
    if deltas is None:
        deltas = np.zeros((1, n, 2))
        grid = np.array([0.0, max(total_duration(schedule), 1.0)])
        noiseless = True
    else:
        deltas = np.asarray(deltas, dtype=float)
        grid = np.asarray(grid, dtype=float)
        noiseless = False
        if deltas.shape[1] != n:
            raise ValueError(f"noise has {deltas.shape[1]} qubits, schedule {n}")
        if grid[-1] < total_duration(schedule) * (1 - 1e-12) - 1e-12:
            raise ValueError("noise grid ends before the protocol")
    R = deltas.shape[0]
    U = np.broadcast_to(np.eye(2**n, dtype=complex), (R, 2**n, 2**n)).copy()
    for offset, seg in segs:
        if seg.duration <= 0:
            continue
        if noiseless:
            nodes = np.array([offset, offset + seg.duration])
        else:
            inner = grid[(grid > offset) & (grid < offset + seg.duration)]
            nodes = np.concatenate([[offset], inner, [offset + seg.duration]])
        idx, w = _interp_nodes(grid, nodes)
        d_nodes = deltas[..., idx] * (1 - w) + deltas[..., np.minimum(idx + 1, grid.size - 1)] * w
        dmid = 0.5 * (d_nodes[..., 1:] + d_nodes[..., :-1])
        djump = np.diff(d_nodes, axis=-1)
        U = _segment_unitary(seg, nodes - offset, dmid, djump) @ U
    drift = np.max(np.abs(U.conj().transpose(0, 2, 1) @ U - np.eye(2**n)))
    if drift > NORM_TOLERANCE:
        steps = np.diff(grid)
        raise NumericalError(
            f"unitarity drift {drift:.3g} exceeds {NORM_TOLERANCE:g} "
            f"(max step {steps.max():.3g}); reduce the integration step")
    return U


def ideal_unitary(schedule) -> np.ndarray:
    """Noiseless protocol unitary in the computational basis."""
    return propagators(schedule)[0]


def propagate(psi0: QuantumState, schedule, realization: NoiseRealization | None = None) -> QuantumState:
    """Final state for one noise realization (``None``: noiseless).

    The realization grid sets the integration steps; noise is linearly
    interpolated between its nodes.
    """
    if not isinstance(psi0, QuantumState):
        psi0 = QuantumState(psi0)
    if abs(psi0.norm - 1.0) > NORM_TOLERANCE:
        raise ValueError(f"initial state has norm {psi0.norm}")
    pairing = psi0.pairing
    vec = basis_transform(psi0, COMPUTATIONAL).amplitudes
    if realization is None:
        U = ideal_unitary(schedule)
    else:
        U = propagators(schedule, realization.delta[None], realization.grid)[0]
    out = QuantumState(U @ vec)
    if psi0.basis != COMPUTATIONAL:
        out = basis_transform(out, psi0.basis, pairing)
    return out


def realization_unitaries(schedule, model: NoiseModel, n_realizations: int, seed, dt: float | None = None,
                          batch_size: int = 250, workers: int = 1) -> Iterator:
    """Yield ``(indices, unitaries)`` batches in realization order.

    Realization ``r`` uses noise stream ``(seed, r)``; batching and worker
    count do not change any result.
    """
    if n_realizations < 1:
        raise ValueError("need at least one realization")
    if model.n_qubits != _n_qubits(schedule):
        raise ValueError(f"noise model has {model.n_qubits} qubits, schedule {_n_qubits(schedule)}")
    dt = default_step(schedule, model) if dt is None else dt
    grid = integration_grid(schedule, dt)
    batches = [range(i, min(n_realizations, i + batch_size)) for i in range(0, n_realizations, batch_size)]

    def work(idx):
        return idx, propagators(schedule, sample_deltas(model, grid, seed, idx), grid)

    if workers <= 1:
        for b in batches:
            yield work(b)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            yield from pool.map(work, batches)


def monte_carlo_density(psi0, schedule, model: NoiseModel, n_realizations: int, seed,
                        dt: float | None = None, workers: int = 1, batch_size: int = 250):
    """Realization-averaged ``|psi(T)><psi(T)|`` with per-entry standard errors."""
    if not isinstance(psi0, QuantumState):
        psi0 = QuantumState(psi0)
    vec = basis_transform(psi0, COMPUTATIONAL).amplitudes
    d = vec.size
    s1 = np.zeros((d, d), dtype=complex)
    s2r = np.zeros((d, d))
    s2i = np.zeros((d, d))
    for _, U in realization_unitaries(schedule, model, n_realizations, seed, dt, batch_size, workers):
        psi = U @ vec
        rho = psi[:, :, None] * psi[:, None, :].conj()
        s1 += rho.sum(axis=0)
        s2r += (rho.real**2).sum(axis=0)
        s2i += (rho.imag**2).sum(axis=0)
    R = n_realizations
    mean = s1 / R
    if R > 1:
        se_r = np.sqrt(np.maximum(s2r / R - mean.real**2, 0.0) * R / (R - 1) / R)
        se_i = np.sqrt(np.maximum(s2i / R - mean.imag**2, 0.0) * R / (R - 1) / R)
    else:
        se_r = np.full((d, d), np.nan)
        se_i = np.full((d, d), np.nan)
    return DensityMatrix(mean), MonteCarloStats(R, se_r, se_i, seed)


@dataclass(frozen=True, eq=False)
class Channel:
    """One off-diagonal noise coupling of the interaction operator.

    ``W(t) = sum_c (coeffs_c . delta(t)) / 2 * (eps_c(t) op_c + h.c.)`` in
    the diagonal basis of the schedule.
    """

    name: str
    op: np.ndarray
    coeffs: np.ndarray
    source: object


def noise_channels(schedule: Schedule) -> list:
    """Channels of a single-segment schedule, in its diagonal basis."""
    n = schedule.n_qubits
    bmap = BasisMap(n, schedule.pairing)
    units = bmap.units
    sched_units = {u.qubits: u for u in schedule.units}
    chans = []
    for pos, qubits in enumerate(units):
        unit = sched_units[qubits]
        radix = 4 if len(qubits) == 2 else 2
        flips = [("psi", 0, 1, unit.psi), ("phi", 2, 3, unit.phi)] if radix == 4 else [("single", 0, 1, unit.single)]
        for name, lo, hi, src in flips:
            local = np.zeros((radix, radix), dtype=complex)
            local[lo, hi] = 1.0
            ops = [local if i == pos else np.eye(2 ** len(u)) for i, u in enumerate(units)]
            op = _kron_ordered(ops)
            a = np.zeros(n)
            if radix == 2:
                a[qubits[0]] = 1.0
            else:
                a[qubits[0]] = 1.0
                a[qubits[1]] = -1.0 if name == "psi" else 1.0
            chans.append(Channel(f"{name}{qubits}", op, a, src))
    return chans


def _kron_ordered(ops):
    out = np.ones((1, 1), dtype=complex)
    for op in ops:
        out = np.kron(out, op)
    return out


def _modulation_fn(source, sign):
    def eps(t):
        if source is None:
            return np.ones(np.shape(t), dtype=complex)
        val = modulation(source, np.clip(t, 0.0, source.duration), ROTATION_FACTOR)
        return val if sign > 0 else np.conj(val)
    return eps


@lru_cache(maxsize=32)
def _kernel_terms(schedule: Schedule, model: NoiseModel, rtol: float):
    """List of (weight, left_op, right_op) for the averaged double commutator.

    Cached per (schedule, model) object, so many initial states share one
    set of nested integrals.
    """
    if model.n_qubits != schedule.n_qubits:
        raise ValueError("noise model and schedule disagree on register size")
    chans = noise_channels(schedule)
    cov = model.variance * model.overlap()
    T = schedule.duration
    n_grid = 2048
    sig = schedule.min_sigma
    if math.isfinite(sig):
        n_grid = max(n_grid, int(math.ceil(16 * T / sig)))
    n_grid = max(n_grid, int(math.ceil(16 * T / model.t_c)))
    n_grid = min(1 << int(math.ceil(math.log2(n_grid))), 2**22)
    terms = []
    cache = {}
    for c in chans:
        for cc in chans:
            weight = float(c.coeffs @ cov @ cc.coeffs)
            if weight == 0.0:
                continue
            for s in (1, -1):
                for ss in (1, -1):
                    key = (id(c.source), s, id(cc.source), ss)
                    if key not in cache:
                        cache[key], _ = nested_integral(_modulation_fn(c.source, s), _modulation_fn(cc.source, ss),
                                                        T, model.t_c, rtol, n_grid)
                    y = c.op if s > 0 else c.op.conj().T
                    yy = cc.op if ss > 0 else cc.op.conj().T
                    terms.append((0.25 * weight * cache[key], y, yy))
    return tuple(terms)


def _diag_basis(schedule: Schedule):
    return (TWO_DIAG, schedule.pairing) if schedule.pairing else (SINGLE_DIAG, ())


def second_order_density(rho0, schedule: Schedule, model: NoiseModel, rtol: float = 1e-7) -> DensityMatrix:
    """Ensemble density matrix to second order in the noise.

    Returns the interaction-picture ``rho(T)`` in the schedule's diagonal
    basis. ``rho0`` may be given in any basis and is converted first.
    """
    if not isinstance(schedule, Schedule):
        raise ScheduleError("the second-order solution needs a single-segment schedule")
    if isinstance(rho0, QuantumState):
        rho0 = rho0.density()
    elif not isinstance(rho0, DensityMatrix):
        rho0 = DensityMatrix(rho0)
    tag, pairing = _diag_basis(schedule)
    r0 = basis_transform(rho0, tag, pairing).entries
    corr = np.zeros_like(r0)
    for w, y, yy in _kernel_terms(schedule, model, rtol):
        inner = yy @ r0 - r0 @ yy
        corr += w * (y @ inner - inner @ y)
    return DensityMatrix(r0 - corr, tag, pairing)


def second_order_state_fidelity(psi0, schedule: Schedule, model: NoiseModel, rtol: float = 1e-7) -> float:
    """``<psi0| rho_I(T) |psi0>``: fidelity against the noiseless image of ``psi0``."""
    if not isinstance(psi0, QuantumState):
        psi0 = QuantumState(psi0)
    rho = second_order_density(psi0, schedule, model, rtol)
    tag, pairing = _diag_basis(schedule)
    v = basis_transform(psi0, tag, pairing).amplitudes
    return float(np.real(v.conj() @ rho.entries @ v))


def haar_second_order_fidelity(schedule: Schedule, model: NoiseModel, rtol: float = 1e-7) -> float:
    """Second-order fidelity averaged exactly over Haar-random pure states.

    Uses ``E[Tr(rho [A, [B, rho]])] = 2 Tr(AB) / (d + 1)`` for traceless
    ``A``, ``B``; valid for any register size.
    """
    d = 2**schedule.n_qubits
    total = 0j
    for w, y, yy in _kernel_terms(schedule, model, rtol):
        total += w * np.trace(y @ yy)
    return float(1.0 - 2.0 / (d + 1) * total.real)


def interaction_to_rotating(rho: DensityMatrix, schedule: Schedule) -> DensityMatrix:
    """Map an interaction-picture result back to the rotating frame, computational basis."""
    comp = basis_transform(rho, COMPUTATIONAL)
    U0 = ideal_unitary(schedule)
    return DensityMatrix(U0 @ comp.entries @ U0.conj().T)
