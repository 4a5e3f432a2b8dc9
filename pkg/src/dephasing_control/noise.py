"""Stochastic dephasing model.

Each qubit's excited level fluctuates by a zero-mean stationary Gaussian
process :math:`\\delta_j(t)` with exponential cross-correlations

.. math::

    \\Phi_{jk}(\\tau) = \\frac{\\gamma}{t_c} e^{-|\\tau|/t_c} \\xi_{jk} s_j s_k,

where :math:`\\xi` is the cross-dephasing overlap matrix and :math:`s` an
optional per-qubit amplitude scale (``1`` for every qubit by default). The
spectrum is the corresponding Lorentzian.

Trajectories are sampled exactly on arbitrary grids: independent unit
Ornstein-Uhlenbeck drivers are advanced with the exact AR(1) update and mixed
through a lower-triangular factor of :math:`\\xi`.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.signal import lfilter

__all__ = [
    "NoiseModel",
    "NoiseRealization",
    "ValidationReport",
    "ModelError",
    "correlation",
    "spectrum",
    "sample_realization",
    "sample_deltas",
    "validate_model",
    "psd_cholesky",
    "realization_rng",
    "ensemble_statistics",
]

#: eigenvalues of xi above this (negative) threshold are treated as zero
PSD_TOLERANCE = 1e-12


class ModelError(ValueError):
    """Raised when a noise model or time grid cannot be used for sampling."""


@dataclass(frozen=True, eq=False)
class NoiseModel:
    """Parameters of the correlated exponential dephasing process.

    Parameters
    ----------
    gamma : float
        Asymptotic dephasing rate; without control ``J(t >> t_c) = gamma t``.
    t_c : float
        Correlation time, shared by all qubit pairs.
    xi : array_like, shape (N, N)
        Cross-dephasing overlap matrix, symmetric with unit diagonal.
    scale : array_like, shape (N,), optional
        Per-qubit amplitude multiplier. A zero entry makes that qubit
        noiseless (used for the vibrational bus of the ion-trap register).
    """

    gamma: float
    t_c: float
    xi: np.ndarray
    scale: np.ndarray | None = None

    def __post_init__(self):
        xi = np.atleast_2d(np.asarray(self.xi, dtype=float))
        object.__setattr__(self, "xi", xi)
        if self.scale is None:
            scale = np.ones(xi.shape[0])
        else:
            scale = np.asarray(self.scale, dtype=float).reshape(-1)
        object.__setattr__(self, "scale", scale)

    @classmethod
    def uniform(cls, gamma, t_c, n_qubits, overlap=0.0, scale=None):
        """Model whose off-diagonal overlaps all equal ``overlap``."""
        xi = np.full((n_qubits, n_qubits), float(overlap))
        np.fill_diagonal(xi, 1.0)
        return cls(gamma, t_c, xi, scale)

    @property
    def n_qubits(self) -> int:
        return self.xi.shape[0]

    @property
    def variance(self) -> float:
        """Stationary single-qubit variance ``Phi_jj(0) = gamma / t_c``."""
        return self.gamma / self.t_c

    def overlap(self) -> np.ndarray:
        """Effective covariance shape ``xi_jk s_j s_k``."""
        return self.xi * np.outer(self.scale, self.scale)

    def replace(self, **changes) -> "NoiseModel":
        params = dict(gamma=self.gamma, t_c=self.t_c, xi=self.xi, scale=self.scale)
        params.update(changes)
        return NoiseModel(**params)


@dataclass
class ValidationReport:
    violations: list = field(default_factory=list)
    min_eigenvalue: float = float("nan")

    @property
    def valid(self) -> bool:
        return not self.violations

    def __bool__(self):
        return self.valid


@dataclass(frozen=True, eq=False)
class NoiseRealization:
    """Sampled trajectories ``delta[j, i] = delta_j(grid[i])``."""

    grid: np.ndarray
    delta: np.ndarray
    seed: int | None = None
    index: int = 0

    @property
    def n_qubits(self) -> int:
        return self.delta.shape[0]

    def at(self, t):
        """Linearly interpolated values at time(s) ``t``, shape (N, ...)."""
        return np.stack([np.interp(t, self.grid, d) for d in self.delta])

    def delta_sum(self, k: int, kk: int) -> np.ndarray:
        return self.delta[k] + self.delta[kk]

    def delta_diff(self, k: int, kk: int) -> np.ndarray:
        return self.delta[k] - self.delta[kk]

    def csv_text(self) -> str:
        """Columns ``t, delta_1..delta_N``, values written with ``repr``."""
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["t"] + [f"delta_{j + 1}" for j in range(self.n_qubits)])
        for i, t in enumerate(self.grid):
            writer.writerow([repr(float(t))] + [repr(float(v)) for v in self.delta[:, i]])
        return buf.getvalue()

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(self.csv_text())


def _check_index(model: NoiseModel, *indices) -> None:
    for j in indices:
        if not 0 <= j < model.n_qubits:
            raise IndexError(f"qubit index {j} out of range for {model.n_qubits} qubits")


def correlation(model: NoiseModel, j: int, k: int, tau):
    """Correlation ``Phi_jk(tau) = (gamma/t_c) exp(-|tau|/t_c) xi_jk``."""
    _check_index(model, j, k)
    tau = np.asarray(tau, dtype=float)
    return model.variance * np.exp(-np.abs(tau) / model.t_c) * model.overlap()[j, k]


def spectrum(model: NoiseModel, j: int, k: int, omega):
    """Dephasing spectrum ``G_jk(w) = gamma xi_jk / (pi (1 + w^2 t_c^2))``.

    This is the closed form of ``(2 pi)^-1 int Phi_jk(t) exp(i w t) dt``.
    """
    _check_index(model, j, k)
    omega = np.asarray(omega, dtype=float)
    return model.gamma * model.overlap()[j, k] / (np.pi * (1.0 + (omega * model.t_c) ** 2))


def validate_model(model: NoiseModel) -> ValidationReport:
    """Check every ``NoiseModel`` invariant and list the violations."""
    report = ValidationReport()
    v = report.violations
    if not np.isfinite(model.gamma) or model.gamma <= 0:
        v.append(f"gamma must be positive, got {model.gamma}")
    if not np.isfinite(model.t_c) or model.t_c <= 0:
        v.append(f"t_c must be positive, got {model.t_c}")
    xi = model.xi
    if xi.ndim != 2 or xi.shape[0] != xi.shape[1] or xi.shape[0] < 1:
        v.append(f"xi must be a square N x N matrix, got shape {xi.shape}")
        return report
    if not np.all(np.isfinite(xi)):
        v.append("xi has non-finite entries")
        return report
    if not np.allclose(xi, xi.T, atol=1e-12):
        v.append("xi is not symmetric")
    if not np.allclose(np.diag(xi), 1.0, atol=1e-12):
        v.append("xi diagonal entries must equal 1")
    bad = np.argwhere((xi < 0) | (xi > 1))
    for j, k in bad:
        v.append(f"xi[{j}][{k}] = {xi[j, k]} outside [0, 1]")
    if model.scale.shape != (xi.shape[0],):
        v.append(f"scale must have length {xi.shape[0]}, got {model.scale.shape}")
    elif np.any(model.scale < 0):
        v.append("scale entries must be nonnegative")
    eig = np.linalg.eigvalsh(0.5 * (xi + xi.T))
    report.min_eigenvalue = float(eig[0])
    if eig[0] < -PSD_TOLERANCE:
        v.append(f"xi is not positive semidefinite (eigenvalue {eig[0]:.6g})")
    return report


def psd_cholesky(a: np.ndarray, tol: float = PSD_TOLERANCE) -> np.ndarray:
    """Lower-triangular ``L`` with ``L @ L.T == a`` for semidefinite ``a``.

    Zero pivots give zero columns, so exactly degenerate rows of ``a`` (for
    instance an all-ones overlap matrix) produce bit-identical rows of ``L``.
    """
    a = np.asarray(a, dtype=float)
    eig = np.linalg.eigvalsh(a)
    if eig[0] < -tol:
        raise ModelError(f"matrix is not positive semidefinite (eigenvalue {eig[0]:.6g})")
    n = a.shape[0]
    L = np.zeros_like(a)
    for j in range(n):
        d = a[j, j] - L[j, :j] @ L[j, :j]
        if d <= tol * max(1.0, abs(a[j, j])):
            continue
        L[j, j] = np.sqrt(d)
        L[j + 1:, j] = (a[j + 1:, j] - L[j + 1:, :j] @ L[j, :j]) / L[j, j]
    return L


def realization_rng(seed, index: int) -> np.random.Generator:
    """Counter-based generator for realization ``index`` of stream ``seed``.

    ``seed`` may be an int or a tuple of ints (e.g. ``(seed, sweep_point)``).
    """
    key = list(seed) if isinstance(seed, (tuple, list)) else [seed]
    return np.random.default_rng([int(s) for s in key] + [int(index)])


def _check_grid(grid) -> np.ndarray:
    grid = np.asarray(grid, dtype=float).reshape(-1)
    if grid.size < 1 or grid[0] != 0.0:
        raise ModelError("time grid must start at 0")
    if np.any(np.diff(grid) <= 0):
        raise ModelError("time grid must be strictly increasing")
    return grid


def _uniform_runs(steps: np.ndarray):
    """Split step sizes into maximal runs of (nearly) equal value."""
    start = 0
    for i in range(1, len(steps) + 1):
        if i == len(steps) or abs(steps[i] - steps[start]) > 1e-12 * steps[start]:
            yield start, i
            start = i


def _ou_unit(eta: np.ndarray, grid: np.ndarray, t_c: float) -> np.ndarray:
    """Unit-variance stationary OU paths driven by standard normals ``eta``.

    ``eta`` has shape (..., M+1); the first column initializes from the
    stationary law, later columns drive the exact update
    ``z' = a z + sqrt(1 - a^2) eta`` with ``a = exp(-dt / t_c)``.
    """
    z = np.empty_like(eta)
    z[..., 0] = eta[..., 0]
    steps = np.diff(grid)
    for i0, i1 in _uniform_runs(steps):
        a = np.exp(-steps[i0] / t_c)
        b = np.sqrt(-np.expm1(-2.0 * steps[i0] / t_c))
        zi = (a * z[..., i0])[..., None]
        z[..., i0 + 1:i1 + 1], _ = lfilter([b], [1.0, -a], eta[..., i0 + 1:i1 + 1], axis=-1, zi=zi)
    return z


def sample_deltas(model: NoiseModel, grid, seed, indices: Sequence[int]) -> np.ndarray:
    """Trajectories for several realization indices, shape (R, N, M+1).

    Realization ``r`` depends only on ``(seed, r)``, never on how the indices
    are batched.
    """
    grid = _check_grid(grid)
    L = psd_cholesky(model.xi)
    n = model.n_qubits
    eta = np.empty((len(indices), n, grid.size))
    for out, r in zip(eta, indices):
        out[...] = realization_rng(seed, r).standard_normal((n, grid.size))
    z = _ou_unit(eta, grid, model.t_c)
    mix = np.sqrt(model.variance) * model.scale[:, None] * L
    return np.einsum("jk,rki->rji", mix, z)


def sample_realization(model: NoiseModel, grid, seed, index: int = 0) -> NoiseRealization:
    """Sample one jointly Gaussian realization of all qubits' fluctuations."""
    report = validate_model(model)
    if not report.valid:
        raise ModelError("; ".join(report.violations))
    grid = _check_grid(grid)
    delta = sample_deltas(model, grid, seed, [index])[0]
    return NoiseRealization(grid=grid, delta=delta, seed=seed, index=index)


def ensemble_statistics(model: NoiseModel, grid, seed, count: int, lags=None, block: float | None = None) -> list[dict]:
    """Sample-vs-analytic summary rows (mean, lag covariances).

    The process is stationary, so samples are pooled over all realizations
    and all nodes of a uniform grid. Standard errors come from means over
    blocks of duration ``block`` (default ``10 t_c``), which keeps the serial
    correlation of neighbouring nodes out of the error bar.
    """
    grid = _check_grid(grid)
    steps = np.diff(grid)
    if steps.size == 0:
        raise ModelError("ensemble statistics need at least two grid nodes")
    if np.ptp(steps) > 1e-9 * steps[0]:
        raise ModelError("ensemble statistics need a uniform grid")
    h = steps[0]
    deltas = sample_deltas(model, grid, seed, range(count))
    lags = [0.0, model.t_c, 3 * model.t_c] if lags is None else list(lags)
    block_len = max(1, int(round((10 * model.t_c if block is None else block) / h)))

    def pooled(values):
        n_blocks = values.shape[1] // block_len
        mean = float(values.mean())
        if n_blocks * values.shape[0] < 2:
            return mean, float("nan")
        means = values[:, :n_blocks * block_len].reshape(values.shape[0], n_blocks, block_len).mean(-1).ravel()
        return mean, float(means.std(ddof=1) / np.sqrt(means.size))

    rows = []
    n = model.n_qubits
    for j in range(n):
        mean, se = pooled(deltas[:, j])
        rows.append(dict(stat="mean", j=j + 1, k=j + 1, lag=0.0, sample=mean, analytic=0.0, std_err=se))
    for lag in lags:
        m = int(round(lag / h))
        if m >= grid.size:
            raise ModelError(f"lag {lag} exceeds the sampled duration")
        actual = m * h
        for j in range(n):
            for k in range(j, n):
                prod = deltas[:, j, m:] * deltas[:, k, :grid.size - m]
                mean, se = pooled(prod)
                rows.append(dict(stat="covariance", j=j + 1, k=k + 1, lag=float(actual), sample=mean,
                                 analytic=float(correlation(model, j, k, actual)), std_err=se))
    return rows
