"""Modified dephasing functions and closed-form average fidelities.

For qubits ``j, k`` carrying modulations ``eps_j``, ``eps_k``::

    J_jk(t) = int_0^t dt' int_0^t' dt'' Phi_jk(t' - t'') eps_j(t') conj(eps_k(t''))

In the frequency domain its (symmetrized) real part is the overlap of the
dephasing spectrum with the modulation spectra::

    Re J_jk(t) = pi int dw G_jk(w) eps_j,t(w) conj(eps_k,t(w))

A modulation source is ``None`` (no field, ``eps = 1``), a ``GateField``
(``eps = exp(2 i phi)``) or any vectorized callable of time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.signal import lfilter

from .noise import NoiseModel, _check_index, spectrum
from .pulses import ROTATION_FACTOR, GateField, _fourier_on_grid, modulation

__all__ = [
    "DephasingFunctionalResult",
    "as_modulation",
    "nested_integral",
    "j_time",
    "j_freq",
    "j_closed_form",
    "avg_fidelity_single",
    "avg_fidelity_two",
    "SINGLE_COEFFICIENT",
    "TWO_COEFFICIENT",
    "haar_single_coefficient",
    "haar_two_coefficient",
    "schedule_j_matrices",
    "analytic_average_fidelity",
]

#: coefficients of the two-qubit closed forms as published
SINGLE_COEFFICIENT = 5.0 / 12.0
TWO_COEFFICIENT = 5.0 / 24.0


@dataclass(frozen=True)
class DephasingFunctionalResult:
    value: complex
    real_part_freq: float | None
    method: str
    error_estimate: float

    @property
    def real(self) -> float:
        return float(self.value.real)


def as_modulation(source) -> Callable:
    """Vectorized ``eps(t)`` for a modulation source."""
    if source is None:
        return lambda t: np.ones(np.shape(t), dtype=complex)
    if isinstance(source, GateField):
        return lambda t: modulation(source, np.clip(t, 0.0, source.duration), ROTATION_FACTOR)
    if callable(source):
        return lambda t: np.asarray(source(t), dtype=complex) * np.ones(np.shape(t))
    raise TypeError(f"cannot build a modulation from {type(source).__name__}")


def _resolution(sources, t: float, t_c: float) -> int:
    n = 2048
    for s in sources:
        if isinstance(s, GateField) and len(s.train):
            n = max(n, int(math.ceil(16 * t / s.train.min_sigma)))
    n = max(n, int(math.ceil(16 * t / t_c)))
    return min(1 << int(math.ceil(math.log2(n))), 2**22)


def _nested_once(f, g, t, t_c, n):
    """Trapezoid outer rule, exact exponential weights for linear ``g`` inside."""
    h = t / n
    grid = np.linspace(0.0, t, n + 1)
    fv, gv = f(grid), g(grid)
    lam = h / t_c
    a = math.exp(-lam)
    # int_0^h exp(-(h - s)/t_c) * (s/h) ds and the complementary weight
    total = -t_c * math.expm1(-lam)
    if lam < 1e-3:
        right = h * (0.5 - lam / 6 + lam**2 / 24 - lam**3 / 120)
    else:
        right = total - t_c**2 / h * (1 - math.exp(-lam) * (1 + lam))
    left = total - right
    drive = left * gv[:-1] + right * gv[1:]
    inner = np.empty(n + 1, dtype=complex)
    inner[0] = 0.0
    inner[1:] = lfilter([1.0], [1.0, -a], drive)
    prod = fv * inner
    return h * (prod.sum() - 0.5 * (prod[0] + prod[-1]))


def nested_integral(f, g, t: float, t_c: float, rtol: float = 1e-7, n: int | None = None):
    """``int_0^t dt' f(t') int_0^t' dt'' exp(-(t' - t'')/t_c) g(t'')``.

    Grid doubling with Richardson extrapolation; returns ``(value, error)``.
    """
    if t <= 0:
        return 0j, 0.0
    n = 2048 if n is None else n
    prev = _nested_once(f, g, t, t_c, n)
    while True:
        n *= 2
        cur = _nested_once(f, g, t, t_c, n)
        est = cur + (cur - prev) / 3.0
        err = abs(cur - prev) / 3.0
        if err <= rtol * max(abs(est), 1e-300) or n >= 2**23:
            return complex(est), float(err)
        prev = cur


def j_time(model: NoiseModel, field_j, field_k, j: int, k: int, t: float,
           rtol: float = 1e-7) -> DephasingFunctionalResult:
    """Time-domain ``J_jk(t)`` by nested quadrature."""
    _check_index(model, j, k)
    if t < 0:
        raise ValueError("t must be nonnegative")
    weight = model.variance * model.overlap()[j, k]
    if weight == 0.0 or t == 0.0:
        return DephasingFunctionalResult(0j, None, "time-domain", 0.0)
    fj, fk = as_modulation(field_j), as_modulation(field_k)
    n = _resolution((field_j, field_k), t, model.t_c)
    value, err = nested_integral(fj, lambda s: np.conj(fk(s)), t, model.t_c, rtol, n)
    return DephasingFunctionalResult(weight * value, None, "time-domain", abs(weight) * err)


def j_closed_form(model: NoiseModel, j: int, k: int, t):
    """``J_jk(t)`` without control: ``gamma xi_jk (t - t_c (1 - exp(-t/t_c)))``."""
    t = np.asarray(t, dtype=float)
    return model.gamma * model.overlap()[j, k] * (t + model.t_c * np.expm1(-t / model.t_c))


def _bandwidth(source) -> float:
    if isinstance(source, GateField) and len(source.train):
        return 1.0 / source.train.min_sigma + ROTATION_FACTOR * source.train.peak
    return 0.0


def j_freq(model: NoiseModel, field_j, field_k, j: int, k: int, t: float) -> DephasingFunctionalResult:
    """Frequency-domain ``pi int G_jk eps_j,t conj(eps_k,t) dw`` (real).

    The window ``|w| <= W`` is integrated with Simpson's rule on modulation
    spectra from Filon quadrature; beyond ``W`` the leading ``1/w^2`` term of
    the modulation spectra is integrated against the Lorentzian in closed
    form.
    """
    _check_index(model, j, k)
    if t < 0:
        raise ValueError("t must be nonnegative")
    G0 = spectrum(model, j, k, 0.0)
    if G0 == 0.0 or t == 0.0:
        return DephasingFunctionalResult(0j, 0.0, "frequency-domain", 0.0)
    t_c = model.t_c
    bw = max(_bandwidth(field_j), _bandwidth(field_k))
    W = max(50.0 / t_c, 20.0 * bw, 40.0 / t)
    d_omega = min(0.05 / t_c, 0.1 / t, (0.1 / bw) if bw else math.inf)
    m = int(math.ceil(W / d_omega))
    m += m % 2
    omega = np.linspace(-W, W, 2 * m + 1)

    fj, fk = as_modulation(field_j), as_modulation(field_k)
    sources = [s for s in (field_j, field_k) if isinstance(s, GateField) and len(s.train)]
    n_t = 1024
    for s in sources:
        n_t = max(n_t, int(math.ceil(24 * t / s.train.min_sigma)))
    grid = np.linspace(0.0, t, n_t + 1)
    ej = _fourier_on_grid(fj(grid), t, omega) / math.sqrt(2 * math.pi)
    ek = ej if field_k is field_j else _fourier_on_grid(fk(grid), t, omega) / math.sqrt(2 * math.pi)
    integrand = spectrum(model, j, k, omega) * (ej * np.conj(ek)).real
    h = omega[1] - omega[0]
    simpson = h / 3 * (integrand[0] + integrand[-1] + 4 * integrand[1:-1:2].sum()
                       + 2 * integrand[2:-1:2].sum())
    # tails: eps_t(w) ~ (eps(t) e^{iwt} - eps(0)) / (i w sqrt(2 pi)); keep the non-oscillating part
    ends = fj(np.array([0.0, t])) * np.conj(fk(np.array([0.0, t])))
    c0 = float((ends[0] + ends[1]).real) / (2 * math.pi)
    tail = 2 * (1.0 / W - t_c * (math.pi / 2 - math.atan(t_c * W)))
    value = math.pi * (simpson + G0 * c0 * tail)
    err = abs(math.pi * G0 * c0 * tail)
    return DephasingFunctionalResult(complex(value), float(value), "frequency-domain", err)


def avg_fidelity_single(j11: float, j22: float, coefficient: float = SINGLE_COEFFICIENT) -> float:
    """Two qubits under single-qubit fields: ``1 - 5/12 (J_11 + J_22)``."""
    return 1.0 - coefficient * (j11 + j22)


def avg_fidelity_two(j_phi, j_psi, coefficient: float = TWO_COEFFICIENT) -> float:
    """Two-qubit fields: ``1 - 5/24 sum_jk (J^Phi_jk + (-1)^(j+k) J^Psi_jk)``.

    The psi channel enters with alternating signs, so correlated noise
    (positive off-diagonal ``J^Psi``) lowers its contribution.
    """
    j_phi = np.asarray(j_phi, dtype=float)
    j_psi = np.asarray(j_psi, dtype=float)
    sign = np.array([[1.0, -1.0], [-1.0, 1.0]])
    return 1.0 - coefficient * float(np.sum(j_phi + sign * j_psi))


def haar_single_coefficient(dim: int) -> float:
    """Exact second-order Haar coefficient ``d / (2 (d + 1))`` for single-qubit channels."""
    return dim / (2.0 * (dim + 1))


def haar_two_coefficient(dim: int) -> float:
    """Exact second-order Haar coefficient ``d / (4 (d + 1))`` for pair channels."""
    return dim / (4.0 * (dim + 1))


def schedule_j_matrices(schedule, model: NoiseModel, t: float | None = None) -> dict:
    """Real parts of the ``J`` functionals a two-qubit schedule needs.

    Returns ``{'single': (J_11, J_22)}`` when both qubits are single units and
    ``{'phi': 2x2, 'psi': 2x2}`` when they form a driven pair.
    """
    if schedule.n_qubits != 2 or model.n_qubits != 2:
        raise ValueError("closed forms are stated for two qubits")
    t = schedule.duration if t is None else t
    units = schedule.units
    if len(units) == 2:
        vals = tuple(j_time(model, u.single, u.single, q, q, t).real
                     for u in units for q in u.qubits)
        return {"single": vals}
    u = units[0]
    out = {}
    for name, src in (("phi", u.phi), ("psi", u.psi)):
        m = np.zeros((2, 2))
        for a in range(2):
            for b in range(2):
                m[a, b] = j_time(model, src, src, a, b, t).real
        out[name] = m
    return out


def analytic_average_fidelity(schedule, model: NoiseModel, coefficients: str = "published") -> float:
    """Closed-form average fidelity of a two-qubit schedule.

    ``coefficients='published'`` uses 5/12 and 5/24; ``'haar'`` the exact
    second-order Haar averages 2/5 and 1/5.
    """
    mats = schedule_j_matrices(schedule, model)
    if coefficients not in ("published", "haar"):
        raise ValueError("coefficients must be 'published' or 'haar'")
    if "single" in mats:
        c = SINGLE_COEFFICIENT if coefficients == "published" else haar_single_coefficient(4)
        return avg_fidelity_single(*mats["single"], coefficient=c)
    c = TWO_COEFFICIENT if coefficients == "published" else haar_two_coefficient(4)
    return avg_fidelity_two(mats["phi"], mats["psi"], coefficient=c)
