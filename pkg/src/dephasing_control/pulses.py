"""Gaussian gate and control fields.

A field drives one qubit (``single``) or one pair of qubits through the
``psi`` (``|ge><eg|``) or ``phi`` (``|ee><gg|``) transition with a real
envelope made of truncated Gaussian pulses. Its accumulated phase
``phi(t) = int_0^t Omega`` fixes the logical action; in the frame that
follows the field, dephasing couples to it through the unit-modulus
modulation ``exp(i * ROTATION_FACTOR * phi(t))``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.signal import CZT
from scipy.special import erf

__all__ = [
    "ROTATION_FACTOR",
    "TRUNCATION",
    "PHASE_TOLERANCE",
    "InfeasiblePulseError",
    "ScheduleError",
    "GateKind",
    "Pulse",
    "PulseConstraints",
    "GaussianPulseTrain",
    "GateField",
    "Schedule",
    "Unit",
    "accumulated_phase",
    "modulation",
    "finite_time_fourier",
    "design_pulse_train",
    "design_schedule",
    "parse_angle",
]

#: drive H = Omega (|e><g| + h.c.) rotates by phi, so the dephasing operator
#: picks up exp(2 i phi) in the field's frame
ROTATION_FACTOR = 2.0
#: pulses are cut to [c - 6 sigma, c + 6 sigma]
TRUNCATION = 6.0
PHASE_TOLERANCE = 1e-6

_SQRT2PI = math.sqrt(2.0 * math.pi)
_KEPT = math.erf(TRUNCATION / math.sqrt(2.0))


class InfeasiblePulseError(ValueError):
    """No admissible train reaches the requested phase."""

    def __init__(self, message, max_phase=None):
        super().__init__(message)
        self.max_phase = max_phase


class ScheduleError(ValueError):
    """Fields violate the register or partition rules of a schedule."""


def parse_angle(text) -> float:
    """Parse ``'7pi/4'``, ``'2*pi'``, ``'-3pi/2'`` or a plain number."""
    if isinstance(text, (int, float)):
        return float(text)
    s = str(text).strip().lower().replace(" ", "").replace("π", "pi")
    if not s:
        raise ValueError("empty angle")
    num, _, den = s.partition("/")
    if "pi" in num:
        coef = num.replace("*", "").replace("pi", "")
        if coef in ("", "+"):
            value = math.pi
        elif coef == "-":
            value = -math.pi
        else:
            value = float(coef) * math.pi
    else:
        value = float(num)
    if den:
        value /= float(den)
    return value


@dataclass(frozen=True)
class GateKind:
    """Which transition a field drives: ``single``, ``psi`` or ``phi``."""

    kind: str
    qubits: tuple

    def __post_init__(self):
        if self.kind not in ("single", "psi", "phi"):
            raise ValueError(f"unknown gate kind {self.kind!r}")
        qubits = tuple(int(q) for q in self.qubits)
        if any(q < 0 for q in qubits):
            raise ValueError("qubit indices must be nonnegative")
        if self.kind == "single":
            if len(qubits) != 1:
                raise ValueError("single-qubit field needs exactly one qubit")
        else:
            if len(qubits) != 2 or qubits[0] == qubits[1]:
                raise ValueError("two-qubit field needs two distinct qubits")
            qubits = tuple(sorted(qubits))
        object.__setattr__(self, "qubits", qubits)

    @classmethod
    def single(cls, j):
        return cls("single", (j,))

    @classmethod
    def psi(cls, j, k):
        return cls("psi", (j, k))

    @classmethod
    def phi(cls, j, k):
        return cls("phi", (j, k))

    @property
    def two_qubit(self) -> bool:
        return self.kind != "single"

    def __str__(self):
        return f"{self.kind}{self.qubits if self.two_qubit else self.qubits[0]}"


@dataclass(frozen=True)
class PulseConstraints:
    omega_max: float
    sigma_min: float

    def __post_init__(self):
        if self.omega_max <= 0 or self.sigma_min <= 0:
            raise ValueError("omega_max and sigma_min must be positive")

    @property
    def min_area(self) -> float:
        """Phase of one shortest full-power pulse."""
        return self.omega_max * self.sigma_min * _SQRT2PI * _KEPT


@dataclass(frozen=True)
class Pulse:
    center: float
    sigma: float
    amplitude: float

    @property
    def sign(self) -> int:
        return 1 if self.amplitude >= 0 else -1

    @property
    def area(self) -> float:
        return self.amplitude * self.sigma * _SQRT2PI * _KEPT

    @property
    def window(self) -> tuple:
        return (self.center - TRUNCATION * self.sigma, self.center + TRUNCATION * self.sigma)


@dataclass(frozen=True)
class GaussianPulseTrain:
    pulses: tuple = ()
    constraints: PulseConstraints | None = None

    def __post_init__(self):
        object.__setattr__(self, "pulses", tuple(self.pulses))
        for p in self.pulses:
            if p.sigma <= 0:
                raise ValueError("pulse sigma must be positive")
        c = self.constraints
        if c is None:
            return
        for p in self.pulses:
            if abs(p.amplitude) > c.omega_max * (1 + 1e-12):
                raise ValueError(f"pulse amplitude {p.amplitude} exceeds omega_max {c.omega_max}")
            if p.sigma < c.sigma_min * (1 - 1e-12):
                raise ValueError(f"pulse sigma {p.sigma} below sigma_min {c.sigma_min}")

    def __len__(self):
        return len(self.pulses)

    def envelope(self, t):
        """Real envelope ``Omega(t)``; zero outside each truncation window."""
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        for p in self.pulses:
            x = (t - p.center) / p.sigma
            out += np.where(np.abs(x) <= TRUNCATION, p.amplitude * np.exp(-0.5 * x * x), 0.0)
        return out

    def phase(self, t):
        """Closed-form ``int_0^t Omega`` for truncated Gaussians."""
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        for p in self.pulses:
            x = np.clip((t - p.center) / p.sigma, -TRUNCATION, TRUNCATION)
            out += p.amplitude * p.sigma * math.sqrt(math.pi / 2) * (erf(x / math.sqrt(2)) + _KEPT)
        return out

    @property
    def total_phase(self) -> float:
        return float(sum(p.area for p in self.pulses))

    @property
    def peak(self) -> float:
        return max((abs(p.amplitude) for p in self.pulses), default=0.0)

    @property
    def min_sigma(self) -> float:
        return min((p.sigma for p in self.pulses), default=math.inf)


@dataclass(frozen=True)
class GateField:
    """A driven transition with its pulse train and phase target at ``duration``."""

    kind: GateKind | None
    train: GaussianPulseTrain
    phase_target: float
    duration: float

    def __post_init__(self):
        if self.duration < 0:
            raise ValueError("duration must be nonnegative")
        tol = 1e-9 * max(1.0, self.duration)
        for p in self.train.pulses:
            lo, hi = p.window
            if lo < -tol or hi > self.duration + tol:
                raise ValueError(
                    f"pulse window [{lo:.6g}, {hi:.6g}] does not fit in [0, {self.duration:.6g}]")
        reached = self.train.total_phase
        if abs(reached - self.phase_target) > PHASE_TOLERANCE:
            raise ValueError(
                f"pulse train reaches phase {reached:.9g}, target is {self.phase_target:.9g}")

    def phase(self, t):
        return self.train.phase(t)

    def envelope(self, t):
        return self.train.envelope(t)

    def with_kind(self, kind: GateKind) -> "GateField":
        return GateField(kind, self.train, self.phase_target, self.duration)

    def shifted(self, duration: float) -> "GateField":
        """Same pulses inside a longer window (appended idle time)."""
        return GateField(self.kind, self.train, self.phase_target, duration)


def _check_time(field_: GateField | None, t):
    t = np.asarray(t, dtype=float)
    if field_ is not None:
        tol = 1e-12 * max(1.0, field_.duration)
        if np.any(t < -tol) or np.any(t > field_.duration + tol):
            raise ValueError(f"time outside [0, {field_.duration}]")
    return t


def accumulated_phase(field_: GateField | None, t):
    """Phase ``phi(t)`` accumulated by the field up to time ``t``."""
    t = _check_time(field_, t)
    if field_ is None:
        return np.zeros_like(t)
    return field_.phase(t)


def modulation(field_: GateField | None, t, factor: float = ROTATION_FACTOR):
    """Modulation ``exp(i factor phi(t))``; ``factor=1`` gives the bare ``exp(i phi)``."""
    return np.exp(1j * factor * accumulated_phase(field_, t))


def _filon_weights(theta):
    """Per-segment weights (left, right) for int_0^1 f(x) exp(i theta x) dx, f linear."""
    theta = np.asarray(theta, dtype=float)
    small = np.abs(theta) < 0.05
    th = np.where(small, 1.0, theta)
    e = np.exp(1j * th)
    right = e / (1j * th) + (e - 1) / th**2
    full = (e - 1) / (1j * th)
    it = 1j * theta
    # series of int_0^1 x^m exp(i theta x) dx
    s_full = sum(it**n / (math.factorial(n) * (n + 1)) for n in range(10))
    s_right = sum(it**n / (math.factorial(n) * (n + 2)) for n in range(10))
    right = np.where(small, s_right, right)
    full = np.where(small, s_full, full)
    return full - right, right


def _fourier_on_grid(samples, t, omega):
    """Filon rule for int_0^t f(s) exp(i w s) ds with f piecewise linear."""
    n = samples.size - 1
    h = t / n
    nodes = np.linspace(0.0, t, n + 1)
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    left, right = _filon_weights(omega * h)
    if omega.size > 64 and omega.ndim == 1:
        d_omega = omega[1] - omega[0]
        if d_omega > 0 and np.allclose(np.diff(omega), d_omega, rtol=1e-9, atol=0.0):
            # uniform frequencies: both sums are chirp-z transforms
            czt = CZT(n, omega.size, w=np.exp(1j * d_omega * h), a=np.exp(-1j * omega[0] * h))
            return h * (left * czt(samples[:-1]) + right * czt(samples[1:]))
    out = np.empty(omega.shape, dtype=complex)
    chunk = max(1, 2**22 // (n + 1))
    for i0 in range(0, omega.size, chunk):
        w = omega[i0:i0 + chunk]
        ph = np.exp(1j * np.outer(w, nodes[:-1]))
        sl = slice(i0, i0 + chunk)
        out[sl] = h * (left[sl] * (ph @ samples[:-1]) + right[sl] * (ph @ samples[1:]))
    return out


def _resolution(field_: GateField | None, t: float) -> int:
    n = 256
    if field_ is not None and len(field_.train):
        n = max(n, int(math.ceil(32 * t / field_.train.min_sigma)))
    return min(n, 2**20)


def finite_time_fourier(field_: GateField | None, t: float, omega, factor: float = ROTATION_FACTOR,
                        rtol: float = 1e-8):
    """Finite-time transform ``(2 pi)^-1/2 int_0^t eps(s) exp(i w s) ds`` of the modulation.

    Filon integration on a uniform grid, refined with Richardson extrapolation
    until successive estimates agree to ``rtol``.
    """
    t = float(_check_time(field_, t))
    omega_arr = np.asarray(omega, dtype=float)
    if t == 0.0:
        return np.zeros(omega_arr.shape, dtype=complex) if omega_arr.ndim else 0j
    n = _resolution(field_, t)
    eps = lambda m: modulation(field_, np.linspace(0.0, t, m + 1), factor)  # noqa: E731
    coarse = _fourier_on_grid(eps(n), t, omega_arr)
    while True:
        fine = _fourier_on_grid(eps(2 * n), t, omega_arr)
        extrap = fine + (fine - coarse) / 3.0
        err = np.max(np.abs(fine - coarse)) / 3.0
        scale = max(np.max(np.abs(extrap)), 1e-300)
        if err <= rtol * scale or n >= 2**20:
            break
        n *= 2
        coarse = fine
    result = extrap / math.sqrt(2 * math.pi)
    return result.reshape(omega_arr.shape) if omega_arr.ndim else complex(result[0])


def _auto_count(target: float, c: PulseConstraints) -> int:
    return max(1, int(math.floor(abs(target) / c.min_area * (1 + 1e-12))))


def minimal_duration(target: float, constraints: PulseConstraints, n_pulses: int | None = None) -> float:
    """Shortest window holding a full-power train with the given phase."""
    if target == 0 and not n_pulses:
        return 0.0
    n = _auto_count(target, constraints) if n_pulses is None else n_pulses
    sigma = abs(target) / (n * constraints.omega_max * _SQRT2PI * _KEPT)
    return 2 * TRUNCATION * sigma + (n - 1) * TRUNCATION * sigma


def design_pulse_train(target: float, constraints: PulseConstraints, n_pulses: int | None = None,
                       duration_hint: float | None = None, kind: GateKind | None = None) -> GateField:
    """Full-power Gaussian train whose total phase equals ``target``.

    Every pulse runs at ``+-omega_max`` with a common width, so only the
    pulse count is free. ``n_pulses=None`` picks the largest count whose
    width stays above ``sigma_min`` (the shortest train). Without a duration
    hint the pulses sit back to back, centers ``6 sigma`` apart, and the
    returned duration is the minimal one; with a hint they are spread
    evenly over the longer window.

    Raises
    ------
    InfeasiblePulseError
        If the target is below one shortest pulse, or the hinted duration is
        too short (``max_phase`` carries the largest reachable phase).
    """
    target = float(target)
    c = constraints
    if target == 0.0 and not n_pulses:
        return GateField(kind, GaussianPulseTrain((), c), 0.0, float(duration_hint or 0.0))
    if target == 0.0:
        raise InfeasiblePulseError("zero phase needs an empty train", max_phase=0.0)
    n = _auto_count(target, c) if n_pulses is None else int(n_pulses)
    if n < 1:
        raise InfeasiblePulseError("nonzero phase needs at least one pulse")
    sigma = abs(target) / (n * c.omega_max * _SQRT2PI * _KEPT)
    if sigma < c.sigma_min * (1 - 1e-12):
        raise InfeasiblePulseError(
            f"|phase| {abs(target):.6g} is below {n} shortest full-power pulses "
            f"({n * c.min_area:.6g})", max_phase=None)
    t_min = TRUNCATION * sigma * (n + 1)
    duration = t_min if duration_hint is None else float(duration_hint)
    if duration < t_min * (1 - 1e-12):
        sigma_fit = duration / (TRUNCATION * (n + 1))
        reach = n * c.omega_max * sigma_fit * _SQRT2PI * _KEPT
        raise InfeasiblePulseError(
            f"phase {target:.6g} needs duration {t_min:.6g} > {duration:.6g}", max_phase=reach)
    if n == 1:
        centers = [duration / 2]
    else:
        centers = np.linspace(TRUNCATION * sigma, duration - TRUNCATION * sigma, n)
    amp = math.copysign(c.omega_max, target)
    train = GaussianPulseTrain(tuple(Pulse(float(x), sigma, amp) for x in centers), c)
    return GateField(kind, train, target, duration)


@dataclass(frozen=True)
class Unit:
    """Qubits evolving together: a single qubit, or a pair driven by psi/phi fields."""

    qubits: tuple
    single: GateField | None = None
    psi: GateField | None = None
    phi: GateField | None = None

    @property
    def is_pair(self) -> bool:
        return len(self.qubits) == 2

    @property
    def dim(self) -> int:
        return 2 ** len(self.qubits)


@dataclass(frozen=True)
class Schedule:
    """Fields applied concurrently over a common duration.

    No qubit may carry a single-qubit field and belong to a driven pair at
    once, and each qubit belongs to at most one pair. Undriven qubits are
    stored idle.
    """

    fields: tuple
    n_qubits: int
    duration: float | None = None

    def __post_init__(self):
        fields = tuple(self.fields)
        object.__setattr__(self, "fields", fields)
        if self.n_qubits < 1:
            raise ScheduleError("register needs at least one qubit")
        if self.duration is None:
            object.__setattr__(self, "duration", max((f.duration for f in fields), default=0.0))
        for f in fields:
            if f.kind is None:
                raise ScheduleError("every field in a schedule needs a gate kind")
            if abs(f.duration - self.duration) > 1e-9 * max(1.0, self.duration):
                raise ScheduleError(
                    f"field {f.kind} lasts {f.duration}, schedule lasts {self.duration}")
        self._check_partition()

    def _check_partition(self):
        single_q, pair_of, seen = {}, {}, set()
        for f in self.fields:
            k = f.kind
            for q in k.qubits:
                if q >= self.n_qubits:
                    raise ScheduleError(f"{k} addresses qubit {q} outside a {self.n_qubits}-qubit register")
            if (k.kind, k.qubits) in seen:
                raise ScheduleError(f"duplicate {k.kind} field on qubits {k.qubits}")
            seen.add((k.kind, k.qubits))
            if k.kind == "single":
                single_q[k.qubits[0]] = f
            else:
                for q in k.qubits:
                    if q in pair_of and pair_of[q] != k.qubits:
                        raise ScheduleError(
                            f"qubit {q} appears in two two-qubit pairs {pair_of[q]} and {k.qubits}")
                    pair_of[q] = k.qubits
        both = sorted(set(single_q) & set(pair_of))
        if both:
            raise ScheduleError(
                f"qubit {both[0]} is driven by a single- and a two-qubit field; "
                "each qubit is manipulated by one or the other, never by both at once")

    @property
    def pairing(self) -> tuple:
        return tuple(sorted({f.kind.qubits for f in self.fields if f.kind.two_qubit}))

    @property
    def units(self) -> tuple:
        """Units ordered by their lowest qubit."""
        by_kind = {(f.kind.kind, f.kind.qubits): f for f in self.fields}
        paired = {q for p in self.pairing for q in p}
        units = [Unit(p, psi=by_kind.get(("psi", p)), phi=by_kind.get(("phi", p))) for p in self.pairing]
        units += [Unit((q,), single=by_kind.get(("single", (q,))))
                  for q in range(self.n_qubits) if q not in paired]
        return tuple(sorted(units, key=lambda u: u.qubits[0]))

    @property
    def peak(self) -> float:
        return max((f.train.peak for f in self.fields), default=0.0)

    @property
    def min_sigma(self) -> float:
        return min((f.train.min_sigma for f in self.fields), default=math.inf)

    def field(self, kind: str, *qubits) -> GateField | None:
        key = GateKind(kind, qubits)
        for f in self.fields:
            if f.kind == key:
                return f
        return None


def design_schedule(targets: Iterable, constraints: PulseConstraints, n_qubits: int,
                    n_pulses: Sequence | None = None, duration: float | None = None) -> Schedule:
    """Equal-peak-power schedule for ``[(GateKind, phase), ...]`` or a dict of them.

    Each field gets its shortest full-power train; the schedule lasts as long
    as the slowest one and the others are spread over the same window.
    Zero-phase targets leave their qubits undriven.
    """
    targets = list(targets.items()) if isinstance(targets, dict) else list(targets)
    counts = list(n_pulses) if n_pulses is not None else [None] * len(targets)
    longest = max((minimal_duration(phi, constraints, n) for (_, phi), n in zip(targets, counts)),
                  default=0.0)
    T = longest if duration is None else float(duration)
    fields = [design_pulse_train(phi, constraints, n, T, kind)
              for (kind, phi), n in zip(targets, counts) if phi != 0.0 or n]
    return Schedule(tuple(fields), n_qubits, T)
