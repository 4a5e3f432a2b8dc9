"""Declarative experiments: the three-qubit gate stages, the ion-trap SWAP and sweeps.

Every runner returns plain rows with the columns of :data:`CSV_COLUMNS`, one
per grid point and evaluation method, so a single CSV feeds any plot
(``gnuplot`` can select rows with ``method`` and plot ``value`` against
``error``).

Stage presets
-------------
Stage 1 drives single-qubit fields on three qubits from
``|up>|e>|down>`` to ``i |up>|up>|g>``; stage 2 starts from that target,
stores qubit 0 and drives the psi/phi pair fields on qubits 1, 2 towards
``-i |up>|g>|->``. All sequences of a stage share the same pulse
constraints, so their peak field amplitude is identical.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .evolution import haar_second_order_fidelity, ideal_unitary, realization_unitaries, second_order_state_fidelity
from .functional import analytic_average_fidelity
from .metrics import (FidelityReport, _embed_data, _overlap_fidelities, _reduce_pure, _report, average_fidelity_mc,
                      haar_states)
from .noise import ModelError, NoiseModel, validate_model
from .pulses import GateKind, PulseConstraints, Schedule, design_schedule, parse_angle
from .states import QuantumState, ket

__all__ = [
    "CSV_COLUMNS",
    "STAGE1_SEQUENCES",
    "STAGE2_FIELD_SETS",
    "DEFAULT_CONSTRAINTS",
    "StageSpec",
    "SweepSpec",
    "IonTrapSpec",
    "SpecError",
    "stage1_spec",
    "stage2_spec",
    "run_sweep",
    "run_stage1",
    "run_stage2",
    "run_ion_trap",
    "ion_trap_protocol",
    "rows_to_csv",
    "fit_slope",
]

CSV_COLUMNS = ("sweep_param", "value", "sequence", "method", "fidelity", "error", "std_err", "n_real", "duration")

STAGE1_SEQUENCES = {
    1: ("0", "pi/4", "7pi/4"),
    2: ("2pi", "pi/4", "7pi/4"),
    3: ("4pi", "pi/4", "7pi/4"),
    4: ("4pi", "17pi/4", "23pi/4"),
}

#: (single field on qubit 0, psi field on (1, 2), phi field on (1, 2))
STAGE2_FIELD_SETS = {
    "solid": ("0", "3pi/2", "0"),
    "dotted": ("0", "3pi/2", "2pi"),
    "dashed": ("2pi", "3pi/2", "0"),
    "dash-dot": ("2pi", "3pi/2", "2pi"),
}

#: peak amplitude and minimal width for the stage presets (gamma = 0.1 units)
DEFAULT_CONSTRAINTS = PulseConstraints(omega_max=10.0, sigma_min=0.025)

METHODS = ("monte-carlo-state", "monte-carlo-haar", "second-order-state", "second-order-haar", "closed-form")


class SpecError(ValueError):
    """An experiment specification is invalid."""


def _is_storage_angle(phi: float) -> bool:
    return abs(phi / (2 * math.pi) - round(phi / (2 * math.pi))) < 1e-12


@dataclass(frozen=True)
class StageSpec:
    """One gate stage: field targets, constraints, initial and target states.

    ``target=None`` stands for the noiseless image of the initial state.
    """

    label: str
    targets: tuple
    n_qubits: int
    initial: QuantumState
    target: QuantumState | None
    constraints: PulseConstraints = DEFAULT_CONSTRAINTS
    storage: tuple = ()
    duration: float | None = None

    def __post_init__(self):
        kinds = {k for k, _ in self.targets}
        for k in self.storage:
            if k not in kinds:
                raise SpecError(f"storage field {k} has no target")
        for k, phi in self.targets:
            if k in self.storage and not _is_storage_angle(phi):
                raise SpecError(f"storage field {k} needs a multiple of 2 pi, got {phi}")

    def schedule(self) -> Schedule:
        return design_schedule(self.targets, self.constraints, self.n_qubits, duration=self.duration)

    def target_state(self, schedule: Schedule | None = None) -> QuantumState:
        if self.target is not None:
            return self.target
        schedule = self.schedule() if schedule is None else schedule
        return QuantumState(ideal_unitary(schedule) @ self.initial.amplitudes)


def _angles(names) -> list:
    return [parse_angle(a) if isinstance(a, str) else float(a) for a in names]


def stage1_spec(sequence: int, constraints: PulseConstraints = DEFAULT_CONSTRAINTS) -> StageSpec:
    if sequence not in STAGE1_SEQUENCES:
        raise SpecError(f"stage-1 sequence must be one of {sorted(STAGE1_SEQUENCES)}, got {sequence}")
    phis = _angles(STAGE1_SEQUENCES[sequence])
    targets = tuple((GateKind.single(q), phi) for q, phi in enumerate(phis))
    return StageSpec(f"stage1-seq{sequence}", targets, 3, QuantumState(ket("ued")),
                     QuantumState(1j * ket("uug")), constraints, storage=(GateKind.single(0),))


def stage2_spec(field_set: str, constraints: PulseConstraints = DEFAULT_CONSTRAINTS) -> StageSpec:
    if field_set not in STAGE2_FIELD_SETS:
        raise SpecError(f"stage-2 field set must be one of {list(STAGE2_FIELD_SETS)}, got {field_set!r}")
    single, psi, phi = _angles(STAGE2_FIELD_SETS[field_set])
    targets = ((GateKind.single(0), single), (GateKind.psi(1, 2), psi), (GateKind.phi(1, 2), phi))
    return StageSpec(f"stage2-{field_set}", targets, 3, QuantumState(1j * ket("uug")),
                     QuantumState(-1j * ket("ug-")), constraints,
                     storage=(GateKind.single(0), GateKind.phi(1, 2)))


@dataclass(frozen=True)
class SweepSpec:
    """A grid over one parameter with everything else fixed.

    ``parameter`` is ``'t_c'``, ``'xi'``, ``'gamma'`` or ``'sequence'``;
    ``stage`` is ``'stage1'`` or ``'stage2'`` (``sequence`` then names the
    preset) or ``'custom'`` with an explicit ``custom`` :class:`StageSpec`.
    Grid point ``i`` draws all randomness from seed ``(seed, i)``, so points
    are statistically independent and reruns are identical.
    """

    parameter: str
    values: tuple
    stage: str = "stage1"
    sequence: object = 1
    gamma: float = 0.1
    t_c: float = 1.0
    xi: object = 0.0
    n_realizations: int = 1000
    n_states: int = 0
    seed: int = 0
    constraints: PulseConstraints = DEFAULT_CONSTRAINTS
    methods: tuple = ("monte-carlo-state", "second-order-state")
    custom: StageSpec | None = None
    workers: int = 1
    dt: float | None = None

    def validate(self) -> None:
        if self.parameter not in ("t_c", "xi", "gamma", "sequence"):
            raise SpecError(f"sweep parameter must be t_c, xi, gamma or sequence, got {self.parameter!r}")
        if not len(self.values):
            raise SpecError("sweep grid is empty")
        if self.stage not in ("stage1", "stage2", "custom"):
            raise SpecError(f"unknown stage {self.stage!r}")
        if self.stage == "custom" and self.custom is None:
            raise SpecError("custom stage needs a StageSpec")
        if self.n_realizations < 1:
            raise SpecError("n_realizations must be at least 1")
        if self.n_states < 0:
            raise SpecError("n_states must be nonnegative")
        for m in self.methods:
            if m not in METHODS:
                raise SpecError(f"unknown method {m!r}; choose from {METHODS}")
        if "monte-carlo-haar" in self.methods and self.n_states < 1:
            raise SpecError("monte-carlo-haar needs n_states >= 1")
        if self.parameter in ("t_c", "gamma"):
            if any(float(v) <= 0 for v in self.values):
                raise SpecError(f"{self.parameter} values must be positive")
        if self.parameter == "xi" and any(not 0.0 <= float(v) <= 1.0 for v in self.values):
            raise SpecError("xi values must lie in [0, 1]")
        for name in ("gamma", "t_c"):
            if getattr(self, name) <= 0:
                raise SpecError(f"{name} must be positive")
        if np.ndim(self.xi) == 0 and not 0.0 <= self.xi <= 1.0:
            raise SpecError("xi must lie in [0, 1]")
        if np.ndim(self.xi) == 2 and self.parameter == "xi":
            raise SpecError("an xi sweep needs a scalar base overlap")

    def stage_spec(self, sequence=None) -> StageSpec:
        sequence = self.sequence if sequence is None else sequence
        if self.stage == "stage1":
            return stage1_spec(int(sequence), self.constraints)
        if self.stage == "stage2":
            return stage2_spec(str(sequence), self.constraints)
        return self.custom

    def point(self, value):
        """(StageSpec, NoiseModel, sequence label) at one grid value."""
        params = {"gamma": self.gamma, "t_c": self.t_c, "xi": self.xi}
        sequence = self.sequence
        if self.parameter == "sequence":
            sequence = value
        else:
            params[self.parameter] = float(value)
        spec = self.stage_spec(sequence)
        if np.ndim(params["xi"]) == 2:
            model = NoiseModel(params["gamma"], params["t_c"], params["xi"])
        else:
            model = NoiseModel.uniform(params["gamma"], params["t_c"], spec.n_qubits, params["xi"])
        return spec, model, sequence


def _row(spec: SweepSpec, value, sequence, method, fid, se, n_real, duration) -> dict:
    return {"sweep_param": spec.parameter, "value": value, "sequence": sequence, "method": method,
            "fidelity": fid, "error": 1.0 - fid, "std_err": se, "n_real": n_real, "duration": duration}


def _monte_carlo(schedule, model, stage: StageSpec, n_real, n_states, seed, want_state, want_haar, dt, workers):
    """State-specific and Haar-averaged reports from one set of propagations."""
    n = stage.n_qubits
    v = stage.initial.amplitudes
    t = stage.target_state(schedule).amplitudes
    F_state = np.empty((n_real, 1))
    if want_haar:
        qubits = list(range(n))
        inputs = haar_states(2**n, n_states, seed)
        targets = _reduce_pure(ideal_unitary(schedule) @ _embed_data(inputs, qubits, n), qubits, n)
        F_haar = np.empty((n_real, n_states))
    for idx, U in realization_unitaries(schedule, model, n_real, seed, dt, workers=workers):
        sl = slice(idx.start, idx.stop)
        if want_state:
            F_state[sl, 0] = np.abs((U @ v) @ t.conj()) ** 2
        if want_haar:
            F_haar[sl] = _overlap_fidelities(U @ inputs, targets, qubits, n)
    out = {}
    if want_state:
        out["monte-carlo-state"] = _report(F_state, "monte-carlo-state")
    if want_haar:
        out["monte-carlo-haar"] = _report(F_haar, "monte-carlo-haar")
    return out


def run_sweep(spec: SweepSpec) -> list:
    """Evaluate every grid point with every requested method; returns CSV rows."""
    spec.validate()
    rows = []
    for i, value in enumerate(spec.values):
        stage, model, sequence = spec.point(value)
        report = validate_model(model)
        if not report.valid:
            raise ModelError("; ".join(report.violations))
        schedule = stage.schedule()
        T = schedule.duration
        seed = (int(spec.seed), i)
        want_state = "monte-carlo-state" in spec.methods
        want_haar = "monte-carlo-haar" in spec.methods
        mc = {}
        if want_state or want_haar:
            mc = _monte_carlo(schedule, model, stage, spec.n_realizations, spec.n_states, seed,
                              want_state, want_haar, spec.dt, spec.workers)
        for method in spec.methods:
            if method in mc:
                r = mc[method]
                rows.append(_row(spec, value, sequence, method, r.fidelity, r.std_err, r.n_realizations, T))
            elif method == "second-order-state":
                f = second_order_state_fidelity(stage.initial, schedule, model)
                rows.append(_row(spec, value, sequence, method, f, 0.0, 0, T))
            elif method == "second-order-haar":
                f = haar_second_order_fidelity(schedule, model)
                rows.append(_row(spec, value, sequence, method, f, 0.0, 0, T))
            elif method == "closed-form" and stage.n_qubits == 2:
                f = analytic_average_fidelity(schedule, model)
                rows.append(_row(spec, value, sequence, method, f, 0.0, 0, T))
    return rows


def run_stage1(sequence: int, t_c_values: Sequence[float], gamma: float = 0.1, n_realizations: int = 1000,
               seed: int = 0, **kwargs) -> list:
    """Stage-1 error against correlation time for one sequence."""
    return run_sweep(SweepSpec("t_c", tuple(t_c_values), "stage1", sequence, gamma=gamma,
                               n_realizations=n_realizations, seed=seed, **kwargs))


def run_stage2(field_set: str, xi_values: Sequence[float], gamma: float = 0.1, t_c: float = 1.0,
               n_realizations: int = 1000, seed: int = 0, **kwargs) -> list:
    """Stage-2 error against cross-dephasing overlap for one field set."""
    return run_sweep(SweepSpec("xi", tuple(xi_values), "stage2", field_set, gamma=gamma, t_c=t_c,
                               n_realizations=n_realizations, seed=seed, **kwargs))


@dataclass(frozen=True)
class IonTrapSpec:
    """SWAP of two ions through a two-level bus mode (qubits: ion 0, ion 1, bus 2).

    The conventional protocol is three red-sideband pulses (ion 0 - bus,
    ion 1 - bus, ion 0 - bus), each a full exchange. The proposed protocol
    adds, in every segment, a blue-sideband storage field on the active pair
    and a carrier storage field on the idle ion. Times in microseconds,
    rates in 1/microsecond. The bus does not dephase.
    """

    sequence: str = "conventional"
    segment_duration: float | None = None
    constraints: PulseConstraints = PulseConstraints(omega_max=0.1, sigma_min=5.0)
    carrier_turns: int = 1
    blue_turns: int = 1
    gamma: float = 1e-3
    t_c: float = 300.0
    xi: float = 0.0
    n_realizations: int = 1000
    n_states: int = 100
    seed: int = 0
    workers: int = 1
    dt: float | None = None

    def __post_init__(self):
        if self.sequence not in ("conventional", "proposed"):
            raise SpecError(f"ion-trap sequence must be conventional or proposed, got {self.sequence!r}")
        if self.segment_duration is None:
            total = 500.0 if self.sequence == "conventional" else 600.0
            object.__setattr__(self, "segment_duration", total / 3)

    def model(self, noiseless: bool = False) -> NoiseModel:
        return NoiseModel.uniform(self.gamma, self.t_c, 3, self.xi, scale=[0.0 if noiseless else 1.0] * 2 + [0.0])


def ion_trap_protocol(spec: IonTrapSpec) -> list:
    """The three segment schedules of the chosen sequence."""
    segs = []
    for ion in (0, 1, 0):
        targets = [(GateKind.psi(ion, 2), math.pi / 2)]
        if spec.sequence == "proposed":
            targets += [(GateKind.phi(ion, 2), 2 * math.pi * spec.blue_turns),
                        (GateKind.single(1 - ion), 2 * math.pi * spec.carrier_turns)]
        segs.append(design_schedule(targets, spec.constraints, 3, duration=spec.segment_duration))
    return segs


def run_ion_trap(spec: IonTrapSpec, noiseless: bool = False) -> FidelityReport:
    """Haar-averaged SWAP fidelity of the two ions (bus starts and ends in ``|g>``)."""
    segs = ion_trap_protocol(spec)
    return average_fidelity_mc(segs, spec.model(noiseless), spec.n_states, spec.n_realizations, spec.seed,
                               data_qubits=[0, 1], dt=spec.dt, workers=spec.workers)


def rows_to_csv(rows: Sequence[dict]) -> str:
    """CSV text with a header; floats written with ``repr`` for exact reruns."""
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(CSV_COLUMNS), lineterminator="\n")
    writer.writeheader()
    for r in rows:
        writer.writerow({k: (repr(float(v)) if isinstance(v, (float, np.floating)) else v) for k, v in r.items()})
    return buf.getvalue()


def fit_slope(x, y, std_err=None):
    """Weighted least-squares slope and its standard error.

    Without standard errors the residual scatter sets the weights.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 2:
        raise ValueError("need at least two points")
    if std_err is None or np.any(np.asarray(std_err) <= 0):
        coef, cov = np.polyfit(x, y, 1, cov=True) if x.size > 2 else (np.polyfit(x, y, 1), np.full((2, 2), np.nan))
    else:
        coef, cov = np.polyfit(x, y, 1, w=1.0 / np.asarray(std_err, dtype=float), cov="unscaled")
    return float(coef[0]), float(math.sqrt(cov[0, 0]))
