"""Run configuration: an INI file with a version key, parsed and validated up front.

Example::

    [meta]
    version = 1

    [noise]
    gamma = 0.1
    t_c = 1.0
    xi = 0.0                 ; scalar overlap, or matrix rows "1 0.5; 0.5 1"

    [schedule]
    omega_max = 10
    sigma_min = 0.025

    [scenario]
    kind = stage1            ; stage1 | stage2 | sweep | ion-trap | custom
    sequence = 1
    sweep = t_c
    values = 0.1 0.3 1 3 10

    [execution]
    n_realizations = 1000
    seed = 7
    workers = 1
    output = out/stage1

Angles anywhere (field targets) accept expressions such as ``7pi/4``.
Unknown sections or keys are errors, reported with their dotted name.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .noise import NoiseModel
from .pulses import GateKind, PulseConstraints, parse_angle
from .scenarios import (DEFAULT_CONSTRAINTS, METHODS, STAGE1_SEQUENCES, STAGE2_FIELD_SETS, IonTrapSpec, StageSpec,
                        SweepSpec)
from .states import QuantumState, ket

__all__ = ["ConfigError", "RunConfig", "load_config", "parse_config", "CONFIG_VERSION"]

CONFIG_VERSION = 1

_SCHEMA = {
    "meta": {"version"},
    "noise": {"gamma", "t_c", "xi", "scale"},
    "register": {"n_qubits"},
    "schedule": {"omega_max", "sigma_min", "duration"},  # plus field keys, checked separately
    "scenario": {"kind", "stage", "sequence", "sweep", "values", "methods", "n_states", "initial",
                 "segment_duration", "carrier_turns", "blue_turns"},
    "execution": {"n_realizations", "seed", "workers", "output", "dt"},
    "sampling": {"duration", "dt", "lags"},
}
_KINDS = ("stage1", "stage2", "sweep", "ion-trap", "custom")


class ConfigError(ValueError):
    """Invalid configuration; ``errors`` lists every problem as ``section.key: message``."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


@dataclass
class RunConfig:
    kind: str
    noise: NoiseModel | None
    n_realizations: int
    seed: int
    workers: int
    output: str
    dt: float | None = None
    sweep: SweepSpec | None = None
    ion_trap: IonTrapSpec | None = None
    sampling: dict = field(default_factory=dict)
    source: str = ""


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError([f"config: cannot read {path}: {exc.strerror}"]) from None
    return parse_config(text, source=str(path))


def _field_key(key: str):
    """``single.0``, ``psi.1.2`` or ``phi.1.2`` -> GateKind, else None."""
    parts = key.split(".")
    if parts[0] not in ("single", "psi", "phi"):
        return None
    try:
        qubits = [int(p) for p in parts[1:]]
    except ValueError:
        return None
    if parts[0] == "single" and len(qubits) == 1:
        return GateKind.single(*qubits)
    if parts[0] != "single" and len(qubits) == 2 and qubits[0] != qubits[1]:
        return GateKind(parts[0], tuple(qubits))
    return None


class _Reader:
    """Typed access to a ConfigParser that collects errors instead of raising."""

    def __init__(self, cp):
        self.cp = cp
        self.errors = []

    def has(self, sec, key):
        return self.cp.has_option(sec, key)

    def get(self, sec, key, conv, default=None, required=False):
        if not self.cp.has_option(sec, key):
            if required:
                self.errors.append(f"{sec}.{key}: missing")
            return default
        raw = self.cp.get(sec, key).strip()
        try:
            return conv(raw)
        except (ValueError, TypeError) as exc:
            self.errors.append(f"{sec}.{key}: invalid value {raw!r} ({exc})")
            return default


def _positive(conv):
    def f(raw):
        v = conv(raw)
        if not v > 0:
            raise ValueError("must be positive")
        return v
    return f


def _nonneg_int(raw):
    v = int(raw)
    if v < 0:
        raise ValueError("must be nonnegative")
    return v


def _floats(raw):
    vals = [float(x) for x in raw.replace(",", " ").split()]
    if not vals:
        raise ValueError("empty list")
    return vals


def _xi(raw):
    rows = [r for r in raw.split(";") if r.strip()]
    if len(rows) == 1 and len(rows[0].split()) == 1:
        return float(rows[0])
    return np.array([[float(x) for x in r.replace(",", " ").split()] for r in rows])


def parse_config(text: str, source: str = "<string>") -> RunConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"), interpolation=None)
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError([f"config: {exc.message if hasattr(exc, 'message') else exc}"]) from None
    r = _Reader(cp)

    for sec in cp.sections():
        if sec not in _SCHEMA:
            r.errors.append(f"{sec}: unknown section")
            continue
        for key in cp.options(sec):
            if key in _SCHEMA[sec] or (sec == "schedule" and _field_key(key) is not None):
                continue
            r.errors.append(f"{sec}.{key}: unknown key")

    version = r.get("meta", "version", int, required=True)
    if version is not None and version != CONFIG_VERSION:
        r.errors.append(f"meta.version: unsupported version {version} (expected {CONFIG_VERSION})")

    kind = r.get("scenario", "kind", str)
    if kind is not None and kind not in _KINDS:
        r.errors.append(f"scenario.kind: must be one of {', '.join(_KINDS)}, got {kind!r}")
        kind = None

    n_real = r.get("execution", "n_realizations", _positive(int), 1000)
    seed = r.get("execution", "seed", _nonneg_int, 0)
    workers = r.get("execution", "workers", _positive(int), 1)
    output = r.get("execution", "output", str, "output")
    dt = r.get("execution", "dt", _positive(float))

    constraints = DEFAULT_CONSTRAINTS
    om = r.get("schedule", "omega_max", _positive(float))
    sm = r.get("schedule", "sigma_min", _positive(float))
    if om is not None or sm is not None:
        constraints = PulseConstraints(om or DEFAULT_CONSTRAINTS.omega_max, sm or DEFAULT_CONSTRAINTS.sigma_min)

    cfg = RunConfig(kind=kind, noise=None, n_realizations=n_real, seed=seed, workers=workers,
                    output=output, dt=dt, source=source)

    gamma = r.get("noise", "gamma", _positive(float), required=True)
    t_c = r.get("noise", "t_c", _positive(float), required=True)
    xi = r.get("noise", "xi", _xi, 0.0)
    scale = r.get("noise", "scale", _floats)

    n_qubits = _register_size(r, kind, xi)
    if n_qubits is not None and gamma is not None and t_c is not None and xi is not None:
        if np.ndim(xi) == 0:
            if not 0.0 <= float(xi) <= 1.0:
                r.errors.append(f"noise.xi: scalar overlap must lie in [0, 1], got {xi}")
            cfg.noise = NoiseModel.uniform(gamma, t_c, n_qubits, float(xi), scale)
        else:
            if xi.shape != (n_qubits, n_qubits):
                r.errors.append(f"noise.xi: expected a {n_qubits}x{n_qubits} matrix, got shape {xi.shape}")
            else:
                cfg.noise = NoiseModel(gamma, t_c, xi, scale)
        if scale is not None and len(scale) != n_qubits:
            r.errors.append(f"noise.scale: expected {n_qubits} entries, got {len(scale)}")
            cfg.noise = None

    if kind in ("stage1", "stage2", "sweep", "custom"):
        cfg.sweep = _sweep(r, kind, cfg, constraints, gamma, t_c, xi)
    elif kind == "ion-trap":
        cfg.ion_trap = _ion_trap(r, cfg, gamma, t_c, xi)

    cfg.sampling = {
        "duration": r.get("sampling", "duration", _positive(float)),
        "dt": r.get("sampling", "dt", _positive(float)),
        "lags": r.get("sampling", "lags", _floats),
    }
    if r.errors:
        raise ConfigError(r.errors)
    return cfg


def _register_size(r, kind, xi):
    n = r.get("register", "n_qubits", _positive(int))
    if kind in ("stage1", "stage2", "sweep", "ion-trap"):
        if n is not None and n != 3:
            r.errors.append(f"register.n_qubits: scenario {kind} uses 3 qubits, got {n}")
        return 3
    if n is None and xi is not None and np.ndim(xi) == 2:
        return xi.shape[0]
    if n is None:
        r.errors.append("register.n_qubits: missing")
    return n


def _sequence(r, stage):
    raw = r.get("scenario", "sequence", str, required=True)
    if raw is None:
        return None
    if stage == "stage1":
        try:
            seq = int(raw)
        except ValueError:
            seq = None
        if seq not in STAGE1_SEQUENCES:
            r.errors.append(f"scenario.sequence: stage1 sequence must be 1-4, got {raw!r}")
            return None
        return seq
    if raw not in STAGE2_FIELD_SETS:
        r.errors.append(f"scenario.sequence: stage2 field set must be one of {', '.join(STAGE2_FIELD_SETS)}")
        return None
    return raw


def _sweep(r, kind, cfg, constraints, gamma, t_c, xi):
    default_param = {"stage1": "t_c", "stage2": "xi"}.get(kind)
    param = r.get("scenario", "sweep", str, default_param, required=default_param is None)
    values = r.get("scenario", "values", _floats, required=True)
    methods = r.get("scenario", "methods", lambda s: tuple(s.replace(",", " ").split()))
    n_states = r.get("scenario", "n_states", _nonneg_int, 0)
    if methods is None:
        methods = ("monte-carlo-state", "second-order-state")
        if kind == "custom":
            methods = ("monte-carlo-haar", "second-order-haar", "closed-form")
    for m in methods:
        if m not in METHODS:
            r.errors.append(f"scenario.methods: unknown method {m!r}")

    stage = kind
    if kind == "sweep":
        stage = r.get("scenario", "stage", str, "stage1")
        if stage not in ("stage1", "stage2", "custom"):
            r.errors.append(f"scenario.stage: must be stage1, stage2 or custom, got {stage!r}")
            return None
    custom = None
    sequence = None
    if stage in ("stage1", "stage2"):
        if param != "sequence":
            sequence = _sequence(r, stage)
    else:
        custom = _custom_stage(r, constraints, cfg)
        sequence = "custom"
    if param == "sequence" and values is not None and stage == "stage2":
        r.errors.append("scenario.values: sequence sweeps over stage2 field sets are not numeric; list one per run")
    if r.errors:
        return None
    if param == "sequence":
        values = tuple(int(v) for v in values)
        sequence = values[0]
    if np.ndim(xi) == 2 and (param == "xi" or stage != "custom"):
        r.errors.append("noise.xi: only custom scenarios take an overlap matrix; use a scalar")
        return None
    if n_states == 0 and "monte-carlo-haar" in methods:
        n_states = 100
    spec = SweepSpec(param, tuple(values), stage, sequence, gamma=gamma, t_c=t_c,
                     xi=xi if np.ndim(xi) == 2 else float(xi),
                     n_realizations=cfg.n_realizations, n_states=n_states, seed=cfg.seed,
                     constraints=constraints, methods=tuple(methods), custom=custom, workers=cfg.workers,
                     dt=cfg.dt)
    try:
        spec.validate()
    except ValueError as exc:
        r.errors.append(f"scenario: {exc}")
        return None
    return spec


def _custom_stage(r, constraints, cfg):
    n = r.get("register", "n_qubits", _positive(int))
    targets = []
    if r.cp.has_section("schedule"):
        for key in r.cp.options("schedule"):
            kind = _field_key(key)
            if kind is None:
                continue
            if max(kind.qubits) >= (n or 0):
                r.errors.append(f"schedule.{key}: qubit outside register of {n}")
                continue
            phi = r.get("schedule", key, parse_angle)
            if phi is not None:
                targets.append((kind, phi))
    if not targets:
        r.errors.append("schedule: custom scenario needs at least one field (e.g. single.0 = 2pi)")
    duration = r.get("schedule", "duration", _positive(float))
    initial = r.get("scenario", "initial", str, "g" * (n or 1))
    if n and initial and len(initial) != n:
        r.errors.append(f"scenario.initial: label needs {n} characters")
    if r.errors:
        return None
    try:
        psi0 = QuantumState(ket(initial))
    except KeyError as exc:
        r.errors.append(f"scenario.initial: unknown state character {exc}")
        return None
    # target None: the noiseless image of the initial state, built when the schedule is
    return StageSpec("custom", tuple(targets), n, psi0, None, constraints, duration=duration)


def _ion_trap(r, cfg, gamma, t_c, xi):
    seq = r.get("scenario", "sequence", str, required=True)
    if seq not in (None, "conventional", "proposed"):
        r.errors.append(f"scenario.sequence: ion-trap sequence must be conventional or proposed, got {seq!r}")
        return None
    om = r.get("schedule", "omega_max", _positive(float), 0.1)
    sm = r.get("schedule", "sigma_min", _positive(float), 5.0)
    seg = r.get("scenario", "segment_duration", _positive(float))
    carrier = r.get("scenario", "carrier_turns", _positive(int), 1)
    blue = r.get("scenario", "blue_turns", _positive(int), 1)
    n_states = r.get("scenario", "n_states", _positive(int), 100)
    if np.ndim(xi) == 2:
        r.errors.append("noise.xi: the ion-trap scenario takes a scalar ion-ion overlap")
    if r.errors or seq is None:
        return None
    return IonTrapSpec(seq, seg, PulseConstraints(om, sm), carrier, blue, gamma, t_c, float(xi),
                       cfg.n_realizations, n_states, cfg.seed, cfg.workers, cfg.dt)

