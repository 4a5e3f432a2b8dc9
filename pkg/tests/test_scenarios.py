import math

import numpy as np
import pytest

from dephasing_control.evolution import ideal_unitary, total_duration
from dephasing_control.metrics import fidelity
from dephasing_control.pulses import GateKind, PulseConstraints
from dephasing_control.scenarios import (CSV_COLUMNS, DEFAULT_CONSTRAINTS, IonTrapSpec, SpecError, StageSpec,
                                         SweepSpec, fit_slope, ion_trap_protocol, rows_to_csv, run_ion_trap,
                                         run_stage1, run_stage2, run_sweep, stage1_spec, stage2_spec)
from dephasing_control.states import QuantumState, ket

P = math.pi


@pytest.mark.parametrize("make,key", [(stage1_spec, s) for s in (1, 2, 3, 4)]
                         + [(stage2_spec, s) for s in ("solid", "dotted", "dashed", "dash-dot")])
def test_noiseless_stages_reach_targets(make, key):
    stage = make(key)
    sched = stage.schedule()
    out = ideal_unitary(sched) @ stage.initial.amplitudes
    assert abs(np.vdot(stage.target.amplitudes, out)) ** 2 >= 1 - 1e-6


def test_equal_peak_power_across_sequences():
    peaks = [stage1_spec(s).schedule().peak for s in (1, 2, 3, 4)]
    peaks += [stage2_spec(s).schedule().peak for s in ("solid", "dotted", "dashed", "dash-dot")]
    assert max(peaks) - min(peaks) <= 1e-9
    assert peaks[0] == DEFAULT_CONSTRAINTS.omega_max


def test_stage1_durations():
    T = [stage1_spec(s).schedule().duration for s in (1, 2, 3, 4)]
    assert T[3] > 3 * T[0]
    assert T[0] < T[1] < T[2] < T[3]


def test_stage2_starts_where_stage1_ends():
    assert np.allclose(stage2_spec("solid").initial.amplitudes, stage1_spec(1).target.amplitudes)


def test_storage_targets_checked():
    with pytest.raises(SpecError, match="multiple of 2 pi"):
        StageSpec("bad", ((GateKind.single(0), P),), 1, QuantumState(ket("g")), None,
                  storage=(GateKind.single(0),))
    with pytest.raises(SpecError):
        stage1_spec(5)
    with pytest.raises(SpecError):
        stage2_spec("dots")


def test_custom_stage_defaults_to_noiseless_image():
    c = PulseConstraints(1.0, 0.25)
    stage = StageSpec("c", ((GateKind.single(0), P / 4),), 1, QuantumState(ket("g")), None, c)
    out = ideal_unitary(stage.schedule()) @ ket("g")
    assert fidelity(stage.target_state().amplitudes, out) == pytest.approx(1.0)


def test_single_point_single_realization_is_deterministic():
    spec = SweepSpec("t_c", (1.0,), "stage1", 2, n_realizations=1, methods=("monte-carlo-state",))
    a, b = run_sweep(spec), run_sweep(spec)
    assert len(a) == 1 and rows_to_csv(a) == rows_to_csv(b)
    assert a[0]["n_real"] == 1 and math.isnan(a[0]["std_err"])


def test_sweep_rows_and_reruns():
    spec = SweepSpec("xi", (0.0, 1.0), "stage2", "dotted", n_realizations=20, n_states=3, seed=4,
                     methods=("monte-carlo-state", "monte-carlo-haar", "second-order-state", "second-order-haar"),
                     dt=0.002)
    rows = run_sweep(spec)
    assert len(rows) == 8
    assert [r["method"] for r in rows[:4]] == list(spec.methods)
    for r in rows:
        assert set(r) == set(CSV_COLUMNS)
        assert r["error"] == 1 - r["fidelity"]
    assert rows_to_csv(rows) == rows_to_csv(run_sweep(spec))
    assert rows_to_csv(rows).splitlines()[0] == ",".join(CSV_COLUMNS)


def test_points_use_independent_streams():
    spec = SweepSpec("gamma", (0.1, 0.1), "stage1", 1, n_realizations=5, methods=("monte-carlo-state",), dt=0.002)
    a, b = run_sweep(spec)
    assert a["fidelity"] != b["fidelity"]


def test_error_grows_with_rate():
    spec = SweepSpec("gamma", (0.05, 0.1), "stage1", 3, t_c=1.0, n_realizations=200,
                     methods=("monte-carlo-state", "second-order-state"), dt=0.002)
    rows = run_sweep(spec)
    mc = [r["error"] for r in rows if r["method"] == "monte-carlo-state"]
    so = [r["error"] for r in rows if r["method"] == "second-order-state"]
    assert so[1] == pytest.approx(2 * so[0], rel=1e-6)
    assert mc[1] > mc[0]


def test_sequence_sweep_and_closed_form_column():
    spec = SweepSpec("sequence", (1, 4), "stage1", methods=("second-order-state",))
    rows = run_sweep(spec)
    assert [r["sequence"] for r in rows] == [1, 4]
    assert rows[1]["duration"] > 3 * rows[0]["duration"]
    c = PulseConstraints(1.0, 0.25)
    custom = StageSpec("pair", ((GateKind.single(0), 2 * P), (GateKind.single(1), 4 * P)), 2,
                       QuantumState(ket("+-")), None, c, duration=35.0)
    spec = SweepSpec("gamma", (0.002,), "custom", t_c=2.0, custom=custom,
                     methods=("second-order-haar", "closed-form"))
    so, cf = run_sweep(spec)
    assert cf["method"] == "closed-form"
    assert (1 - cf["fidelity"]) / (1 - so["fidelity"]) == pytest.approx(25 / 24, rel=1e-5)


@pytest.mark.parametrize("kwargs,msg", [
    (dict(parameter="omega", values=(1,)), "sweep parameter"),
    (dict(parameter="t_c", values=()), "empty"),
    (dict(parameter="t_c", values=(0.0,)), "positive"),
    (dict(parameter="xi", values=(1.5,)), r"\[0, 1\]"),
    (dict(parameter="t_c", values=(1,), methods=("magic",)), "unknown method"),
    (dict(parameter="t_c", values=(1,), methods=("monte-carlo-haar",)), "n_states"),
    (dict(parameter="t_c", values=(1,), n_realizations=0), "n_realizations"),
    (dict(parameter="t_c", values=(1,), stage="custom"), "StageSpec"),
])
def test_sweep_validation(kwargs, msg):
    with pytest.raises(SpecError, match=msg):
        SweepSpec(**kwargs).validate()


def test_stage_runners():
    rows = run_stage1(4, [3.0], n_realizations=4, methods=("second-order-state",))
    assert rows[0]["sweep_param"] == "t_c" and rows[0]["sequence"] == 4
    rows = run_stage2("dash-dot", [0.5], n_realizations=4, methods=("second-order-state",))
    assert rows[0]["sweep_param"] == "xi" and rows[0]["sequence"] == "dash-dot"


def test_ion_trap_layout():
    conv = ion_trap_protocol(IonTrapSpec("conventional"))
    prop = ion_trap_protocol(IonTrapSpec("proposed"))
    assert total_duration(conv) == pytest.approx(500.0)
    assert total_duration(prop) == pytest.approx(600.0)
    assert max(s.peak for s in conv) == max(s.peak for s in prop)
    assert [len(s.fields) for s in conv] == [1, 1, 1]
    assert [len(s.fields) for s in prop] == [3, 3, 3]
    assert prop[1].field("single", 0) is not None and prop[1].field("phi", 1, 2) is not None
    with pytest.raises(SpecError):
        IonTrapSpec("fast")


@pytest.mark.parametrize("sequence", ["conventional", "proposed"])
def test_ion_trap_noiseless_swap(sequence):
    r = run_ion_trap(IonTrapSpec(sequence, n_realizations=1, n_states=20), noiseless=True)
    assert r.fidelity == pytest.approx(1.0, abs=1e-8)


def test_ion_trap_swaps_the_ions():
    U = ideal_unitary(ion_trap_protocol(IonTrapSpec("proposed")))
    for label, swapped in (("egg", "geg"), ("geg", "egg"), ("eeg", "eeg"), ("ggg", "ggg")):
        assert abs(np.vdot(ket(swapped), U @ ket(label))) == pytest.approx(1.0, abs=1e-9)


def test_fit_slope():
    x = np.array([0, 0.25, 0.5, 0.75, 1.0])
    slope, se = fit_slope(x, 0.3 * x + 0.1, np.full(5, 0.01))
    assert slope == pytest.approx(0.3) and se == pytest.approx(0.01 / math.sqrt(np.sum((x - x.mean()) ** 2)))
    slope, se = fit_slope(x, 2 * x + 1 + np.array([0.01, -0.01, 0.0, 0.01, -0.01]))
    assert slope == pytest.approx(2.0, abs=0.05) and se > 0


def test_phi_storage_field_changes_error_without_cross_dephasing():
    # the 2pi Phi field modulates the diagonal Phi terms, so solid and dotted differ even at xi = 0
    second = {s: run_stage2(s, (0.0,), methods=("second-order-state",))[0]["error"] for s in ("solid", "dotted")}
    assert second["solid"] == pytest.approx(0.0439, abs=5e-4)
    assert second["dotted"] == pytest.approx(0.0466, abs=5e-4)
    mc = {s: run_stage2(s, (0.0,), n_realizations=1000, seed=3, methods=("monte-carlo-state",), workers=4)[0]
          for s in ("solid", "dotted")}
    diff = mc["dotted"]["error"] - mc["solid"]["error"]
    se = math.hypot(mc["dotted"]["std_err"], mc["solid"]["std_err"])
    assert abs(diff - (second["dotted"] - second["solid"])) < 3 * se
