"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -s``; the verdicts are repeated in
the terminal summary under "acceptance criteria".
"""

import itertools
import math

import numpy as np
import pytest

from dephasing_control.cli import main
from dephasing_control.evolution import (haar_second_order_fidelity, ideal_unitary, monte_carlo_density,
                                         realization_unitaries, second_order_density)
from dephasing_control.functional import (analytic_average_fidelity, avg_fidelity_two, j_closed_form, j_freq,
                                          j_time, schedule_j_matrices)
from dephasing_control.metrics import average_fidelity_mc, haar_states, state_fidelity_mc
from dephasing_control.noise import NoiseModel
from dephasing_control.pulses import GateKind, PulseConstraints, design_pulse_train, design_schedule
from dephasing_control.scenarios import (IonTrapSpec, SweepSpec, fit_slope, rows_to_csv, run_ion_trap,
                                         run_stage1, run_stage2, run_sweep, stage1_spec)
from dephasing_control.states import (COMPUTATIONAL, SINGLE_DIAG, TWO_DIAG, DensityMatrix, QuantumState,
                                      basis_transform, ket)

P = math.pi
C = PulseConstraints(1.0, 0.25)
PAIR_DURATION = 35.0


def _storage_pair():
    return design_schedule({GateKind.single(0): 2 * P, GateKind.single(1): 4 * P}, C, 2,
                           duration=PAIR_DURATION)


def _driven_pair():
    return design_schedule({GateKind.psi(0, 1): 3 * P / 2, GateKind.phi(0, 1): 2 * P}, C, 2,
                           duration=PAIR_DURATION)


def test_criterion_1_uncontrolled_functional(verdict):
    gamma, t_c = 0.1, 1.7
    m = NoiseModel.uniform(gamma, t_c, 1)
    times = t_c * np.geomspace(0.1, 20.0, 15)
    worst = max(abs(j_time(m, None, None, 0, 0, t).real / float(j_closed_form(m, 0, 0, t)) - 1) for t in times)
    t_end = 20 * t_c
    ratio = j_time(m, None, None, 0, 0, t_end).real / (gamma * t_end)
    ok = verdict(1, "uncontrolled J", [
        (f"closed form rel err {worst:.2e} <= 1e-4", worst <= 1e-4),
        (f"J/(gamma t) at 20 t_c = {ratio:.4f} within 1%", abs(ratio - 1) <= 0.01),
    ])
    assert ok


def test_criterion_2_time_and_frequency_forms(verdict):
    trains = {
        "free": lambda T: None,
        "2pi storage": lambda T: design_pulse_train(2 * P, C, duration_hint=T, kind=GateKind.single(0)),
        "3pi/2 in 3 pulses": lambda T: design_pulse_train(1.5 * P, C, n_pulses=3, duration_hint=T,
                                                          kind=GateKind.psi(0, 1)),
    }
    worst, where = 0.0, None
    for t_c, T, name in itertools.product((0.5, 2.0, 8.0), (20.0, 30.0, 40.0), trains):
        m = NoiseModel.uniform(0.1, t_c, 1)
        f = trains[name](T)
        a = j_time(m, f, f, 0, 0, T).real
        b = j_freq(m, f, f, 0, 0, T).real_part_freq
        rel = abs(b / a - 1)
        if rel > worst:
            worst, where = rel, (t_c, T, name)
    assert verdict(2, "time vs frequency form", [(f"worst rel diff {worst:.2e} at {where} <= 1e-3",
                                                  worst <= 1e-3)])


@pytest.fixture(scope="module")
def haar_runs():
    """Monte Carlo Haar averages, 10^4 realizations x 200 states, gamma T = 0.02."""
    out = {}
    for name, sched in (("storage", _storage_pair()), ("driven", _driven_pair())):
        m = NoiseModel.uniform(0.02 / PAIR_DURATION, 1.0, 2, 0.5)
        assert m.gamma * sched.duration <= 0.1
        out[name] = (sched, m, average_fidelity_mc(sched, m, 200, 10_000, 11, workers=4))
    return out


def test_criterion_3_closed_forms_against_monte_carlo(verdict, haar_runs):
    checks = []
    for name, formula in (("storage", "single-field form"), ("driven", "pair-field form")):
        sched, m, mc = haar_runs[name]
        published = analytic_average_fidelity(sched, m)
        exact = haar_second_order_fidelity(sched, m)
        z_pub = (mc.fidelity - published) / mc.std_err
        z_exact = (mc.fidelity - exact) / mc.std_err
        checks.append((f"{formula} 5/12,5/24 coefficients {z_pub:+.2f} SE", abs(z_pub) <= 3))
        checks.append((f"{formula} Haar coefficients {z_exact:+.2f} SE (supplementary)", abs(z_exact) <= 3))
    assert verdict(3, "closed forms vs Monte Carlo", checks)


def test_criterion_4_decoherence_free_subspace(verdict):
    m = NoiseModel.uniform(0.1, 1.0, 2, overlap=1.0)
    sched = _driven_pair()
    psi_minus = (ket("eg") - ket("ge")) / math.sqrt(2)
    target = ideal_unitary(sched) @ psi_minus
    r = state_fidelity_mc(psi_minus, target, sched, m, 1000, 4)
    # a floor of 1e-12 stands in for 3 SE when the spread is pure rounding
    gap = abs(1 - r.fidelity)
    mats = schedule_j_matrices(sched, m)
    psi = mats["psi"]
    alternating = float(psi[0, 0] - psi[0, 1] - psi[1, 0] + psi[1, 1])
    assert verdict(4, "decoherence-free subspace", [
        (f"Psi- fidelity gap {gap:.1e} (SE {r.std_err:.1e})", gap <= max(3 * r.std_err, 1e-12)),
        (f"Psi cross terms sum {alternating!r}", alternating == 0.0),
        ("Psi channel alone leaves F = 1", avg_fidelity_two(np.zeros((2, 2)), psi) == 1.0),
    ])


def test_criterion_5_stage_one(verdict):
    checks = []
    durations = {}
    for seq in (1, 2, 3, 4):
        stage = stage1_spec(seq)
        sched = stage.schedule()
        durations[seq] = sched.duration
        out = ideal_unitary(sched) @ stage.initial.amplitudes
        overlap = abs(np.vdot(stage.target.amplitudes, out)) ** 2
        checks.append((f"seq {seq} noiseless overlap 1-{1 - overlap:.1e}", overlap >= 1 - 1e-6))
    t_cs = (10.0, 100.0)
    errs = {}
    for seq in (1, 2, 4):
        rows = run_stage1(seq, t_cs, gamma=0.1, n_realizations=1000, seed=seq,
                          methods=("monte-carlo-state",), workers=4)
        errs[seq] = [(r["error"], r["std_err"]) for r in rows]
    for i, t_c in enumerate(t_cs):
        e1, s1 = errs[1][i]
        for seq in (2, 4):
            e, s = errs[seq][i]
            z = (e1 - e) / math.hypot(s1, s)
            checks.append((f"t_c={t_c:g} E{seq}={e:.2e} < E1={e1:.2e} ({z:.1f} sigma)", e < e1 and z > 3))
    ratio = durations[4] / durations[1]
    checks.append((f"seq 4 duration {ratio:.3f} x seq 1 > 3", ratio > 3))
    assert verdict(5, "stage 1", checks)


def test_criterion_6_stage_two(verdict):
    xs = (0.0, 0.25, 0.5, 0.75, 1.0)
    fits, at_one = {}, {}
    for i, name in enumerate(("solid", "dotted", "dashed", "dash-dot")):
        rows = run_stage2(name, xs, gamma=0.1, t_c=1.0, n_realizations=1000, seed=7 + i,
                          methods=("monte-carlo-state",), workers=4)
        errors = [r["error"] for r in rows]
        fits[name] = fit_slope(xs, errors, [r["std_err"] for r in rows])
        at_one[name] = errors[-1]
    slope, se = fits["solid"]
    checks = [(f"solid slope {slope:.2e} = {slope / se:.1f} sigma > 3", slope > 3 * se)]
    for name in ("dotted", "dash-dot"):
        slope, se = fits[name]
        checks.append((f"{name} slope {slope:.2e} = {slope / se:+.1f} sigma within 3", abs(slope) <= 3 * se))
    lowest = min(at_one, key=at_one.get)
    checks.append((f"lowest error at xi=1 is {lowest} ({at_one[lowest]:.2e})", lowest == "dash-dot"))
    assert verdict(6, "stage 2", checks)


def test_criterion_7_ion_trap(verdict):
    conv = run_ion_trap(IonTrapSpec("conventional", n_realizations=1000, n_states=100, seed=3, workers=4))
    prop = run_ion_trap(IonTrapSpec("proposed", n_realizations=1000, n_states=100, seed=3, workers=4))
    z = (prop.fidelity - conv.fidelity) / math.hypot(conv.std_err, prop.std_err)
    assert verdict(7, "ion-trap SWAP", [
        (f"proposed {prop.fidelity:.4f} > conventional {conv.fidelity:.4f} by {z:.1f} sigma", z > 3),
        (f"conventional {conv.fidelity:.4f} vs 0.93 +- 0.03", abs(conv.fidelity - 0.93) <= 0.03),
        (f"proposed {prop.fidelity:.4f} vs 0.97 +- 0.03", abs(prop.fidelity - 0.97) <= 0.03),
    ])


_RERUN_CONFIG = """
[meta]
version = 1
[noise]
gamma = 0.1
t_c = 1
xi = 0.3
[scenario]
kind = stage2
sequence = dotted
values = 0 0.5
[execution]
n_realizations = 40
seed = 17
"""


def test_criterion_8_structural_invariants(verdict, tmp_path):
    checks = []
    stage = stage1_spec(2)
    sched = stage.schedule()
    m = NoiseModel.uniform(0.1, 1.0, 3, 0.4)
    rho, _ = monte_carlo_density(stage.initial, sched, m, 300, 2)
    checks.append((f"rho hermiticity {rho.hermiticity_error():.1e}", rho.hermiticity_error() < 1e-12))
    checks.append((f"rho trace err {abs(rho.trace - 1):.1e}", abs(rho.trace - 1) < 1e-12))
    checks.append((f"rho min eigenvalue {rho.min_eigenvalue():.1e}", rho.min_eigenvalue() > -1e-12))

    drift = 0.0
    for _, U in realization_unitaries(sched, m, 200, 3):
        drift = max(drift, float(np.max(np.abs(U.conj().transpose(0, 2, 1) @ U - np.eye(8)))))
    checks.append((f"unitarity drift {drift:.1e}", drift < 1e-10))

    pair = _driven_pair()
    v = QuantumState(haar_states(4, 1, 8)[:, 0])
    base = basis_transform(v.density(), TWO_DIAG, pair.pairing).entries
    corr = [second_order_density(v, pair, NoiseModel.uniform(g, 1.0, 2, 0.5)).entries - base
            for g in (0.004, 0.002)]
    ratio = np.linalg.norm(corr[1]) / np.linalg.norm(corr[0])
    direction = np.max(np.abs(corr[1] - 0.5 * corr[0])) / np.max(np.abs(corr[0]))
    checks.append((f"half-gamma correction ratio {ratio:.6f}", abs(ratio - 0.5) <= 0.005 and direction < 0.01))

    rng = np.random.default_rng(12)
    worst = 0.0
    for n, pairing in ((1, ()), (2, ((0, 1),)), (3, ((0, 2),)), (4, ((0, 1), (2, 3)))):
        z = rng.standard_normal(2**n) + 1j * rng.standard_normal(2**n)
        vec = z / np.linalg.norm(z)
        tag = TWO_DIAG if pairing else SINGLE_DIAG
        back = basis_transform(basis_transform(QuantumState(vec), tag, pairing), COMPUTATIONAL)
        worst = max(worst, float(np.max(np.abs(back.amplitudes - vec))))
        r = DensityMatrix(np.outer(vec, vec.conj()))
        r_back = basis_transform(basis_transform(r, tag, pairing), COMPUTATIONAL)
        worst = max(worst, float(np.max(np.abs(r_back.entries - r.entries))))
    checks.append((f"basis round trip {worst:.1e}", worst <= 1e-12))

    spec = SweepSpec("xi", (0.0, 1.0), "stage2", "solid", n_realizations=60, seed=5,
                     methods=("monte-carlo-state", "second-order-state"))
    same_api = rows_to_csv(run_sweep(spec)) == rows_to_csv(run_sweep(spec))
    cfg = tmp_path / "rerun.cfg"
    cfg.write_text(_RERUN_CONFIG)
    bodies = []
    for out, workers in (("a", "1"), ("b", "3")):
        assert main(["run", str(cfg), "--out", str(tmp_path / out), "--workers", workers]) == 0
        bodies.append((tmp_path / out / "stage2_dotted_xi.csv").read_bytes().split(b"\n", 1)[1])
    checks.append(("byte-identical reruns", same_api and bodies[0] == bodies[1]))
    assert verdict(8, "structural invariants", checks)
