import math

import numpy as np
import pytest
from scipy.linalg import expm

from dephasing_control import evolution
from dephasing_control.evolution import (NumericalError, build_hamiltonian, default_step, haar_second_order_fidelity,
                                         ideal_unitary, integration_grid, interaction_to_rotating,
                                         monte_carlo_density, noise_channels, propagate, propagators,
                                         second_order_density, second_order_state_fidelity)
from dephasing_control.functional import analytic_average_fidelity, j_closed_form
from dephasing_control.metrics import haar_states
from dephasing_control.noise import NoiseModel, NoiseRealization, sample_deltas, sample_realization
from dephasing_control.pulses import GateField, GateKind, GaussianPulseTrain, Pulse, PulseConstraints, design_schedule
from dephasing_control.states import (COMPUTATIONAL, TWO_DIAG, DensityMatrix, QuantumState, basis_transform,
                                      embed_operator, ket)

P = math.pi
C = PulseConstraints(1.0, 0.25)
SIGMA_PLUS = np.array([[0, 0], [1, 0]], dtype=complex)


def _one_qubit(phase, duration=None):
    return design_schedule({GateKind.single(0): phase}, C, 1, duration=duration)


def test_hamiltonian_empty():
    s = design_schedule({}, C, 2, duration=3.0)
    assert np.all(build_hamiltonian(s, None, 1.0) == 0)


def test_hamiltonian_single_drive():
    s = _one_qubit(P / 2)
    p = s.fields[0].train.pulses[0]
    H = build_hamiltonian(s, None, p.center)
    assert H[1, 0] == pytest.approx(p.amplitude) and H[0, 1] == pytest.approx(p.amplitude)
    assert H[0, 0] == 0 and H[1, 1] == 0


def test_hamiltonian_pair_structure():
    s = design_schedule({GateKind.phi(0, 1): P / 2}, C, 2)
    t = s.fields[0].train.pulses[0].center
    H = build_hamiltonian(s, None, t)
    gg, ee = 0, 3
    assert set(zip(*np.nonzero(np.abs(H) > 0))) == {(gg, ee), (ee, gg)}
    s = design_schedule({GateKind.psi(0, 2): P / 2}, C, 3)
    t = s.fields[0].train.pulses[0].center
    amp = s.fields[0].envelope(t)
    op = np.zeros((4, 4)); op[1, 2] = op[2, 1] = 1  # |ge><eg| + h.c. on (0, 2)
    assert np.allclose(build_hamiltonian(s, None, t), amp * embed_operator(op, [0, 2], 3))


def test_hamiltonian_noise_term_and_hermiticity():
    s = design_schedule({GateKind.single(0): 2 * P, GateKind.psi(1, 2): P / 2}, C, 3)
    m = NoiseModel.uniform(0.1, 1.0, 3, 0.3)
    real = sample_realization(m, np.linspace(0, s.duration, 201), 1)
    t = 0.37 * s.duration
    H = build_hamiltonian(s, real, t)
    assert np.allclose(H, H.conj().T)
    expected_diag = sum(real.at(t)[j] * embed_operator(np.diag([0, 1]), [j], 3).diagonal() for j in range(3))
    assert np.allclose(np.diag(H).real, expected_diag)
    with pytest.raises(ValueError):
        build_hamiltonian(s, real, s.duration * 2)
    with pytest.raises(ValueError):
        build_hamiltonian(s, sample_realization(NoiseModel.uniform(0.1, 1, 2), real.grid, 0), t)


def test_zero_hamiltonian_keeps_state():
    s = design_schedule({}, C, 2, duration=4.0)
    v = haar_states(4, 1, 0)[:, 0]
    zero = NoiseRealization(np.linspace(0, 4, 41), np.zeros((2, 41)))
    out = propagate(QuantumState(v), s, zero)
    assert np.allclose(out.amplitudes, v, atol=1e-15)


def test_rotation_convention():
    # phase pi/2 rotates |g> into -i|e>
    out = propagate(QuantumState(ket("g")), _one_qubit(P / 2))
    assert np.allclose(out.amplitudes, [0, -1j], atol=1e-12)
    # phase pi/4 is a Hadamard-like half rotation
    out = propagate(QuantumState(ket("g")), _one_qubit(P / 4))
    assert np.allclose(np.abs(out.amplitudes) ** 2, [0.5, 0.5], atol=1e-12)


def test_propagator_matches_dense_time_ordered_product():
    s = design_schedule({GateKind.single(0): P, GateKind.psi(1, 2): 3 * P / 2, GateKind.phi(1, 2): 2 * P}, C, 3)
    m = NoiseModel.uniform(0.1, 1.0, 3, 0.5)
    grid = integration_grid(s, s.duration / 2000)
    real = sample_realization(m, grid, 4)
    U = propagators(s, real.delta[None], grid)[0]
    # dense reference: midpoint rule with full matrix exponentials on a finer grid
    fine = np.linspace(0, s.duration, 8001)
    ref = np.eye(8, dtype=complex)
    for a, b in zip(fine[:-1], fine[1:]):
        ref = expm(-1j * (b - a) * build_hamiltonian(s, real, 0.5 * (a + b))) @ ref
    assert np.max(np.abs(U - ref)) < 1e-4


def test_unitarity_over_many_steps():
    s = design_schedule({GateKind.single(0): 4 * P, GateKind.psi(1, 2): P / 2}, C, 3)
    m = NoiseModel.uniform(0.1, 0.5, 3, 0.2)
    grid = integration_grid(s, s.duration / 20000)
    U = propagators(s, sample_deltas(m, grid, 0, range(3)), grid)
    for u in U:
        assert np.max(np.abs(u.conj().T @ u - np.eye(8))) < 1e-10


def test_drift_check_aborts(monkeypatch):
    monkeypatch.setattr(evolution, "NORM_TOLERANCE", -1.0)
    with pytest.raises(NumericalError, match="integration step"):
        ideal_unitary(_one_qubit(P))


def test_step_refinement():
    s = design_schedule({GateKind.single(0): 2 * P, GateKind.single(1): P / 4}, C, 2)
    m = NoiseModel.uniform(0.1, 1.0, 2, 0.0)
    dt = default_step(s, m)
    grid = integration_grid(s, dt)
    d = sample_deltas(m, grid, 3, range(2))
    psi = ket("ud")
    target = ideal_unitary(s) @ psi

    def run(k):
        # one realization (nodes joined linearly), integrated with step dt / k
        g = integration_grid(s, dt / k)
        dk = np.stack([[np.interp(g, grid, row) for row in r] for r in d])
        return propagators(s, dk, g) @ psi

    full, half, ref = run(1), run(2), run(16)
    ov = lambda v: np.abs(v @ target.conj()) ** 2  # noqa: E731
    assert np.max(np.abs(ov(full) - ov(half))) < 1e-8
    # fourth-order convergence: halving the step cuts the error about sixteenfold
    assert np.max(np.abs(full - ref)) / np.max(np.abs(half - ref)) > 8.0


def test_monte_carlo_noiseless_limit():
    s = _one_qubit(P / 4, duration=8.0)
    m = NoiseModel(0.1, 1.0, np.eye(1), scale=[0.0])
    rho, stats = monte_carlo_density(ket("+"), s, m, 5, 0)
    out = ideal_unitary(s) @ ket("+")
    assert np.allclose(rho.entries, np.outer(out, out.conj()), atol=1e-14)
    assert stats.n_realizations == 5


def test_free_dephasing_decay():
    s = design_schedule({}, C, 1, duration=6.0)
    m = NoiseModel.uniform(0.1, 0.5, 1)
    rho, stats = monte_carlo_density(ket("+"), s, m, 4000, 1, dt=0.01)
    J = float(j_closed_form(m, 0, 0, 6.0))
    coh = rho.entries[1, 0]
    se = math.hypot(stats.std_err_real[1, 0], stats.std_err_imag[1, 0])
    assert abs(coh - 0.5 * math.exp(-J)) < 3 * se


def test_collective_noise_spares_singlet():
    s = design_schedule({}, C, 2, duration=10.0)
    m = NoiseModel.uniform(0.1, 1.0, 2, overlap=1.0)
    psi_minus = (ket("eg") - ket("ge")) / math.sqrt(2)
    rho, _ = monte_carlo_density(psi_minus, s, m, 200, 2, dt=0.05)
    assert np.real(psi_minus.conj() @ rho.entries @ psi_minus) == pytest.approx(1.0, abs=1e-12)


def test_monte_carlo_properties_and_worker_independence(storage_pair):
    m = NoiseModel.uniform(0.05, 1.0, 2, 0.3)
    v = haar_states(4, 1, 9)[:, 0]
    a, sa = monte_carlo_density(v, storage_pair, m, 300, 5, dt=0.05, batch_size=64)
    b, _ = monte_carlo_density(v, storage_pair, m, 300, 5, dt=0.05, workers=3, batch_size=64)
    assert np.array_equal(a.entries, b.entries)
    assert a.hermiticity_error() < 1e-12
    assert abs(a.trace - 1) < 1e-12
    assert a.min_eigenvalue() >= -10 * np.max(sa.std_err_real)


def test_channels(driven_pair):
    chans = noise_channels(driven_pair)
    assert [c.name for c in chans] == ["psi(0, 1)", "phi(0, 1)"]
    assert np.allclose(chans[0].coeffs, [1, -1]) and np.allclose(chans[1].coeffs, [1, 1])
    s = design_schedule({GateKind.single(1): 2 * P}, C, 3, duration=20.0)
    assert [c.name for c in noise_channels(s)] == ["single(0,)", "single(1,)", "single(2,)"]


def test_second_order_without_noise(driven_pair):
    m = NoiseModel(0.1, 1.0, np.eye(2), scale=[0.0, 0.0])
    v = haar_states(4, 1, 1)[:, 0]
    rho = second_order_density(QuantumState(v), driven_pair, m)
    ref = basis_transform(QuantumState(v).density(), TWO_DIAG, driven_pair.pairing)
    assert np.allclose(rho.entries, ref.entries, atol=1e-15)


@pytest.mark.parametrize("name", ["storage_pair", "driven_pair"])
def test_second_order_haar_average_matches_closed_forms(name, request):
    sched = request.getfixturevalue(name)
    m = NoiseModel.uniform(0.001, 2.0, 2, 0.6)
    exact = haar_second_order_fidelity(sched, m)
    assert exact == pytest.approx(analytic_average_fidelity(sched, m, "haar"), abs=1e-7)
    # the published coefficients exceed the exact Haar ones by 1/24
    published = analytic_average_fidelity(sched, m)
    assert (1 - published) / (1 - exact) == pytest.approx(25 / 24, rel=1e-6)
    states = haar_states(4, 400, 3)
    sampled = np.mean([second_order_state_fidelity(states[:, i], sched, m) for i in range(400)])
    assert abs(sampled - exact) < 3e-4
    assert abs(sampled - published) < 1e-3


def test_second_order_correction_is_linear_in_rate(driven_pair):
    v = QuantumState(haar_states(4, 1, 2)[:, 0])
    base = None
    for s in (1.0, 0.5, 0.25):
        m = NoiseModel.uniform(0.01 * s, 1.0, 2, 0.4)
        corr = second_order_density(v, driven_pair, m).entries
        corr = corr - basis_transform(v.density(), TWO_DIAG, driven_pair.pairing).entries
        if base is None:
            base = corr
        else:
            assert np.linalg.norm(corr) / np.linalg.norm(base) == pytest.approx(s, rel=1e-2)


def test_second_order_density_is_a_state(driven_pair):
    rho = second_order_density(QuantumState(haar_states(4, 1, 4)[:, 0]), driven_pair,
                               NoiseModel.uniform(0.002, 1.0, 2, 0.5))
    assert rho.hermiticity_error() < 1e-12 and abs(rho.trace - 1) < 1e-12


def test_second_order_matches_monte_carlo_entrywise():
    s = design_schedule({GateKind.single(0): 2 * P, GateKind.single(1): P}, C, 2, duration=17.0)
    m = NoiseModel.uniform(0.0025, 1.0, 2, 0.5)
    assert m.gamma * s.duration <= 0.05
    v = QuantumState(haar_states(4, 1, 6)[:, 0])
    rho2 = interaction_to_rotating(second_order_density(v, s, m), s).entries
    mc, stats = monte_carlo_density(v, s, m, 10_000, 8, dt=0.025)
    dr = np.abs(mc.entries.real - rho2.real)
    di = np.abs(mc.entries.imag - rho2.imag)
    assert np.all(dr <= 3 * stats.std_err_real + 1e-12)
    assert np.all(di <= 3 * stats.std_err_imag + 1e-12)


def test_second_order_needs_single_segment(storage_pair):
    with pytest.raises(ValueError):
        second_order_density(ket("gg"), [storage_pair, storage_pair], NoiseModel.uniform(0.1, 1, 2))
