import numpy as np
import pytest

from dephasing_control.pulses import GateKind, PulseConstraints, design_schedule


@pytest.fixture
def constraints():
    return PulseConstraints(omega_max=1.0, sigma_min=0.25)


@pytest.fixture
def storage_pair(constraints):
    """Two qubits under 2pi and 4pi storage trains."""
    return design_schedule({GateKind.single(0): 2 * np.pi, GateKind.single(1): 4 * np.pi},
                           constraints, 2, duration=35.0)


@pytest.fixture
def driven_pair(constraints):
    """Two qubits driven as a pair through both transitions."""
    return design_schedule({GateKind.psi(0, 1): 3 * np.pi / 2, GateKind.phi(0, 1): 2 * np.pi},
                           constraints, 2, duration=35.0)


_VERDICTS = []


@pytest.fixture
def verdict(capsys):
    """Record one acceptance line ``criterion N: PASS|FAIL`` and print it."""

    def record(number, title, checks):
        ok = all(passed for _, passed in checks)
        detail = "; ".join(f"{name} {'ok' if passed else 'MISSED'}" for name, passed in checks)
        line = f"criterion {number} ({title}): {'PASS' if ok else 'FAIL'} [{detail}]"
        _VERDICTS.append(line)
        with capsys.disabled():
            print("\n" + line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_VERDICTS):
            terminalreporter.write_line(line)
