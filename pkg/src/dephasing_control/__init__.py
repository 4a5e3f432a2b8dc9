"""Correlated dephasing noise, control-pulse design and gate-fidelity analysis."""

__version__ = "0.1.0"

from .noise import (ModelError, NoiseModel, NoiseRealization, correlation, ensemble_statistics,
                    sample_realization, spectrum, validate_model)
from .pulses import (GateField, GateKind, GaussianPulseTrain, InfeasiblePulseError, PulseConstraints,
                     Schedule, ScheduleError, design_pulse_train, design_schedule, parse_angle)
from .states import BasisMap, DensityMatrix, QuantumState, basis_transform, ket
from .functional import (analytic_average_fidelity, avg_fidelity_single, avg_fidelity_two, j_closed_form,
                         j_freq, j_time)
from .evolution import (NumericalError, build_hamiltonian, haar_second_order_fidelity, monte_carlo_density,
                        propagate, second_order_density)
from .metrics import FidelityReport, average_fidelity_mc, error, fidelity, state_fidelity_mc
