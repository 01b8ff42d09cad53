"""Adiabatic work, Berry phases and thermodynamic length for driven open quantum systems."""
from .dape import (
    WorkReport,
    chiral_difference_constant_generator,
    chiral_difference_general,
    dissipative_amplitude,
    feedback_work,
    length_bound,
    work_decomposition,
)
from .errors import DapeError
from .geometry import (
    DriveProtocol,
    SystemSpec,
    berry_phase_difference,
    connection_at,
    dissipative_angle,
    metric_and_length,
)
from .master_eq import BathSpec, chiral_difference_numeric, evolve, thermal_state
from .tls import TlsParams, feasibility_estimate, tls_build

__version__ = "0.1.0"
