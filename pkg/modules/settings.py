"""
Numerical defaults and environment overrides.

Values here are the library-wide defaults; every public function that uses one
also accepts it as a keyword argument.
"""

import os

HERMITICITY_TOL = 1e-12
TRACE_TOL = 1e-12
NEGATIVE_EIGENVALUE_TOL = 1e-12
DECOMPOSITION_TOL = 1e-10

POPULATION_FLOOR = float(os.environ.get("QFI_POPULATION_FLOOR", "1e-12"))

# relative to max|E|
COLLAPSE_TOL_FACTOR = 1e-9

SERIES_SWITCH = 1e-4
F_ZERO_PROBE = 1e-12
F_ZERO_CHECK = 1e-10

DIVERGENCE_GUARD = 1e12
KERNEL_UNDERFLOW = 1e-300

GRID_POINTS = 2048
GRID_SPAN_FACTOR = 1.5
# grid spacing never coarser than eta / GRID_POINTS_PER_ETA
GRID_POINTS_PER_ETA = 4
TRUNCATION_REL_TOL = 1e-6

FOCK_TAIL = 1e-16
FOCK_ADEQUACY = 1e-14

RAMP_PERIODS = 20
WINDOW_PERIODS = 20
STEPS_PER_PERIOD = 64
STEPS_PER_BOHR_PERIOD = 32
LOCAL_ERROR_TOL = 1e-8
LINEARITY_TOL = 5e-3
MIN_DETUNING = 1e-3

REPORT_SCHEMA = "qfi-report/1"


def thread_cap() -> int:
    """Worker threads allowed for embarrassingly parallel loops (QFI_THREADS)."""
    raw = os.environ.get("QFI_THREADS")
    if not raw:
        return os.cpu_count() or 1
    try:
        return max(1, int(raw))
    except ValueError:
        return 1
