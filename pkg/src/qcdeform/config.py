"""Central numerical defaults. Every module reads its defaults from here."""

import os

DEFAULT_DEGREE = 64
ANGULAR_NODES = 4096
RADIAL_NODES = 64
MU_CAP = 0.1
NEWTON_TOL = 1e-10
NEWTON_MAX_ITER = 30
NEUMANN_TOL = 1e-14
NEUMANN_KMAX = 200
PSI_ORDER = 24
ZERO_CONTOUR_RTOL = 1e-9
BOUND_TOL = 1e-9
EXTREMAL_MATCH_TOL = 1e-5
EXTREMAL_MARGIN_TOL = 1e-6
SPEC_VERSION = "1.0"
CSV_SCHEMA_VERSION = "1"


def thread_cap():
    """Worker cap taken from ``QCDEFORM_THREADS`` (defaults to 1)."""
    raw = os.environ.get("QCDEFORM_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1
