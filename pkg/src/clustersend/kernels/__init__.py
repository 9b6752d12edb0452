"""Hot loops: brute-force faulty-position histograms and abstract step samplers.

The compiled extension ``_ckernels`` is used when it was built; otherwise
the pure-Python twin is imported.  Set ``CLUSTERSEND_PURE_PYTHON=1`` to force
the fallback.  Both backends return identical results for identical input.
"""

import os

from . import _pykernels

BACKEND = "python"
_impl = _pykernels

if os.environ.get("CLUSTERSEND_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        pass

faulty_position_histogram = _impl.faulty_position_histogram
sample_pcs_steps = _impl.sample_pcs_steps
sample_plcs_steps = _impl.sample_plcs_steps

__all__ = [
    "BACKEND",
    "faulty_position_histogram",
    "sample_pcs_steps",
    "sample_plcs_steps",
]
