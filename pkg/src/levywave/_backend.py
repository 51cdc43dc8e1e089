"""Select the compiled kernel when it is importable, else the numpy fallback.

Set ``LEVYWAVE_BACKEND=python`` to force the fallback.
"""

import os

from . import _kernels_py

BACKEND = "python"
simulate_batch = _kernels_py.simulate_batch
profile_hz = _kernels_py.profile_hz

if os.environ.get("LEVYWAVE_BACKEND", "").lower() != "python":
    try:
        from . import _kernels
    except ImportError:
        pass
    else:
        BACKEND = "compiled"
        simulate_batch = _kernels.simulate_batch
        profile_hz = _kernels.profile_hz

__all__ = ["BACKEND", "simulate_batch", "profile_hz"]
