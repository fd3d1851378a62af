"""Pick the compiled Heun kernels if available, else the pure-Python ones.

Set ``BISTATE_PURE_PYTHON=1`` to force the fallback.
"""

import os

BACKEND = "python"
if os.environ.get("BISTATE_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from ._kernels import envelope_heun, full_heun  # noqa: F401

        BACKEND = "cython"
    except ImportError:  # extension not built
        pass
if BACKEND == "python":
    from ._pykernels import envelope_heun, full_heun  # noqa: F401
