"""Kernel backend selection.

The compiled Cython kernels are used when the extension was built; otherwise
the NumPy/LAPACK fallback is loaded.  Setting the environment variable
``R0KIT_FORCE_FALLBACK=1`` before import forces the fallback (used by the
benchmark and the backend-parity tests).
"""

import os

from . import _fallback

if os.environ.get("R0KIT_FORCE_FALLBACK", "").strip() not in ("", "0"):
    _impl = _fallback
else:
    try:
        from . import _core as _impl  # type: ignore[attr-defined]
    except ImportError:
        _impl = _fallback

SingularSolve = _fallback.SingularSolve

backend_name = _impl.backend_name
thomas_solve = _impl.thomas_solve
thomas_factor = _impl.thomas_factor
thomas_solve_factored = _impl.thomas_solve_factored
evolve_implicit = _impl.evolve_implicit


def available_backends():
    """Names of the importable backends (for the benchmark script)."""
    names = ["python"]
    try:
        from . import _core  # noqa: F401
        names.insert(0, "compiled")
    except ImportError:
        pass
    return names
