"""Hot-loop kernels with a compiled core and a pure-numpy fallback.

Three inner loops dominate runtime: the per-tick value gather, the
nearest-sensor lattice expansion, and point-in-tetrahedron location during
preprocessing. Both backends implement identical arithmetic (the extension is
compiled with -ffp-contract=off) so their outputs are bit-for-bit equal; the
compiled one is simply faster. Selection happens at import:

    THERMOCAST_KERNELS=native  require the compiled extension, fail otherwise
    THERMOCAST_KERNELS=python  force the numpy fallback
    (unset / auto)             compiled if importable, fallback otherwise
"""

import os

from . import _fallback

_requested = os.environ.get("THERMOCAST_KERNELS", "auto").lower()

if _requested in ("auto", "native"):
    try:
        from . import _native as _impl
        BACKEND = "native"
    except ImportError:
        if _requested == "native":
            raise
        _impl = _fallback
        BACKEND = "python"
elif _requested == "python":
    _impl = _fallback
    BACKEND = "python"
else:
    raise ValueError(f"THERMOCAST_KERNELS={_requested!r}: expected auto, native or python")

interpolate_gather = _impl.interpolate_gather
nearest_expansion = _impl.nearest_expansion
locate_particles = _impl.locate_particles


def available_backends() -> dict:
    """Backend name -> module, for benchmarks and parity tests."""
    out = {"python": _fallback}
    try:
        from . import _native
        out["native"] = _native
    except ImportError:
        pass
    return out
