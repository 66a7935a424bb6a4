"""Hot numeric kernels with twin numba / pure-numpy implementations.

Every kernel exists in two functionally identical versions: a numba
``@njit`` build in :mod:`propfield.kernels.numba_impl` and a vectorized
numpy build in :mod:`propfield.kernels.numpy_impl`. The active backend is
chosen once at import from the ``PROPFIELD_NUMBA`` environment variable:

* unset   -> numba when importable, numpy otherwise
* ``"1"`` -> numba, raising if numba is unavailable
* ``"0"`` -> pure numpy

``set_backend()`` switches at runtime (used by the equivalence tests and
the kernel benchmark). Both builds are kept operation-order compatible so
results agree to float rounding; the kernel test suite asserts this.
"""

import os

from . import numpy_impl

_KERNEL_NAMES = [
    "visible_in_view",
    "bilinear_gather",
    "accumulate_features",
    "voxel_representatives",
    "neighborhood_covariances",
    "raycast",
]

try:
    from . import numba_impl

    _HAVE_NUMBA = True
except ImportError:
    numba_impl = None
    _HAVE_NUMBA = False

_backend = None
_impl = None


def _resolve_default() -> str:
    flag = os.environ.get("PROPFIELD_NUMBA", "").strip()
    if flag == "0":
        return "numpy"
    if flag == "1":
        if not _HAVE_NUMBA:
            raise ImportError("PROPFIELD_NUMBA=1 but numba is not importable")
        return "numba"
    return "numba" if _HAVE_NUMBA else "numpy"


def set_backend(name: str) -> None:
    """Select the kernel backend: ``"numba"`` or ``"numpy"``."""
    global _backend, _impl
    if name == "numba":
        if not _HAVE_NUMBA:
            raise ImportError("numba backend requested but numba is not importable")
        _impl = numba_impl
    elif name == "numpy":
        _impl = numpy_impl
    else:
        raise ValueError(f"unknown kernel backend {name!r}")
    _backend = name


def active_backend() -> str:
    return _backend


def available_backends() -> list[str]:
    return ["numpy", "numba"] if _HAVE_NUMBA else ["numpy"]


def get_impl(name: str | None = None):
    """Return the module implementing the kernels for `name` (default: active)."""
    if name is None:
        return _impl
    if name == "numpy":
        return numpy_impl
    if name == "numba":
        if not _HAVE_NUMBA:
            raise ImportError("numba backend is not available")
        return numba_impl
    raise ValueError(f"unknown kernel backend {name!r}")


def warmup() -> None:
    """Trigger JIT compilation of the numba kernels on tiny inputs."""
    if _backend == "numba":
        numba_impl.warmup()


set_backend(_resolve_default())


def __getattr__(name):
    # Late dispatch so set_backend() affects subsequent kernel lookups.
    if name in _KERNEL_NAMES:
        return getattr(_impl, name)
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
