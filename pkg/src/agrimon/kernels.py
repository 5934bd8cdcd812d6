"""Backend selection for the hot loops.

The compiled extension ``agrimon._ckernels`` is used when it was built; the
numpy fallback in ``agrimon._pykernels`` otherwise. Set ``AGRIMON_PURE=1``
to force the fallback. Both expose the same functions and return
bit-identical results.
"""
import os

from . import _pykernels

python_backend = _pykernels
compiled_backend = None

if not os.environ.get("AGRIMON_PURE"):
    try:
        from . import _ckernels as compiled_backend
    except ImportError:
        compiled_backend = None

backend = compiled_backend if compiled_backend is not None else python_backend
BACKEND = "compiled" if backend is compiled_backend else "python"

MEAN, MIN, MAX, COUNT = 0, 1, 2, 3
REDUCERS = {"mean": MEAN, "min": MIN, "max": MAX, "count": COUNT}


def get_backend(name=None):
    """Return the kernel module for ``name`` ('compiled', 'python' or None=active)."""
    if name is None:
        return backend
    if name == "python":
        return python_backend
    if name == "compiled":
        if compiled_backend is None:
            raise RuntimeError("compiled kernels are not available in this install")
        return compiled_backend
    raise ValueError(f"unknown backend {name!r}")
