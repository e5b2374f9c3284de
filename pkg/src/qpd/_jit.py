"""Backend selection for the hot kernels.

The numerical kernels in :mod:`qpd.fields` and :mod:`qpd.stepper` are plain
numpy code. With numba available they are cloned and compiled with
``njit``; setting ``QPD_DISABLE_NUMBA=1`` switches the default backend to the
vectorized pure-numpy integrator in :mod:`qpd.batch`.
"""

import os
import sys
import types

try:
    import numba
except ImportError:  # pragma: no cover
    numba = None

HAVE_NUMBA = numba is not None
_FALSY = {"1", "true", "yes", "on"}
USE_NUMBA = HAVE_NUMBA and os.environ.get("QPD_DISABLE_NUMBA", "").strip().lower() not in _FALSY

BACKENDS = ("numba", "numpy")


def default_backend():
    return "numba" if USE_NUMBA else "numpy"


def resolve_backend(backend=None):
    backend = backend or default_backend()
    if backend not in BACKENDS:
        raise ValueError(f"unknown backend {backend!r}; expected one of {BACKENDS}")
    if backend == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba backend requested but numba is not installed")
    return backend


_compiled = None
_KERNEL_MODULE = "qpd._jit_kernels"


def compiled():
    """Namespace of njit-compiled clones of the field and stepper kernels.

    Each plain function is re-created against a shared globals dict so that
    calls between kernels resolve to the compiled dispatchers.
    """
    global _compiled
    if _compiled is None:
        from . import fields, stepper

        if "NUMBA_THREADING_LAYER_PRIORITY" not in os.environ and "NUMBA_THREADING_LAYER" not in os.environ:
            # the bundled TBB is often too old and warns on every import
            numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]

        # a registered module lets numba's on-disk cache resolve the clones' globals
        module = types.ModuleType(_KERNEL_MODULE)
        shared = module.__dict__
        for mod in (fields, stepper):
            shared.update({k: v for k, v in vars(mod).items() if not k.startswith("__")})
        shared["prange"] = numba.prange
        sys.modules[_KERNEL_MODULE] = module
        ns = types.SimpleNamespace()
        for mod in (fields, stepper):
            for name in mod.KERNELS:
                fn = getattr(mod, name)
                clone = types.FunctionType(fn.__code__, shared, name, fn.__defaults__, fn.__closure__)
                parallel = name in getattr(mod, "PARALLEL_KERNELS", ())
                disp = numba.njit(cache=True, parallel=parallel)(clone)
                shared[name] = disp
                setattr(ns, name, disp)
        _compiled = ns
    return _compiled
