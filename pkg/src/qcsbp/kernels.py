"""Backend dispatch for the hot Monte Carlo kernels.

Two interchangeable implementations exist:

* ``qcsbp._kernels`` -- Cython extension, fused per-sample loops drawing
  from numpy's C distribution functions (built at install time, optional);
* ``qcsbp._kernels_py`` -- pure numpy fallback, vectorized pass by pass.

Both follow the same *variate-consumption protocol*: every kernel draws
the same distributions in the same order from the same PCG64 bit stream,
so for a given ``numpy.random.Generator`` state the two backends return
bit-identical arrays.  The protocol for each kernel is documented in
``_kernels_py``; the test suite asserts cross-backend equality whenever
the compiled module is importable.

The compiled backend is selected at import when available.  Use
``set_backend("python")`` / ``set_backend("compiled")`` to override, e.g.
for benchmarking.
"""

from __future__ import annotations

from . import _kernels_py

try:
    from . import _kernels as _compiled
except ImportError:  # extension not built; pure fallback
    _compiled = None

_IMPL = _compiled if _compiled is not None else _kernels_py

_KERNEL_NAMES = (
    "transition_batch",
    "entrance_batch",
    "zalpha_exact_batch",
    "kesten_batch",
    "decorated_batch",
    "euler_zalpha_batch",
)


def backend_name() -> str:
    return "compiled" if _IMPL is _compiled and _compiled is not None else "python"


def available_backends() -> tuple[str, ...]:
    return ("python", "compiled") if _compiled is not None else ("python",)


def set_backend(name: str) -> None:
    """Select the kernel backend ('python' or 'compiled')."""
    global _IMPL
    if name == "python":
        _IMPL = _kernels_py
    elif name == "compiled":
        if _compiled is None:
            raise RuntimeError("compiled kernels are not available in this build")
        _IMPL = _compiled
    else:
        raise ValueError(f"unknown backend {name!r}")


def get_backend_module(name: str):
    if name == "python":
        return _kernels_py
    if name == "compiled":
        if _compiled is None:
            raise RuntimeError("compiled kernels are not available in this build")
        return _compiled
    raise ValueError(f"unknown backend {name!r}")


def __getattr__(attr):
    if attr in _KERNEL_NAMES:
        return getattr(_IMPL, attr)
    raise AttributeError(attr)
