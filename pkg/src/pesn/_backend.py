"""Kernel backend selection.

The compiled extension is preferred when it was built; otherwise the
NumPy implementation is used. Both expose the same functions, so callers
go through :func:`kernel_module` and never import a backend directly.
"""

from pesn import _kernels_py

try:
    from pesn import _kernels as _compiled
except ImportError:
    _compiled = None

BACKEND = "compiled" if _compiled is not None else "python"


def available_backends():
    names = ["python"]
    if _compiled is not None:
        names.insert(0, "compiled")
    return names


def kernel_module(name: str = "auto"):
    """Resolve a backend name to its kernel module.

    ``auto`` picks the compiled extension when present. Requesting
    ``compiled`` without the built extension is an error.
    """
    if name == "auto":
        return _compiled if _compiled is not None else _kernels_py
    if name == "compiled":
        if _compiled is None:
            raise RuntimeError(
                "compiled kernels are not available; build the extension or use backend='python'"
            )
        return _compiled
    if name == "python":
        return _kernels_py
    raise ValueError(f"unknown backend {name!r}; expected auto, compiled or python")
