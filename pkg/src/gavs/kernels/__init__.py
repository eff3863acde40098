"""Hot-kernel dispatch: compiled extension when available, numpy otherwise.

The backend is chosen once at import time from the ``GAVS_KERNELS``
environment variable: ``auto`` (default) prefers the compiled extension and
falls back to numpy, ``c`` requires the extension, ``py`` forces numpy.
``use_backend()`` switches at runtime (used by tests and the benchmark).
"""

import os

from . import pykernels

_KERNEL_NAMES = (
    "softmax_rows",
    "softmax_rows_grad",
    "layer_norm_rows",
    "layer_norm_rows_grad",
    "gelu",
    "gelu_grad",
    "conv_transpose2d_k2s2",
    "conv_transpose2d_k2s2_grad_x",
    "conv_transpose2d_k2s2_grad_w",
    "adam_step",
)

_active = {}
_active_name = "py"


def _load_compiled():
    try:
        from . import _ckern
    except ImportError:
        return None
    return _ckern


def compiled_available():
    return _load_compiled() is not None


def use_backend(name):
    """Select the kernel backend: 'py', 'c', or 'auto'. Returns the name in use."""
    global _active_name
    if name == "auto":
        name = "c" if compiled_available() else "py"
    if name == "py":
        source = pykernels
    elif name == "c":
        source = _load_compiled()
        if source is None:
            raise RuntimeError(
                "compiled kernel backend requested via GAVS_KERNELS=c but the "
                "gavs.kernels._ckern extension is not built"
            )
    else:
        raise ValueError(f"unknown kernel backend {name!r} (expected py, c, or auto)")
    for k in _KERNEL_NAMES:
        _active[k] = getattr(source, k)
    _active_name = name
    return name


def active_backend():
    return _active_name


def softmax_rows(x):
    return _active["softmax_rows"](x)


def softmax_rows_grad(y, gy):
    return _active["softmax_rows_grad"](y, gy)


def layer_norm_rows(x, gain, bias, eps):
    return _active["layer_norm_rows"](x, gain, bias, eps)


def layer_norm_rows_grad(xhat, rstd, gain, gy):
    return _active["layer_norm_rows_grad"](xhat, rstd, gain, gy)


def gelu(x):
    return _active["gelu"](x)


def gelu_grad(x, gy):
    return _active["gelu_grad"](x, gy)


def conv_transpose2d_k2s2(x, w):
    return _active["conv_transpose2d_k2s2"](x, w)


def conv_transpose2d_k2s2_grad_x(gy, w):
    return _active["conv_transpose2d_k2s2_grad_x"](gy, w)


def conv_transpose2d_k2s2_grad_w(x, gy):
    return _active["conv_transpose2d_k2s2_grad_w"](x, gy)


def adam_step(p, g, m, v, lr, beta1, beta2, eps, t):
    return _active["adam_step"](p, g, m, v, lr, beta1, beta2, eps, t)


use_backend(os.environ.get("GAVS_KERNELS", "auto"))
