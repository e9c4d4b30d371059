"""Kernel selection: the compiled extension when importable, else the
pure-Python fallback. Set ``MCPTIMING_PURE_PYTHON=1`` to force the fallback."""

import os

import numpy as np

from . import _pykernels

BACKEND = "python"
_impl = _pykernels

if os.environ.get("MCPTIMING_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _impl  # noqa: F811

        BACKEND = "cython"
    except ImportError:
        _impl = _pykernels


def trace_decays(U, s, spread, L, R, f1, qm_fwhm, delay_mean, c_light,
                 positron_branch=0.9, backend=None):
    impl = _pick(backend)
    return impl.trace_decays(np.ascontiguousarray(U, dtype=np.float64), s, spread,
                             L, R, f1, qm_fwhm, delay_mean, c_light,
                             positron_branch)


def pair_triggers(times, is_stop, window, backend=None):
    impl = _pick(backend)
    return impl.pair_triggers(np.ascontiguousarray(times, dtype=np.float64),
                              np.ascontiguousarray(is_stop, dtype=np.int8),
                              float(window))


def available_backends():
    out = ["python"]
    try:
        from . import _ckernels  # noqa: F401

        out.append("cython")
    except ImportError:
        pass
    return out


def _pick(backend):
    if backend is None:
        return _impl
    if backend == "python":
        return _pykernels
    if backend == "cython":
        from . import _ckernels

        return _ckernels
    raise ValueError(f"unknown kernel backend {backend!r}")
