"""LSTM recurrence kernels with a compiled fast path.

The Cython extension is used when it was built and imports cleanly; the
pure-numpy backend is the fallback. Set GEDKIT_PURE_PYTHON=1 to force the
fallback, or call set_backend() to switch at runtime (used by the parity
tests and the benchmark).
"""

from __future__ import annotations

import os

from gedkit._kernels import pyref

_BACKENDS = {"pure": pyref}

if os.environ.get("GEDKIT_PURE_PYTHON") != "1":
    try:
        from gedkit._kernels import _lstm_c  # type: ignore[attr-defined]

        _BACKENDS["compiled"] = _lstm_c
    except ImportError:
        pass

_active = "compiled" if "compiled" in _BACKENDS else "pure"


def available_backends() -> list[str]:
    return sorted(_BACKENDS)


def active_backend() -> str:
    return _active


def set_backend(name: str) -> str:
    """Select a backend by name; returns the previously active one."""
    global _active
    if name not in _BACKENDS:
        raise ValueError(f"unknown kernel backend {name!r}; have {available_backends()}")
    prev = _active
    _active = name
    return prev


def lstm_forward(pre, u, h0, c0):
    return _BACKENDS[_active].lstm_forward(pre, u, h0, c0)


def lstm_backward(u, h, c, tc, gi, gf, go, gg, h0, c0, dh_out):
    return _BACKENDS[_active].lstm_backward(u, h, c, tc, gi, gf, go, gg, h0, c0, dh_out)
