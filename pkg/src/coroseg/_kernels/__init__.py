"""Kernel backend selection.

The hot voxel loops (thinning, component labeling, parity fill) exist twice:
a Cython extension (``_compiled``) and a NumPy/SciPy reference (``pure``).
The compiled backend is used when it imported cleanly; set
``COROSEG_KERNELS=pure`` or ``COROSEG_KERNELS=compiled`` to force one.
Both backends produce identical outputs (enforced by the test suite).
"""

from __future__ import annotations

import os

from . import pure as _pure

try:
    from . import _compiled as _fast  # type: ignore[attr-defined]
except ImportError:  # pragma: no cover - depends on build environment
    _fast = None


def _select():
    forced = os.environ.get("COROSEG_KERNELS", "").strip().lower()
    if forced == "pure":
        return _pure
    if forced == "compiled":
        if _fast is None:
            raise ImportError(
                "COROSEG_KERNELS=compiled but the compiled extension is not available"
            )
        return _fast
    return _fast if _fast is not None else _pure


_impl = _select()

BACKEND: str = _impl.BACKEND
thin = _impl.thin
label_components = _impl.label_components
parity_fill = _impl.parity_fill


def get_backend(name: str):
    """Return a specific backend module ('pure' or 'compiled'), for tests/bench."""
    if name == "pure":
        return _pure
    if name == "compiled":
        if _fast is None:
            raise ImportError("compiled kernel backend is not available")
        return _fast
    raise ValueError(f"unknown backend {name!r}")


def available_backends() -> list[str]:
    return ["pure"] + (["compiled"] if _fast is not None else [])
