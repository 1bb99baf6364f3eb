"""Kernel backend selection.

The compiled extension ``rothe_wavelet._kernels`` is used when it was built;
otherwise the numpy implementation in ``_kernels_py`` is used.  Setting the
environment variable ``ROTHE_WAVELET_PURE=1`` forces the fallback.
"""
from __future__ import annotations

import os

from . import _kernels_py

_impl = _kernels_py
BACKEND = "python"
if os.environ.get("ROTHE_WAVELET_PURE", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _compiled  # type: ignore[attr-defined]
    except ImportError:  # extension not built
        pass
    else:
        _impl = _compiled
        BACKEND = "compiled"

lift_forward = _impl.lift_forward
lift_inverse = _impl.lift_inverse
lift_transpose = _impl.lift_transpose
subtree_energy = _impl.subtree_energy
tree_closure = _impl.tree_closure
greedy_tree = _impl.greedy_tree

level_offset = _kernels_py.level_offset
parent_array = _kernels_py.parent_array


def get_backend(name: str):
    """Return the kernel module for ``"python"`` or ``"compiled"`` (for tests/benchmarks)."""
    if name == "python":
        return _kernels_py
    if name == "compiled":
        from . import _kernels as compiled  # type: ignore[attr-defined]
        return compiled
    raise ValueError(f"unknown kernel backend {name!r}")
