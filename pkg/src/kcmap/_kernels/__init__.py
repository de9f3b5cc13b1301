"""Kernel dispatch: compiled extension when present, numpy otherwise.

Set KCMAP_PURE_PYTHON=1 to force the numpy implementations even when the
extension built. Both engines satisfy the same contracts and are held to
bit-identical outputs by the parity tests.
"""

import os

from . import pykernels

if os.environ.get("KCMAP_PURE_PYTHON") == "1":
    _impl = pykernels
    HAVE_COMPILED = False
else:
    try:
        from . import cykernels as _impl
        HAVE_COMPILED = True
    except ImportError:
        _impl = pykernels
        HAVE_COMPILED = False

BACKEND = "compiled" if HAVE_COMPILED else "numpy"

pair_cell_counts = _impl.pair_cell_counts
ward_linkage = _impl.ward_linkage
bkt_responses = _impl.bkt_responses

__all__ = [
    "BACKEND",
    "HAVE_COMPILED",
    "bkt_responses",
    "pair_cell_counts",
    "pykernels",
    "ward_linkage",
]
