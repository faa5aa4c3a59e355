"""Kernel backend selection.

The compiled extension is used when available; set MMRF_PURE=1 to force the
pure-Python fallback.  Both backends are bit-identical by construction and
`benchmarks/backend_bench.py` compares their throughput.
"""

from __future__ import annotations

import os

if os.environ.get("MMRF_PURE"):
    from . import _pykern as _impl
else:
    try:
        from . import _ckern as _impl  # type: ignore[attr-defined]
    except ImportError:
        from . import _pykern as _impl

BACKEND = _impl.BACKEND
RRT_RUNNING = _impl.RRT_RUNNING
RRT_DONE = _impl.RRT_DONE
RRT_FAILED = _impl.RRT_FAILED

box_hit = _impl.box_hit
point_valid = _impl.point_valid
seg_points = _impl.seg_points
segment_valid = _impl.segment_valid
RrtBackend = _impl.RrtBackend
