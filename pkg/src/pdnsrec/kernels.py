"""Backend selection for the hot kernels.

The compiled ``_kernels`` extension is used when it imports; otherwise the
NumPy fallback. Set ``PDNSREC_BACKEND=python`` to force the fallback.
"""
import os

from . import _fallback

if os.environ.get("PDNSREC_BACKEND", "").lower() == "python":
    _impl = _fallback
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl
    except ImportError:
        _impl = _fallback
        BACKEND = "python"
    else:
        BACKEND = "cython"

map_ranks = _impl.map_ranks
select_hardest = _impl.select_hardest
topk_rows = _impl.topk_rows
scatter_add_rows = _impl.scatter_add_rows
csr_matmul = _impl.csr_matmul

__all__ = ["BACKEND", "map_ranks", "select_hardest", "topk_rows", "scatter_add_rows", "csr_matmul"]
