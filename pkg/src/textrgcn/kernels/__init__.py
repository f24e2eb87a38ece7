"""Hot numeric kernels: sliding-window co-occurrence counts, all-pairs
Jaccard, and CSR-times-dense products.

A compiled Cython core is used when the extension built; otherwise the pure
numpy fallback takes over. Set ``TEXTRGCN_PURE_PYTHON=1`` to force the
fallback. Both backends implement the same three functions:

``window_counts(docs, window_size, vocab_size)``
    ``docs`` is a list of int32 arrays of token indices. Windows slide by
    stride 1; a document shorter than the window contributes one window.
    Tokens and unordered pairs are counted at most once per window. Returns
    ``(total_windows, token_counts[V], pair_i, pair_j, pair_counts)`` with
    pairs canonicalized ``i < j`` and sorted by ``(i, j)``.

``jaccard_pairs(doc_sets, threshold)``
    ``doc_sets`` is a list of sorted unique int32 arrays. Returns
    ``(src, dst, weight)`` for every pair ``src < dst`` with Jaccard
    similarity ``> 0`` and ``>= threshold``, in ``(src, dst)`` order.

``csr_dense_matmul(indptr, indices, data, dense)``
    Product of a CSR matrix (int64 indptr/indices, float64 data) with a
    C-contiguous float64 matrix. Row sums accumulate in index order, so
    results are deterministic per backend.
"""

import os

from . import _pykernels

try:
    from . import _ckernels
except ImportError:
    _ckernels = None

if _ckernels is not None and not os.environ.get("TEXTRGCN_PURE_PYTHON"):
    _impl = _ckernels
    BACKEND = "compiled"
else:
    _impl = _pykernels
    BACKEND = "python"


def available_backends():
    """Name -> module for every importable backend."""
    backends = {"python": _pykernels}
    if _ckernels is not None:
        backends["compiled"] = _ckernels
    return backends


def window_counts(docs, window_size, vocab_size):
    return _impl.window_counts(docs, window_size, vocab_size)


def jaccard_pairs(doc_sets, threshold):
    return _impl.jaccard_pairs(doc_sets, threshold)


def csr_dense_matmul(indptr, indices, data, dense):
    return _impl.csr_dense_matmul(indptr, indices, data, dense)
