"""Pure numpy/python fallback implementations of the hot kernels.

Same contracts as the compiled module; see ``kernels/__init__.py``.
"""

import numpy as np


def window_counts(docs, window_size, vocab_size):
    token_counts = np.zeros(vocab_size, dtype=np.int64)
    pair_counts: dict[int, int] = {}
    total = 0
    for doc in docs:
        n = len(doc)
        if n == 0:
            continue
        spans = 1 if n <= window_size else n - window_size + 1
        for start in range(spans):
            window = doc[start : start + window_size]
            uniq = sorted({int(t) for t in window})
            total += 1
            for a, tok in enumerate(uniq):
                token_counts[tok] += 1
                base = tok * vocab_size
                for other in uniq[a + 1 :]:
                    key = base + other
                    pair_counts[key] = pair_counts.get(key, 0) + 1
    keys = np.array(sorted(pair_counts), dtype=np.int64)
    counts = np.array([pair_counts[int(k)] for k in keys], dtype=np.int64)
    pair_i = keys // vocab_size
    pair_j = keys % vocab_size
    return total, token_counts, pair_i, pair_j, counts


def jaccard_pairs(doc_sets, threshold):
    sets = [frozenset(int(t) for t in d) for d in doc_sets]
    src, dst, wts = [], [], []
    for i in range(len(sets)):
        a = sets[i]
        for j in range(i + 1, len(sets)):
            b = sets[j]
            inter = len(a & b)
            union = len(a) + len(b) - inter
            if union == 0:
                continue
            jac = inter / union
            if jac > 0.0 and jac >= threshold:
                src.append(i)
                dst.append(j)
                wts.append(jac)
    return (
        np.array(src, dtype=np.int64),
        np.array(dst, dtype=np.int64),
        np.array(wts, dtype=np.float64),
    )


def csr_dense_matmul(indptr, indices, data, dense):
    n_rows = indptr.shape[0] - 1
    out = np.zeros((n_rows, dense.shape[1]), dtype=np.float64)
    if data.shape[0] == 0:
        return out
    prod = data[:, None] * dense[indices]
    # reduceat needs strictly increasing segment starts, so empty rows are
    # excluded and left at zero.
    nonempty = np.flatnonzero(np.diff(indptr) > 0)
    out[nonempty] = np.add.reduceat(prod, indptr[nonempty], axis=0)
    return out
