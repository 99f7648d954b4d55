"""Pure-Python fallbacks for the compiled kernels in ``_ckernels.pyx``.

Both implementations must return identical arrays for identical inputs; the
test-suite checks this whenever the extension is importable.
"""

import numpy as np


def sample_segments(indptr, nodes, fanout, keys):
    """Pick at most ``fanout`` positions per node segment of a CSR index.

    ``keys`` holds one random key per incident position of every node in
    ``nodes`` whose degree exceeds ``fanout``, concatenated in node order.
    Such a node keeps the positions with the smallest keys (ties go to the
    lower position); smaller nodes keep everything. Selected positions are
    returned in ascending order.
    """
    indptr = np.asarray(indptr, dtype=np.int64)
    nodes = np.asarray(nodes, dtype=np.int64)
    out_ptr = np.zeros(len(nodes) + 1, dtype=np.int64)
    chunks = []
    koff = 0
    for j, v in enumerate(nodes):
        start, stop = int(indptr[v]), int(indptr[v + 1])
        deg = stop - start
        if deg <= fanout:
            chosen = np.arange(start, stop, dtype=np.int64)
        else:
            order = np.argsort(keys[koff:koff + deg], kind="stable")[:fanout]
            chosen = np.sort(order).astype(np.int64) + start
            koff += deg
        chunks.append(chosen)
        out_ptr[j + 1] = out_ptr[j] + len(chosen)
    out_pos = np.concatenate(chunks) if chunks else np.empty(0, dtype=np.int64)
    return out_ptr, out_pos


def descending_counts(scores, labels):
    """Cumulative (tp, fp) at every distinct score of a descending-sorted array."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    thr, tp, fp = [], [], []
    t = f = 0
    n = len(scores)
    for i in range(n):
        if labels[i] != 0:
            t += 1
        else:
            f += 1
        if i == n - 1 or scores[i + 1] != scores[i]:
            thr.append(scores[i])
            tp.append(t)
            fp.append(f)
    return (np.asarray(thr, dtype=np.float64), np.asarray(tp, dtype=np.int64),
            np.asarray(fp, dtype=np.int64))
