"""NumPy fallback for the Schur-complement accumulation kernel.

Gathers the scaled matrix at all entry-index pairs at once (np.take beats
fancy indexing here by a wide margin) and aggregates by variable group with
a sparse indicator product.  Peak memory is O(T^2) for T expanded entries
per block, fine at the problem sizes this package targets (T stays in the
low thousands).
"""
import numpy as np
import scipy.sparse as sp


def schur_accumulate(H, U, var, p, q, v):
    """Accumulate pairwise contributions into the lower triangle of H.

    See the package docstring in :mod:`drcvar.kernels` for the contract.
    """
    t = var.shape[0]
    if t == 0:
        return
    starts = np.concatenate([[0], np.flatnonzero(np.diff(var)) + 1])
    present = var[starts]
    n_groups = present.shape[0]

    c = np.take(np.take(U, p, axis=0), p, axis=1)
    c *= np.take(np.take(U, q, axis=0), q, axis=1)
    c *= v[:, None]
    c *= v[None, :]

    group_of = np.repeat(np.arange(n_groups), np.diff(np.append(starts, t)))
    indicator = sp.csr_matrix(
        (np.ones(t), (group_of, np.arange(t))), shape=(n_groups, t))
    small = indicator @ c @ indicator.T

    gi, gj = np.tril_indices(n_groups)
    H[present[gi], present[gj]] += small[gi, gj]
