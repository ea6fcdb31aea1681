"""Hot kernel for Schur-complement assembly, with runtime backend selection.

The interior-point solver spends most of its time forming the normal matrix
H[j, k] = sum over blocks of <M_j, W^-1 M_k W^-1> from the sparse entries of
the constraint matrices.  A Cython implementation of the pairwise
accumulation is used when the compiled extension is importable; otherwise a
vectorized NumPy implementation takes over.  Both produce identical results
(see tests/test_kernels.py); set DRCVAR_PURE_PYTHON=1 to force the fallback.

Kernel contract (shared by both backends)
-----------------------------------------
``schur_accumulate(H, U, var, p, q, v)`` accumulates, into the lower
triangle of H, the contribution

    H[var_a, var_b] += v_a * v_b * U[p_a, p_b] * U[q_a, q_b]

summed over all entry pairs (a, b).  The entry arrays describe the expanded
(both-triangles) nonzeros of every constraint matrix in one block and must
be sorted by ``var``; U is the dense symmetric scaling matrix of the block.
"""
import os

HAVE_COMPILED = False
if os.environ.get("DRCVAR_PURE_PYTHON", "") != "1":
    try:
        from ._schur_cy import schur_accumulate  # noqa: F401

        HAVE_COMPILED = True
    except ImportError:
        pass

if not HAVE_COMPILED:
    from ._schur_np import schur_accumulate  # noqa: F401

from ._schur_np import schur_accumulate as schur_accumulate_numpy  # noqa: F401

__all__ = ["schur_accumulate", "schur_accumulate_numpy", "HAVE_COMPILED"]
