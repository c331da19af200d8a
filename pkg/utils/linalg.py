"""Dense linear-algebra kernels for RLCk MOR.

Multi-right-hand-side solves through reusable LU factorizations, block
orthogonalization with deflation, SVD and a Bartels-Stewart Lyapunov solver.
Matrices are plain numpy arrays; descriptor-level matrices may be scipy
sparse, in which case the factorization is a sparse LU.
"""
from typing import NamedTuple, Optional, Union

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from core.errors import (EmptyBasisError, LyapunovSolvabilityError,
                         SingularMatrixError, ValidationError)


MatrixLike = Union[np.ndarray, sp.spmatrix]

PIVOT_TOL = 1e-14
DEFLATION_TOL = 1e-10


def as_real_matrix(a, name: str = "matrix") -> np.ndarray:
    """Dense float64 2-D copy of ``a``; rejects NaN/Inf entries."""
    if sp.issparse(a):
        a = a.toarray()
    arr = np.array(a, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2:
        raise ValidationError(f"{name} must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} has non-finite entries")
    return arr


def _max_abs(a: MatrixLike) -> float:
    if sp.issparse(a):
        return float(abs(a).max()) if a.nnz else 0.0
    return float(np.max(np.abs(a))) if a.size else 0.0


class Factorization:
    """Reusable LU factorization of a square (dense or sparse) operator."""

    def __init__(self, matrix: MatrixLike, name: str = "A"):
        self.name = name
        if matrix.shape[0] != matrix.shape[1]:
            raise ValidationError(f"cannot factorize non-square {name} with shape {matrix.shape}")
        self.shape = matrix.shape
        self.sparse = sp.issparse(matrix)
        scale = _max_abs(matrix)
        if scale == 0.0:
            raise SingularMatrixError(f"operator {name} is zero", operator=name)

        if self.sparse:
            try:
                self._lu = spla.splu(sp.csc_matrix(matrix))
            except RuntimeError as e:
                raise SingularMatrixError(f"operator {name} is singular: {e}", operator=name) from e
            pivots = self._lu.U.diagonal()
        else:
            dense = np.asarray(matrix)
            if not np.all(np.isfinite(dense)):
                raise ValidationError(f"operator {name} has non-finite entries")
            self._lu = sla.lu_factor(dense, check_finite=False)
            pivots = np.diag(self._lu[0])

        smallest = float(np.min(np.abs(pivots))) if pivots.size else 0.0
        if smallest < PIVOT_TOL * scale:
            raise SingularMatrixError(
                f"operator {name} is numerically singular "
                f"(pivot {smallest:.3e} below {PIVOT_TOL:g}*max|{name}| = {PIVOT_TOL * scale:.3e})",
                operator=name,
            )

    def solve(self, rhs: np.ndarray, transpose: bool = False) -> np.ndarray:
        """Solve ``A Y = R`` (or ``A^T Y = R``) for a block right-hand side."""
        rhs = np.asarray(rhs)
        vector = rhs.ndim == 1
        block = rhs.reshape(-1, 1) if vector else rhs
        if block.shape[1] == 0:
            return np.zeros_like(block)
        if self.sparse:
            out = self._lu.solve(np.asfortranarray(block), trans='T' if transpose else 'N')
        else:
            out = sla.lu_solve(self._lu, block, trans=1 if transpose else 0, check_finite=False)
        return out.ravel() if vector else out


def factorize(matrix: MatrixLike, name: str = "A") -> Factorization:
    """Factorize ``matrix`` once for repeated block solves."""
    return Factorization(matrix, name)


def _orthonormalize(block: np.ndarray, basis: Optional[np.ndarray]) -> np.ndarray:
    """Column-wise Gram-Schmidt with re-orthogonalization and deflation."""
    block = np.asarray(block, dtype=float)
    n = block.shape[0]
    accepted = []
    for j in range(block.shape[1]):
        v = block[:, j].copy()
        norm0 = np.linalg.norm(v)
        if norm0 == 0.0 or not np.isfinite(norm0):
            continue
        current = np.column_stack(accepted) if accepted else np.zeros((n, 0))
        before = norm0
        for sweep in range(3):
            if basis is not None and basis.shape[1]:
                v -= basis @ (basis.T @ v)
            if current.shape[1]:
                v -= current @ (current.T @ v)
            after = np.linalg.norm(v)
            # two passes always; a third only when the second cancelled heavily
            if sweep >= 1 and after > 0.5 * before:
                break
            before = after
        norm = np.linalg.norm(v)
        if norm < DEFLATION_TOL * norm0:
            continue
        accepted.append(v / norm)
    if not accepted:
        return np.zeros((n, 0))
    return np.column_stack(accepted)


def orth(block: np.ndarray) -> np.ndarray:
    """
    Orthonormal basis of the column span of ``block``.

    Dependent columns (relative residual below 1e-10) are dropped, so the
    result may be narrower than the input.

    Raises:
        EmptyBasisError: every column deflated
    """
    block = as_real_matrix(block, "block")
    if block.shape[1] == 0:
        raise ValidationError("orth needs at least one column")
    out = _orthonormalize(block, None)
    if out.shape[1] == 0:
        raise EmptyBasisError("all columns deflated during orthogonalization")
    return out


def orth_against(block: np.ndarray, basis: np.ndarray) -> np.ndarray:
    """
    Orthonormalize ``block`` against the orthonormal columns of ``basis``.

    Returns an N x 0 array when ``block`` lies inside ``span(basis)``; callers
    treat that as stagnation.
    """
    block = as_real_matrix(block, "block")
    basis = np.asarray(basis, dtype=float)
    if basis.shape[0] != block.shape[0]:
        raise ValidationError(f"row mismatch: block has {block.shape[0]}, basis has {basis.shape[0]}")
    return _orthonormalize(block, basis)


class SvdResult(NamedTuple):
    u: np.ndarray
    sigma: np.ndarray
    v: np.ndarray


def svd(matrix: np.ndarray) -> SvdResult:
    """Thin SVD ``M = U diag(sigma) V^T`` with descending singular values."""
    m = as_real_matrix(matrix, "matrix")
    if m.size == 0:
        return SvdResult(np.zeros((m.shape[0], 0)), np.zeros(0), np.zeros((m.shape[1], 0)))
    try:
        u, s, vt = sla.svd(m, full_matrices=False, check_finite=False)
    except np.linalg.LinAlgError:
        u, s, vt = sla.svd(m, full_matrices=False, check_finite=False, lapack_driver='gesvd')
    return SvdResult(u, s, vt.T)


def _schur_blocks(t: np.ndarray) -> list:
    """(start, stop) index pairs of the 1x1 / 2x2 diagonal blocks of a real Schur form."""
    n = t.shape[0]
    blocks = []
    i = 0
    while i < n:
        if i + 1 < n and t[i + 1, i] != 0.0:
            blocks.append((i, i + 2))
            i += 2
        else:
            blocks.append((i, i + 1))
            i += 1
    return blocks


def solve_lyapunov_dense(a: np.ndarray, w: np.ndarray) -> np.ndarray:
    """
    Solve ``A X + X A^T = -W`` by Bartels-Stewart.

    ``A`` is reduced to real Schur form and the transformed quasi-triangular
    equation is handed to LAPACK ``trsyl``.

    Raises:
        LyapunovSolvabilityError: some eigenvalue pair of A sums to ~0
    """
    a = as_real_matrix(a, "A")
    w = as_real_matrix(w, "W")
    k = a.shape[0]
    if a.shape != (k, k) or w.shape != (k, k):
        raise ValidationError(f"shape mismatch: A {a.shape}, W {w.shape}")
    if k == 0:
        return np.zeros((0, 0))

    # A X + X A^T = -W  <=>  Ah^T X + X Ah = -W  with Ah = A^T
    t, s = sla.schur(a.T, output='real')
    blocks = _schur_blocks(t)

    eigs = np.concatenate([np.linalg.eigvals(t[i0:i1, i0:i1]) for i0, i1 in blocks])
    min_sum = float(np.min(np.abs(eigs[:, None] + eigs[None, :])))
    threshold = 100.0 * np.finfo(float).eps * np.linalg.norm(a, 'fro')
    if min_sum <= threshold:
        raise LyapunovSolvabilityError(
            f"Lyapunov equation not uniquely solvable: min |lambda_i + lambda_j| = {min_sum:.3e}",
            min_eigen_sum=min_sum,
        )

    wt = s.T @ w @ s
    trsyl, = sla.get_lapack_funcs(('trsyl',), (t, wt))
    xt, scale, info = trsyl(t, t, -wt, trana='T', tranb='N', isgn=1)
    if info < 0:
        raise ValidationError(f"trsyl rejected argument {-info}")

    x = s @ (xt / scale) @ s.T
    return 0.5 * (x + x.T)
