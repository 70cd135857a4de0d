"""Dense multi-index arrays and the small linear-algebra kernel.

Layout doctrine (used by every module in this package): a tensor with shape
``(n_1, ..., n_p)`` is linearized with the *first index fastest*, i.e.
``lin(i_1, ..., i_p) = i_1 + n_1*i_2 + n_1*n_2*i_3 + ...``.  For a state of
``p`` binary sites this means site 1 is the least significant bit of the
vector index.  Kronecker products of per-site matrices therefore list the
*last* site first when built with ``np.kron`` (see :func:`kron_first_fastest`).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .config import DEFAULT_TOLS, Tolerances


class SingularDenominatorError(RuntimeError):
    """Raised when the denominator of a generalized eigenproblem is not
    positive definite; callers may project onto the nonsingular subspace."""


class DimensionCapError(ValueError):
    """Raised when a dense materialization would exceed the configured cap."""


# ---------------------------------------------------------------------------
# multi-index plumbing

def lin_index(shape: Sequence[int], midx: Sequence[int]) -> int:
    """Linear position of multi-index `midx`, first index fastest."""
    pos = 0
    stride = 1
    for n, i in zip(shape, midx):
        if not 0 <= i < n:
            raise IndexError(f"index {i} out of range for mode of size {n}")
        pos += stride * i
        stride *= n
    return pos


def multi_index(shape: Sequence[int], pos: int) -> tuple:
    """Inverse of :func:`lin_index`."""
    out = []
    for n in shape:
        out.append(pos % n)
        pos //= n
    return tuple(out)


def ravel(t: np.ndarray) -> np.ndarray:
    """Vector view of a tensor in the package linearization order."""
    return t.reshape(-1, order="F")


def unravel(v: np.ndarray, shape: Sequence[int]) -> np.ndarray:
    """Tensor view of a vector in the package linearization order."""
    return np.asarray(v).reshape(tuple(shape), order="F")


def kron_first_fastest(mats: Sequence[np.ndarray]) -> np.ndarray:
    """Kronecker product of per-mode matrices acting on first-index-fastest
    vectors: mode 1 is the least significant index of the result."""
    out = np.eye(1)
    for m in mats:  # np.kron puts the *first* factor most significant
        out = np.kron(m, out)
    return out


@dataclass
class DenseState:
    """Full coefficient vector of a p-site state (2**p complex amplitudes)."""

    p: int
    amplitudes: np.ndarray

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        if self.amplitudes.size != 2**self.p:
            raise ValueError(
                f"expected 2**{self.p} amplitudes, got {self.amplitudes.size}"
            )

    @property
    def vector(self) -> np.ndarray:
        return self.amplitudes

    def tensor(self) -> np.ndarray:
        """View with one binary mode per site (site 1 fastest)."""
        return unravel(self.amplitudes, (2,) * self.p)

    @classmethod
    def from_tensor(cls, t: np.ndarray) -> "DenseState":
        p = t.ndim
        if t.shape != (2,) * p:
            raise ValueError("state tensor must have all modes of size 2")
        return cls(p, ravel(t))

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))


# ---------------------------------------------------------------------------
# tensor operations

def outer_product(factors: Sequence[np.ndarray]) -> np.ndarray:
    """Rank-one tensor with entries prod_j factors[j][i_j]."""
    if len(factors) == 0:
        raise ValueError("outer_product needs at least one factor")
    arrs = [np.asarray(f) for f in factors]
    for f in arrs:
        if f.ndim != 1 or f.size == 0:
            raise ValueError("factors must be nonempty vectors")
    out = arrs[0]
    for f in arrs[1:]:
        out = np.multiply.outer(out, f)
    return out


def mode_n_unfold(t: np.ndarray, n: int) -> np.ndarray:
    """Matrix with rows indexed by mode n and columns by the remaining modes
    (in original order, first remaining mode fastest)."""
    if not 0 <= n < t.ndim:
        raise ValueError(f"mode {n} out of range for order-{t.ndim} tensor")
    moved = np.moveaxis(t, n, 0)
    return moved.reshape(t.shape[n], -1, order="F")


def mode_n_fold(m: np.ndarray, n: int, shape: Sequence[int]) -> np.ndarray:
    """Inverse of :func:`mode_n_unfold` for a tensor of the given shape."""
    shape = tuple(shape)
    rest = shape[:n] + shape[n + 1 :]
    moved = np.asarray(m).reshape((shape[n],) + rest, order="F")
    return np.moveaxis(moved, 0, n)


def mode_n_product(t: np.ndarray, n: int, u: np.ndarray) -> np.ndarray:
    """Contract mode n of `t` with the columns of matrix `u`."""
    u = np.asarray(u)
    if u.ndim != 2 or u.shape[1] != t.shape[n]:
        raise ValueError(
            f"matrix with {u.shape} columns cannot contract mode of size {t.shape[n]}"
        )
    return np.moveaxis(np.tensordot(u, t, axes=(1, n)), 0, n)


def tucker_dense(core: np.ndarray, factors: Sequence[np.ndarray]) -> np.ndarray:
    """Definitional expansion of a core tensor with per-mode factor matrices,

        t[i_1, ..., i_p] = sum_m core[m_1, ..., m_p] * prod_j factors[j][i_j, m_j],

    i.e. the core multiplied by every factor along its mode.  Kept as a
    definition only: for binary modes the multilinear ranks are already 2,
    so no decomposition algorithm is provided on top of it.
    """
    core = np.asarray(core)
    if len(factors) != core.ndim:
        raise ValueError("one factor matrix per core mode required")
    out = core
    for n, u in enumerate(factors):
        out = mode_n_product(out, n, np.asarray(u))
    return out


# ---------------------------------------------------------------------------
# linear-algebra kernel

def _phase_normalize_columns(u: np.ndarray, v: np.ndarray | None = None):
    """Rotate each column of `u` so its first nonzero entry is real positive.

    If `v` is given its rows absorb the conjugate phase, keeping u @ v fixed.
    """
    for k in range(u.shape[1]):
        col = u[:, k]
        nz = np.flatnonzero(np.abs(col) > 1e-300)
        if nz.size == 0:
            continue
        z = col[nz[0]]
        phase = z / abs(z)
        u[:, k] = col * np.conj(phase)
        if v is not None:
            v[k, :] = v[k, :] * phase
    return u, v


def svd(m: np.ndarray, tols: Tolerances = DEFAULT_TOLS):
    """Economy SVD m = U @ diag(s) @ V with a deterministic phase convention.

    Singular values are nonincreasing and nonnegative; `U` has orthonormal
    columns, `V` orthonormal rows, and the first nonzero entry of each column
    of `U` is real positive.
    """
    m = np.asarray(m)
    if not np.all(np.isfinite(m)):
        raise ValueError("svd requires finite entries")
    u, s, vh = np.linalg.svd(m, full_matrices=False)
    u = np.ascontiguousarray(u)
    vh = np.ascontiguousarray(vh)
    _phase_normalize_columns(u, vh)
    return u, s, vh


def hermitian_eig(m: np.ndarray, tols: Tolerances = DEFAULT_TOLS):
    """Eigenvalues (ascending) and phase-normalized orthonormal eigenvectors
    of a Hermitian matrix.  Refuses inputs that are not Hermitian within
    `tols.hermitian` relative to the matrix norm; symmetrizes before solving.
    """
    m = np.asarray(m, dtype=complex)
    scale = max(1.0, np.linalg.norm(m))
    defect = np.linalg.norm(m - m.conj().T)
    if defect > tols.hermitian * scale:
        raise ValueError(f"matrix is not Hermitian: defect {defect:.3e}")
    msym = 0.5 * (m + m.conj().T)
    w, v = np.linalg.eigh(msym)
    v = np.ascontiguousarray(v)
    _phase_normalize_columns(v)
    return w, v


def pd_floor(b: np.ndarray, tols: Tolerances = DEFAULT_TOLS) -> float:
    """Positive-definiteness floor for a denominator matrix."""
    b = np.asarray(b)
    return tols.pd_floor_scale * float(np.real(np.trace(b))) / b.shape[0]


def generalized_eig_min(a: np.ndarray, b: np.ndarray,
                        tols: Tolerances = DEFAULT_TOLS):
    """Smallest eigenpair of the Hermitian pencil (a, b) with b positive
    definite, via Cholesky reduction.  Returns (lambda_min, v) normalized to
    v^H b v = 1 with the usual phase convention.

    Raises SingularDenominatorError when lambda_min(b) falls below the floor,
    signalling the caller to project onto the nonsingular subspace instead.
    """
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    floor = pd_floor(b, tols)
    bw = np.linalg.eigvalsh(0.5 * (b + b.conj().T))
    if bw[0] <= floor:
        raise SingularDenominatorError(
            f"denominator eigenvalue {bw[0]:.3e} at or below floor {floor:.3e}"
        )
    l = np.linalg.cholesky(0.5 * (b + b.conj().T))
    # reduced = L^-1 a L^-H, kept Hermitian by construction
    tmp = np.linalg.solve(l, a)
    reduced = np.linalg.solve(l, tmp.conj().T).conj().T
    w, v = hermitian_eig(reduced, tols)
    x = np.linalg.solve(l.conj().T, v[:, 0])
    nb = np.sqrt(np.real(np.vdot(x, b @ x)))
    x = x / nb
    x, _ = _phase_normalize_columns(x.reshape(-1, 1))
    return float(w[0]), x[:, 0]


def generalized_eig_min_projected(a: np.ndarray, b: np.ndarray,
                                  tols: Tolerances = DEFAULT_TOLS):
    """Like :func:`generalized_eig_min` but solves on the numerically
    nonsingular eigenspace of b and embeds the eigenvector back."""
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    w, q = hermitian_eig(b, tols)
    floor = pd_floor(b, tols)
    keep = w > max(floor, 0.0)
    if not np.any(keep):
        raise SingularDenominatorError("denominator has no positive eigenvalues")
    qk = q[:, keep]
    ap = qk.conj().T @ a @ qk
    bp = np.diag(w[keep])
    lam, y = generalized_eig_min(ap, bp, tols)
    x = qk @ y
    x, _ = _phase_normalize_columns(x.reshape(-1, 1))
    return lam, x[:, 0]
