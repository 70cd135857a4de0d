"""Matrix product states (tensor trains) over blocked site groups.

Site j of a chain with blocking widths (t_1, ..., t_q) holds a complex array
of shape (D_j, 2^{t_j}, D_{j+1}); entry [m, i, m'] is the (m, m') element of
the matrix selected by the physical index i.  Within a block the first site
is the fastest bit of the physical index, matching the package layout.
Open chains have D_1 = D_{q+1} = 1; periodic chains close with a trace, so
D_{q+1} = D_1.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import flops
from .config import DEFAULT_TOLS, Tolerances
from .hamiltonian import Blocking, BlockedHamiltonian, SpinHamiltonian, regroup
from .records import TraceEntry
from .tensor import (
    DenseState,
    DimensionCapError,
    SingularDenominatorError,
    generalized_eig_min,
    generalized_eig_min_projected,
    hermitian_eig,
    ravel,
    svd,
)


@dataclass
class MpsState:
    boundary: str
    blocking: Blocking
    sites: list

    def __post_init__(self):
        if self.boundary not in ("open", "periodic"):
            raise ValueError(f"bad boundary {self.boundary!r}")
        if len(self.sites) != self.blocking.q:
            raise ValueError("one site tensor per block required")
        self.sites = [np.asarray(s, dtype=complex) for s in self.sites]
        for j, (s, w) in enumerate(zip(self.sites, self.blocking.widths)):
            if s.ndim != 3 or s.shape[1] != 2**w:
                raise ValueError(f"site {j} must have shape (D, {2**w}, D')")
        for j in range(len(self.sites) - 1):
            if self.sites[j].shape[2] != self.sites[j + 1].shape[0]:
                raise ValueError(f"bond mismatch between sites {j} and {j + 1}")
        if self.boundary == "open":
            if self.sites[0].shape[0] != 1 or self.sites[-1].shape[2] != 1:
                raise ValueError("open boundary requires outer bonds of size 1")
        else:
            if self.sites[0].shape[0] != self.sites[-1].shape[2]:
                raise ValueError("periodic boundary requires matching wrap bonds")

    @property
    def p(self) -> int:
        return self.blocking.p

    @property
    def q(self) -> int:
        return self.blocking.q

    def bond_dims(self) -> tuple:
        return tuple(s.shape[0] for s in self.sites) + (self.sites[-1].shape[2],)

    def copy(self) -> "MpsState":
        return MpsState(self.boundary, self.blocking,
                        [s.copy() for s in self.sites])


@dataclass
class GaugeStatus:
    """Per-site gauge flags ('left' | 'right' | None), the orthogonality
    center if one exists, and the squared norm when the sweep exposes it."""

    flags: tuple
    center: int | None
    gamma: float | None = None


# ---------------------------------------------------------------------------
# construction

def random_mps(p: int, d_bond: int, boundary: str = "open",
               blocking: Blocking | None = None, seed: int = 0) -> MpsState:
    """Reproducible complex-Gaussian state.  Open-boundary bonds are clamped
    to min(D, 2^{left bits}, 2^{right bits}) so no bond exceeds what the cut
    can carry."""
    blocking = blocking or Blocking.single_sites(p)
    if blocking.p != p:
        raise ValueError("blocking does not cover p sites")
    rng = np.random.default_rng(seed)
    cuts = blocking.cuts
    if boundary == "open":
        bonds = [min(d_bond, 2**s, 2 ** (p - s)) for s in cuts]
    else:
        bonds = [d_bond] * (blocking.q + 1)
    sites = []
    for j, w in enumerate(blocking.widths):
        shape = (bonds[j], 2**w, bonds[j + 1])
        sites.append((rng.standard_normal(shape) + 1j * rng.standard_normal(shape))
                     / np.sqrt(2.0))
    return MpsState(boundary, blocking, sites)


def from_unit_vector(index: int, p: int) -> MpsState:
    """Basis vector e_index as a bond-dimension-1 chain: site r holds the
    indicator of bit r of `index` (site 1 is the least significant bit)."""
    if not 0 <= index < 2**p:
        raise ValueError("basis index out of range")
    sites = []
    for r in range(p):
        a = np.zeros((1, 2, 1), dtype=complex)
        a[0, (index >> r) & 1, 0] = 1.0
        sites.append(a)
    return MpsState("open", Blocking.single_sites(p), sites)


# ---------------------------------------------------------------------------
# evaluation

def evaluate(x: MpsState, bits: Sequence[int]) -> complex:
    """Single component: matrix product over the per-block indices, closed by
    a trace for periodic chains."""
    bits = list(bits)
    if len(bits) != x.p or any(b not in (0, 1) for b in bits):
        raise IndexError("need one bit per site")
    cuts = x.blocking.cuts
    acc = None
    for j, w in enumerate(x.blocking.widths):
        local = 0
        for r, site in enumerate(range(cuts[j], cuts[j + 1])):
            local += bits[site] << r
        mat = x.sites[j][:, local, :]
        acc = mat if acc is None else acc @ mat
    if x.boundary == "open":
        return complex(acc[0, 0])
    return complex(np.trace(acc))


def to_dense(x: MpsState, cap: int = DEFAULT_TOLS.dense_site_cap) -> DenseState:
    """Full coefficient vector in the package layout."""
    if x.p > cap:
        raise DimensionCapError(f"p={x.p} exceeds dense cap {cap}")
    acc = x.sites[0]
    for site in x.sites[1:]:
        acc = np.tensordot(acc, site, axes=(acc.ndim - 1, 0))
    if x.boundary == "open":
        tens = acc[0, ..., 0]
    else:
        tens = np.trace(acc, axis1=0, axis2=acc.ndim - 1)
    return DenseState(x.p, ravel(tens))


# ---------------------------------------------------------------------------
# structure

def add(x: MpsState, y: MpsState) -> MpsState:
    """Sum of two chains: block-diagonal interior matrices, concatenated
    boundary vectors for open chains.  Bond dimensions add."""
    if x.p != y.p or x.boundary != y.boundary or x.blocking != y.blocking:
        raise ValueError("summands must share length, boundary and blocking")
    q = x.q
    sites = []
    for j in range(q):
        a, b = x.sites[j], y.sites[j]
        open_left = x.boundary == "open" and j == 0
        open_right = x.boundary == "open" and j == q - 1
        if open_left and open_right:
            sites.append(a + b)
            continue
        if open_left:
            sites.append(np.concatenate([a, b], axis=2))
            continue
        if open_right:
            sites.append(np.concatenate([a, b], axis=0))
            continue
        dl = a.shape[0] + b.shape[0]
        dr = a.shape[2] + b.shape[2]
        c = np.zeros((dl, a.shape[1], dr), dtype=complex)
        c[: a.shape[0], :, : a.shape[2]] = a
        c[a.shape[0] :, :, a.shape[2] :] = b
        sites.append(c)
    return MpsState(x.boundary, x.blocking, sites)


def _merge_ff(arr: np.ndarray, ax: int) -> np.ndarray:
    """Merge axes (ax, ax+1) into one, with axis ax the fast index."""
    sh = arr.shape
    moved = np.swapaxes(arr, ax, ax + 1)
    return moved.reshape(sh[:ax] + (sh[ax] * sh[ax + 1],) + sh[ax + 2:])


def _split_rows(u: np.ndarray, dl: int, d: int) -> np.ndarray:
    """Inverse of the (bond, phys) row merge used when left-gauging."""
    return u.reshape(d, dl, -1).transpose(1, 0, 2)


def _split_cols(v: np.ndarray, d: int, dr: int) -> np.ndarray:
    """Inverse of the (phys, bond) column merge used when right-gauging."""
    return v.reshape(-1, dr, d).transpose(0, 2, 1)


def _trimmed_svd(m: np.ndarray, d_max: int | None = None,
                 tols: Tolerances = DEFAULT_TOLS):
    """SVD dropping exact-zero singular values (and capping at d_max)."""
    u, s, v = svd(m, tols)
    if s.size and s[0] > 0.0:
        rank = int(np.sum(s > tols.zero_singular * s[0]))
    else:
        rank = 0
    rank = max(rank, 1)
    if d_max is not None:
        rank = min(rank, int(d_max))
    return u[:, :rank], s[:rank], v[:rank, :]


def normalize_left_sweep(x: MpsState, tols: Tolerances = DEFAULT_TOLS):
    """Left-gauge sites 1..q-1 by successive SVDs, pushing the remaining
    factor to the right.  The represented vector is unchanged; for open
    chains the returned status carries gamma = squared norm."""
    out = x.copy()
    q = out.q
    for j in range(q - 1):
        dl, d, dr = out.sites[j].shape
        u, s, v = _trimmed_svd(_merge_ff(out.sites[j], 0), tols=tols)
        out.sites[j] = _split_rows(u, dl, d)
        carry = s[:, None] * v
        out.sites[j + 1] = np.tensordot(carry, out.sites[j + 1], axes=(1, 0))
    flags = tuple(["left"] * (q - 1) + [None])
    gamma = None
    if out.boundary == "open":
        gamma = float(np.sum(np.abs(out.sites[q - 1]) ** 2))
    return out, GaugeStatus(flags, q - 1, gamma)


def normalize_right_sweep(x: MpsState, tols: Tolerances = DEFAULT_TOLS):
    """Mirror image of :func:`normalize_left_sweep`: gauges sites q..2."""
    out = x.copy()
    q = out.q
    for j in range(q - 1, 0, -1):
        dl, d, dr = out.sites[j].shape
        u, s, v = _trimmed_svd(_merge_ff(out.sites[j], 1), tols=tols)
        out.sites[j] = _split_cols(v, d, dr)
        carry = u * s[None, :]
        out.sites[j - 1] = np.tensordot(out.sites[j - 1], carry, axes=(2, 0))
    flags = tuple([None] + ["right"] * (q - 1))
    gamma = None
    if out.boundary == "open":
        gamma = float(np.sum(np.abs(out.sites[0]) ** 2))
    return out, GaugeStatus(flags, 0, gamma)


def gauge_residual_left(site: np.ndarray) -> float:
    """|| sum_i U^(i)H U^(i) - I || for one site tensor."""
    m = _merge_ff(site, 0)
    g = m.conj().T @ m
    return float(np.linalg.norm(g - np.eye(g.shape[0])))


def gauge_residual_right(site: np.ndarray) -> float:
    """|| sum_i U^(i) U^(i)H - I || for one site tensor."""
    m = _merge_ff(site, 1)
    g = m @ m.conj().T
    return float(np.linalg.norm(g - np.eye(g.shape[0])))


def two_site_shift(x: MpsState, j: int, direction: str,
                   d_max: int | None = None,
                   tols: Tolerances = DEFAULT_TOLS) -> MpsState:
    """SVD of the merged two-site block (j, j+1), optionally truncated to the
    d_max largest singular values.  Moving right installs the isometry at
    site j and the remainder at j+1; moving left mirrors this."""
    if direction not in ("left", "right"):
        raise ValueError("direction must be 'left' or 'right'")
    if not 0 <= j < x.q - 1:
        raise ValueError(f"two-site pair ({j}, {j + 1}) is off the chain")
    out = x.copy()
    sj, sj1 = out.sites[j], out.sites[j + 1]
    dl, d1, _ = sj.shape
    _, d2, dr = sj1.shape
    theta = np.tensordot(sj, sj1, axes=(2, 0))  # (dl, d1, d2, dr)
    m = _merge_ff(_merge_ff(theta, 0), 1)       # rows (m, i_j), cols (i_{j+1}, m')
    u, s, v = _trimmed_svd(m, d_max=d_max, tols=tols)
    if direction == "right":
        out.sites[j] = _split_rows(u, dl, d1)
        out.sites[j + 1] = _split_cols(s[:, None] * v, d2, dr)
    else:
        out.sites[j] = _split_rows(u * s[None, :], dl, d1)
        out.sites[j + 1] = _split_cols(v, d2, dr)
    return out


# ---------------------------------------------------------------------------
# contractions

def _zipper_init(x: MpsState, y: MpsState) -> np.ndarray:
    """Start tensor over (wrap_y, wrap_x, cur_y, cur_x).  Open chains have
    size-1 wrap legs, so the same sweep covers both boundaries."""
    dy = y.sites[0].shape[0]
    dx = x.sites[0].shape[0]
    e = np.einsum("ac,bd->abcd", np.eye(dy), np.eye(dx))
    return e.astype(complex)


def _zipper_close(e: np.ndarray) -> complex:
    flops.add(e.shape[0] * e.shape[1])
    return complex(np.einsum("abab->", e))


def inner(x: MpsState, y: MpsState) -> complex:
    """<y, x> = sum_i conj(y_i) x_i, contracted site by site without ever
    materializing the dense vectors.  Operation count stays below 4 D^3 p
    for open chains and 4 D^5 p + D^2 for periodic ones."""
    if x.p != y.p or x.blocking != y.blocking or x.boundary != y.boundary:
        raise ValueError("inner product requires matching chains")
    e = _zipper_init(x, y)
    for xs, ys in zip(x.sites, y.sites):
        f = flops.tdot(e, ys.conj(), axes=(2, 0))   # (wy, wx, cx, i, cy')
        e = flops.tdot(f, xs, axes=((2, 3), (0, 1)))  # (wy, wx, cy', cx')
    return _zipper_close(e)


def _apply_block_site(blocked: BlockedHamiltonian, k: int, i: int,
                      site: np.ndarray) -> np.ndarray:
    """Block operator of term k acting on the physical index of a site."""
    dl, d, dr = site.shape
    stack = site.transpose(1, 0, 2).reshape(d, dl * dr)
    out = blocked.apply_block(k, i, stack)
    return out.reshape(d, dl, dr).transpose(1, 0, 2)


def expectation(h: SpinHamiltonian, x: MpsState) -> float:
    """<x, H x> by a per-term zipper with the block operator woven onto the
    physical bond; never forms H x as a state."""
    blocked = regroup(h, x.blocking)
    total = 0.0 + 0.0j
    for k in range(blocked.num_terms):
        e = _zipper_init(x, x)
        for j, site in enumerate(x.sites):
            ket = site if blocked.is_identity_block(k, j) \
                else _apply_block_site(blocked, k, j, site)
            f = flops.tdot(e, site.conj(), axes=(2, 0))
            e = flops.tdot(f, ket, axes=((2, 3), (0, 1)))
        total += blocked.coefficient(k) * _zipper_close(e)
    if abs(total.imag) > DEFAULT_TOLS.rayleigh_imag * max(1.0, abs(total.real)):
        raise ValueError(f"expectation has imaginary residue {total.imag:.3e}")
    return float(total.real)


def apply_hamiltonian(h: SpinHamiltonian, x: MpsState) -> MpsState:
    """H x as a single chain: each term acts site-locally, terms are combined
    with :func:`add`, so bonds grow by a factor of the term count."""
    blocked = regroup(h, x.blocking)
    result = None
    for k in range(blocked.num_terms):
        sites = []
        for j, site in enumerate(x.sites):
            new = site if blocked.is_identity_block(k, j) \
                else _apply_block_site(blocked, k, j, site)
            sites.append(new.copy())
        sites[0] = sites[0] * blocked.coefficient(k)
        term_state = MpsState(x.boundary, x.blocking, sites)
        result = term_state if result is None else add(result, term_state)
    return result


def mps_energy(h: SpinHamiltonian, x: MpsState) -> float:
    """Rayleigh quotient from contractions only."""
    nrm = inner(x, x)
    return expectation(h, x) / float(np.real(nrm))


# ---------------------------------------------------------------------------
# ALS ground-state search

def _env_step_right(env: np.ndarray, bra: np.ndarray, ket: np.ndarray) -> np.ndarray:
    """Grow a (bra, ket) environment by one site from the left."""
    f = np.tensordot(env, bra.conj(), axes=(0, 0))   # (kx, i, ky')
    return np.tensordot(f, ket, axes=((0, 1), (0, 1)))  # (ky', kx')


def _env_step_left(env: np.ndarray, bra: np.ndarray, ket: np.ndarray) -> np.ndarray:
    f = np.tensordot(bra.conj(), env, axes=(2, 0))   # (ky, i, kx')
    return np.tensordot(f, ket, axes=((1, 2), (1, 2)))  # (ky, kx)


def _canonicalize_open(x: MpsState, tols: Tolerances) -> MpsState:
    out, _ = normalize_right_sweep(x, tols)
    return out


def _shift_center_right(state: MpsState, c: int, tols: Tolerances) -> None:
    dl, d, _ = state.sites[c].shape
    u, s, v = _trimmed_svd(_merge_ff(state.sites[c], 0), tols=tols)
    state.sites[c] = _split_rows(u, dl, d)
    carry = s[:, None] * v
    state.sites[c + 1] = np.tensordot(carry, state.sites[c + 1], axes=(1, 0))


def _shift_center_left(state: MpsState, c: int, tols: Tolerances) -> None:
    dl, d, dr = state.sites[c].shape
    u, s, v = _trimmed_svd(_merge_ff(state.sites[c], 1), tols=tols)
    state.sites[c] = _split_cols(v, d, dr)
    carry = u * s[None, :]
    state.sites[c - 1] = np.tensordot(state.sites[c - 1], carry, axes=(2, 0))


def _als_open(h: SpinHamiltonian, state: MpsState, sweeps: int,
              tols: Tolerances) -> tuple:
    blocked = regroup(h, state.blocking)
    q = state.q
    m_terms = blocked.num_terms
    state = _canonicalize_open(state, tols)

    def op_site(k, j):
        return (state.sites[j] if blocked.is_identity_block(k, j)
                else _apply_block_site(blocked, k, j, state.sites[j]))

    # right environments for center 0
    renv = [[None] * q for _ in range(m_terms)]
    for k in range(m_terms):
        env = np.ones((1, 1), dtype=complex)
        for j in range(q - 1, 0, -1):
            env = _env_step_left(env, state.sites[j], op_site(k, j))
            renv[k][j - 1] = env
        renv[k][q - 1] = np.ones((1, 1), dtype=complex)
    lenv = [[None] * q for _ in range(m_terms)]
    for k in range(m_terms):
        lenv[k][0] = np.ones((1, 1), dtype=complex)

    trace = []
    last_sweep_e = None
    still = 0
    for sweep in range(sweeps):
        going_right = sweep % 2 == 0
        order = range(q) if going_right else range(q - 1, -1, -1)
        energy = None
        for c in order:
            dl, d, dr = state.sites[c].shape
            heff = np.zeros((dl * d * dr,) * 2, dtype=complex)
            for k in range(m_terms):
                op = blocked.block_matrix(k, c)
                heff += blocked.coefficient(k) * np.kron(
                    lenv[k][c], np.kron(op, renv[k][c])
                )
            w, v = hermitian_eig(heff, tols)
            energy = float(w[0])
            state.sites[c] = v[:, 0].reshape(dl, d, dr)
            trace.append(TraceEntry(0, sweep, c, energy, flops.current_total()))
            if going_right and c < q - 1:
                _shift_center_right(state, c, tols)
                for k in range(m_terms):
                    lenv[k][c + 1] = _env_step_right(
                        lenv[k][c], state.sites[c], op_site(k, c)
                    )
            elif not going_right and c > 0:
                _shift_center_left(state, c, tols)
                for k in range(m_terms):
                    renv[k][c - 1] = _env_step_left(
                        renv[k][c], state.sites[c], op_site(k, c)
                    )
        if last_sweep_e is not None and abs(energy - last_sweep_e) < tols.convergence:
            still += 1
            if still >= 2:
                break
        else:
            still = 0
        last_sweep_e = energy
    return trace, state


def _transfer(site: np.ndarray, op_site: np.ndarray) -> np.ndarray:
    """Transfer matrix over (bra, ket) bond pairs for one site."""
    t = np.tensordot(site.conj(), op_site, axes=(1, 1))  # (ky, ky', kx, kx')
    t = t.transpose(0, 2, 1, 3)
    dl = t.shape[0] * t.shape[1]
    dr = t.shape[2] * t.shape[3]
    return t.reshape(dl, dr)


def _als_periodic(h: SpinHamiltonian, state: MpsState, sweeps: int,
                  tols: Tolerances) -> tuple:
    blocked = regroup(h, state.blocking)
    q = state.q
    m_terms = blocked.num_terms
    state, _ = normalize_left_sweep(state, tols)

    trace = []
    last_sweep_e = None
    still = 0
    for sweep in range(sweeps):
        going_right = sweep % 2 == 0
        order = range(q) if going_right else range(q - 1, -1, -1)
        energy = None
        for c in order:
            dl, d, dr = state.sites[c].shape
            ring = [(c + off) % q for off in range(1, q)]
            w_terms = []
            for k in range(m_terms):
                w = np.eye(dr * dr, dtype=complex)
                for j in ring:
                    ket = (state.sites[j] if blocked.is_identity_block(k, j)
                           else _apply_block_site(blocked, k, j, state.sites[j]))
                    w = w @ _transfer(state.sites[j], ket)
                w_terms.append(w)
            wid = np.eye(dr * dr, dtype=complex)
            for j in ring:
                wid = wid @ _transfer(state.sites[j], state.sites[j])

            def pencil(w_env, op):
                w4 = w_env.reshape(dr, dr, dl, dl)  # (my', mx', my, mx)
                mat = np.einsum("ij,abcd->ciadjb", op, w4)
                return mat.reshape(dl * d * dr, dl * d * dr)

            eye_d = np.eye(d, dtype=complex)
            r_mat = np.zeros((dl * d * dr,) * 2, dtype=complex)
            for k in range(m_terms):
                r_mat += blocked.coefficient(k) * pencil(
                    w_terms[k], blocked.block_matrix(k, c)
                )
            n_mat = pencil(wid, eye_d)
            try:
                lam, vec = generalized_eig_min(r_mat, n_mat, tols)
            except SingularDenominatorError:
                lam, vec = generalized_eig_min_projected(r_mat, n_mat, tols)
            energy = lam
            state.sites[c] = vec.reshape(dl, d, dr)
            trace.append(TraceEntry(0, sweep, c, energy, flops.current_total()))
            # keep the chain partially normalized: re-gauge the updated site
            if going_right and c < q - 1:
                _shift_center_right(state, c, tols)
            elif not going_right and c > 0:
                _shift_center_left(state, c, tols)
        if last_sweep_e is not None and abs(energy - last_sweep_e) < tols.convergence:
            still += 1
            if still >= 2:
                break
        else:
            still = 0
        last_sweep_e = energy
    return trace, state


def als_ground_state(h: SpinHamiltonian, p: int, d_bond: int,
                     boundary: str = "open", sweeps: int = 10, seed: int = 0,
                     blocking: Blocking | None = None,
                     tols: Tolerances = DEFAULT_TOLS) -> tuple:
    """Alternating single-site minimization of the Rayleigh quotient.

    Open chains stay in mixed-canonical gauge, so every update is a standard
    Hermitian eigenproblem; periodic chains form the denominator explicitly
    and fall back to a projected solve when it is singular.  One sweep is one
    directional pass; direction alternates, re-gauging by SVD after every
    update.  Returns (trace, state) with a nonincreasing energy trace.
    """
    if d_bond < 1 or sweeps < 1:
        raise ValueError("need d_bond >= 1 and sweeps >= 1")
    if h.p != p:
        raise ValueError("Hamiltonian size does not match p")
    state = random_mps(p, d_bond, boundary, blocking, seed)
    if boundary == "open":
        return _als_open(h, state, sweeps, tols)
    return _als_periodic(h, state, sweeps, tols)
