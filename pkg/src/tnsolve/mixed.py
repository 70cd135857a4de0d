"""Sums of tensor-product terms with a different blocking per addend.

A MixedTerm is one Kronecker product of block vectors over its own blocking
of the chain; cyclic blockings (periodic geometry) may start at an offset so
one block wraps the seam.  The 2D variant pairs lattice subblocks into
superblocks following one of four tiling patterns.  All kernels contract
without materializing 2^p vectors and count their operations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import flops
from .config import DEFAULT_TOLS, Tolerances
from .hamiltonian import Blocking, SpinHamiltonian
from .mps import MpsState
from .parafac import _aligned_cross_factory, _greedy_core
from .tensor import DenseState, ravel


@dataclass
class MixedTerm:
    """weight * (x_1 (x) ... (x) x_q) over this term's own blocking.

    `offset` is the chain position where block 1 starts; nonzero offsets make
    the partition cyclic (exactly one block crosses the seam) and are only
    meaningful for periodic geometry.
    """

    blocking: Blocking
    factors: list
    weight: complex = 1.0
    offset: int = 0

    def __post_init__(self):
        self.factors = [np.asarray(f, dtype=complex).reshape(-1) for f in self.factors]
        if len(self.factors) != self.blocking.q:
            raise ValueError("one factor per block required")
        for f, w in zip(self.factors, self.blocking.widths):
            if f.size != 2**w:
                raise ValueError("factor length must be 2^width of its block")
        p = self.blocking.p
        if not 0 <= self.offset < p:
            raise ValueError("offset must lie in [0, p)")

    @property
    def p(self) -> int:
        return self.blocking.p

    def block_sites(self, j: int) -> tuple:
        """Chain positions covered by block j, in factor bit order."""
        p = self.p
        start = (self.offset + self.blocking.cuts[j]) % p
        return tuple((start + r) % p for r in range(self.blocking.widths[j]))

    def wraps(self) -> bool:
        return self.offset != 0


@dataclass
class PatternedTerm2D:
    """One Kronecker product of superblock vectors on a subblock lattice.

    The lattice has sb_rows x sb_cols subblocks of r_sites chain sites each
    (a subblock is a horizontal run of r_sites lattice columns; the physical
    lattice is sb_rows x (sb_cols * r_sites), numbered row-major).  The four
    patterns pair subblocks into superblocks: (1) horizontal pairs, (2)
    horizontal pairs shifted by one column with wrap, (3) vertical pairs,
    (4) vertical pairs shifted by one row with wrap.  Patterns tile only
    even x even subblock lattices.
    """

    sb_rows: int
    sb_cols: int
    r_sites: int
    pattern: int
    factors: list
    weight: complex = 1.0

    def __post_init__(self):
        if self.sb_rows % 2 or self.sb_cols % 2:
            raise ValueError("patterns tile only even x even subblock lattices")
        if self.pattern not in (1, 2, 3, 4):
            raise ValueError("pattern must be 1..4")
        self.factors = [np.asarray(f, dtype=complex).reshape(-1) for f in self.factors]
        pairs = self.superblocks()
        if len(self.factors) != len(pairs):
            raise ValueError(f"pattern {self.pattern} needs {len(pairs)} factors")
        for f in self.factors:
            if f.size != 4**self.r_sites:
                raise ValueError("superblock factors must have length 2^(2r)")

    @property
    def p(self) -> int:
        return self.sb_rows * self.sb_cols * self.r_sites

    def subblock_id(self, row: int, col: int) -> int:
        return row * self.sb_cols + col

    def subblock_sites(self, sb: int) -> tuple:
        row, col = divmod(sb, self.sb_cols)
        width = self.sb_cols * self.r_sites
        return tuple(row * width + col * self.r_sites + u for u in range(self.r_sites))

    def superblocks(self) -> list:
        """Ordered subblock pairs of this pattern; factor k belongs to pair k
        with the first subblock as the fast index half."""
        out = []
        if self.pattern in (1, 2):
            shift = 0 if self.pattern == 1 else 1
            for row in range(self.sb_rows):
                for c in range(0, self.sb_cols, 2):
                    a = (c + shift) % self.sb_cols
                    b = (c + shift + 1) % self.sb_cols
                    out.append((self.subblock_id(row, a), self.subblock_id(row, b)))
        else:
            shift = 0 if self.pattern == 3 else 1
            for col in range(self.sb_cols):
                for rr in range(0, self.sb_rows, 2):
                    a = (rr + shift) % self.sb_rows
                    b = (rr + shift + 1) % self.sb_rows
                    out.append((self.subblock_id(a, col), self.subblock_id(b, col)))
        return out

    def block_sites_list(self) -> list:
        """Per factor: the chain sites it covers, in factor bit order."""
        return [self.subblock_sites(a) + self.subblock_sites(b)
                for a, b in self.superblocks()]


@dataclass
class MixedTermSum:
    """Sum of tensor-product terms; every term may use its own blocking."""

    p: int
    terms: list
    geometry: str  # '1d-open' | '1d-periodic' | '2d'

    def __post_init__(self):
        if self.geometry not in ("1d-open", "1d-periodic", "2d"):
            raise ValueError(f"bad geometry {self.geometry!r}")
        for t in self.terms:
            if t.p != self.p:
                raise ValueError("all terms must cover the same sites")
            if self.geometry == "2d" and not isinstance(t, PatternedTerm2D):
                raise ValueError("2d geometry requires patterned terms")
            if self.geometry != "2d" and isinstance(t, PatternedTerm2D):
                raise ValueError("patterned terms require 2d geometry")
            if self.geometry == "1d-open" and t.offset != 0:
                raise ValueError("open-boundary blockings cannot wrap")


# ---------------------------------------------------------------------------
# dense expansion (oracle plumbing)

def _term_pieces(term) -> list:
    """(site labels, bit tensor) pairs for one term, weight excluded."""
    if isinstance(term, PatternedTerm2D):
        sites_list = term.block_sites_list()
    else:
        sites_list = [term.block_sites(j) for j in range(term.blocking.q)]
    pieces = []
    for sites, f in zip(sites_list, term.factors):
        pieces.append((tuple(sites), f.reshape((2,) * len(sites), order="F")))
    return pieces


def term_to_dense(term) -> DenseState:
    p = term.p
    pieces = _term_pieces(term)
    order = [s for sites, _ in pieces for s in sites]
    tens = None
    for _, t in pieces:
        tens = t if tens is None else np.multiply.outer(tens, t)
    perm = [order.index(s) for s in range(p)]
    return DenseState(p, term.weight * ravel(np.transpose(tens, perm)))


def sum_to_dense(x: MixedTermSum) -> DenseState:
    total = np.zeros(2**x.p, dtype=complex)
    for t in x.terms:
        total += term_to_dense(t).vector
    return DenseState(x.p, total)


# ---------------------------------------------------------------------------
# generic piece-network contraction

def _pair_score(la, sa, lb, sb_, open_labels):
    shared = (set(la) & set(lb)) - open_labels
    if not shared:
        return None
    shared_bits = sum(int(np.log2(sa[la.index(s)])) for s in shared)
    left_bits = 0
    for labels, shapes in ((la, sa), (lb, sb_)):
        for lab, size in zip(labels, shapes):
            if lab not in shared:
                left_bits += int(np.log2(size))
    return shared_bits - left_bits, shared


def _contract_network(pieces, open_labels=frozenset()):
    """Contract a list of (labels, tensor) pieces over all labels shared by
    two pieces, leaving `open_labels` as free legs.

    Pair choice maximizes (contracted bits - leftover bits), i.e. the
    summation part is kept larger than the remaining indices; ties fall to
    the piece pair containing the leftmost label.  Returns (scalar, tensor
    over sorted(open_labels) or None).
    """
    open_labels = frozenset(open_labels)
    work = [(tuple(l), np.asarray(t)) for l, t in pieces]
    scalar = 1.0 + 0.0j

    def sweep_scalars():
        nonlocal scalar
        keep = []
        for labels, t in work:
            if t.ndim == 0:
                scalar *= complex(t)
            else:
                keep.append((labels, t))
        return keep

    work = sweep_scalars()
    while True:
        best = None
        for ia in range(len(work)):
            for ib in range(ia + 1, len(work)):
                la, ta = work[ia]
                lb, tb = work[ib]
                scored = _pair_score(la, ta.shape, lb, tb.shape, open_labels)
                if scored is None:
                    continue
                gain, shared = scored
                tie = min(min(la), min(lb))
                if best is None or (-gain, tie, ia, ib) < best[0]:
                    best = ((-gain, tie, ia, ib), shared)
        if best is None:
            break
        (_, _, ia, ib), shared = best
        la, ta = work[ia]
        lb, tb = work[ib]
        ax_a = tuple(la.index(s) for s in sorted(shared))
        ax_b = tuple(lb.index(s) for s in sorted(shared))
        tc = flops.tdot(ta, tb, axes=(ax_a, ax_b))
        lc = tuple(l for l in la if l not in shared) + \
            tuple(l for l in lb if l not in shared)
        work = [w for i, w in enumerate(work) if i not in (ia, ib)]
        work.append((lc, tc))
        work = sweep_scalars()

    if not open_labels:
        if work:
            raise ValueError("network left unconnected non-scalar pieces")
        return scalar, None
    tens = None
    labels = ()
    for l, t in work:
        tens = t if tens is None else np.multiply.outer(tens, t)
        labels = labels + l
    if set(labels) != set(open_labels):
        raise ValueError("open legs do not match the requested labels")
    perm = [labels.index(s) for s in sorted(open_labels)]
    return scalar, np.transpose(tens, perm)


# ---------------------------------------------------------------------------
# 1D kernels

def inner_mixed_obc(x: MixedTerm, y: MixedTerm) -> complex:
    """<y, x> for open-boundary terms: left-to-right partial contraction,
    always folding the shorter leading block into the longer one's prefix.
    Costs at most 2^r per step over (k + m) steps, r the widest block."""
    if x.p != y.p:
        raise ValueError("terms must cover the same chain")
    if x.wraps() or y.wraps():
        raise ValueError("open-boundary kernel requires offset-free blockings")
    acc = complex(np.conj(y.weight) * x.weight)
    ix = iy = 0
    cx = x.factors[0].copy()
    ex = x.blocking.widths[0]
    cy = y.factors[0].conj()
    ey = y.blocking.widths[0]
    pos = 0
    p = x.p
    while True:
        if ex == ey:
            flops.add(cx.size)
            acc *= complex(cy @ cx)
            pos = ex
            if pos == p:
                return acc
            ix += 1
            iy += 1
            cx = x.factors[ix].copy()
            ex = pos + x.blocking.widths[ix]
            cy = y.factors[iy].conj()
            ey = pos + y.blocking.widths[iy]
        elif ex < ey:
            head = 2 ** (ex - pos)
            mat = cy.reshape(head, -1, order="F")
            flops.add(mat.size)
            cy = cx @ mat
            pos = ex
            ix += 1
            cx = x.factors[ix].copy()
            ex = pos + x.blocking.widths[ix]
        else:
            head = 2 ** (ey - pos)
            mat = cx.reshape(head, -1, order="F")
            flops.add(mat.size)
            cx = cy @ mat
            pos = ey
            iy += 1
            cy = y.factors[iy].conj()
            ey = pos + y.blocking.widths[iy]


def inner_mixed_pbc(x: MixedTerm, y: MixedTerm) -> complex:
    """<y, x> for cyclic blockings (at most one seam-crossing block each):
    stepwise contraction choosing pairs whose summed indices outweigh the
    leftover ones, keeping each step below 2^{3r/2} operations."""
    if x.p != y.p:
        raise ValueError("terms must cover the same chain")
    pieces = []
    for sites, t in _term_pieces(x):
        pieces.append((sites, t))
    for sites, t in _term_pieces(y):
        pieces.append((sites, t.conj()))
    scalar, _ = _contract_network(pieces)
    return complex(np.conj(y.weight) * x.weight * scalar)


def inner_pattern_2d(x: PatternedTerm2D, y: PatternedTerm2D) -> complex:
    """<y, x> for two patterned terms: repeatedly contract superblocks that
    share a subblock index, each step emitting a block of the two leftover
    indices at cost (2^r)^3."""
    if (x.sb_rows, x.sb_cols, x.r_sites) != (y.sb_rows, y.sb_cols, y.r_sites):
        raise ValueError("patterned terms must share the subblock lattice")
    size = 2**x.r_sites
    pieces = []
    for term, conj in ((x, False), (y, True)):
        for (a, b), f in zip(term.superblocks(), term.factors):
            t = f.reshape(size, size, order="F")
            pieces.append(((("sb", a), ("sb", b)), t.conj() if conj else t))
    scalar, _ = _contract_network(pieces)
    return complex(np.conj(y.weight) * x.weight * scalar)


def _pair_kernel(geometry: str):
    if geometry == "1d-open":
        return inner_mixed_obc
    if geometry == "1d-periodic":
        return inner_mixed_pbc
    return inner_pattern_2d


def inner_sum(x: MixedTermSum, y: MixedTermSum) -> complex:
    """<y, x> over all term pairs; bilinear in the term weights."""
    if x.p != y.p or x.geometry != y.geometry:
        raise ValueError("sums must share sites and geometry")
    kernel = _pair_kernel(x.geometry)
    total = 0.0 + 0.0j
    for tx in x.terms:
        for ty in y.terms:
            total += kernel(tx, ty)
    return total


# ---------------------------------------------------------------------------
# Hamiltonian expectation

def _apply_term_ops(h: SpinHamiltonian, k: int, term):
    """New term with the k-th Hamiltonian term's site operators absorbed into
    the block vectors (coefficient excluded)."""
    hterm = h.terms[k]
    if isinstance(term, PatternedTerm2D):
        sites_list = term.block_sites_list()
    else:
        sites_list = [term.block_sites(j) for j in range(term.blocking.q)]
    new_factors = []
    for sites, f in zip(sites_list, term.factors):
        t = f.reshape((2,) * len(sites), order="F")
        for r, s in enumerate(sites):
            op = hterm.factors[s]
            if op.is_identity:
                continue
            t = np.moveaxis(np.tensordot(op.matrix, t, axes=(1, r)), 0, r)
            flops.add(2 * t.size)
        new_factors.append(t.reshape(-1, order="F"))
    if isinstance(term, PatternedTerm2D):
        return PatternedTerm2D(term.sb_rows, term.sb_cols, term.r_sites,
                               term.pattern, new_factors, term.weight)
    return MixedTerm(term.blocking, new_factors, term.weight, term.offset)


def expectation_mixed(h: SpinHamiltonian, x: MixedTermSum) -> float:
    """<x, H x>: each Hamiltonian term is absorbed site-locally into the ket
    side (regrouped per that addend's blocking), then summed pairwise."""
    if h.p != x.p:
        raise ValueError("Hamiltonian and state sizes differ")
    kernel = _pair_kernel(x.geometry)
    total = 0.0 + 0.0j
    for k, hterm in enumerate(h.terms):
        for ket in x.terms:
            applied = _apply_term_ops(h, k, ket)
            for bra in x.terms:
                total += hterm.coefficient * kernel(applied, bra)
    if abs(total.imag) > DEFAULT_TOLS.rayleigh_imag * max(1.0, abs(total.real)):
        raise ValueError(f"expectation has imaginary residue {total.imag:.3e}")
    return float(total.real)


# ---------------------------------------------------------------------------
# block chains with different blockings

def _split_site_tensor(site: np.ndarray, sites: tuple, bond_in, bond_out):
    """Labelled bit-level view of one chain site tensor."""
    dl, d, dr = site.shape
    t = len(sites)
    arr = site.reshape((dl,) + (2,) * t + (dr,))
    # C-order split leaves bit r of the physical index at axis t - r
    labels = (bond_in,) + tuple(sites[t - 1 - r] for r in range(t)) + (bond_out,)
    return arr, labels


def inner_block_mps_mixed(x: MpsState, y: MpsState) -> complex:
    """<y, x> for block chains whose blockings may differ: the zipper sweeps
    both chains, at every step contracting the physical sites shared by the
    current leading blocks with the ancilla legs appended to the open ones."""
    if x.p != y.p or x.boundary != y.boundary:
        raise ValueError("chains must share length and boundary")
    p = x.p
    # wrap legs keep the same sweep valid for both boundaries
    dy0, dx0 = y.sites[0].shape[0], x.sites[0].shape[0]
    env = np.einsum("ac,bd->abcd", np.eye(dy0), np.eye(dx0)).astype(complex)
    env_labels = [("wy",), ("wx",), ("by", 0), ("bx", 0)]
    cuts_x, cuts_y = x.blocking.cuts, y.blocking.cuts
    jx = jy = 0
    done_x = done_y = 0
    while jx < x.q or jy < y.q:
        take_y = jy < y.q and (jx >= x.q or cuts_y[jy + 1] <= cuts_x[jx + 1])
        if take_y:
            sites = tuple(range(cuts_y[jy], cuts_y[jy + 1]))
            arr, labels = _split_site_tensor(
                y.sites[jy].conj(), tuple(("s", s) for s in sites),
                ("by", jy), ("by", jy + 1))
            jy += 1
        else:
            sites = tuple(range(cuts_x[jx], cuts_x[jx + 1]))
            arr, labels = _split_site_tensor(
                x.sites[jx], tuple(("s", s) for s in sites),
                ("bx", jx), ("bx", jx + 1))
            jx += 1
        shared = [l for l in labels if l in env_labels]
        ax_e = tuple(env_labels.index(l) for l in shared)
        ax_a = tuple(labels.index(l) for l in shared)
        env = flops.tdot(env, arr, axes=(ax_e, ax_a))
        env_labels = [l for l in env_labels if l not in shared] + \
            [l for l in labels if l not in shared]
    # close: trace the wrap legs against the final bonds
    iy = env_labels.index(("wy",))
    ix = env_labels.index(("wx",))
    fy = env_labels.index(("by", y.q))
    fx = env_labels.index(("bx", x.q))
    flops.add(env.shape[iy] * env.shape[ix])
    subscript = "".join(
        {iy: "a", ix: "b", fy: "a", fx: "b"}[i] for i in range(env.ndim)
    )
    return complex(np.einsum(subscript + "->", env))


# ---------------------------------------------------------------------------
# greedy ground-state search over a schedule of blockings

class _MixedCrossTerms:
    """Cross contractions of the working addend against frozen addends with
    arbitrary (possibly different) open-boundary blockings, via labelled
    piece networks with the working block's sites left open."""

    def __init__(self, h: SpinHamiltonian, blocked, frozen_terms):
        self.h = h
        self.blocked = blocked
        self.blocking = blocked.blocking
        self.frozen = [
            MixedTerm(b, [c.copy() for c in cols], w)
            for b, cols, w in frozen_terms
        ]

    def _as_sum(self):
        return MixedTermSum(self.h.p, self.frozen, "1d-open")

    def frozen_energy_numerator(self) -> float:
        return expectation_mixed(self.h, self._as_sum())

    def frozen_norm_sq(self) -> float:
        return float(inner_sum(self._as_sum(), self._as_sum()).real)

    def _open_contract(self, x_cols, i, apply_k=None):
        cuts = self.blocking.cuts
        open_sites = tuple(("s", s) for s in range(cuts[i], cuts[i + 1]))
        total = np.zeros(2 ** self.blocking.widths[i], dtype=complex)
        for term in self.frozen:
            ket = term if apply_k is None else _apply_term_ops(self.h, apply_k, term)
            pieces = []
            for sites, t in _term_pieces(ket):
                pieces.append((tuple(("s", s) for s in sites), t))
            for j in range(self.blocking.q):
                if j == i:
                    continue
                sites = tuple(("s", s) for s in
                              range(cuts[j], cuts[j + 1]))
                pieces.append(
                    (sites, x_cols[j].conj().reshape((2,) * len(sites), order="F"))
                )
            scalar, tens = _contract_network(pieces, open_labels=open_sites)
            total += term.weight * scalar * tens.reshape(-1, order="F")
        return total

    def numerator_vector(self, x_cols, i):
        dim = 2 ** self.blocking.widths[i]
        u = np.zeros(dim, dtype=complex)
        for k, hterm in enumerate(self.h.terms):
            u += hterm.coefficient * self._open_contract(x_cols, i, apply_k=k)
        return u

    def denominator_vector(self, x_cols, i):
        return self._open_contract(x_cols, i, apply_k=None)


def ground_state_mixed_greedy(h: SpinHamiltonian, schedule, d_per_blocking,
                              sweeps: int = 30, seed: int = 0,
                              tols: Tolerances = DEFAULT_TOLS) -> tuple:
    """Greedy addend-by-addend minimization where the n-th group of addends
    uses blocking schedule[n]; d_per_blocking addends are optimized per
    schedule entry (a list gives a per-entry count).  Cross terms against
    frozen differently-blocked addends run through the mixed kernels.
    Returns (trace, MixedTermSum)."""
    schedule = [b if isinstance(b, Blocking) else Blocking(tuple(b))
                for b in schedule]
    if isinstance(d_per_blocking, int):
        counts = [d_per_blocking] * len(schedule)
    else:
        counts = list(d_per_blocking)
    if len(counts) != len(schedule) or any(c < 1 for c in counts):
        raise ValueError("need one positive addend count per scheduled blocking")
    addend_blockings = [b for b, c in zip(schedule, counts) for _ in range(c)]

    def factory(blocked, frozen_terms):
        if all(b == blocked.blocking for b, _, _ in frozen_terms):
            return _aligned_cross_factory(blocked, frozen_terms)
        return _MixedCrossTerms(h, blocked, frozen_terms)

    trace, frozen_terms = _greedy_core(h, addend_blockings, sweeps, seed,
                                       tols, factory)
    terms = [MixedTerm(b, cols, w) for b, cols, w in frozen_terms]
    return trace, MixedTermSum(h.p, terms, "1d-open")


def fit_pattern_coefficients(target: DenseState, terms: list) -> np.ndarray:
    """Least-squares weights c minimizing || sum_t c_t * term_t - target ||
    for a fixed set of patterned factors.  A full alternating optimization
    over the four-pattern sum is intentionally not provided; only the
    contraction kernels and this linear fit are."""
    if not terms:
        raise ValueError("need at least one term")
    basis = np.stack([term_to_dense(t).vector for t in terms], axis=1)
    coeffs, *_ = np.linalg.lstsq(basis, target.vector, rcond=None)
    return coeffs
