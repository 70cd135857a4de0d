"""Blocked canonical (CP) ansatz: rank-D sums of block-vector tensor products.

A state over blocking widths (t_1, ..., t_q) stores one factor matrix per
mode, shape (2^{t_i}, D); addend l is the tensor product of the columns
factors[i][:, l], scaled by weights[l].  Contractions reduce to per-mode
Gram matrices, so an inner product costs q block dots per addend pair.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import flops
from .config import DEFAULT_TOLS, Tolerances
from .hamiltonian import Blocking, BlockedHamiltonian, SpinHamiltonian, regroup
from .mps import MpsState
from .records import TraceEntry
from .tensor import (
    DenseState,
    SingularDenominatorError,
    generalized_eig_min,
    generalized_eig_min_projected,
    hermitian_eig,
    outer_product,
    ravel,
)


@dataclass
class EffectiveCpProblem:
    """One assembled mode update: minimize v^H numerator v / v^H denominator v.

    Greedy stages produce the bordered (2^{t_i}+1) pencil with the working
    vector's last coordinate pinned; simultaneous updates produce the
    rank * 2^{t_i} grid pencil.  The numerator is Hermitian and the
    denominator Hermitian positive semidefinite by construction.
    """

    numerator: np.ndarray
    denominator: np.ndarray

    def hermiticity_defect(self) -> float:
        a, b = self.numerator, self.denominator
        return max(float(np.linalg.norm(a - a.conj().T)),
                   float(np.linalg.norm(b - b.conj().T)))

    def solve_min(self, tols: Tolerances = DEFAULT_TOLS):
        """Smallest eigenpair, projecting onto the nonsingular subspace of
        the denominator when it is not positive definite."""
        try:
            return generalized_eig_min(self.numerator, self.denominator, tols)
        except SingularDenominatorError:
            return generalized_eig_min_projected(self.numerator,
                                                 self.denominator, tols)


def bordered_problem(h_i: np.ndarray, u_i: np.ndarray, beta: float,
                     gamma: float, v_i: np.ndarray,
                     rho: float) -> EffectiveCpProblem:
    """Greedy-stage pencil over (x_i, 1): self block, cross vectors against
    the frozen addends, and the frozen addends' own scalars."""
    dim = h_i.shape[0]
    num = np.zeros((dim + 1, dim + 1), dtype=complex)
    num[:dim, :dim] = h_i
    num[:dim, dim] = u_i
    num[dim, :dim] = u_i.conj()
    num[dim, dim] = beta
    den = np.zeros((dim + 1, dim + 1), dtype=complex)
    den[:dim, :dim] = gamma * np.eye(dim)
    den[:dim, dim] = v_i
    den[dim, :dim] = v_i.conj()
    den[dim, dim] = rho
    return EffectiveCpProblem(num, den)


@dataclass
class BlockedCp:
    blocking: Blocking
    factors: list
    weights: np.ndarray = None

    def __post_init__(self):
        self.factors = [np.asarray(f, dtype=complex) for f in self.factors]
        if len(self.factors) != self.blocking.q:
            raise ValueError("one factor matrix per block required")
        ranks = {f.shape[1] for f in self.factors}
        if len(ranks) != 1:
            raise ValueError("all modes must hold the same number of addends")
        for f, w in zip(self.factors, self.blocking.widths):
            if f.shape[0] != 2**w:
                raise ValueError("factor length must match 2^width of its block")
        if self.weights is None:
            self.weights = np.ones(self.rank, dtype=complex)
        else:
            self.weights = np.asarray(self.weights, dtype=complex).reshape(-1)
            if self.weights.size != self.rank:
                raise ValueError("one weight per addend required")

    @property
    def rank(self) -> int:
        return self.factors[0].shape[1]

    @property
    def p(self) -> int:
        return self.blocking.p

    def copy(self) -> "BlockedCp":
        return BlockedCp(self.blocking, [f.copy() for f in self.factors],
                         self.weights.copy())

    def normalize_addends(self) -> "BlockedCp":
        """Scale every stored factor to unit norm, the weight carrying the
        magnitude.  The represented vector is unchanged."""
        out = self.copy()
        for i, f in enumerate(out.factors):
            norms = np.linalg.norm(f, axis=0)
            safe = np.where(norms > 0.0, norms, 1.0)
            out.factors[i] = f / safe
            out.weights = out.weights * norms.astype(complex)
        return out


def random_cp(blocking: Blocking, rank: int, seed: int = 0) -> BlockedCp:
    rng = np.random.default_rng(seed)
    factors = []
    for w in blocking.widths:
        f = rng.standard_normal((2**w, rank)) + 1j * rng.standard_normal((2**w, rank))
        factors.append(f / np.linalg.norm(f, axis=0))
    return BlockedCp(blocking, factors)


def to_dense(x: BlockedCp) -> DenseState:
    total = np.zeros(2**x.p, dtype=complex)
    for l in range(x.rank):
        cols = [x.factors[i][:, l] for i in range(x.blocking.q)]
        total += x.weights[l] * ravel(outer_product(cols))
    return DenseState(x.p, total)


# ---------------------------------------------------------------------------
# contractions

def _mode_grams(y: BlockedCp, x: BlockedCp) -> list:
    grams = []
    for fy, fx in zip(y.factors, x.factors):
        flops.add(fy.shape[0] * fy.shape[1] * fx.shape[1])
        grams.append(fy.conj().T @ fx)
    return grams


def _hadamard_skip(grams: list, skip: int | None = None) -> np.ndarray:
    prod = None
    for i, g in enumerate(grams):
        if i == skip:
            continue
        if prod is None:
            prod = g.copy()
        else:
            flops.add(g.size)
            prod = prod * g
    if prod is None:  # q == 1 and that mode skipped
        prod = np.ones((grams[0].shape), dtype=complex)
    return prod


def inner(y: BlockedCp, x: BlockedCp) -> complex:
    """<y, x>: per addend pair a product of q block dots."""
    if y.blocking != x.blocking:
        raise ValueError("inner product requires identical blockings")
    prod = _hadamard_skip(_mode_grams(y, x))
    flops.add(prod.size + prod.shape[0])
    return complex(y.weights.conj() @ prod @ x.weights)


def _op_factors(blocked: BlockedHamiltonian, k: int, x: BlockedCp) -> list:
    out = []
    for i, f in enumerate(x.factors):
        out.append(f if blocked.is_identity_block(k, i)
                   else blocked.apply_block(k, i, f))
    return out


def expectation_form(blocked: BlockedHamiltonian, y: BlockedCp,
                     x: BlockedCp) -> complex:
    """<y, H x> with the small block matrix-vector products done matrix-free."""
    if y.blocking != x.blocking or blocked.blocking != x.blocking:
        raise ValueError("expectation requires one common blocking")
    total = 0.0 + 0.0j
    for k in range(blocked.num_terms):
        opf = _op_factors(blocked, k, x)
        grams = []
        for fy, fz in zip(y.factors, opf):
            flops.add(fy.shape[0] * fy.shape[1] * fz.shape[1])
            grams.append(fy.conj().T @ fz)
        prod = _hadamard_skip(grams)
        flops.add(prod.size + prod.shape[0])
        total += blocked.coefficient(k) * (y.weights.conj() @ prod @ x.weights)
    return complex(total)


def apply_hamiltonian(h: SpinHamiltonian, x: BlockedCp) -> BlockedCp:
    """H x as a blocked CP state of rank M * D; coefficients are absorbed
    into the first mode."""
    blocked = regroup(h, x.blocking)
    new_factors = [[] for _ in range(x.blocking.q)]
    new_weights = []
    for k in range(blocked.num_terms):
        opf = _op_factors(blocked, k, x)
        for i in range(x.blocking.q):
            scaled = opf[i] * blocked.coefficient(k) if i == 0 else opf[i]
            new_factors[i].append(scaled)
        new_weights.append(x.weights)
    factors = [np.concatenate(cols, axis=1) for cols in new_factors]
    return BlockedCp(x.blocking, factors, np.concatenate(new_weights))


def cp_energy(h: SpinHamiltonian, x: BlockedCp) -> float:
    blocked = regroup(h, x.blocking)
    num = expectation_form(blocked, x, x)
    den = inner(x, x).real
    return float(num.real / den)


def as_diagonal_mps(x: BlockedCp) -> MpsState:
    """Equivalent open chain with diagonal matrices: addend l occupies the
    l-th diagonal entry of every bond; weights fold into the first site."""
    q, d_rank = x.blocking.q, x.rank
    sites = []
    for i, f in enumerate(x.factors):
        d = f.shape[0]
        first, last = i == 0, i == q - 1
        dl = 1 if first else d_rank
        dr = 1 if last else d_rank
        a = np.zeros((dl, d, dr), dtype=complex)
        for l in range(d_rank):
            col = f[:, l] * (x.weights[l] if first else 1.0)
            a[0 if first else l, :, 0 if last else l] += col
        sites.append(a)
    return MpsState("open", x.blocking, sites)


# ---------------------------------------------------------------------------
# spectral initialization

def spectral_init(h: SpinHamiltonian, blocking: Blocking, rank: int,
                  weighted: bool = True, drop_straddling: bool = True,
                  seed: int = 0) -> BlockedCp:
    """Mode-i factors from the lowest eigenvectors of the block-local part of
    the Hamiltonian.

    By default a term contributes to a block only if its whole support lies
    inside that block, and it enters with its coefficient.  weighted=False /
    drop_straddling=False select the raw variant that sums the plain block
    restrictions of every term.
    """
    blocked = regroup(h, blocking)
    cuts = blocking.cuts
    rng = np.random.default_rng(seed)
    factors = []
    for i, w in enumerate(blocking.widths):
        dim = 2**w
        local = np.zeros((dim, dim), dtype=complex)
        lo, hi = cuts[i], cuts[i + 1]
        for k, term in enumerate(h.terms):
            # a term is block-local when every non-identity factor lies inside;
            # skipping fully-elsewhere terms drops only an identity shift
            if drop_straddling and not all(lo <= s < hi for s in term.support()):
                continue
            local += (term.coefficient if weighted else 1.0) * blocked.block_matrix(k, i)
        _, vecs = hermitian_eig(local)
        take = min(rank, dim)
        cols = [vecs[:, j] for j in range(take)]
        while len(cols) < rank:
            extra = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
            cols.append(extra / np.linalg.norm(extra))
        factors.append(np.stack(cols, axis=1))
    return BlockedCp(blocking, factors)


# ---------------------------------------------------------------------------
# greedy one-addend-at-a-time ALS

def _rank_one_matrix(blocked, x_cols, i):
    """Effective matrix sum_k alpha_k (beta_k / gamma) H_i^(k) for the pure
    rank-one stage."""
    q = blocked.q
    gamma = 1.0
    for j in range(q):
        if j != i:
            gamma *= float(np.real(np.vdot(x_cols[j], x_cols[j])))
    dim = x_cols[i].shape[0]
    mat = np.zeros((dim, dim), dtype=complex)
    for k in range(blocked.num_terms):
        beta = 1.0
        for j in range(q):
            if j == i:
                continue
            hx = (x_cols[j] if blocked.is_identity_block(k, j)
                  else blocked.apply_block(k, j, x_cols[j]))
            beta *= float(np.real(np.vdot(x_cols[j], hx)))
        mat += (blocked.coefficient(k) * beta / gamma) * blocked.block_matrix(k, i)
    return mat


class _AlignedCrossTerms:
    """Cross contractions of the working addend against frozen addends that
    share its blocking.  The bordered problem adds x_i^H u_i + u_i^H x_i to
    the numerator and x_i^H v_i + v_i^H x_i to the denominator, so

        u_i = sum_k alpha_k sum_l w_l (prod_{j != i} x_j^H H_j^(k) y_j^(l))
                  * H_i^(k) y_i^(l)
        v_i = sum_l w_l (prod_{j != i} x_j^H y_j^(l)) * y_i^(l).
    """

    def __init__(self, blocked: BlockedHamiltonian, frozen: BlockedCp):
        self.blocked = blocked
        self.frozen = frozen

    def frozen_energy_numerator(self) -> float:
        return float(expectation_form(self.blocked, self.frozen, self.frozen).real)

    def frozen_norm_sq(self) -> float:
        return float(inner(self.frozen, self.frozen).real)

    def numerator_vector(self, x_cols, i):
        blocked, frozen = self.blocked, self.frozen
        dim = x_cols[i].shape[0]
        u = np.zeros(dim, dtype=complex)
        for k in range(blocked.num_terms):
            opf = _op_factors(blocked, k, frozen)
            coeffs = frozen.weights.copy()
            for j in range(blocked.q):
                if j == i:
                    continue
                coeffs = coeffs * (x_cols[j].conj() @ opf[j])
            u += blocked.coefficient(k) * (opf[i] @ coeffs)
        return u

    def denominator_vector(self, x_cols, i):
        frozen = self.frozen
        coeffs = frozen.weights.copy()
        for j in range(frozen.blocking.q):
            if j == i:
                continue
            coeffs = coeffs * (x_cols[j].conj() @ frozen.factors[j])
        return frozen.factors[i] @ coeffs


def _greedy_core(h: SpinHamiltonian, addend_blockings: list, inner_iters: int,
                 seed: int, tols: Tolerances, cross_factory,
                 first_stage_cols=None) -> tuple:
    """Shared greedy driver: stage d optimizes one new addend with blocking
    addend_blockings[d] against the frozen earlier ones."""
    rng = np.random.default_rng(seed)
    trace = []
    frozen_terms = []  # list of (blocking, cols, weight)
    max_restarts = 10

    for stage, blocking in enumerate(addend_blockings):
        blocked = regroup(h, blocking)
        q = blocking.q

        def fresh_cols():
            cols = []
            for w in blocking.widths:
                v = rng.standard_normal(2**w) + 1j * rng.standard_normal(2**w)
                cols.append(v / np.linalg.norm(v))
            return cols

        if stage == 0 and first_stage_cols is not None:
            x_cols = [c.copy() for c in first_stage_cols]
        else:
            x_cols = fresh_cols()
        cross = cross_factory(blocked, frozen_terms) if frozen_terms else None
        if cross is not None:
            beta = cross.frozen_energy_numerator()
            rho = cross.frozen_norm_sq()
        restarts = 0
        degenerate = False
        it = 0
        last_e = None
        while it < inner_iters:
            energy = None
            restarted = False
            for i in range(q):
                if cross is None:
                    mat = _rank_one_matrix(blocked, x_cols, i)
                    w, v = hermitian_eig(mat, tols)
                    energy = float(w[0])
                    x_cols[i] = v[:, 0]
                else:
                    gamma = 1.0
                    for j in range(q):
                        if j != i:
                            gamma *= float(np.real(np.vdot(x_cols[j], x_cols[j])))
                    dim = x_cols[i].shape[0]
                    h_i = np.zeros((dim, dim), dtype=complex)
                    for k in range(blocked.num_terms):
                        bk = 1.0
                        for j in range(q):
                            if j == i:
                                continue
                            hx = (x_cols[j] if blocked.is_identity_block(k, j)
                                  else blocked.apply_block(k, j, x_cols[j]))
                            bk *= float(np.real(np.vdot(x_cols[j], hx)))
                        h_i += blocked.coefficient(k) * bk * blocked.block_matrix(k, i)
                    u_i = cross.numerator_vector(x_cols, i)
                    v_i = cross.denominator_vector(x_cols, i)
                    problem = bordered_problem(h_i, u_i, beta, gamma, v_i, rho)
                    lam, vec = problem.solve_min(tols)
                    pin = vec[dim]
                    if abs(pin) < 1e-12 * np.linalg.norm(vec):
                        restarts += 1
                        if restarts > max_restarts:
                            # the frozen sum is already optimal within this
                            # dictionary: freeze a weight-zero addend
                            trace.append(TraceEntry(
                                stage + 1, it, i, float("nan"),
                                flops.current_total(), "degenerate-stage"))
                            degenerate = True
                            break
                        trace.append(TraceEntry(stage + 1, it, i, float("nan"),
                                                flops.current_total(), "restart"))
                        x_cols = fresh_cols()
                        restarted = True
                        break
                    energy = lam
                    x_cols[i] = vec[:dim] / pin
                if not restarted:
                    trace.append(TraceEntry(stage + 1, it, i, energy,
                                            flops.current_total()))
            if degenerate:
                break
            if restarted:
                it = 0
                last_e = None
                continue
            if last_e is not None and abs(energy - last_e) < tols.convergence:
                break
            last_e = energy
            it += 1
        # freeze the finished addend in normalized form
        norms = [np.linalg.norm(c) for c in x_cols]
        weight = 0.0j if degenerate else complex(np.prod(norms))
        cols = [c / n if n > 0 else c for c, n in zip(x_cols, norms)]
        frozen_terms.append((blocking, cols, weight))

    return trace, frozen_terms


def _aligned_cross_factory(blocked: BlockedHamiltonian, frozen_terms):
    frozen = BlockedCp(
        blocked.blocking,
        [np.stack([cols[i] for _, cols, _ in frozen_terms], axis=1)
         for i in range(blocked.q)],
        np.array([w for _, _, w in frozen_terms]),
    )
    return _AlignedCrossTerms(blocked, frozen)


def greedy_als(h: SpinHamiltonian, blocking: Blocking, d_final: int,
               inner_iters: int = 30, seed: int = 0,
               tols: Tolerances = DEFAULT_TOLS, init: str = "random") -> tuple:
    """Grow the rank one addend at a time: a pure rank-one stage first, then
    each new addend solved from the bordered generalized eigenproblem with
    all earlier addends frozen.  init='spectral' starts the first stage from
    the block-local ground states instead of a random draw, matching the
    simultaneous solver's default starting point.  Returns (trace, BlockedCp)."""
    if d_final < 1 or inner_iters < 1:
        raise ValueError("need d_final >= 1 and inner_iters >= 1")
    if init == "spectral":
        first = [f[:, 0] for f in spectral_init(h, blocking, 1).factors]
    elif init == "random":
        first = None
    else:
        raise ValueError(f"unknown init {init!r}")
    trace, frozen_terms = _greedy_core(
        h, [blocking] * d_final, inner_iters, seed, tols,
        _aligned_cross_factory, first_stage_cols=first
    )
    state = BlockedCp(
        blocking,
        [np.stack([cols[i] for _, cols, _ in frozen_terms], axis=1)
         for i in range(blocking.q)],
        np.array([w for _, _, w in frozen_terms]),
    )
    return trace, state


# ---------------------------------------------------------------------------
# simultaneous ALS (all addends of one mode at once)

def simultaneous_als(h: SpinHamiltonian, blocking: Blocking, rank: int,
                     sweeps: int = 50, seed: int | None = 0,
                     init: str | BlockedCp = "random",
                     tols: Tolerances = DEFAULT_TOLS) -> tuple:
    """Per mode, replace the whole slab of addend vectors by the minimizer of
    the rank*2^{t_i} generalized eigenproblem; addends are renormalized at
    the end of every sweep.  Returns (trace, BlockedCp)."""
    if rank < 1 or sweeps < 1:
        raise ValueError("need rank >= 1 and sweeps >= 1")
    blocked = regroup(h, blocking)
    if isinstance(init, BlockedCp):
        x = init.copy()
    elif init == "spectral":
        x = spectral_init(h, blocking, rank)
    elif init == "random":
        x = random_cp(blocking, rank, seed or 0)
    else:
        raise ValueError(f"unknown init {init!r}")
    q = blocking.q
    trace = []
    last_e = None
    for sweep in range(sweeps):
        energy = None
        for i in range(q):
            dim = 2 ** blocking.widths[i]
            ww = np.outer(x.weights.conj(), x.weights)
            a_mat = np.zeros((rank * dim,) * 2, dtype=complex)
            for k in range(blocked.num_terms):
                opf = _op_factors(blocked, k, x)
                coeff = ww.copy()
                for j in range(q):
                    if j == i:
                        continue
                    coeff = coeff * (x.factors[j].conj().T @ opf[j])
                a_mat += blocked.coefficient(k) * np.kron(coeff, blocked.block_matrix(k, i))
            gram = ww.copy()
            for j in range(q):
                if j == i:
                    continue
                gram = gram * (x.factors[j].conj().T @ x.factors[j])
            b_mat = np.kron(gram, np.eye(dim))
            lam, vec = EffectiveCpProblem(a_mat, b_mat).solve_min(tols)
            energy = lam
            x.factors[i] = vec.reshape(rank, dim).T
            x.weights = np.ones(rank, dtype=complex)
            trace.append(TraceEntry(0, sweep, i, energy, flops.current_total()))
        x = x.normalize_addends()
        if last_e is not None and abs(energy - last_e) < tols.convergence:
            break
        last_e = energy
    return trace, x
