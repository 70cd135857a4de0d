"""Blocked CP representation, contractions, greedy and simultaneous ALS."""

import numpy as np
import pytest

from tnsolve import flops
from tnsolve.hamiltonian import (
    Blocking,
    KroneckerTerm,
    OP_I,
    SpinHamiltonian,
    build_ising,
    materialize_dense,
    regroup,
)
from tnsolve.mps import to_dense as mps_to_dense
from tnsolve.oracle import ground_state_dense, rayleigh
from tnsolve.parafac import (
    BlockedCp,
    as_diagonal_mps,
    apply_hamiltonian,
    cp_energy,
    expectation_form,
    greedy_als,
    inner,
    random_cp,
    simultaneous_als,
    spectral_init,
    to_dense,
)


def crandn(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


# ---------------------------------------------------------------------------
# representation

def test_to_dense_rank_one_ones():
    b = Blocking((2, 2))
    x = BlockedCp(b, [np.ones((4, 1)), np.ones((4, 1))])
    assert np.allclose(to_dense(x).vector, np.ones(16))


def test_to_dense_rank_two_known_sum():
    b = Blocking((1, 1))
    e0, e1 = np.eye(2)[:, :1], np.eye(2)[:, 1:]
    x = BlockedCp(b, [np.hstack([e0, e1]), np.hstack([e0, e1])])
    # e0 (x) e0 + e1 (x) e1 -> entries at indices 0 and 3
    assert np.allclose(to_dense(x).vector, [1.0, 0.0, 0.0, 1.0])


def test_to_dense_triple_loop_oracle():
    rng = np.random.default_rng(0)
    b = Blocking((1, 2, 1))
    x = BlockedCp(b, [crandn(rng, 2, 3), crandn(rng, 4, 3), crandn(rng, 2, 3)],
                  crandn(rng, 3))
    dense = to_dense(x).vector
    for i0 in range(2):
        for i1 in range(4):
            for i2 in range(2):
                expect = sum(
                    x.weights[l] * x.factors[0][i0, l] * x.factors[1][i1, l]
                    * x.factors[2][i2, l]
                    for l in range(3)
                )
                pos = i0 + 2 * i1 + 8 * i2
                assert dense[pos] == pytest.approx(expect, abs=1e-13)


def test_normalize_addends_preserves_dense():
    x = random_cp(Blocking((2, 3)), 3, seed=1)
    x.factors[0] *= 3.7
    x.weights = x.weights * (0.2 + 0.9j)
    before = to_dense(x).vector
    y = x.normalize_addends()
    for f in y.factors:
        assert np.allclose(np.linalg.norm(f, axis=0), 1.0)
    assert np.allclose(to_dense(y).vector, before, atol=1e-13 * np.linalg.norm(before))


# ---------------------------------------------------------------------------
# inner products

def test_inner_orthogonal_first_mode():
    b = Blocking((1, 1))
    x = BlockedCp(b, [np.eye(2)[:, :1], np.ones((2, 1))])
    y = BlockedCp(b, [np.eye(2)[:, 1:], np.ones((2, 1))])
    assert inner(y, x) == pytest.approx(0.0)


def test_inner_self_nonnegative():
    x = random_cp(Blocking((2, 2, 2)), 4, seed=2)
    val = inner(x, x)
    assert val.imag == pytest.approx(0.0, abs=1e-13)
    assert val.real >= 0.0


def test_inner_matches_dense_conj_dot():
    rng = np.random.default_rng(3)
    b = Blocking((5, 5))
    x = BlockedCp(b, [crandn(rng, 32, 4), crandn(rng, 32, 4)], crandn(rng, 4))
    y = BlockedCp(b, [crandn(rng, 32, 4), crandn(rng, 32, 4)], crandn(rng, 4))
    expect = np.vdot(to_dense(y).vector, to_dense(x).vector)
    assert inner(y, x) == pytest.approx(expect, abs=1e-12 * max(1.0, abs(expect)))


def test_inner_blocking_mismatch():
    with pytest.raises(ValueError):
        inner(random_cp(Blocking((2, 2)), 2), random_cp(Blocking((1, 3)), 2))


def test_inner_cost_per_addend_pair():
    p, q, rank = 10, 2, 4
    x = random_cp(Blocking((5, 5)), rank, seed=4)
    y = random_cp(Blocking((5, 5)), rank, seed=5)
    with flops.tally() as fc:
        inner(y, x)
    per_pair = fc.total / rank**2
    assert per_pair <= q * (2 * 2 ** (p // q) + 1)


# ---------------------------------------------------------------------------
# expectation and Hamiltonian application

def test_expectation_identity_hamiltonian_reduces_to_inner():
    h = SpinHamiltonian(4, [KroneckerTerm(1.0, (OP_I,) * 4)])
    b = Blocking((2, 2))
    x = random_cp(b, 2, seed=6)
    y = random_cp(b, 2, seed=7)
    g = regroup(h, b)
    assert expectation_form(g, y, x) == pytest.approx(inner(y, x), abs=1e-13)


def test_expectation_matches_dense():
    rng = np.random.default_rng(8)
    h = build_ising(6, 1.0, "open")
    b = Blocking((3, 3))
    x = BlockedCp(b, [crandn(rng, 8, 2), crandn(rng, 8, 2)], crandn(rng, 2))
    y = BlockedCp(b, [crandn(rng, 8, 2), crandn(rng, 8, 2)], crandn(rng, 2))
    g = regroup(h, b)
    expect = np.vdot(to_dense(y).vector, materialize_dense(h) @ to_dense(x).vector)
    assert expectation_form(g, y, x) == pytest.approx(expect, abs=1e-11 * max(1.0, abs(expect)))


def test_expectation_self_real():
    h = build_ising(6, 0.8, "open")
    b = Blocking((2, 2, 2))
    x = random_cp(b, 3, seed=9)
    g = regroup(h, b)
    assert expectation_form(g, x, x).imag == pytest.approx(0.0, abs=1e-11)


def test_expectation_cost_bound():
    p, q, rank = 10, 2, 3
    h = build_ising(p, 1.0, "open")
    b = Blocking((5, 5))
    g = regroup(h, b)
    x = random_cp(b, rank, seed=10)
    with flops.tally() as fc:
        expectation_form(g, x, x)
    bound = 2 * h.num_terms * rank**2 * q * (3 * 2 ** (p // q) + 1)
    assert fc.total <= 4 * bound


def test_apply_hamiltonian_identity():
    h = SpinHamiltonian(4, [KroneckerTerm(1.0, (OP_I,) * 4)])
    x = random_cp(Blocking((2, 2)), 2, seed=11)
    y = apply_hamiltonian(h, x)
    assert np.allclose(to_dense(y).vector, to_dense(x).vector, atol=1e-13)


def test_apply_hamiltonian_dense_and_rank():
    h = build_ising(6, 0.5, "open")
    x = random_cp(Blocking((3, 3)), 2, seed=12)
    y = apply_hamiltonian(h, x)
    assert y.rank == h.num_terms * x.rank
    expect = materialize_dense(h) @ to_dense(x).vector
    assert np.linalg.norm(to_dense(y).vector - expect) <= 1e-12 * max(1.0, np.linalg.norm(expect))


# ---------------------------------------------------------------------------
# structural identity: CP as diagonal-matrix chain

def test_cp_as_diagonal_mps_dense_equal():
    for widths, rank, seed in [((1, 1, 1, 1), 3, 13), ((2, 3), 2, 14), ((4,), 2, 15)]:
        x = random_cp(Blocking(widths), rank, seed=seed)
        x.weights = x.weights * (1.3 - 0.4j)
        chain = as_diagonal_mps(x)
        assert np.allclose(
            mps_to_dense(chain).vector, to_dense(x).vector, atol=1e-13
        )


# ---------------------------------------------------------------------------
# spectral initialization

def test_spectral_init_rank_one_block_ground_states():
    h = build_ising(6, 1.0, "open")
    b = Blocking((3, 3))
    x = spectral_init(h, b, 1)
    g = regroup(h, b)
    for i in range(2):
        local = np.zeros((8, 8), dtype=complex)
        for k, term in enumerate(h.terms):
            sup = term.support()
            if sup and all(3 * i <= s < 3 * (i + 1) for s in sup):
                local += term.coefficient * g.block_matrix(k, i)
        w = np.linalg.eigvalsh(local)
        val = np.vdot(x.factors[i][:, 0], local @ x.factors[i][:, 0]).real
        assert val == pytest.approx(w[0], abs=1e-10)


def test_spectral_init_full_rank():
    h = build_ising(10, 1.0, "open")
    x = spectral_init(h, Blocking((5, 5)), 4)
    for f in x.factors:
        assert np.linalg.matrix_rank(f) == 4


def test_spectral_init_beats_random_median():
    h = build_ising(10, 1.0, "open")
    b = Blocking((5, 5))
    e_spec = cp_energy(h, spectral_init(h, b, 2))
    rand_energies = [cp_energy(h, random_cp(b, 2, seed=s)) for s in range(20)]
    assert e_spec <= np.median(rand_energies)


def test_spectral_init_pads_beyond_capacity():
    h = build_ising(4, 1.0, "open")
    x = spectral_init(h, Blocking((1, 1, 1, 1)), 3)
    for f in x.factors:
        assert f.shape == (2, 3)
        assert np.all(np.isfinite(f))


# ---------------------------------------------------------------------------
# greedy ALS

def test_greedy_rank_one_zero_field():
    for widths in [(2, 2), (1, 1, 1, 1), (3, 1)]:
        h = build_ising(4, 0.0, "open")
        trace, state = greedy_als(h, Blocking(widths), 1, inner_iters=10, seed=0)
        assert trace[-1].energy == pytest.approx(-3.0, abs=1e-9)


def test_greedy_energy_never_below_oracle():
    h = build_ising(8, 1.0, "open")
    e0, _ = ground_state_dense(h)
    trace, state = greedy_als(h, Blocking((4, 4)), 3, inner_iters=15, seed=1)
    for entry in trace:
        if not np.isnan(entry.energy):
            assert entry.energy >= e0 - 1e-10
    assert cp_energy(h, state) == pytest.approx(trace[-1].energy, abs=1e-9)


def test_greedy_stagewise_improvement():
    h = build_ising(8, 1.0, "open")
    trace, _ = greedy_als(h, Blocking((4, 4)), 3, inner_iters=20, seed=2)
    stage_last = {}
    for t in trace:
        if not np.isnan(t.energy):
            stage_last[t.stage] = t.energy
    assert stage_last[2] <= stage_last[1] + 1e-10
    assert stage_last[3] <= stage_last[2] + 1e-10


def test_greedy_error_weakly_decreasing_in_rank():
    h = build_ising(8, 1.0, "open")
    e0, _ = ground_state_dense(h)
    errs = []
    for d in (1, 2, 3):
        trace, _ = greedy_als(h, Blocking((4, 4)), d, inner_iters=25, seed=4)
        errs.append(abs(trace[-1].energy - e0))
    assert all(e2 <= e1 + 1e-10 for e1, e2 in zip(errs, errs[1:]))


def test_greedy_spectral_first_stage():
    h = build_ising(8, 1.0, "open")
    t1, _ = greedy_als(h, Blocking((4, 4)), 1, inner_iters=20, seed=0,
                       init="spectral")
    t2, _ = simultaneous_als(h, Blocking((4, 4)), 1, sweeps=20, init="spectral")
    assert abs(t1[-1].energy - t2[-1].energy) <= 1e-12


def test_greedy_trace_energy_is_true_rayleigh():
    h = build_ising(6, 1.0, "open")
    trace, state = greedy_als(h, Blocking((3, 3)), 2, inner_iters=12, seed=3)
    assert trace[-1].energy == pytest.approx(
        rayleigh(h, to_dense(state)), abs=1e-10
    )


# ---------------------------------------------------------------------------
# simultaneous ALS

def test_simultaneous_full_capacity_single_block():
    h = build_ising(4, 1.0, "open")
    e0, _ = ground_state_dense(h)
    trace, state = simultaneous_als(h, Blocking((4,)), 1, sweeps=1, seed=0)
    assert abs(trace[0].energy - e0) <= 1e-10


def test_simultaneous_capacity_rank_two_projected():
    # rank-1 Gram is singular at rank 2 with q = 1; the projected path
    # still reaches the exact optimum in one update
    h = build_ising(4, 1.0, "open")
    e0, _ = ground_state_dense(h)
    trace, _ = simultaneous_als(h, Blocking((4,)), 2, sweeps=1, seed=1)
    assert abs(trace[0].energy - e0) <= 1e-10


def test_simultaneous_trace_monotone_and_consistent():
    h = build_ising(10, 1.0, "open")
    trace, state = simultaneous_als(h, Blocking((5, 5)), 3, sweeps=25,
                                    init="spectral")
    energies = [t.energy for t in trace]
    assert all(e2 <= e1 + 1e-10 for e1, e2 in zip(energies, energies[1:]))
    assert energies[-1] == pytest.approx(rayleigh(h, to_dense(state)), abs=1e-10)
    assert energies[-1] == pytest.approx(cp_energy(h, state), abs=1e-10)


def test_simultaneous_not_worse_than_greedy_small():
    h = build_ising(8, 1.0, "open")
    b = Blocking((4, 4))
    g_trace, _ = greedy_als(h, b, 2, inner_iters=40, seed=0)
    s_trace, _ = simultaneous_als(h, b, 2, sweeps=40, init="spectral")
    assert s_trace[-1].energy <= g_trace[-1].energy + 1e-12


def test_effective_problem_hermitian_and_psd():
    from tnsolve.parafac import EffectiveCpProblem, bordered_problem

    rng = np.random.default_rng(40)
    h_i = crandn(rng, 8, 8)
    h_i = h_i + h_i.conj().T
    u_i, v_i = crandn(rng, 8), crandn(rng, 8)
    prob = bordered_problem(h_i, u_i, beta=2.5, gamma=1.5, v_i=0.1 * v_i, rho=3.0)
    assert prob.hermiticity_defect() <= 1e-12
    bw = np.linalg.eigvalsh(prob.denominator)
    assert bw[0] >= -1e-12
    lam, vec = prob.solve_min()
    resid = prob.numerator @ vec - lam * (prob.denominator @ vec)
    assert np.linalg.norm(resid) <= 1e-9 * np.linalg.norm(prob.numerator)
    # the projected path engages on a singular denominator
    sing = EffectiveCpProblem(np.diag([2.0, 1.0]), np.diag([1.0, 0.0]))
    lam, vec = sing.solve_min()
    assert lam == pytest.approx(2.0)


def test_simultaneous_rejects_bad_args():
    h = build_ising(4, 0.0)
    with pytest.raises(ValueError):
        simultaneous_als(h, Blocking((2, 2)), 0)
    with pytest.raises(ValueError):
        simultaneous_als(h, Blocking((2, 2)), 1, init="mystery")
