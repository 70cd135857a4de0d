"""Model builders, dense materialization, matrix-free apply, regrouping."""

import numpy as np
import pytest

from tnsolve.hamiltonian import (
    Blocking,
    KroneckerTerm,
    OP_I,
    OP_Z,
    SpinHamiltonian,
    build_heisenberg_xy,
    build_ising,
    build_ising_2d,
    apply,
    materialize_dense,
    regroup,
)
from tnsolve.tensor import DenseState, DimensionCapError, kron_first_fastest


def crandn(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def compositions(p):
    """All ordered partitions of p."""
    if p == 0:
        yield ()
        return
    for first in range(1, p + 1):
        for rest in compositions(p - first):
            yield (first,) + rest


# ---------------------------------------------------------------------------
# builders

def test_ising_two_site_dense():
    h = build_ising(2, 0.0, "open")
    assert np.allclose(materialize_dense(h), np.diag([1.0, -1.0, -1.0, 1.0]))


def test_ising_three_site_ground_energy():
    h = build_ising(3, 0.0, "open")
    w = np.linalg.eigvalsh(materialize_dense(h))
    assert w[0] == pytest.approx(-2.0)


def test_ising_term_count():
    assert build_ising(5, 0.3, "open").num_terms == 2 * 5 - 1
    assert build_ising(5, 0.3, "periodic").num_terms == 2 * 5


def test_ising_dense_matches_eigensolve():
    h = build_ising(4, 1.0, "open")
    m = materialize_dense(h)
    w = np.linalg.eigvalsh(m)
    assert m.shape == (16, 16)
    assert np.isfinite(w[0])


def test_heisenberg_xx_only():
    h = build_heisenberg_xy(2, 1.0, 0.0, 0.0, "open")
    m = materialize_dense(h)
    px = np.array([[0, 1], [1, 0]], dtype=complex)
    assert np.allclose(m, np.kron(px, px))
    assert np.allclose(np.linalg.eigvalsh(m), [-1, -1, 1, 1])


def test_heisenberg_xx_yy_spectrum():
    h = build_heisenberg_xy(2, 1.0, 1.0, 0.0, "open")
    w = np.linalg.eigvalsh(materialize_dense(h))
    assert np.allclose(w, [-2.0, 0.0, 0.0, 2.0], atol=1e-12)


def test_heisenberg_hermitian():
    h = build_heisenberg_xy(3, 1.0, 1.0, 0.5, "open")
    m = materialize_dense(h)
    assert np.linalg.norm(m - m.conj().T) == 0.0


def test_builders_hermitian_everywhere():
    for h in [
        build_ising(4, 0.7, "periodic"),
        build_heisenberg_xy(3, 0.4, 1.2, 0.1, "periodic"),
        build_ising_2d(2, 3, 0.9, "open"),
        build_ising_2d(2, 2, 0.5, "periodic"),
    ]:
        m = materialize_dense(h)
        assert np.linalg.norm(m - m.conj().T) <= 1e-14 * max(1.0, np.linalg.norm(m))


def test_ising_2d_degenerate_row_equals_chain():
    h1 = build_ising_2d(1, 5, 0.8, "open")
    h2 = build_ising(5, 0.8, "open")
    assert np.allclose(materialize_dense(h1), materialize_dense(h2))


def test_ising_2d_2x2_ground_energy():
    h = build_ising_2d(2, 2, 0.0, "open")
    zz_terms = [t for t in h.terms if len(t.support()) == 2]
    assert len(zz_terms) == 4
    w = np.linalg.eigvalsh(materialize_dense(h))
    assert w[0] == pytest.approx(-4.0)


def test_ising_2d_term_count():
    h = build_ising_2d(3, 3, 1.0, "open")
    assert h.num_terms == 12 + 9


def test_builder_preconditions():
    with pytest.raises(ValueError):
        build_ising(1, 0.0)
    with pytest.raises(ValueError):
        build_heisenberg_xy(1, 1.0, 1.0, 0.0)
    with pytest.raises(ValueError):
        build_ising_2d(1, 1, 0.0)
    with pytest.raises(ValueError):
        build_ising(3, 0.0, "twisted")


# ---------------------------------------------------------------------------
# materialize / apply

def test_materialize_identity_term():
    h = SpinHamiltonian(3, [KroneckerTerm(1.0, (OP_I, OP_I, OP_I))])
    assert np.allclose(materialize_dense(h), np.eye(8))


def test_materialize_cap():
    h = build_ising(4, 0.0)
    with pytest.raises(DimensionCapError):
        materialize_dense(h, cap=3)


def test_apply_identity_hamiltonian():
    rng = np.random.default_rng(0)
    h = SpinHamiltonian(3, [KroneckerTerm(1.0, (OP_I, OP_I, OP_I))])
    x = DenseState(3, crandn(rng, 8))
    assert np.allclose(apply(h, x).vector, x.vector)


def test_apply_zz_on_basis_state():
    h = SpinHamiltonian(2, [KroneckerTerm(1.0, (OP_Z, OP_Z))])
    e0 = DenseState(2, np.eye(4)[:, 0])
    assert np.allclose(apply(h, e0).vector, e0.vector)


def test_apply_matches_dense_multiply():
    rng = np.random.default_rng(1)
    h = build_ising(6, 0.7, "open")
    m = materialize_dense(h)
    x = DenseState(6, crandn(rng, 64))
    assert np.linalg.norm(apply(h, x).vector - m @ x.vector) <= 1e-12 * np.linalg.norm(m @ x.vector)


@pytest.mark.parametrize("p,boundary", [(4, "open"), (7, "periodic"), (10, "open")])
def test_apply_matches_dense_random_models(p, boundary):
    rng = np.random.default_rng(p)
    h = build_heisenberg_xy(p, 0.8, -0.3, 0.6, boundary)
    m = materialize_dense(h)
    for _ in range(3):
        x = DenseState(p, crandn(rng, 2**p))
        ref = m @ x.vector
        assert np.linalg.norm(apply(h, x).vector - ref) <= 1e-12 * max(1.0, np.linalg.norm(ref))


def test_apply_size_mismatch():
    h = build_ising(3, 0.0)
    with pytest.raises(ValueError):
        apply(h, DenseState(4, np.zeros(16)))


# ---------------------------------------------------------------------------
# blocking / regroup

def test_blocking_validation():
    b = Blocking((2, 3))
    assert b.p == 5 and b.q == 2 and b.cuts == (0, 2, 5)
    assert Blocking.from_string("5,5").widths == (5, 5)
    with pytest.raises(ValueError):
        Blocking((0, 2))
    with pytest.raises(ValueError):
        Blocking.from_string("2,x")


def test_regroup_single_block_is_full_term():
    h = build_ising(4, 1.0, "open")
    g = regroup(h, Blocking((4,)))
    m = materialize_dense(h)
    total = sum(g.coefficient(k) * g.block_matrix(k, 0) for k in range(g.num_terms))
    assert np.allclose(total, m, atol=1e-14)


def test_regroup_single_sites_are_factors():
    h = build_ising(3, 0.5, "open")
    g = regroup(h, Blocking((1, 1, 1)))
    for k, term in enumerate(h.terms):
        for i, f in enumerate(term.factors):
            assert np.allclose(g.block_matrix(k, i), f.matrix)


def test_regroup_reassembles_dense():
    h = build_ising(4, 1.0, "open")
    g = regroup(h, Blocking((2, 2)))
    total = np.zeros((16, 16), dtype=complex)
    for k in range(g.num_terms):
        total += g.coefficient(k) * kron_first_fastest(
            [g.block_matrix(k, 0), g.block_matrix(k, 1)]
        )
    assert np.linalg.norm(total - materialize_dense(h)) <= 1e-14 * np.linalg.norm(total)


def test_regroup_partition_invariant_all_blockings():
    p = 8
    h = build_ising(p, 0.9, "open")
    dense = materialize_dense(h)
    for widths in compositions(p):
        g = regroup(h, Blocking(widths))
        total = np.zeros_like(dense)
        for k in range(g.num_terms):
            total += g.coefficient(k) * kron_first_fastest(
                [g.block_matrix(k, i) for i in range(g.q)]
            )
        assert np.linalg.norm(total - dense) <= 1e-12 * max(1.0, np.linalg.norm(dense))


def test_regroup_blocking_must_cover():
    h = build_ising(4, 0.0)
    with pytest.raises(ValueError):
        regroup(h, Blocking((2, 3)))


def test_apply_block_matches_matrix():
    rng = np.random.default_rng(2)
    h = build_heisenberg_xy(6, 1.0, 0.5, 0.2, "open")
    g = regroup(h, Blocking((3, 3)))
    for k in range(0, g.num_terms, 3):
        for i in range(2):
            v = crandn(rng, 8)
            assert np.allclose(g.apply_block(k, i, v), g.block_matrix(k, i) @ v,
                               atol=1e-13)
            stack = crandn(rng, 8, 4)
            assert np.allclose(g.apply_block(k, i, stack),
                               g.block_matrix(k, i) @ stack, atol=1e-13)
