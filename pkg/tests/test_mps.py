"""Matrix-product-state representation, gauging, contractions, ALS."""

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
)
from tnsolve.mps import (
    MpsState,
    add,
    als_ground_state,
    apply_hamiltonian,
    evaluate,
    expectation,
    from_unit_vector,
    gauge_residual_left,
    gauge_residual_right,
    inner,
    mps_energy,
    normalize_left_sweep,
    normalize_right_sweep,
    random_mps,
    to_dense,
    two_site_shift,
)
from tnsolve.oracle import ground_state_dense, rayleigh


def bits_of(index, p):
    return [(index >> r) & 1 for r in range(p)]


# ---------------------------------------------------------------------------
# construction and evaluation

def test_unit_vector_mps_evaluates_to_indicator():
    p = 5
    for j in [0, 7, 19, 31]:
        x = from_unit_vector(j, p)
        for i in range(2**p):
            expect = 1.0 if i == j else 0.0
            assert evaluate(x, bits_of(i, p)) == pytest.approx(expect)


def test_unit_vector_dense_is_basis_vector():
    p = 6
    for j in [0, 1, 5, 63]:
        v = to_dense(from_unit_vector(j, p)).vector
        assert np.array_equal(v, np.eye(2**p)[:, j])


def test_product_state_evaluation():
    rng = np.random.default_rng(0)
    p = 4
    facs = [rng.standard_normal(2) + 1j * rng.standard_normal(2) for _ in range(p)]
    sites = [f.reshape(1, 2, 1) for f in facs]
    x = MpsState("open", Blocking.single_sites(p), sites)
    for i in [0, 3, 9, 15]:
        b = bits_of(i, p)
        expect = np.prod([facs[r][b[r]] for r in range(p)])
        assert evaluate(x, b) == pytest.approx(expect)


def test_evaluate_matches_dense_random():
    x = random_mps(6, 3, "open", seed=1)
    dense = to_dense(x).vector
    for i in [0, 17, 40, 63]:
        assert evaluate(x, bits_of(i, 6)) == pytest.approx(dense[i], abs=1e-13)


def test_dense_equals_ancilla_sum_expansion():
    # independent expansion: sum over ancilla tuples of outer products
    x = random_mps(4, 2, "periodic", seed=2)
    d = [s.shape[0] for s in x.sites] + [x.sites[-1].shape[2]]
    total = np.zeros(16, dtype=complex)
    from itertools import product

    from tnsolve.tensor import outer_product, ravel
    for ms in product(*[range(dd) for dd in d[:-1]]):
        ms = ms + (ms[0],)
        vecs = [x.sites[j][ms[j], :, ms[j + 1]] for j in range(4)]
        total += ravel(outer_product(vecs))
    assert np.allclose(total, to_dense(x).vector, atol=1e-12)


def test_random_mps_reproducible_and_clamped():
    a = random_mps(4, 8, "open", seed=9)
    b = random_mps(4, 8, "open", seed=9)
    for sa, sb in zip(a.sites, b.sites):
        assert np.array_equal(sa, sb)
    assert a.bond_dims() == (1, 2, 4, 2, 1)
    c = random_mps(4, 1, "open", seed=3)
    assert c.bond_dims() == (1, 1, 1, 1, 1)


def test_evaluate_rejects_bad_index():
    x = random_mps(3, 2, "open", seed=0)
    with pytest.raises(IndexError):
        evaluate(x, [0, 1])
    with pytest.raises(IndexError):
        evaluate(x, [0, 1, 2])


# ---------------------------------------------------------------------------
# sums

def test_add_dense_additivity():
    x = random_mps(5, 2, "open", seed=4)
    y = random_mps(5, 2, "open", seed=5)
    s = add(x, y)
    assert np.linalg.norm(
        to_dense(s).vector - (to_dense(x).vector + to_dense(y).vector)
    ) <= 1e-13 * max(1.0, np.linalg.norm(to_dense(s).vector))


def test_add_unit_vectors():
    s = add(from_unit_vector(0, 4), from_unit_vector(1, 4))
    expect = np.eye(16)[:, 0] + np.eye(16)[:, 1]
    assert np.allclose(to_dense(s).vector, expect)


def test_add_bond_profile():
    x = random_mps(5, 2, "open", seed=6)
    y = random_mps(5, 3, "open", seed=7)
    s = add(x, y)
    bx, by, bs = x.bond_dims(), y.bond_dims(), s.bond_dims()
    for j in range(1, 5):
        assert bs[j] == bx[j] + by[j]
    assert bs[0] == bs[5] == 1


def test_add_periodic():
    x = random_mps(4, 2, "periodic", seed=8)
    y = random_mps(4, 2, "periodic", seed=9)
    s = add(x, y)
    assert np.allclose(
        to_dense(s).vector, to_dense(x).vector + to_dense(y).vector, atol=1e-12
    )


def test_add_incompatible():
    with pytest.raises(ValueError):
        add(random_mps(4, 2, "open"), random_mps(5, 2, "open"))
    with pytest.raises(ValueError):
        add(random_mps(4, 2, "open"), random_mps(4, 2, "periodic"))


# ---------------------------------------------------------------------------
# normalization sweeps

@pytest.mark.parametrize("boundary", ["open", "periodic"])
def test_left_sweep_gauges_and_preserves(boundary):
    x = random_mps(6, 3, boundary, seed=10)
    before = to_dense(x).vector
    gauged, status = normalize_left_sweep(x)
    after = to_dense(gauged).vector
    assert np.linalg.norm(after - before) <= 1e-12 * np.linalg.norm(before)
    for j in range(gauged.q - 1):
        assert gauge_residual_left(gauged.sites[j]) <= 1e-12
    if boundary == "open":
        assert status.gamma == pytest.approx(np.linalg.norm(before) ** 2, rel=1e-12)


@pytest.mark.parametrize("boundary", ["open", "periodic"])
def test_right_sweep_gauges_and_preserves(boundary):
    x = random_mps(6, 3, boundary, seed=11)
    before = to_dense(x).vector
    gauged, status = normalize_right_sweep(x)
    after = to_dense(gauged).vector
    assert np.linalg.norm(after - before) <= 1e-12 * np.linalg.norm(before)
    for j in range(1, gauged.q):
        assert gauge_residual_right(gauged.sites[j]) <= 1e-12
    if boundary == "open":
        assert status.gamma == pytest.approx(np.linalg.norm(before) ** 2, rel=1e-12)


def test_left_sweep_idempotent_at_dense_level():
    x = random_mps(5, 2, "open", seed=12)
    g1, _ = normalize_left_sweep(x)
    g2, _ = normalize_left_sweep(g1)
    assert np.allclose(to_dense(g1).vector, to_dense(g2).vector, atol=1e-12)


def test_block_mps_gauge_sweep():
    x = random_mps(6, 3, "open", blocking=Blocking((2, 2, 2)), seed=13)
    before = to_dense(x).vector
    gauged, _ = normalize_left_sweep(x)
    assert np.linalg.norm(to_dense(gauged).vector - before) <= 1e-12 * np.linalg.norm(before)
    for j in range(gauged.q - 1):
        assert gauge_residual_left(gauged.sites[j]) <= 1e-12


# ---------------------------------------------------------------------------
# two-site shift

def test_two_site_shift_full_rank_preserves():
    x = random_mps(5, 3, "open", seed=14)
    before = to_dense(x).vector
    for j in range(4):
        for direction in ("left", "right"):
            y = two_site_shift(x, j, direction)
            assert np.linalg.norm(to_dense(y).vector - before) <= 1e-12 * np.linalg.norm(before)


def test_two_site_truncation_error_is_sv_tail():
    # mixed-canonical chain: the cut spectrum is the dense matricization's SVD
    p, j = 4, 1
    x = random_mps(p, 4, "open", seed=15)
    x, _ = normalize_right_sweep(x)  # center at site 0
    x = two_site_shift(x, 0, "right")  # move center to site 1
    before = to_dense(x).vector
    mat = before.reshape(4, 4, order="F")  # sites (1,2) vs (3,4)
    svals = np.linalg.svd(mat, compute_uv=False)
    for d_max in (1, 2, 3):
        y = two_site_shift(x, j, "right", d_max=d_max)
        err = np.linalg.norm(to_dense(y).vector - before)
        tail = np.sqrt(np.sum(svals[d_max:] ** 2))
        assert err == pytest.approx(tail, abs=1e-11)


def test_two_site_rank_one_block_lossless():
    # bond-2 representation whose two-site blocks still have matrix rank 1
    zero = from_unit_vector(3, 4)
    zero.sites[0] = 0.0 * zero.sites[0]
    x = add(from_unit_vector(3, 4), zero)
    assert x.bond_dims() == (1, 2, 2, 2, 1)
    before = to_dense(x).vector
    y = two_site_shift(x, 1, "right", d_max=1)
    assert np.linalg.norm(to_dense(y).vector - before) <= 1e-12 * np.linalg.norm(before)


def test_two_site_shift_end_rejected():
    x = random_mps(4, 2, "open", seed=16)
    with pytest.raises(ValueError):
        two_site_shift(x, 3, "right")


# ---------------------------------------------------------------------------
# inner products

def test_inner_unit_vectors():
    e3, e5 = from_unit_vector(3, 4), from_unit_vector(5, 4)
    assert inner(e3, e3) == pytest.approx(1.0)
    assert inner(e3, e5) == pytest.approx(0.0)


@pytest.mark.parametrize("boundary", ["open", "periodic"])
def test_inner_matches_dense(boundary):
    x = random_mps(8, 3, boundary, seed=17)
    y = random_mps(8, 3, boundary, seed=18)
    expect = np.vdot(to_dense(y).vector, to_dense(x).vector)
    assert inner(x, y) == pytest.approx(expect, abs=1e-12 * abs(expect))


def test_inner_conjugate_symmetric():
    x = random_mps(6, 2, "open", seed=19)
    y = random_mps(6, 2, "open", seed=20)
    assert inner(x, y) == pytest.approx(np.conj(inner(y, x)), abs=1e-13)


@pytest.mark.parametrize("d_bond", [2, 4, 8])
def test_inner_cost_bound_open(d_bond):
    p = 8
    x = random_mps(p, d_bond, "open", seed=21)
    y = random_mps(p, d_bond, "open", seed=22)
    # clamped bonds only make it cheaper than the uniform-D bound
    with flops.tally() as fc:
        inner(x, y)
    assert fc.total <= 4 * d_bond**3 * p


@pytest.mark.parametrize("d_bond", [2, 4, 8])
def test_inner_cost_bound_periodic(d_bond):
    p = 8
    x = random_mps(p, d_bond, "periodic", seed=23)
    y = random_mps(p, d_bond, "periodic", seed=24)
    with flops.tally() as fc:
        inner(x, y)
    assert fc.total <= 4 * (4 * d_bond**5 * p)


def test_inner_shape_mismatch():
    with pytest.raises(ValueError):
        inner(random_mps(4, 2, "open"), random_mps(5, 2, "open"))


# ---------------------------------------------------------------------------
# Hamiltonian action and expectation

def test_apply_identity_hamiltonian_dense_equal():
    h = SpinHamiltonian(4, [KroneckerTerm(1.0, (OP_I,) * 4)])
    x = random_mps(4, 2, "open", seed=25)
    y = apply_hamiltonian(h, x)
    assert np.allclose(to_dense(y).vector, to_dense(x).vector, atol=1e-13)


@pytest.mark.parametrize("boundary", ["open", "periodic"])
def test_apply_hamiltonian_matches_dense(boundary):
    h = build_ising(4, 1.0, boundary)
    x = random_mps(4, 2, boundary, seed=26)
    y = apply_hamiltonian(h, x)
    expect = materialize_dense(h) @ to_dense(x).vector
    assert np.linalg.norm(to_dense(y).vector - expect) <= 1e-12 * np.linalg.norm(expect)


def test_apply_hamiltonian_bond_growth():
    h = build_ising(4, 1.0, "open")
    x = random_mps(4, 2, "open", seed=27)
    y = apply_hamiltonian(h, x)
    bx = x.bond_dims()
    for j in range(1, 4):
        assert y.bond_dims()[j] == h.num_terms * bx[j]


def test_expectation_all_up_state_zero_field():
    for p in (4, 6):
        h = build_ising(p, 0.0, "open")
        e0 = from_unit_vector(0, p)
        assert expectation(h, e0) == pytest.approx(p - 1.0)


def test_expectation_matches_dense_numerator():
    h = build_ising(6, 1.0, "open")
    x = random_mps(6, 3, "open", seed=28)
    dense = to_dense(x).vector
    expect = np.vdot(dense, materialize_dense(h) @ dense).real
    assert expectation(h, x) == pytest.approx(expect, abs=1e-10 * max(1.0, abs(expect)))


def test_energy_matches_rayleigh():
    h = build_ising(6, 0.9, "open")
    x = random_mps(6, 3, "open", seed=29)
    gauged, _ = normalize_left_sweep(x)
    assert mps_energy(h, gauged) == pytest.approx(
        rayleigh(h, to_dense(x)), abs=1e-10
    )


def test_expectation_cost_bound():
    p, d_bond = 6, 4
    h = build_ising(p, 1.0, "periodic")
    x = random_mps(p, d_bond, "periodic", seed=30)
    with flops.tally() as fc:
        expectation(h, x)
    assert fc.total <= 4 * (4 * d_bond**5 * h.num_terms * p)


# ---------------------------------------------------------------------------
# dense-equivalence sweep across boundaries and bond dimensions

@pytest.mark.parametrize("boundary", ["open", "periodic"])
@pytest.mark.parametrize("p,d_bond", [(4, 2), (6, 3), (8, 4)])
def test_dense_equivalence_suite(boundary, p, d_bond):
    h = build_ising(p, 0.8, boundary)
    x = random_mps(p, d_bond, boundary, seed=p * d_bond)
    y = random_mps(p, d_bond, boundary, seed=p * d_bond + 1)
    dx, dy = to_dense(x).vector, to_dense(y).vector
    scale = np.linalg.norm(dx)
    assert np.linalg.norm(to_dense(add(x, y)).vector - (dx + dy)) <= 1e-12 * scale
    g, _ = normalize_left_sweep(x)
    assert np.linalg.norm(to_dense(g).vector - dx) <= 1e-12 * scale
    g, _ = normalize_right_sweep(x)
    assert np.linalg.norm(to_dense(g).vector - dx) <= 1e-12 * scale
    hx = apply_hamiltonian(h, x)
    ref = materialize_dense(h) @ dx
    assert np.linalg.norm(to_dense(hx).vector - ref) <= 1e-12 * max(1.0, np.linalg.norm(ref))


# ---------------------------------------------------------------------------
# ALS ground state

def test_als_exact_capable_reaches_oracle():
    h = build_ising(8, 1.0, "open")
    e0, _ = ground_state_dense(h)
    trace, state = als_ground_state(h, 8, 16, "open", sweeps=10, seed=0)
    assert abs(trace[-1].energy - e0) <= 1e-8
    energies = [t.energy for t in trace]
    assert all(e2 <= e1 + 1e-10 for e1, e2 in zip(energies, energies[1:]))


def test_als_product_state_zero_field():
    for p in (4, 6):
        h = build_ising(p, 0.0, "open")
        trace, _ = als_ground_state(h, p, 1, "open", sweeps=6, seed=1)
        assert trace[-1].energy == pytest.approx(-(p - 1), abs=1e-9)


def test_als_energy_equals_true_rayleigh():
    h = build_ising(6, 1.0, "open")
    trace, state = als_ground_state(h, 6, 2, "open", sweeps=4, seed=2)
    assert trace[-1].energy == pytest.approx(rayleigh(h, to_dense(state)), abs=1e-10)
    # gauging keeps the represented vector at unit norm between updates
    assert abs(inner(state, state) - 1.0) <= 1e-8


def test_als_periodic_converges():
    h = build_ising(6, 1.0, "periodic")
    e0, _ = ground_state_dense(h)
    trace, state = als_ground_state(h, 6, 8, "periodic", sweeps=8, seed=3)
    energies = [t.energy for t in trace]
    assert all(e2 <= e1 + 1e-10 for e1, e2 in zip(energies, energies[1:]))
    assert abs(trace[-1].energy - e0) <= 1e-6
    assert trace[-1].energy == pytest.approx(rayleigh(h, to_dense(state)), abs=1e-9)


def test_als_rejects_bad_parameters():
    h = build_ising(4, 0.0)
    with pytest.raises(ValueError):
        als_ground_state(h, 4, 0, "open")
    with pytest.raises(ValueError):
        als_ground_state(h, 5, 2, "open")
