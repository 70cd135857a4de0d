"""Randomized dense-equivalence and cost-bound checks for every contraction
kernel.  Each check contracts random instances both through the structured
kernel and through the full coefficient vectors, returning the worst
deviation together with measured operation counts and their bounds."""

from __future__ import annotations

import numpy as np

from . import flops, mixed, mps, parafac, peps
from .hamiltonian import Blocking


def _crandn(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def _result(name, errs, cost_measured, cost_bound):
    worst = float(max(errs)) if errs else 0.0
    report = {
        "check": name,
        "instances": len(errs),
        "max_abs_err": worst,
        "cost_measured": cost_measured,
        "cost_bound": cost_bound,
    }
    if cost_bound is not None:
        report["within_4x_bound"] = bool(cost_measured <= 4 * cost_bound)
    return report


def check_mps_inner(instances: int = 200, seed: int = 0) -> list:
    rng = np.random.default_rng(seed)
    out = []
    for boundary, bound_power in (("open", 3), ("periodic", 5)):
        errs = []
        worst_cost = 0
        worst_bound = 1
        for _ in range(instances):
            p = int(rng.integers(4, 11))
            d = int(rng.integers(1, 4))
            x = mps.random_mps(p, d, boundary, seed=int(rng.integers(2**31)))
            y = mps.random_mps(p, d, boundary, seed=int(rng.integers(2**31)))
            with flops.tally() as fc:
                got = mps.inner(x, y)
            expect = np.vdot(mps.to_dense(y).vector, mps.to_dense(x).vector)
            errs.append(abs(got - expect) / max(1.0, abs(expect)))
            bound = 4 * d**bound_power * p + (d**2 if boundary == "periodic" else 0)
            if fc.total / bound > worst_cost / worst_bound:
                worst_cost, worst_bound = fc.total, bound
        out.append(_result(f"mps-inner-{boundary}", errs, worst_cost, worst_bound))
    return out


def check_cp_inner(instances: int = 200, seed: int = 1) -> list:
    rng = np.random.default_rng(seed)
    errs = []
    worst_cost = 0
    worst_bound = 1
    for _ in range(instances):
        p = int(rng.integers(4, 11))
        q = int(rng.integers(1, min(4, p) + 1))
        widths = _random_widths(rng, p, q)
        rank = int(rng.integers(1, 5))
        b = Blocking(widths)
        x = parafac.random_cp(b, rank, seed=int(rng.integers(2**31)))
        y = parafac.random_cp(b, rank, seed=int(rng.integers(2**31)))
        with flops.tally() as fc:
            got = parafac.inner(y, x)
        expect = np.vdot(parafac.to_dense(y).vector, parafac.to_dense(x).vector)
        errs.append(abs(got - expect) / max(1.0, abs(expect)))
        # per-addend-pair bound with the widest block standing in for 2^(p/q)
        per_pair = fc.total / rank**2
        bound = len(widths) * (2 * 2 ** max(widths) + 1)
        if per_pair / bound > worst_cost / worst_bound:
            worst_cost, worst_bound = per_pair, bound
    return [_result("cp-inner", errs, worst_cost, worst_bound)]


def _random_widths(rng, p, q):
    if q == 1:
        return (p,)
    cuts = sorted(rng.choice(np.arange(1, p), size=q - 1, replace=False).tolist())
    return tuple(int(w) for w in np.diff([0] + cuts + [p]))


def _random_mixed_term(rng, p, periodic=False):
    q = int(rng.integers(2, 4))
    widths = _random_widths(rng, p, min(q, p))
    offset = int(rng.integers(0, p)) if periodic else 0
    factors = [_crandn(rng, 2**w) for w in widths]
    return mixed.MixedTerm(Blocking(widths), factors, complex(_crandn(rng, 1)[0]),
                           offset)


def check_mixed_obc(instances: int = 200, seed: int = 2) -> list:
    rng = np.random.default_rng(seed)
    errs = []
    worst_cost = 0
    worst_bound = 1
    for _ in range(instances):
        p = int(rng.integers(4, 11))
        x = _random_mixed_term(rng, p)
        y = _random_mixed_term(rng, p)
        with flops.tally() as fc:
            got = mixed.inner_mixed_obc(x, y)
        expect = np.vdot(mixed.term_to_dense(y).vector, mixed.term_to_dense(x).vector)
        errs.append(abs(got - expect) / max(1.0, abs(expect)))
        r = max(max(x.blocking.widths), max(y.blocking.widths))
        bound = 2**r * (x.blocking.q + y.blocking.q)
        if fc.total / bound > worst_cost / worst_bound:
            worst_cost, worst_bound = fc.total, bound
    return [_result("mixed-inner-obc", errs, worst_cost, worst_bound)]


def check_mixed_pbc(instances: int = 200, seed: int = 3) -> list:
    rng = np.random.default_rng(seed)
    errs = []
    worst_cost = 0
    worst_bound = 1
    for _ in range(instances):
        p = int(rng.integers(4, 11))
        x = _random_mixed_term(rng, p, periodic=True)
        y = _random_mixed_term(rng, p, periodic=True)
        with flops.tally() as fc:
            got = mixed.inner_mixed_pbc(x, y)
        expect = np.vdot(mixed.term_to_dense(y).vector, mixed.term_to_dense(x).vector)
        errs.append(abs(got - expect) / max(1.0, abs(expect)))
        r = max(max(x.blocking.widths), max(y.blocking.widths))
        bound = 2 ** int(np.ceil(1.5 * r)) * (x.blocking.q + y.blocking.q)
        if fc.total / bound > worst_cost / worst_bound:
            worst_cost, worst_bound = fc.total, bound
    return [_result("mixed-inner-pbc", errs, worst_cost, worst_bound)]


def check_block_mps_mixed(instances: int = 200, seed: int = 4) -> list:
    rng = np.random.default_rng(seed)
    errs = []
    for _ in range(instances):
        p = int(rng.integers(4, 11))
        bx = Blocking(_random_widths(rng, p, int(rng.integers(1, min(4, p) + 1))))
        by = Blocking(_random_widths(rng, p, int(rng.integers(1, min(4, p) + 1))))
        x = mps.random_mps(p, int(rng.integers(1, 4)), "open", bx,
                           seed=int(rng.integers(2**31)))
        y = mps.random_mps(p, int(rng.integers(1, 4)), "open", by,
                           seed=int(rng.integers(2**31)))
        got = mixed.inner_block_mps_mixed(x, y)
        expect = np.vdot(mps.to_dense(y).vector, mps.to_dense(x).vector)
        errs.append(abs(got - expect) / max(1.0, abs(expect)))
    return [_result("block-mps-mixed-inner", errs, None, None)]


def check_pattern_2d(instances: int = 200, seed: int = 5) -> list:
    rng = np.random.default_rng(seed)
    errs = []
    worst_cost = 0
    worst_bound = 1
    for _ in range(instances):
        sb_rows, sb_cols, r_sites = (2, 2, int(rng.integers(1, 3)))
        pa, pb = rng.integers(1, 5, size=2)
        n_pairs = sb_rows * sb_cols // 2
        x = mixed.PatternedTerm2D(
            sb_rows, sb_cols, r_sites, int(pa),
            [_crandn(rng, 4**r_sites) for _ in range(n_pairs)],
            complex(_crandn(rng, 1)[0]))
        y = mixed.PatternedTerm2D(
            sb_rows, sb_cols, r_sites, int(pb),
            [_crandn(rng, 4**r_sites) for _ in range(n_pairs)],
            complex(_crandn(rng, 1)[0]))
        with flops.tally() as fc:
            got = mixed.inner_pattern_2d(x, y)
        expect = np.vdot(mixed.term_to_dense(y).vector,
                         mixed.term_to_dense(x).vector)
        errs.append(abs(got - expect) / max(1.0, abs(expect)))
        bound = 2 ** (3 * r_sites)
        if fc.max_step / bound > worst_cost / worst_bound:
            worst_cost, worst_bound = fc.max_step, bound
    return [_result("pattern-2d-inner", errs, worst_cost, worst_bound)]


def check_peps_inner(instances: int = 200, seed: int = 6) -> list:
    rng = np.random.default_rng(seed)
    errs = []
    for _ in range(instances):
        rows = int(rng.integers(1, 4))
        cols = int(rng.integers(1, 5))
        if rows * cols > 12:
            cols = 12 // rows
        d = int(rng.integers(1, 3))
        x = peps.random_peps(rows, cols, d, seed=int(rng.integers(2**31)))
        y = peps.random_peps(rows, cols, d, seed=int(rng.integers(2**31)))
        got = peps.inner_peps(x, y, d_cut=d * d)
        expect = np.vdot(peps.to_dense(y).vector, peps.to_dense(x).vector)
        errs.append(abs(got - expect) / max(1.0, abs(expect)))
    return [_result("peps-inner-lossless", errs, None, None)]


def peps_cost_slope(dims=(1, 2, 3), lattice=(4, 4), seed: int = 7) -> dict:
    counts = []
    for d in dims:
        x = peps.random_peps(*lattice, d, seed=seed + d)
        y = peps.random_peps(*lattice, d, seed=seed + 100 + d)
        with flops.tally() as fc:
            peps.inner_peps(x, y, d_cut=d)
        counts.append(fc.total)
    slope = float(np.polyfit(np.log(dims), np.log(counts), 1)[0])
    return {"check": "peps-cost-slope", "dims": list(dims),
            "counts": counts, "slope": slope}


def run_all(instances: int = 200, seed: int = 0) -> list:
    reports = []
    reports += check_mps_inner(instances, seed)
    reports += check_cp_inner(instances, seed + 1)
    reports += check_mixed_obc(instances, seed + 2)
    reports += check_mixed_pbc(instances, seed + 3)
    reports += check_block_mps_mixed(instances, seed + 4)
    reports += check_pattern_2d(instances, seed + 5)
    reports += check_peps_inner(instances, seed + 6)
    reports.append(peps_cost_slope(seed=seed + 7))
    return reports
