"""End-to-end acceptance checks, one test per criterion.

Every tolerance and runtime budget is pinned here as a module constant.
"""

import math
import random
import time
from fractions import Fraction

import numpy as np
import pytest
from scipy.linalg import expm, logm

from dmfactor import liealg as L
from dmfactor.coords import build_chart
from dmfactor.entireq import build_q
from dmfactor.factor1d import factorize
from dmfactor.factorgroup import iterate_factorization, pushforward_and_verify, pushforward_membership
from dmfactor.fixtures import load_fixture
from dmfactor.repmodel import MatrixRep
from dmfactor.weights import build_sigma, check_weight_axioms, log_grid

FIXTURES = ("abelian", "heisenberg", "axb")
BCH_ORACLE_TOL = 1e-10
ROUNDTRIP_TOL = 1e-10
PULLBACK_REL_TOL = 1e-6
RESIDUAL_1D_TOL = 1e-6
GROUP_REL_TOL = 1e-4
AGREEMENT_TOL = 1e-6
LINEARITY_TOL = 1e-8

REPS_1D = {
    "zero": [[0.0, 0.0], [0.0, 0.0]],
    "rotation": [[0.0, -1.0], [1.0, 0.0]],
    "hyperbolic": [[1.0, 0.0], [0.0, -1.0]],
    "jordan": [[1.0, 1.0], [0.0, 1.0]],
}


def unit_vectors(seed, k, d):
    v = np.random.default_rng(seed).normal(size=(k, d))
    return [x / np.linalg.norm(x) for x in v]


def rand_elem(rnd, dim):
    return tuple(Fraction(rnd.randint(-5, 5), rnd.randint(1, 4)) for _ in range(dim))


def bch_triples(alg, rnd, k=200):
    """Random (x, y, z) whose span generates a nilpotent subalgebra (any triple when the algebra is)."""
    if alg.is_nilpotent():
        return [tuple(rand_elem(rnd, alg.dim) for _ in range(3)) for _ in range(k)]
    # ax+b: elements of the nilradical span{N}, or multiples of one element
    out = []
    for i in range(k):
        if i % 2:
            out.append(tuple((0, rand_elem(rnd, 1)[0]) for _ in range(3)))
        else:
            x = rand_elem(rnd, alg.dim)
            out.append(tuple(tuple(c * a for a in x) for c in rand_elem(rnd, 3)))
    return out


def test_criterion_1_symbolic_exactness():
    start = time.perf_counter()
    rnd = random.Random(1)
    for name in FIXTURES:
        alg = load_fixture(name)
        L.validate(alg.c)  # antisymmetry, Jacobi and solvability over Q
        for x, y, z in bch_triples(alg, rnd):
            assert L.bch(alg, L.bch(alg, x, y), z) == L.bch(alg, x, L.bch(alg, y, z))
            lhs = logm(expm(alg.model_matrix(x)) @ expm(alg.model_matrix(y))).real
            assert np.abs(lhs - alg.model_matrix(L.bch(alg, x, y))).max() <= BCH_ORACLE_TOL
    assert time.perf_counter() - start < 5.0


def test_criterion_2_chart_and_pullback_oracles():
    start = time.perf_counter()
    rng = np.random.default_rng(2)
    r = 1e-5
    for name in FIXTURES:
        chart = build_chart(load_fixture(name))
        for x in rng.uniform(-2, 2, (100, chart.dim)):
            assert np.abs(chart.phi_inv(chart.phi(x)) - x).max() <= ROUNDTRIP_TOL
        pts = rng.uniform(-1.5, 1.5, (100, chart.dim))
        for X in chart.algebra.basis_names:
            M = chart.algebra.model_matrix(chart.element(X))
            E, Einv = expm(r * M), expm(-r * M)
            for side in ("left", "right"):
                sym = chart.pullback_numeric(X, pts, side)
                for p, c in zip(pts, sym):
                    g = chart.phi(p)
                    plus, minus = (g @ E, g @ Einv) if side == "left" else (E @ g, Einv @ g)
                    fd = (chart.phi_inv(plus) - chart.phi_inv(minus)) / (2 * r)
                    assert np.abs(fd - c).max() <= PULLBACK_REL_TOL * max(1.0, np.abs(c).max())
    assert time.perf_counter() - start < 10.0


@pytest.mark.parametrize("name", FIXTURES)
def test_criterion_3_haar_determinant(name):
    w = build_chart(load_fixture(name)).haar_check()
    assert w.det == 1
    d = len(w.matrix)
    for i in range(d):
        assert w.matrix[i][i] == 1
        assert all(w.matrix[i][k].is_zero() for k in range(i + 1, d))


def test_criterion_4_weight_construction():
    start = time.perf_counter()
    sig = build_sigma(["linear"], 1e6)
    j = sig.jumps
    assert all(j[n + 1] >= 2 * j[n] for n in range(len(j) - 1))
    for n, tn in enumerate(j, start=1):
        g = log_grid(tn, 1e6)
        assert np.all(sig(g) <= g / n)
    assert math.isfinite(check_weight_axioms(sig)["C_alpha"])
    g = log_grid(j[1], 1e6)
    assert np.all(np.diff(sig(g) / np.log(g)) >= 0)
    assert time.perf_counter() - start < 2.0


def test_criterion_5_entire_multiplier():
    start = time.perf_counter()
    sig = build_sigma(["linear"], 1e6)
    q = build_q(sig, 3.0, 32, strips=(1.0, 2.0, 3.0))
    cert = q.certificates
    assert q.K <= 32
    assert set(cert["strips"]) == {"1.0", "2.0", "3.0"}
    for s in cert["strips"].values():
        assert s["inf_lower"] > 0 and math.isfinite(s["sup_upper"])
    assert 0.25 <= q.a_fit <= 1
    assert cert["real_axis_min_abs_Q"] >= 1
    assert cert["decay_order"] >= 2 * q.K
    assert time.perf_counter() - start < 5.0


@pytest.fixture(scope="module")
def runs_1d():
    start = time.perf_counter()
    out = {}
    for i, (name, M) in enumerate(REPS_1D.items()):
        out[name] = factorize(MatrixRep.from_generator(M), unit_vectors(100 + i, 5, 2), window=8.0, n=2**14, tol=RESIDUAL_1D_TOL)
    return out, time.perf_counter() - start


def test_criterion_6_one_dimensional_factorization(runs_1d):
    runs, elapsed = runs_1d
    assert elapsed < 60.0
    for r in runs.values():
        assert len(r.ts) == 2**14 and r.ts[0] == -8.0
        for key in ("residual1", "residual2", "orbit_identity"):
            assert r.residuals[key] <= RESIDUAL_1D_TOL
        chi = r.certificates["chi_decay"]
        assert chi["mu"] == pytest.approx((r.strip + math.e) / 2, rel=1e-15)
        for d in (0, 1, 2):
            assert chi[f"deriv{d}"]["grid_sup"] <= chi[f"deriv{d}"]["analytic_bound"]


def test_criterion_7_group_factorization():
    start = time.perf_counter()
    for seed, name in enumerate(("axb", "heisenberg")):
        chart = build_chart(load_fixture(name))
        B = unit_vectors(200 + seed, 3, chart._models.shape[1])
        per_axis = iterate_factorization(chart, B)
        res = pushforward_and_verify(chart, B, per_axis, tol=GROUP_REL_TOL, agreement_tol=AGREEMENT_TOL)
        for v, w in zip(B, res.reconstructed):
            assert np.linalg.norm(v - w) / np.linalg.norm(v) <= GROUP_REL_TOL
        assert res.agreement <= AGREEMENT_TOL
        ops = res.certificate["by_operator"]
        assert set(ops) == {"Id"} | set(chart.labels)
        assert all(rows["1.0"]["verdict"] == "finite" for rows in ops.values())
    assert time.perf_counter() - start < 300.0


def test_criterion_8_pushforward_membership():
    start = time.perf_counter()
    for name in ("axb", "heisenberg"):
        rep = pushforward_membership(build_chart(load_fixture(name)), beta=3.0, ladder=(0.5, 1.0, 1.5, 3.5, 4.5))
        below = [lam for lam in rep["summary"] if float(lam) < rep["budget"]]
        above = [lam for lam in rep["summary"] if float(lam) > 3.0]
        assert below and above
        assert all(rep["summary"][lam]["all_finite"] for lam in below)
        assert all(rep["summary"][lam]["any_diverging"] for lam in above)
    assert time.perf_counter() - start < 30.0


def test_criterion_9_linearity_and_scaling(runs_1d):
    r = runs_1d[0]["hyperbolic"]
    u, w = r.vectors[:2]
    assert np.max(np.abs(r.h_for(-1.7 * u + w) - (-1.7 * r.h[0] + r.h[1]))) <= LINEARITY_TOL
    r10 = factorize(r.rep, [10 * v for v in r.vectors], tol=RESIDUAL_1D_TOL)
    assert r10.chi().tobytes() == r.chi().tobytes()
    for a, b in zip(r.B_prime, r10.B_prime):
        assert np.allclose(b, 10 * a, rtol=1e-12, atol=0)
