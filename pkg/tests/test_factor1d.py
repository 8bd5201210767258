import math

import numpy as np
import pytest
import sympy as sp
from scipy.integrate import quad
from scipy.linalg import expm

from dmfactor.factor1d import (
    InsufficientDamping,
    ResidualExceeded,
    SplitPair,
    build_tau,
    factorize,
    h_from_lines,
    laplace_transform,
    simultaneity_check,
    smoothstep_jets,
)
from dmfactor.repmodel import MatrixRep, uniform_grid

ROT = [[0.0, -1.0], [1.0, 0.0]]
HYP = [[1.0, 0.0], [0.0, -1.0]]
ZERO = [[0.0, 0.0], [0.0, 0.0]]


def unit_vectors(rng, k, d=2):
    v = rng.normal(size=(k, d))
    return [x / np.linalg.norm(x) for x in v]


@pytest.fixture(scope="module")
def hyp_run():
    rng = np.random.default_rng(7)
    rep = MatrixRep.from_generator(HYP)
    return factorize(rep, unit_vectors(rng, 5))


# ---- partition of unity


def test_split_sum_and_supports():
    ts = uniform_grid(4.0, 4096)
    sp_ = SplitPair()
    p, m = sp_.plus(ts)[0], sp_.minus(ts)[0]
    assert np.max(np.abs(p + m - 1)) <= 2e-16
    assert np.all(p[ts <= -1] == 0) and np.all(m[ts >= 0] == 0)
    assert np.all((p >= 0) & (p <= 1))


def test_smoothstep_jets_match_symbolic():
    x = sp.Symbol("x")
    s = 1 / (1 + sp.exp(1 / x - 1 / (1 - x)))
    pts = [0.05, 0.3, 0.5, 0.71, 0.97]
    jets = smoothstep_jets(pts, 4)
    for k in range(5):
        f = sp.lambdify(x, sp.diff(s, x, k))
        ref = np.array([float(f(p)) for p in pts])
        assert np.allclose(jets[k], ref, rtol=1e-9, atol=1e-12)


def test_smoothstep_far_from_interval():
    j = smoothstep_jets([-1.0, 0.0, 1e-4, 1.0, 2.0], 6)
    assert j[0].tolist() == [0.0, 0.0, 0.0, 1.0, 1.0]
    assert np.all(j[1:] == 0)


# ---- transforms on shifted lines


def test_laplace_zero_vector():
    ts = uniform_grid(8.0, 2048)
    d = laplace_transform(MatrixRep.from_generator(HYP), [np.zeros(2)], 1.0, ts)
    assert np.all(d.F_plus == 0) and np.all(d.F_minus == 0)


def test_laplace_constant_orbit_vs_quadrature():
    ts = uniform_grid(40.0, 2**15)
    lam = 1.0
    d = laplace_transform(MatrixRep.from_generator(ZERO), [np.array([1.0, 0.0])], lam, ts, band=20.0)
    phi = lambda t: SplitPair().plus(np.array([t]))[0][0]
    idx = np.linspace(0, len(d.xis) - 1, 20).astype(int)
    for i in idx:
        xi = d.xis[i]
        f = lambda t: math.exp(-lam * t) * phi(t)
        re = quad(f, -1, 60, weight="cos", wvar=xi, limit=400)[0]
        im = quad(f, -1, 60, weight="sin", wvar=xi, limit=400)[0]
        assert abs(d.F_plus[0, 0, i, 0] - (re + 1j * im)) <= 1e-8
        assert d.F_plus[0, 0, i, 1] == 0


def test_laplace_hyperbolic_shifts_lambda():
    ts = uniform_grid(40.0, 2**14)
    v = np.array([1.0, 1.0])
    hyp = laplace_transform(MatrixRep.from_generator(HYP), [v], 3.0, ts, offsets=(0,))
    lo = laplace_transform(MatrixRep.from_generator(ZERO), [v], 2.0, ts, offsets=(0,))
    hi = laplace_transform(MatrixRep.from_generator(ZERO), [v], 4.0, ts, offsets=(0,))
    assert np.max(np.abs(hyp.F_plus[0, 0, :, 0] - lo.F_plus[0, 0, :, 0])) <= 1e-10
    assert np.max(np.abs(hyp.F_plus[0, 0, :, 1] - hi.F_plus[0, 0, :, 1])) <= 1e-10
    assert np.max(np.abs(hyp.F_minus[0, 0, :, 1] - lo.F_minus[0, 0, :, 1])) <= 1e-10


def test_laplace_insufficient_damping():
    ts = uniform_grid(8.0, 2048)
    with pytest.raises(InsufficientDamping):
        laplace_transform(MatrixRep.from_generator(HYP), [np.array([1.0, 0.0])], 1.2, ts)


def test_decay_table_is_finite_and_increasing():
    ts = uniform_grid(8.0, 4096)
    d = laplace_transform(MatrixRep.from_generator(ZERO), [np.array([1.0, 0.0])], 1.0, ts)
    assert np.all(np.isfinite(d.C)) and np.all(np.diff(d.C) > 0)


# ---- tau


def test_tau_unit_constants():
    tau = build_tau(np.ones(13))
    for t in range(1, 20):
        assert tau(float(t)) == pytest.approx((min(t, 12) - 1) * math.log1p(t), abs=1e-12)
    assert tau(0.0) == 0.0


def test_tau_from_constant_orbit_is_monotone():
    ts = uniform_grid(8.0, 4096)
    d = laplace_transform(MatrixRep.from_generator(ZERO), [np.array([1.0, 0.0])], 1.0, ts)
    tau = build_tau(d.C)
    grid = np.linspace(0, 1e4, 20001)
    vals = tau(grid)
    assert vals[0] == 0 and np.all(np.diff(vals) >= 0)


# ---- end to end


def test_constant_orbit_gives_constant_h():
    rep = MatrixRep.from_generator(ZERO)
    r = factorize(rep, [np.array([1.0, 0.0])])
    assert np.max(np.abs(r.h[0] - [1.0, 0.0])) <= 1e-12
    assert r.residuals["residual1"] <= 1e-6 and r.residuals["residual2"] <= 1e-6


def test_rotation_on_smaller_window():
    rep = MatrixRep.from_generator(ROT)
    r = factorize(rep, [np.array([1.0, 0.0])], window=5.0, n=2**13)
    assert max(r.residuals[k] for k in ("residual1", "residual2", "orbit_identity")) <= 1e-6


def test_h_matches_multiplier_oracle(hyp_run):
    # h(t) = pi(t) Q(iM) v with Q(iM) = prod (1 - M^2 / rho^2)
    M = np.array(HYP)
    QM = np.eye(2)
    for r in hyp_run.q.rhos:
        QM = QM @ (np.eye(2) - M @ M / r**2)
    ts = hyp_run.ts[::997]
    for v, h in zip(hyp_run.vectors, hyp_run.h):
        ref = np.stack([expm(t * M) @ QM @ v for t in ts])
        assert np.allclose(h[::997], ref, rtol=1e-12, atol=1e-12)


def test_hyperbolic_family_certificates(hyp_run):
    assert hyp_run.q.K >= 2
    cert = hyp_run.certificates
    assert cert["fourier_identity"] <= 1e-8
    assert cert["chi_decay"]["mu"] == pytest.approx((hyp_run.strip + math.e) / 2)
    for d in (0, 1, 2):
        c = cert["chi_decay"][f"deriv{d}"]
        assert c["grid_sup"] <= c["analytic_bound"]


def test_two_line_inverse_transform_agrees_near_zero(hyp_run):
    peak = max(np.linalg.norm(v) for v in hyp_run.vectors)
    ts = np.array([-0.5, 0.0, 0.5, 1.0])
    idx = [int(np.argmin(np.abs(hyp_run.ts - t))) for t in ts]
    approx = h_from_lines(hyp_run.laplace, hyp_run.q, ts, 0) * peak
    exact = hyp_run.h[0][idx]
    assert np.max(np.abs(approx - exact)) <= 1e-2 * np.max(np.abs(exact))


def test_empty_family():
    r = factorize(MatrixRep.from_generator(HYP), [])
    assert r.h == [] and r.residuals["residual1"] == 0.0


def test_duplicate_vectors_identical(hyp_run):
    v = hyp_run.vectors[0]
    r = factorize(hyp_run.rep, [v, v])
    assert np.array_equal(r.h[0], r.h[1])
    rep = simultaneity_check(r)
    assert rep["single_chi"] and rep["max_residual"] <= 1e-6


def test_simultaneity_report(hyp_run):
    rep = simultaneity_check(hyp_run)
    assert rep["vectors"] == 5 and rep["max_residual"] <= 1e-6
    assert math.isfinite(rep["B_prime_bound"])


def test_scaling_keeps_chi(hyp_run):
    r10 = factorize(hyp_run.rep, [10 * v for v in hyp_run.vectors])
    assert r10.chi().tobytes() == hyp_run.chi().tobytes()
    for a, b in zip(hyp_run.B_prime, r10.B_prime):
        assert np.allclose(b, 10 * a, rtol=1e-12, atol=0)


def test_linearity(hyp_run):
    u, w = hyp_run.vectors[:2]
    lhs = hyp_run.h_for(-1.7 * u + w)
    rhs = -1.7 * hyp_run.h[0] + hyp_run.h[1]
    assert np.max(np.abs(lhs - rhs)) <= 1e-8


def test_residual_exceeded_reports_worst():
    rep = MatrixRep.from_generator(HYP)
    with pytest.raises(ResidualExceeded) as err:
        factorize(rep, [np.array([1.0, 0.0])], tol=1e-15)
    assert err.value.worst is not None


def test_action_only_rep_rejected():
    rep = MatrixRep(dim=1, action=lambda t: np.eye(1))
    with pytest.raises(ValueError):
        factorize(rep, [np.array([1.0])])
