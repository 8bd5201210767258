import numpy as np
import pytest

from dmfactor.coords import build_chart
from dmfactor.factor1d import ResidualExceeded
from dmfactor.factorgroup import (
    SeparableKernel,
    apply_iterated,
    coordinate_sum,
    exp_sqrt_kernel,
    iterate_factorization,
    one_param_rep,
    pushforward_and_verify,
    pushforward_membership,
    tensor_phi,
    weighted_suprema,
)
from dmfactor.fixtures import load_fixture
from dmfactor.liealg import from_brackets
from dmfactor.repmodel import uniform_grid


def unit_vectors(rng, k, d):
    v = rng.normal(size=(k, d))
    return [x / np.linalg.norm(x) for x in v]


@pytest.fixture(scope="module")
def axb():
    return build_chart(load_fixture("axb"))


@pytest.fixture(scope="module")
def h3():
    return build_chart(load_fixture("heisenberg"))


@pytest.fixture(scope="module")
def h3_run(h3):
    B = unit_vectors(np.random.default_rng(11), 3, 3)
    per_axis = iterate_factorization(h3, B)
    return B, per_axis, pushforward_and_verify(h3, B, per_axis)


# ---- one-parameter pieces


def test_one_param_rep_zero_direction(h3):
    rep = one_param_rep(h3, [0, 0, 0])
    assert np.array_equal(rep(2.5), np.eye(3))


def test_one_param_rep_center_of_h3(h3):
    m = one_param_rep(h3, "Z")(1.75)
    ref = np.eye(3)
    ref[0, 2] = 1.75
    assert np.allclose(m, ref, atol=1e-15)


def test_one_param_rep_axb_scaling(axb):
    assert np.allclose(one_param_rep(axb, "A")(0.6), np.diag([np.exp(0.6), 1.0]), rtol=1e-14)


def test_one_param_rep_is_homomorphism(axb, rng):
    assert one_param_rep(axb, "N").homomorphism_defect(rng) <= 1e-9


# ---- tensor kernels


def gauss(c):
    return lambda t, d=0: np.exp(-c * t * t) if d == 0 else (-2 * c * t) * np.exp(-c * t * t)


def test_tensor_single_axis_is_the_kernel():
    k = tensor_phi([gauss(1.0)])
    ts = np.linspace(-3, 3, 41)
    assert np.array_equal(k(ts[:, None]), gauss(1.0)(ts))


def test_tensor_matches_pointwise_product(rng):
    k = tensor_phi([gauss(0.5), gauss(2.0)])
    ax = np.linspace(-4, 4, 161)
    grid = k.sample([ax, ax])
    for _ in range(100):
        i, j = rng.integers(0, len(ax), 2)
        assert abs(grid[i, j] - gauss(0.5)(ax[i]) * gauss(2.0)(ax[j])) <= 1e-12


def test_tensor_with_zero_factor():
    k = tensor_phi([gauss(1.0), lambda t, d=0: np.zeros_like(t)])
    assert not np.any(k.sample([np.linspace(-1, 1, 5)] * 2))


# ---- iteration


def test_abelian_two_axes_match_tensor_sum(rng):
    ch = build_chart(load_fixture("abelian"))
    B = unit_vectors(rng, 2, 2)
    per_axis = iterate_factorization(ch, B)
    ts = uniform_grid(8.0, 2**14)
    kern = tensor_phi([r.q for _, r in per_axis])
    ax = uniform_grid(8.0, 2**12)
    for v, vp in zip(B, per_axis[-1][1].B_prime):
        assert np.linalg.norm(v - apply_iterated(ch, per_axis, vp, ts)) <= 1e-6
        # explicit 2-D sum with pi(x) = diag(e^{x1}, e^{x2})
        h = ax[1] - ax[0]
        w = np.full(len(ax), h)
        w[0] = w[-1] = h / 2
        phi = kern.sample([ax, ax]) * np.outer(w, w)
        direct = np.array([np.sum(phi * np.exp(ax)[:, None]) * vp[0], np.sum(phi * np.exp(ax)[None, :]) * vp[1]])
        assert np.allclose(direct, coordinate_sum(ch, kern, vp, ax), rtol=1e-12)


def test_fixed_vector_reduces_to_trivial_case():
    alg = from_brackets(2, [], ["P", "Q"], matrix_model=[[[1, 0, 0], [0, 0, 0], [0, 0, 0]], [[0, 0, 0], [0, 1, 0], [0, 0, 0]]])
    ch = build_chart(alg)
    v = np.array([0.0, 0.0, 1.0])
    per_axis = iterate_factorization(ch, [v])
    for _, r in per_axis:
        assert np.allclose(r.h[0], v, atol=1e-12)
    res = pushforward_and_verify(ch, [v], per_axis)
    assert np.allclose(res.reconstructed[0], v, atol=1e-9)


def test_h3_single_vector_three_axes(h3):
    v = np.ones(3)
    per_axis = iterate_factorization(h3, [v])
    assert [k for k, _ in per_axis] == [0, 1, 2]
    ts = uniform_grid(8.0, 2**14)
    assert np.linalg.norm(v - apply_iterated(h3, per_axis, per_axis[-1][1].B_prime[0], ts)) <= 1e-6


def test_reversed_order_also_reconstructs(h3):
    B = unit_vectors(np.random.default_rng(5), 2, 3)
    per_axis = iterate_factorization(h3, B, order=[2, 1, 0])
    ts = uniform_grid(8.0, 2**14)
    for v, vp in zip(B, per_axis[-1][1].B_prime):
        assert np.linalg.norm(v - apply_iterated(h3, per_axis, vp, ts)) <= 1e-6
    with pytest.raises(ValueError):
        pushforward_and_verify(h3, B, per_axis)


# ---- Pi(chi) v' on the group


def test_axb_reconstruction_and_refinement(axb):
    B = [np.array([1.0, 1.0])]
    per_axis = iterate_factorization(axb, B)
    res = pushforward_and_verify(axb, B, per_axis, check_points=256**2, check_window=6.0)
    assert res.residuals[0] <= 1e-4 and res.agreement <= 1e-6
    # halving the tensor-grid step until the sum settles lands on the same vector
    vp = res.B_prime[0]
    prev = None
    for n in (2**10, 2**11, 2**12, 2**13, 2**14):
        cur = coordinate_sum(axb, res.kernel, vp, uniform_grid(8.0, n))
        if prev is not None and np.linalg.norm(cur - prev) <= 1e-8:
            break
        prev = cur
    assert np.linalg.norm(cur - res.reconstructed[0]) <= 1e-6
    assert np.linalg.norm(cur - B[0]) <= 1e-4 * np.linalg.norm(B[0])


def test_h3_three_vectors(h3_run):
    B, per_axis, res = h3_run
    assert len({id(r.q) for _, r in per_axis}) == 3
    assert max(res.residuals) <= 1e-4
    assert res.agreement <= 1e-6
    for rows in res.certificate["by_operator"].values():
        assert rows["1.0"]["verdict"] == "finite"


def test_h3_report_is_serializable(h3_run):
    import json

    doc = res_json = h3_run[2].to_json()
    assert json.loads(json.dumps(doc)) == res_json
    assert doc["order"] == ["t1", "t2", "s1"]


def test_left_translation_invariance_axb(axb):
    # int f(g0 Phi(x)) dx = int f(Phi(x)) dx with Lebesgue measure in coordinates
    f = lambda t, s: np.exp(-2 * t**2 - (s - 0.3) ** 2)
    # the s-window is wide because the shift e^{-t} s0 grows for negative t
    at, as_ = uniform_grid(10.0, 800), uniform_grid(40.0, 3200)
    T, S = np.meshgrid(at, as_, indexing="ij")
    h = (at[1] - at[0]) * (as_[1] - as_[0])
    base = f(T, S).sum() * h
    for t0, s0 in [(0.4, -0.7), (-1.1, 0.5)]:
        # Phi(t0, s0) Phi(t, s) has coordinates (t0 + t, s + e^{-t} s0)
        shifted = f(t0 + T, S + np.exp(-T) * s0).sum() * h
        assert shifted == pytest.approx(base, rel=1e-9)


def test_tail_too_fat_is_reported(axb):
    B = [np.array([1.0, 1.0])]
    per_axis = iterate_factorization(axb, B)
    from dmfactor.repmodel import TailTooFat

    with pytest.raises(TailTooFat):
        pushforward_and_verify(axb, B, per_axis, window=0.5, n=2**10)


def test_loose_tolerance_violation(axb):
    B = [np.array([1.0, 1.0])]
    per_axis = iterate_factorization(axb, B)
    with pytest.raises(ResidualExceeded):
        pushforward_and_verify(axb, B, per_axis, tol=1e-18)


# ---- pushforward membership


def test_zero_kernel_gives_zero_suprema(axb):
    zero = SeparableKernel((lambda t, d: np.zeros_like(t),) * 2, (1.0, 1.0))
    table = weighted_suprema(axb, zero, [1.0, 5.0], fields=axb.labels)
    for rows in table["by_operator"].values():
        for r in rows.values():
            assert r["sups"] == [0.0, 0.0, 0.0]


def test_axb_left_A_field_finite_below_one(axb):
    f = exp_sqrt_kernel(2, 2.0)
    table = weighted_suprema(axb, f, [0.25, 0.5, 1.0], fields=["A"])
    assert axb.pullback_left("A").format(["a", "n"]) == "d_a + [(-n)]d_n"
    for r in table["by_operator"]["A"].values():
        assert r["verdict"] == "finite"


@pytest.mark.parametrize("name", ["axb", "heisenberg"])
def test_membership_ladder(name):
    ch = build_chart(load_fixture(name))
    rep = pushforward_membership(ch, beta=3.0, ladder=(0.5, 1.5, 3.5, 4.5))
    for lam, s in rep["summary"].items():
        if float(lam) < rep["budget"]:
            assert s["all_finite"]
        if float(lam) > 3.0:
            assert s["any_diverging"]
    # divergence shows up as monotone growth with the window
    sups = rep["table"]["by_operator"]["Id"]["4.5"]["sups"]
    assert sups[0] < sups[1] < sups[2]
