import numpy as np
import pytest
from scipy.linalg import expm

from dmfactor.repmodel import (
    MatrixRep,
    TailTooFat,
    WindowTooSmall,
    exp_type_estimate,
    family_certificate,
    orbit_certificate,
    orbit_derivatives,
    smear,
    translation_rep,
    uniform_grid,
)

GENS = {
    "zero": [[0.0, 0.0], [0.0, 0.0]],
    "rotation": [[0.0, -1.0], [1.0, 0.0]],
    "hyperbolic": [[1.0, 0.0], [0.0, -1.0]],
    "jordan": [[1.0, 1.0], [0.0, 1.0]],
}


@pytest.mark.parametrize("name", list(GENS))
def test_orbit_samples_match_expm(name, rng):
    rep = MatrixRep.from_generator(GENS[name])
    ts = uniform_grid(8, 4096)
    v = rng.normal(size=2)
    o = rep.orbit_samples(v, ts)
    ref = np.stack([expm(t * rep.generator) @ v for t in ts[::101]])
    assert np.abs(o[::101] - ref).max() <= 1e-11 * np.abs(ref).max()


@pytest.mark.parametrize("name", list(GENS))
def test_homomorphism_and_orbit_shift(name, rng):
    rep = MatrixRep.from_generator(GENS[name])
    assert rep.homomorphism_defect(rng) <= 1e-9
    orb = rep.orbit(rng.normal(size=2), 4.0, 800)
    assert np.array_equal(orb.values[400], orb.v)
    # gamma(t + s) = pi(t) gamma(s) on grid intersections
    j = 37
    shifted = orb.values[:-j] @ rep(j * orb.step).T
    np.testing.assert_allclose(shifted, orb.values[j:], atol=1e-8 * np.abs(orb.values).max())


def test_exp_type_examples():
    assert exp_type_estimate(MatrixRep.from_generator(GENS["zero"]), [1.0, 0.0]) == 0
    lam = exp_type_estimate(MatrixRep.from_generator(GENS["hyperbolic"]), [1.0, 1.0], window=5)
    assert 1.0 <= lam <= 1.2
    lam = exp_type_estimate(MatrixRep.from_generator([[0.0, 1.0], [0.0, 0.0]]), [0.3, 1.0], window=10)
    assert lam <= 0.2
    assert exp_type_estimate(MatrixRep.from_generator(GENS["rotation"]), [0.0, 0.0]) == 0


def test_window_too_small():
    # growth like e^{t^2} is not of exponential type and no line fits the log-norm
    rep = MatrixRep(dim=1, action=lambda t: np.array([[np.exp(t * t)]]))
    with pytest.raises(WindowTooSmall):
        exp_type_estimate(rep, [1.0], window=20.0)


def test_orbit_derivatives(rng):
    rep = MatrixRep.from_generator(GENS["hyperbolic"])
    orb = rep.orbit(rng.normal(size=2), 3.0, 600)
    assert orbit_derivatives(orb, 0) is orb.values
    np.testing.assert_allclose(orbit_derivatives(orb, 2), orb.values, atol=1e-14)
    M = rng.normal(size=(3, 3))
    rep = MatrixRep.from_generator(M)
    orb = rep.orbit(rng.normal(size=3), 2.0, 4000)
    h = orb.step
    fd = (orb.values[2:] - orb.values[:-2]) / (2 * h)
    np.testing.assert_allclose(orbit_derivatives(orb, 1)[1:-1], fd, rtol=0, atol=1e-5 * np.abs(fd).max())


def test_family_certificate_shared_constants(rng):
    rep = MatrixRep.from_generator(GENS["hyperbolic"])
    vs = [v / np.linalg.norm(v) for v in rng.normal(size=(4, 2))]
    cert = family_certificate(rep, vs)
    assert cert["lambda"] == max(cert["per_vector_lambda"])
    for v in vs:
        assert orbit_certificate(rep.orbit(v, 5.0, 2001), cert["lambda"]) <= cert["C"]


# ===================== smear =====================


def test_smear_trivial_rep():
    rep = MatrixRep.from_generator(GENS["zero"])
    ts = uniform_grid(10, 4000)
    chi = np.exp(-ts**2)
    out = smear(rep, chi, ts, [2.0, -1.0])
    np.testing.assert_allclose(out, np.sqrt(np.pi) * np.array([2.0, -1.0]), rtol=1e-12)


def test_smear_translation_is_convolution(rng):
    n, h = 64, 0.25
    rep = translation_rep(n, h)
    f = rng.normal(size=n)
    ts = h * np.arange(-20, 21)
    chi = np.exp(-(ts**2))
    out = smear(rep, chi, ts, f, tail_budget=1.0)
    w = np.full(len(ts), h)
    w[0] = w[-1] = h / 2
    ref = np.array([sum(w[j] * chi[j] * f[(i - int(round(ts[j] / h))) % n] for j in range(len(ts))) for i in range(n)])
    np.testing.assert_allclose(out, ref, atol=1e-8)


def test_smear_delta_limit():
    rep = MatrixRep.from_generator(GENS["rotation"])
    v = np.array([1.0, 0.5])
    errs = []
    for width in (0.2, 0.1, 0.05):
        ts = uniform_grid(3, 6000)
        chi = np.exp(-(ts / width) ** 2 / 2) / (width * np.sqrt(2 * np.pi))
        errs.append(np.linalg.norm(smear(rep, chi, ts, v) - v))
    # error O(width^2): halving width quarters the error
    assert errs[1] / errs[0] == pytest.approx(0.25, rel=0.05)
    assert errs[2] / errs[1] == pytest.approx(0.25, rel=0.05)


def test_tail_too_fat():
    rep = MatrixRep.from_generator(GENS["zero"])
    ts = uniform_grid(1, 100)
    with pytest.raises(TailTooFat):
        smear(rep, np.ones(100), ts, [1.0, 0.0])
