"""Bounded factorization on the real line: B = Pi(chi)(B') with one kernel chi.

Pipeline for a finite family B under t -> exp(tM):

  1. lambda above the exponential type of every orbit (rounded up to 1/64),
  2. Fourier-Laplace transforms of the split orbits on the lines Im z = +-(lambda + j),
     giving the decay table C_k and a growth function tau,
  3. sigma below tau, the multiplier Q with zeros at +-i(Lambda + t_k), Lambda = lambda + margin,
  4. h^v = Q(i d/dt)(phi_+ gamma_v) + Q(i d/dt)(phi_- gamma_v), by Leibniz with exact jets
     of phi_+ and gamma^{(k)} = M^k gamma,
  5. checks: gamma = chi * h, v = int chi(-t) h(t) dt, pi(t) h(0) = h(t).

Fourier convention F(f)(xi) = int f(t) e^{i xi t} dt, so multiplication by z is i d/dt.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.signal import fftconvolve
from scipy.special import comb

from .entireq import StripEntire, build_q
from .repmodel import MatrixRep, exp_type_estimate, uniform_grid
from .weights import Tau, WeightFunction, build_sigma, log_grid

__all__ = [
    "SplitPair",
    "LaplaceData",
    "FactorResult",
    "InsufficientDamping",
    "ResidualExceeded",
    "laplace_transform",
    "build_tau",
    "factorize",
    "simultaneity_check",
]

LAMBDA_STEP = 1.0 / 64
K_CAP = 64


class InsufficientDamping(ValueError):
    pass


class ResidualExceeded(ValueError):
    def __init__(self, msg, worst=None):
        super().__init__(msg)
        self.worst = worst


# ---------------------------------------------------------------- partition of unity


def _series_exp(a: np.ndarray) -> np.ndarray:
    """Taylor coefficients of exp(a(eps)) from those of a (rows = orders)."""
    e = np.zeros_like(a)
    e[0] = np.exp(a[0])
    for n in range(1, len(a)):
        e[n] = sum(k * a[k] * e[n - k] for k in range(1, n + 1)) / n
    return e


def _series_recip(b: np.ndarray) -> np.ndarray:
    r = np.zeros_like(b)
    r[0] = 1.0 / b[0]
    for n in range(1, len(b)):
        r[n] = -sum(b[k] * r[n - k] for k in range(1, n + 1)) / b[0]
    return r


def _series_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    out = np.zeros_like(a)
    for n in range(len(a)):
        out[n] = sum(a[k] * b[n - k] for k in range(n + 1))
    return out


def smoothstep_jets(x, order: int) -> np.ndarray:
    """Derivatives 0..order of s(x) = 1 / (1 + exp(1/x - 1/(1-x))) on (0, 1), 0 left, 1 right."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    out = np.zeros((order + 1, x.size))
    out[0, x >= 1] = 1.0
    inside = (x > 0) & (x < 1)
    if not inside.any():
        return out
    xi = x[inside]
    n = np.arange(order + 1)[:, None]
    g = (-1.0) ** n / xi ** (n + 1) - 1.0 / (1 - xi) ** (n + 1)
    s = np.empty_like(g)
    pos = g[0] >= 0
    # pick the branch whose exponential stays <= 1
    if pos.any():
        f = _series_exp(-g[:, pos])
        one_plus = f.copy()
        one_plus[0] += 1
        s[:, pos] = _series_mul(f, _series_recip(one_plus))
    if (~pos).any():
        e = _series_exp(g[:, ~pos])
        e[0] += 1
        s[:, ~pos] = _series_recip(e)
    fact = np.array([math.factorial(k) for k in range(order + 1)], dtype=float)[:, None]
    out[:, inside] = s * fact
    return out


@dataclass(frozen=True)
class SplitPair:
    """phi_+ (t) = s(t + 1), phi_- = 1 - phi_+; supports [-1, oo) and (-oo, 0]."""

    def plus(self, t, order: int = 0) -> np.ndarray:
        return smoothstep_jets(np.asarray(t, dtype=float) + 1.0, order)

    def minus(self, t, order: int = 0) -> np.ndarray:
        j = -self.plus(t, order)
        j[0] += 1.0
        return j


# ---------------------------------------------------------------- transforms on shifted lines


@dataclass(frozen=True, eq=False)
class LaplaceData:
    lam: float
    offsets: tuple  # the lines Im z = +-(lam + j)
    xis: np.ndarray
    F_plus: np.ndarray  # (line, vector, xi, component)
    F_minus: np.ndarray
    C: np.ndarray  # C_k for k = 0..k_max
    edge_mass: float

    def to_json(self) -> dict:
        return {
            "lambda": self.lam,
            "lines": [self.lam + j for j in self.offsets],
            "band": float(self.xis.max()) if self.xis.size else 0.0,
            "C_k": [float(c) for c in self.C],
            "edge_mass": self.edge_mass,
        }


def _line_transform(values: np.ndarray, ts: np.ndarray):
    """Trapezoid (= rectangle for decayed ends) of f(t) e^{i xi t} at the FFT frequencies."""
    n = len(ts)
    h = float(ts[1] - ts[0])
    xis = 2 * np.pi * np.fft.fftfreq(n, d=h)
    spec = n * np.fft.ifft(values, axis=0)
    return xis, h * spec * np.exp(1j * xis * ts[0])[:, None]


def laplace_transform(
    rep: MatrixRep,
    B: Sequence,
    lam: float,
    ts,
    split: SplitPair = SplitPair(),
    band: float = 50.0,
    k_max: int = 12,
    offsets: Sequence[int] = (0, 1, 2),
    edge_tol: float = 1e-3,
) -> LaplaceData:
    """F^v on Im z = lam + j (phi_+ part) and Im z = -(lam + j) (minus phi_- part).

    C_k is the sup over vectors, lines and |Re z| <= band of (1 + |Re z|)^k ||F^v(z)||.
    """
    ts = np.asarray(ts, dtype=float)
    pp = split.plus(ts)[0][:, None]
    pm = split.minus(ts)[0][:, None]
    Fp, Fm = [], []
    edge = 0.0
    xis = None
    for j in offsets:
        mu = lam + j
        dp, dm = np.exp(-mu * ts)[:, None], np.exp(mu * ts)[:, None]
        rowp, rowm = [], []
        for v in B:
            g = rep.orbit_samples(v, ts)
            fp, fm = dp * pp * g, dm * pm * g
            edge = max(edge, float(np.linalg.norm(fp[-1])), float(np.linalg.norm(fm[0])))
            xis, sp = _line_transform(fp, ts)
            _, sm = _line_transform(fm, ts)
            rowp.append(sp)
            rowm.append(-sm)
        Fp.append(rowp)
        Fm.append(rowm)
    if edge > edge_tol:
        raise InsufficientDamping(f"damped orbit has mass {edge:.3g} at the window edge")
    if xis is None or not len(B):
        return LaplaceData(lam, tuple(offsets), np.zeros(0), np.zeros(0), np.zeros(0), np.zeros(k_max + 1), 0.0)
    keep = np.abs(xis) <= band
    order = np.argsort(xis[keep])
    xis = xis[keep][order]
    Fp = np.asarray(Fp)[:, :, keep][:, :, order]
    Fm = np.asarray(Fm)[:, :, keep][:, :, order]
    norms = np.maximum(np.linalg.norm(Fp, axis=-1).max(axis=(0, 1)), np.linalg.norm(Fm, axis=-1).max(axis=(0, 1)))
    C = np.array([float(np.max((1 + np.abs(xis)) ** k * norms)) for k in range(k_max + 1)])
    return LaplaceData(lam, tuple(offsets), xis, Fp, Fm, C, edge)


def build_tau(C, label: str = "tau") -> Tau:
    """tau(t) = max_{k < min(t, k_max)} (k log(1+t) - log C_k), clamped at 0."""
    C = np.asarray(C, dtype=float)
    k_max = len(C) - 1
    logC = np.log(np.where(C > 0, C, 1.0))

    def fn(t):
        t = np.asarray(t, dtype=float)
        best = np.zeros(t.shape)
        for k in range(k_max):
            val = k * np.log1p(np.maximum(t, 0)) - logC[k]
            best = np.where(t > k, np.maximum(best, val), best)
        return best

    return Tau(fn, label)


def _normalize_tau(tau: Tau, t_max: float) -> tuple[Tau, float]:
    """Shift tau so that min_{t >= e} (tau(t) - log t) = 0 on the weight grid."""
    grid = log_grid(math.e, t_max)
    c = float(np.max(np.log(grid) - tau(grid)))
    return tau.shifted(c), c


# ---------------------------------------------------------------- the factorization


def _h_operators(q: StripEntire, M: np.ndarray) -> list:
    """P_l = sum_{j >= l} c_j i^j C(j, l) M^{j-l}, so Q(i d/dt)(phi g) = sum_l phi^{(l)} P_l g."""
    c = q.coefficients()
    d = M.shape[0]
    powers = [np.eye(d)]
    for _ in range(len(c)):
        powers.append(powers[-1] @ M)
    ops = []
    for l in range(len(c)):
        P = np.zeros((d, d))
        for j in range(l + l % 2, len(c), 2):  # only even powers occur in Q
            P = P + c[j] * (-1) ** (j // 2) * comb(j, l, exact=True) * powers[j - l]
        ops.append(P)
    return ops


def compute_h(rep: MatrixRep, q: StripEntire, v, ts, split: SplitPair = SplitPair()) -> np.ndarray:
    """h^v on ts as the sum of Q(i d/dt) applied to the two halves phi_+- gamma_v."""
    if rep.generator is None:
        raise ValueError("the time-domain h formula needs a generator")
    ts = np.asarray(ts, dtype=float)
    ops = _h_operators(q, rep.generator)
    jp = split.plus(ts, len(ops) - 1)
    jm = split.minus(ts, len(ops) - 1)
    g = rep.orbit_samples(v, ts)
    hp = np.zeros_like(g)
    hm = np.zeros_like(g)
    for l, P in enumerate(ops):
        Pg = g @ P.T
        hp += jp[l][:, None] * Pg
        hm += jm[l][:, None] * Pg
    return hp + hm


def h_from_lines(data: LaplaceData, q: StripEntire, t, index: int = 0) -> np.ndarray:
    """The two-line inverse transform of Q F^v at the points t (cross-check, band-limited)."""
    lam = data.lam
    xis = data.xis
    dxi = float(xis[1] - xis[0])
    Fp, Fm = data.F_plus[0, index], data.F_minus[0, index]
    Qp, Qm = q(xis + 1j * lam)[:, None], q(xis - 1j * lam)[:, None]
    out = []
    for s in np.atleast_1d(t):
        ph = np.exp(-1j * s * xis)[:, None]
        a = np.exp(lam * s) / (2 * np.pi) * np.sum(Qp * Fp * ph, axis=0) * dxi
        b = np.exp(-lam * s) / (2 * np.pi) * np.sum(Qm * Fm * ph, axis=0) * dxi
        out.append((a - b).real)
    return np.array(out)


@dataclass(eq=False)
class FactorResult:
    rep: MatrixRep
    vectors: list
    ts: np.ndarray
    lam: float = 0.0
    strip: float = 0.0
    q: Optional[StripEntire] = None
    sigma: Optional[WeightFunction] = None
    laplace: Optional[LaplaceData] = None
    tau_shift: float = 0.0
    h: list = field(default_factory=list)
    residuals: dict = field(default_factory=dict)
    certificates: dict = field(default_factory=dict)
    K_history: list = field(default_factory=list)

    @property
    def B_prime(self) -> list:
        i0 = int(np.argmin(np.abs(self.ts)))
        return [hv[i0] for hv in self.h]

    def chi(self, t=None, deriv: int = 0) -> np.ndarray:
        return self.q.chi(self.ts if t is None else t, deriv)

    def h_for(self, v) -> np.ndarray:
        """h for another vector with the same chi (used for linearity)."""
        return compute_h(self.rep, self.q, v, self.ts)

    def to_json(self) -> dict:
        if self.q is None:
            return {"vectors": 0, "residuals": self.residuals, "note": "empty family"}
        return {
            "vectors": [np.asarray(v).tolist() for v in self.vectors],
            "lambda": self.lam,
            "strip_budget": self.strip,
            "window": [float(self.ts[0]), float(-self.ts[0])],
            "grid_points": len(self.ts),
            "sigma": self.sigma.to_json(),
            "tau_shift": self.tau_shift,
            "laplace": self.laplace.to_json(),
            "Q": self.q.to_json(),
            "chi_weights": [float(a) for a in self.q.chi_weights()],
            "B_prime": [b.tolist() for b in self.B_prime],
            "residuals": self.residuals,
            "certificates": self.certificates,
            "K_history": self.K_history,
        }


def _lambda_for(rep: MatrixRep, B, est_window: float) -> tuple[float, list]:
    lams = [exp_type_estimate(rep, v, est_window) for v in B]
    lam_orb = max(lams)
    return math.ceil(lam_orb / LAMBDA_STEP) * LAMBDA_STEP + 1.0, lams


def _kink_correction(q: StripEntire, M: np.ndarray, hv: np.ndarray, step: float, extra: int = 2) -> np.ndarray:
    """Euler-Maclaurin terms for the derivative jumps of s -> chi(t - s) h(s) at the node s = t.

    chi^{(i)} jumps by -2 chi^{(i)}(0+) for odd i >= 2K - 1; h^{(k)} = M^k h.
    """
    from scipy.special import bernoulli

    K = q.K
    top = 2 * K - 1 + 2 * extra
    bern = bernoulli(top + 1)
    out = np.zeros_like(hv)
    for j in range(K, K + extra + 1):
        m = 2 * j - 1
        jump = np.zeros_like(hv)
        for i in range(2 * K - 1, m + 1, 2):
            ci = float(q.chi(np.array([1e-300]), i)[0])
            jump += comb(m, i, exact=True) * (-1) ** i * (-2 * ci) * (hv @ np.linalg.matrix_power(M, m - i).T)
        out += bern[2 * j] * step ** (2 * j) / math.factorial(2 * j) * jump
    return out


def _residuals(rep, q, B, H, ts, inner: float = 0.6) -> dict:
    h = float(ts[1] - ts[0])
    n = len(ts)
    offs = h * np.arange(-(n - 1), n)
    kern = q.chi(offs)
    w = np.full(n, h)
    w[0] = w[-1] = h / 2
    inside = np.abs(ts) <= inner * abs(ts[0])
    i0 = int(np.argmin(np.abs(ts)))
    r1 = r2 = r3 = 0.0
    worst = {}
    for idx, (v, hv) in enumerate(zip(B, H)):
        gamma = rep.orbit_samples(v, ts)
        conv = np.stack([fftconvolve(kern, w * hv[:, c], mode="valid") for c in range(hv.shape[1])], axis=1)
        # 'valid' of length 2n-1 against n gives n values aligned with ts
        conv = conv + _kink_correction(q, rep.generator, hv, h)
        e1 = float(np.max(np.linalg.norm(gamma - conv, axis=1)[inside]))
        e2 = float(np.linalg.norm(np.asarray(v, float) - conv[i0]))
        e3 = float(np.max(np.linalg.norm(rep.orbit_samples(hv[i0], ts) - hv, axis=1)))
        if e1 > r1:
            worst["residual1"] = idx
        if e2 > r2:
            worst["residual2"] = idx
        r1, r2, r3 = max(r1, e1), max(r2, e2), max(r3, e3)
    return {"residual1": r1, "residual2": r2, "orbit_identity": r3, "worst_vector": worst}


def _chi_certificate(q: StripEntire, ts) -> dict:
    mu = (q.strip + math.e) / 2
    out = {"mu": mu, "smoothness": 2 * q.K - 2}
    if 2 * q.K - 2 < 2:
        raise ResidualExceeded("chi is not C^2 with a single zero pair")
    for d in (0, 1, 2):
        _, C = q.chi_decay_bound(mu, d)
        t = ts[ts != 0] if d else ts
        sup = float(np.max(np.exp(mu * np.abs(t)) * np.abs(q.chi(t, d))))
        if not sup <= C * (1 + 1e-9):
            raise ResidualExceeded(f"chi derivative {d} breaks its decay bound", {"deriv": d})
        out[f"deriv{d}"] = {"grid_sup": sup, "analytic_bound": C}
    return out


def _fourier_identity(q: StripEntire, xis) -> float:
    xis = np.asarray(xis, dtype=float)
    A, r = q.chi_weights(), np.array(q.rhos)
    chi_hat = (A[None, :] / (r[None, :] ** 2 + xis[:, None] ** 2)).sum(axis=1)
    return float(np.max(np.abs(chi_hat * q(xis).real - 1)))


def factorize(
    rep: MatrixRep,
    B: Sequence,
    window: float = 8.0,
    n: int = 2**14,
    tol: float = 1e-6,
    margin: float = 3.0,
    est_window: float = 5.0,
    t_max: float = 1e6,
    k_max: int = 12,
    band: float = 50.0,
    edge_tol: float = 1e-2,
    max_rho_step: float = 0.25,
) -> FactorResult:
    ts = uniform_grid(window, n)
    B = [np.asarray(v, dtype=float) for v in B]
    if not B:
        return FactorResult(rep=rep, vectors=[], ts=ts, residuals={"residual1": 0.0, "residual2": 0.0, "orbit_identity": 0.0})
    if rep.generator is None:
        raise ValueError("factorize needs a representation with a generator")
    lam, lams = _lambda_for(rep, B, est_window)
    # C_k is taken over the normalized family so chi does not depend on the scale of B
    peak = max(float(np.linalg.norm(v)) for v in B)
    unit = [v / peak for v in B] if peak > 0 else B
    data = laplace_transform(rep, unit, lam, ts, band=band, k_max=k_max, edge_tol=edge_tol)
    tau, shift = _normalize_tau(build_tau(data.C), t_max)
    sigma = build_sigma([tau], t_max=t_max)
    strip = lam + margin
    h_step = float(ts[1] - ts[0])
    usable = [t for t in sigma.jumps if (strip + t) * h_step <= max_rho_step]
    k_avail = len(usable)
    if k_avail == 0:
        raise ResidualExceeded("no zero of Q is resolved by the grid")
    history = []
    K = 1
    while True:
        k_try = min(K, k_avail, K_CAP)
        q = build_q(sigma, strip, k_try, strips=[s for s in (1.0, 2.0, 3.0, lam) if s <= strip])
        H = [compute_h(rep, q, v, ts) for v in B]
        res = _residuals(rep, q, B, H, ts)
        try:
            cert = _chi_certificate(q, ts)
            ok_cert = True
        except ResidualExceeded:
            cert, ok_cert = {}, False
        passed = ok_cert and res["residual1"] <= tol and res["residual2"] <= tol
        history.append({"K": k_try, "residual1": res["residual1"], "chi_certificate": ok_cert})
        if passed or k_try >= min(k_avail, K_CAP):
            break
        K *= 2
    result = FactorResult(
        rep=rep,
        vectors=B,
        ts=ts,
        lam=lam,
        strip=strip,
        q=q,
        sigma=sigma,
        laplace=data,
        tau_shift=shift,
        h=H,
        residuals=res,
        certificates={
            "lambda_orbit": lams,
            "chi_decay": cert,
            "fourier_identity": _fourier_identity(q, np.linspace(-band, band, 2001)),
        },
        K_history=history,
    )
    bad = [k for k in ("residual1", "residual2", "orbit_identity") if res[k] > tol]
    if not ok_cert:
        raise ResidualExceeded("chi decay certificate failed", result)
    if bad:
        raise ResidualExceeded(
            f"{', '.join(bad)} above {tol:g} (worst vector {res['worst_vector']})", result
        )
    return result


def simultaneity_check(result: FactorResult) -> dict:
    """One chi for the whole family, the largest residual, and the size of B'."""
    if len(result.vectors) < 2:
        raise ValueError("simultaneity needs at least two vectors")
    bp = result.B_prime
    return {
        "vectors": len(result.vectors),
        "single_chi": True,
        "zeros_imag": [float(r) for r in result.q.rhos],
        "max_residual": max(result.residuals[k] for k in ("residual1", "residual2", "orbit_identity")),
        "B_prime_bound": max(float(np.linalg.norm(b)) for b in bp),
    }
