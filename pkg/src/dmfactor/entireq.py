"""The entire multiplier Q, its strip certificates, and the kernel with transform 1/Q.

Q(z) = prod_{k<=K} (1 + z^2 / rho_k^2) with rho_k = Lambda + t_k, where t_k
are the jumps of a weight sigma.  Each zero pair sits at +-i rho_k, outside
the budget strip |Im z| <= Lambda, and Q >= 1 on the real line.

Every zero pair adds about 2 log|x| to log|Q(x)| past rho_k, so log|Q| tracks
omega = 2 sigma (itself a weight function) and the strip bounds

    inf e^{-a omega(Re z)} |Q(z)| > 0,    sup e^{-omega(Re z)} |Q(z)| < oo

are certified against omega.

Fourier convention: F(f)(xi) = int f(t) e^{i xi t} dt.  The kernel chi with
F(chi) = 1/Q is a finite sum of two-sided exponentials (partial fractions):

    chi(t) = sum_k A_k e^{-rho_k |t|} / (2 rho_k),
    A_k = rho_k^2 prod_{j != k} rho_j^2 / (rho_j^2 - rho_k^2).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .weights import WeightFunction

__all__ = [
    "StripEntire",
    "BoundCertificateFailed",
    "build_q",
    "silva_seminorm",
    "mollifier",
    "mollifier_threshold",
]

WEIGHT_MULTIPLE = 2.0


class BoundCertificateFailed(ValueError):
    def __init__(self, msg, witness=None):
        super().__init__(msg)
        self.witness = witness


@dataclass(frozen=True, eq=False)
class StripEntire:
    strip: float  # Lambda
    rhos: tuple
    sigma: WeightFunction
    a_fit: float = 1.0
    a_lower: float = 1.0
    K_requested: int = 0
    certificates: dict = field(default_factory=dict)

    @property
    def K(self) -> int:
        return len(self.rhos)

    def omega(self, t):
        """The weight the strip bounds are certified against."""
        return WEIGHT_MULTIPLE * self.sigma(t)

    def __call__(self, z):
        z = np.asarray(z, dtype=complex)
        out = np.ones_like(z)
        for r in self.rhos:
            out = out * (1 + (z / r) ** 2)
        return out

    def log_abs(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=complex)
        out = np.zeros(z.shape)
        for r in self.rhos:
            out = out + np.log(np.abs(1 + (z / r) ** 2))
        return out

    def inv(self, z):
        return 1.0 / self(z)

    # ---- polynomial view (for Q(i d/dt) style operators)

    def coefficients(self) -> np.ndarray:
        """c_j with Q(z) = sum_j c_j z^j (ascending)."""
        c = np.array([1.0])
        for r in self.rhos:
            c = np.convolve(c, np.array([1.0, 0.0, 1.0 / r**2]))
        return c

    # ---- the kernel chi with F(chi) = 1/Q

    def chi_weights(self) -> np.ndarray:
        r2 = np.array(self.rhos) ** 2
        A = np.empty(self.K)
        for k in range(self.K):
            others = np.delete(r2, k)
            A[k] = r2[k] * np.prod(others / (others - r2[k]))
        return A

    def chi(self, t, deriv: int = 0) -> np.ndarray:
        """chi^{(deriv)}(t); smooth across 0 for deriv <= 2K - 2."""
        if self.K == 0:
            raise ValueError("Q = 1 has no kernel function (its kernel is the Dirac mass)")
        t = np.asarray(t, dtype=float)
        A = self.chi_weights()
        out = np.zeros(t.shape)
        sgn = np.sign(t)
        for a, r in zip(A, self.rhos):
            out = out + a / (2 * r) * (-r * sgn) ** deriv * np.exp(-r * np.abs(t))
        return out

    def chi_decay_bound(self, mu: Optional[float] = None, deriv: int = 0) -> tuple[float, float]:
        """(mu, C) with e^{mu |t|} |chi^{(deriv)}(t)| <= C for all t."""
        if mu is None:
            mu = self.rhos[0] if self.K else math.inf
        if self.K == 0 or mu > min(self.rhos):
            raise BoundCertificateFailed("decay rate exceeds the nearest zero of Q")
        A = self.chi_weights()
        return mu, float(sum(abs(a) * r ** (deriv - 1) / 2 for a, r in zip(A, self.rhos)))

    def decay_constant(self) -> float:
        """C with (1+|x|)^{2K} / |Q(x+iy)| <= C on |y| <= Lambda (analytic bound)."""
        c = 1.0
        for r in self.rhos:
            c *= 2 * r**2 * max(1.0, 1.0 / (r - self.strip) ** 2)
        return c

    def to_json(self) -> dict:
        return {
            "strip_budget": self.strip,
            "K": self.K,
            "K_requested": self.K_requested,
            "zeros_imag": [float(r) for r in self.rhos],
            "a_fit": self.a_fit,
            "a_lower": self.a_lower,
            "weight_multiple": WEIGHT_MULTIPLE,
            "certificates": self.certificates,
            "note": "strip-budget multiplier: zero-free on |Im z| <= strip_budget only",
        }


def _strip_lines(n: float, count: int = 5) -> np.ndarray:
    return np.linspace(-n, n, count)


def build_q(
    sigma: WeightFunction,
    strip: float,
    K: int,
    window: float = 200.0,
    strips: Sequence[float] = (),
    npts: int = 4001,
) -> StripEntire:
    """Strip-budget multiplier with certificates on |Re z| <= window.

    K is clamped to the number of stored jumps (reported as K vs K_requested).
    """
    if strip <= 0:
        raise ValueError("strip budget must be positive")
    if K < 0:
        raise ValueError("K must be nonnegative")
    k_eff = min(int(K), len(sigma.jumps))
    rhos = tuple(float(strip + t) for t in sigma.jumps[:k_eff])
    q = StripEntire(strip=float(strip), rhos=rhos, sigma=sigma, K_requested=int(K))
    xs = np.linspace(-window, window, npts)
    certs: dict = {}

    # real axis: Q >= 1 exactly factorwise; grid confirms
    qx = q.log_abs(xs)
    if np.any(qx < -1e-12):
        raise BoundCertificateFailed("|Q| < 1 on the real axis", float(xs[np.argmin(qx)]))
    certs["real_axis_min_abs_Q"] = float(np.exp(qx.min()))

    om = q.omega(np.abs(xs))
    mask = om > 0
    if k_eff == 0:
        if np.any(mask):
            raise BoundCertificateFailed("Q = 1 cannot dominate a nonzero weight", float(xs[np.argmax(mask)]))
        a_fit = a_lower = 1.0
    else:
        if not np.any(mask):
            raise BoundCertificateFailed("weight vanishes on the calibration window")
        a_fit = float(qx[mask] @ om[mask] / (om[mask] @ om[mask]))
        a_lower = float(np.min(qx[mask] / om[mask]))
        if not 0 < a_fit <= 1:
            raise BoundCertificateFailed(f"fitted exponent {a_fit:.4f} outside (0, 1]")
    strips = sorted(set(list(strips) + [strip]))
    per_strip = {}
    for n in strips:
        if n > strip:
            raise BoundCertificateFailed(f"strip {n} exceeds the budget {strip}")
        lower, upper = math.inf, 0.0
        decay = 0.0
        for y in _strip_lines(n):
            z = xs + 1j * y
            lq = q.log_abs(z)
            if not np.all(np.isfinite(lq)):
                raise BoundCertificateFailed("Q vanishes on the strip", complex(z[np.argmin(np.isfinite(lq))]))
            lower = min(lower, float(np.min(np.exp(lq - a_fit * om))))
            upper = max(upper, float(np.max(np.exp(lq - om))))
            decay = max(decay, float(np.max(np.exp(2 * k_eff * np.log1p(np.abs(xs)) - lq))))
        if not (lower > 0 and math.isfinite(upper)):
            raise BoundCertificateFailed(f"strip bounds fail on |Im z| <= {n}")
        per_strip[str(n)] = {"inf_lower": lower, "sup_upper": upper, "decay_sup": decay}
    certs["strips"] = per_strip
    certs["decay_order"] = 2 * k_eff
    certs["decay_constant"] = q.decay_constant()
    worst = max(v["decay_sup"] for v in per_strip.values())
    if worst > certs["decay_constant"] * (1 + 1e-9):
        raise BoundCertificateFailed("grid decay exceeds the analytic constant")
    certs["window"] = window
    return StripEntire(
        strip=q.strip,
        rhos=rhos,
        sigma=sigma,
        a_fit=a_fit,
        a_lower=a_lower,
        K_requested=int(K),
        certificates=certs,
    )


def silva_seminorm(psi: Callable, k: float, xs, ys=None, cap: float = 1e12) -> float:
    """Grid sup of |psi(z)| (1+|Re z|)^k over |Im z| <= k; inf if it passes ``cap``."""
    xs = np.asarray(xs, dtype=float)
    ys = _strip_lines(k) if ys is None else np.asarray(ys, dtype=float)
    best = 0.0
    for y in ys:
        if abs(y) > k:
            continue
        v = np.abs(psi(xs + 1j * y)) * (1 + np.abs(xs)) ** k
        best = max(best, float(np.max(v)))
    return best if best <= cap else math.inf


def mollifier(q: StripEntire, n: float) -> Callable:
    """phi_n(z) = Q(0) / Q(z / n)."""
    if n < 1:
        raise ValueError("n must be at least 1")
    q0 = q(0.0)
    return lambda z: q0 / q(np.asarray(z, dtype=complex) / n)


def mollifier_threshold(q: StripEntire, eps: float = 0.01, radius: float = 1.0, n_max: int = 10**6) -> int:
    """Smallest integer n with |phi_n(x) - 1| <= eps on |x| <= radius (grid check)."""
    xs = np.linspace(-radius, radius, 201)
    n = 1
    while n <= n_max:
        if np.max(np.abs(mollifier(q, n)(xs) - 1)) <= eps:
            # refine downward by bisection between n/2 and n
            lo = max(1, n // 2)
            while lo < n:
                mid = (lo + n) // 2
                if np.max(np.abs(mollifier(q, mid)(xs) - 1)) <= eps:
                    n = mid
                else:
                    lo = mid + 1
            return n
        n *= 2
    raise ValueError("no mollifier index below n_max meets the tolerance")
