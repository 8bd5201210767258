"""Finite-dimensional representations, orbit maps and the smeared action.

For G = R a representation is t -> exp(tM) (or any callable action); for a
group with a chart it is g -> model matrix, so pi(Phi(x)) is just Phi(x).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.linalg import expm

__all__ = [
    "MatrixRep",
    "Orbit",
    "WindowTooSmall",
    "TailTooFat",
    "exp_type_estimate",
    "orbit_derivatives",
    "smear",
    "family_certificate",
]


class WindowTooSmall(ValueError):
    pass


class TailTooFat(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class MatrixRep:
    """One-parameter representation t -> exp(t M), or a custom action t -> matrix."""

    dim: int
    generator: Optional[np.ndarray] = None
    action: Optional[Callable[[float], np.ndarray]] = None
    label: str = ""

    @classmethod
    def from_generator(cls, M, label: str = "") -> "MatrixRep":
        M = np.atleast_2d(np.asarray(M, dtype=float))
        if M.shape[0] != M.shape[1]:
            raise ValueError("generator must be square")
        return cls(dim=M.shape[0], generator=M, label=label)

    def __call__(self, t: float) -> np.ndarray:
        if self.generator is not None:
            return expm(t * self.generator)
        return np.asarray(self.action(t), dtype=float)

    def orbit_samples(self, v, ts) -> np.ndarray:
        """pi(t) v for every t (rows)."""
        v = np.asarray(v, dtype=float)
        ts = np.asarray(ts, dtype=float)
        if self.generator is None:
            return np.stack([self(t) @ v for t in ts])
        # diagonalize when well conditioned, else step outward from the node nearest 0
        w, V = np.linalg.eig(self.generator)
        if np.linalg.cond(V) < 1e6:
            c = np.linalg.solve(V, v.astype(complex))
            out = (np.exp(np.outer(ts, w)) * c) @ V.T
            return out.real
        steps = np.diff(ts)
        if len(ts) > 2 and np.allclose(steps, steps[0], rtol=1e-12, atol=0):
            h = steps[0]
            i0 = int(np.argmin(np.abs(ts)))
            out = np.empty((len(ts), self.dim))
            out[i0] = expm(ts[i0] * self.generator) @ v
            fwd, bwd = expm(h * self.generator), expm(-h * self.generator)
            for i in range(i0 + 1, len(ts)):
                out[i] = fwd @ out[i - 1]
            for i in range(i0 - 1, -1, -1):
                out[i] = bwd @ out[i + 1]
            return out
        return np.stack([expm(t * self.generator) @ v for t in ts])

    def orbit(self, v, window: float, n: int) -> "Orbit":
        ts = uniform_grid(window, n)
        return Orbit(v=np.asarray(v, dtype=float), ts=ts, values=self.orbit_samples(v, ts), rep=self)

    def homomorphism_defect(self, rng, n_pairs: int = 100, scale: float = 2.0) -> float:
        worst = 0.0
        for s, t in rng.uniform(-scale, scale, (n_pairs, 2)):
            worst = max(worst, float(np.abs(self(s) @ self(t) - self(s + t)).max()))
        return worst

    def to_json(self) -> dict:
        out = {"dim": self.dim, "label": self.label}
        if self.generator is not None:
            out["generator"] = self.generator.tolist()
        return out


def uniform_grid(window: float, n: int) -> np.ndarray:
    """n points on [-window, window) with step 2 window / n, so 0 is a node for even n."""
    h = 2 * window / n
    return -window + h * np.arange(n)


@dataclass(frozen=True, eq=False)
class Orbit:
    v: np.ndarray
    ts: np.ndarray
    values: np.ndarray
    rep: MatrixRep
    lam: Optional[float] = None

    @property
    def step(self) -> float:
        return float(self.ts[1] - self.ts[0])


def exp_type_estimate(rep: MatrixRep, v, window: float = 5.0, n: int = 2001, resid_max: float = 1.0) -> float:
    """Exponential type of t -> pi(t) v from log-norm slopes on the outer half of the window.

    Each side is fitted separately and the larger slope is kept, clamped at 0,
    with a 10% margin.
    """
    v = np.asarray(v, dtype=float)
    if not np.any(v):
        return 0.0
    ts = np.linspace(-window, window, n)
    samples = rep.orbit_samples(v, ts)
    if not np.all(np.isfinite(samples)):
        raise WindowTooSmall("orbit overflows on the window")
    # scale before squaring so large entries do not overflow
    peak = np.max(np.abs(samples), axis=1)
    if np.any(peak <= 0):
        raise WindowTooSmall("orbit vanishes on the window")
    logs = np.log(peak) + np.log(np.linalg.norm(samples / peak[:, None], axis=1))
    slopes = []
    for side in (1, -1):
        mask = side * ts >= window / 2
        x = np.abs(ts[mask])
        A = np.stack([x, np.ones_like(x)], axis=1)
        coef, *_ = np.linalg.lstsq(A, logs[mask], rcond=None)
        resid = float(np.sqrt(np.mean((A @ coef - logs[mask]) ** 2)))
        if not math.isfinite(resid) or resid > resid_max:
            raise WindowTooSmall(f"log-norm fit residual {resid:.3g} is too large")
        slopes.append(coef[0])
    return 1.1 * max(0.0, float(max(slopes)))


def orbit_derivatives(orbit: Orbit, k: int) -> np.ndarray:
    """gamma^{(k)} on the orbit grid, exactly as M^k gamma."""
    if k == 0:
        return orbit.values
    M = orbit.rep.generator
    if M is None:
        raise ValueError("exact derivatives need a generator")
    return orbit.values @ np.linalg.matrix_power(M, k).T


def orbit_certificate(orbit: Orbit, lam: float, k_max: int = 4) -> float:
    """max_k sup_t ||gamma^{(k)}(t)|| e^{-lam |t|} on the window."""
    w = np.exp(-lam * np.abs(orbit.ts))
    return max(float(np.max(np.linalg.norm(orbit_derivatives(orbit, k), axis=1) * w)) for k in range(k_max + 1))


def family_certificate(rep: MatrixRep, vectors: Sequence, window: float = 5.0, k_max: int = 4) -> dict:
    """Shared (lambda, C) for a finite family: maxima of the per-vector constants."""
    lams = [exp_type_estimate(rep, v, window) for v in vectors]
    lam = max(lams, default=0.0)
    cs = [orbit_certificate(rep.orbit(v, window, 2001), lam, k_max) for v in vectors]
    return {"lambda": lam, "C": max(cs, default=0.0), "per_vector_lambda": lams}


def smear(rep: MatrixRep, chi_samples, ts, v, tail_budget: float = 1e-8) -> np.ndarray:
    """Trapezoid value of int chi(t) pi(t) v dt on the uniform grid ``ts``."""
    ts = np.asarray(ts, dtype=float)
    chi = np.asarray(chi_samples, dtype=float)
    h = float(ts[1] - ts[0])
    orb = rep.orbit_samples(v, ts)
    edge = max(abs(chi[0]) * np.linalg.norm(orb[0]), abs(chi[-1]) * np.linalg.norm(orb[-1]))
    if edge > tail_budget:
        raise TailTooFat(f"kernel mass at the window edge is {edge:.3g}")
    w = np.full(len(ts), h)
    w[0] = w[-1] = h / 2
    return (chi * w) @ orb


def translation_rep(n: int, step: float) -> MatrixRep:
    """Cyclic translation (pi(t) f)(s) = f(s - t) on n periodic samples, t a multiple of ``step``."""

    def act(t):
        j = int(round(t / step))
        if abs(j * step - t) > 1e-9 * max(1.0, abs(t)):
            raise ValueError("translation amount must be a multiple of the grid step")
        return np.roll(np.eye(n), j, axis=0)

    return MatrixRep(dim=n, action=act, label="translation")
