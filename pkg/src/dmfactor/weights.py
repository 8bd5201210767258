"""Piecewise-logarithmic weight functions built below given growth functions.

With jumps t_1 = e < t_2 < ... the weight is

    sigma(t) = 0                              for t < t_1,
    sigma(t) = n log t - sum_{k<=n} log t_k   for t_n <= t < t_{n+1}.

Jumps are picked on a geometric grid: t_{n+1} is the first grid point with
t_{n+1} >= 2 t_n, log t_{n+1} >= 2^{n+1-k} log t_k for k <= n, and
log t <= min_{k<=n+1} tau_k(t) / (n+1)^2 at every grid point t >= t_{n+1}.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

__all__ = [
    "WeightFunction",
    "Tau",
    "parse_tau",
    "build_sigma",
    "check_weight_axioms",
    "check_minorant",
    "GridExhausted",
    "InvalidTau",
    "AxiomFailed",
]


class GridExhausted(ValueError):
    pass


class InvalidTau(ValueError):
    pass


class AxiomFailed(ValueError):
    def __init__(self, msg, witness=None):
        super().__init__(msg)
        self.witness = witness


GRID_RATIO = 1.001


def log_grid(lo: float, hi: float, ratio: float = GRID_RATIO) -> np.ndarray:
    n = int(math.floor(math.log(hi / lo) / math.log(ratio))) + 1
    return lo * ratio ** np.arange(n)


class Tau:
    """A growth function given by a tag or by a sampled table."""

    def __init__(self, fn: Callable[[np.ndarray], np.ndarray], label: str, domain_max: float = math.inf):
        self._fn = fn
        self.label = label
        self.domain_max = domain_max

    def __call__(self, t):
        return self._fn(np.asarray(t, dtype=float))

    @classmethod
    def table(cls, ts, values, label="table", shift: float = 0.0) -> "Tau":
        ts = np.asarray(ts, dtype=float)
        vs = np.asarray(values, dtype=float) + shift
        return cls(lambda t: np.interp(t, ts, vs), label, float(ts[-1]))

    def shifted(self, c: float) -> "Tau":
        return Tau(lambda t: self._fn(t) + c, f"{self.label}+{c:g}", self.domain_max)

    def __repr__(self):
        return f"Tau({self.label})"


def parse_tau(spec: str) -> Tau:
    """``linear[:c]`` -> c t, ``power:p`` -> t^p, ``logpower:p`` -> log(1+t)^p."""
    name, _, arg = spec.partition(":")
    try:
        val = float(arg) if arg else None
    except ValueError as exc:
        raise InvalidTau(f"bad tau parameter in {spec!r}") from exc
    if name == "linear":
        c = 1.0 if val is None else val
        return Tau(lambda t: c * t, spec)
    if name == "power" and val is not None:
        return Tau(lambda t: t ** val, spec)
    if name == "logpower" and val is not None:
        return Tau(lambda t: np.log1p(t) ** val, spec)
    raise InvalidTau(f"unknown tau spec {spec!r}")


@dataclass(frozen=True)
class WeightFunction:
    jumps: tuple
    t_max: float = math.inf
    closed_form: Optional[Callable] = None
    label: str = "sigma"

    @classmethod
    def from_callable(cls, fn: Callable, label: str) -> "WeightFunction":
        return cls(jumps=(), closed_form=fn, label=label)

    def __call__(self, t):
        t = np.abs(np.asarray(t, dtype=float))
        if self.closed_form is not None:
            return self.closed_form(t)
        if not self.jumps:
            return np.zeros_like(t)
        logs = np.log(np.array(self.jumps))
        csum = np.concatenate([[0.0], np.cumsum(logs)])
        n = np.searchsorted(np.array(self.jumps), t, side="right")
        with np.errstate(divide="ignore"):
            lt = np.log(np.where(t > 0, t, 1.0))
        return np.where(n > 0, n * lt - csum[n], 0.0)

    def to_json(self) -> dict:
        return {"label": self.label, "jumps": [float(t) for t in self.jumps], "t_max": self.t_max}


def _tau_k(taus: Sequence[Tau], k: int) -> Tau:
    """tau_k (1-based); the last supplied tau repeats."""
    return taus[min(k, len(taus)) - 1]


def build_sigma(taus: Sequence, t_max: float = 1e6, max_jumps: Optional[int] = None, ratio: float = GRID_RATIO) -> WeightFunction:
    """Jump sequence for a weight below every tau_k (see module docstring).

    Places as many jumps as the grid allows (or exactly ``max_jumps``).
    """
    taus = [parse_tau(t) if isinstance(t, str) else t for t in taus]
    if not taus:
        raise InvalidTau("need at least one tau")
    t_max = min(float(t_max), min(t.domain_max for t in taus))
    if t_max <= math.e:
        raise GridExhausted("T_max must exceed e")
    grid = log_grid(math.e, t_max, ratio)
    lg = np.log(grid)
    vals = [np.asarray(_tau_k(taus, k)(grid), dtype=float) for k in range(1, len(taus) + 1)]
    for v in vals:
        if np.any(v < 0) or not np.all(np.isfinite(v)):
            raise InvalidTau("tau must be finite and nonnegative on the grid")
    running_min = vals[0].copy()
    # precondition for t_1 = e: log t <= tau_1(t) for t >= e
    bad = np.nonzero(lg > running_min)[0]
    if bad.size:
        raise InvalidTau(f"log t exceeds tau_1 at t = {grid[bad[0]]:.6g}")
    jumps = [math.e]
    while max_jumps is None or len(jumps) < max_jumps:
        n = len(jumps)  # choosing t_{n+1}
        if n < len(vals):
            running_min = np.minimum(running_min, vals[n])
        ok3 = lg * (n + 1) ** 2 <= running_min
        suffix_ok = np.flip(np.logical_and.accumulate(np.flip(ok3)))
        need = max(2 ** (n + 1 - k) * math.log(tk) for k, tk in enumerate(jumps, start=1))
        cand = (grid >= 2 * jumps[-1]) & (lg >= need) & suffix_ok
        idx = np.nonzero(cand)[0]
        if idx.size == 0:
            if max_jumps is not None:
                raise GridExhausted(f"only {len(jumps)} jumps fit below T_max = {t_max:g}")
            break
        jumps.append(float(grid[idx[0]]))
    return WeightFunction(jumps=tuple(jumps), t_max=t_max)


def check_weight_axioms(w: WeightFunction, grid=None) -> dict:
    """Empirical C_alpha for sigma(2t) <= C sigma(t) + C and the (gamma) monotone tail."""
    if grid is None:
        grid = log_grid(1.0, w.t_max if math.isfinite(w.t_max) else 1e6)
    grid = np.asarray(grid, dtype=float)
    s = w(grid)
    s2 = w(2 * grid)
    if np.any(np.diff(s) < -1e-12) or np.any(s < 0):
        i = int(np.argmax(np.diff(s) < -1e-12))
        raise AxiomFailed("sigma is not nondecreasing and nonnegative", float(grid[i]))
    c_alpha = float(np.max(s2 / (s + 1.0)))
    start = w.jumps[1] if len(w.jumps) > 1 else (w.jumps[0] if w.jumps else 2.0)
    tail = grid[grid >= start]
    tail = tail[tail > 1.0]
    ratio = w(tail) / np.log(tail)
    if tail.size < 2 or ratio[-1] <= 0:
        raise AxiomFailed("sigma/log t does not grow (gamma)", float(tail[-1]) if tail.size else None)
    drops = np.nonzero(np.diff(ratio) < -1e-12)[0]
    if drops.size:
        raise AxiomFailed("sigma/log t decreases on the tail (gamma)", float(tail[drops[0] + 1]))
    return {
        "C_alpha": c_alpha,
        "gamma_margin": float(ratio[-1] - ratio[0]),
        "gamma_ratio_end": float(ratio[-1]),
        "tail_start": float(start),
    }


def check_minorant(w: WeightFunction, taus: Sequence, grid=None) -> float:
    """max over n and grid t >= t_n of sigma(t) - tau_n(t)/n (<= 0 means the property holds)."""
    taus = [parse_tau(t) if isinstance(t, str) else t for t in taus]
    if grid is None:
        grid = log_grid(math.e, w.t_max)
    grid = np.asarray(grid, dtype=float)
    s = w(grid)
    worst = -math.inf
    for n, tn in enumerate(w.jumps, start=1):
        mask = grid >= tn
        if mask.any():
            worst = max(worst, float(np.max(s[mask] - _tau_k(taus, n)(grid[mask]) / n)))
    return worst


def sigma_table(w: WeightFunction, grid) -> list:
    """Rows (t, sigma(t), sigma(2t)/sigma(t), sigma(t)/log t)."""
    grid = np.asarray(grid, dtype=float)
    s, s2 = w(grid), w(2 * grid)
    with np.errstate(divide="ignore", invalid="ignore"):
        r2 = np.where(s > 0, s2 / s, np.nan)
        rl = np.where(grid > 1, s / np.log(grid), np.nan)
    return [tuple(row) for row in np.stack([grid, s, r2, rl], axis=1)]
