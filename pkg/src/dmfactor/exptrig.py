"""Exp-trig-polynomials and differential operators with such coefficients.

A term is ``p(x) * exp(a.x) * cos(b.x)`` or the same with ``sin``; ``p`` has
rational coefficients and ``a``, ``b`` are rational frequency vectors.  The
class is closed under sums, products and partial derivatives, and its growth
rate max ||a||_1 bounds |f(x)| <= C exp(rate * |x|_inf).
"""

from __future__ import annotations

import math
from fractions import Fraction
from itertools import product as iproduct
from typing import Mapping, Optional, Sequence

import numpy as np

from .rational import as_fraction

__all__ = [
    "ExpTrigPoly",
    "DiffOp",
    "GridFunction",
    "StencilOutOfWindow",
    "differentiate",
    "multiply",
    "apply",
    "apply_numeric",
]

COS, SIN = "cos", "sin"


class StencilOutOfWindow(ValueError):
    pass


def _canon_key(a, b, kind):
    """Normalize b so its first nonzero entry is positive; returns (key, sign)."""
    nz = next((v for v in b if v != 0), None)
    if nz is None:
        if kind == SIN:
            return None, 0
        return (a, b, COS), 1
    if nz < 0:
        b = tuple(-v for v in b)
        return (a, b, kind), (-1 if kind == SIN else 1)
    return (a, b, kind), 1


def _poly_add(p, q, sign=1):
    out = dict(p)
    for m, c in q.items():
        v = out.get(m, Fraction(0)) + sign * c
        if v == 0:
            out.pop(m, None)
        else:
            out[m] = v
    return out


def _poly_mul(p, q):
    out: dict = {}
    for m1, c1 in p.items():
        for m2, c2 in q.items():
            m = tuple(x + y for x, y in zip(m1, m2))
            out[m] = out.get(m, Fraction(0)) + c1 * c2
    return {m: c for m, c in out.items() if c != 0}


def _poly_scale(p, c):
    if c == 0:
        return {}
    return {m: v * c for m, v in p.items()}


def _poly_diff(p, axis):
    out = {}
    for m, c in p.items():
        if m[axis] == 0:
            continue
        mm = list(m)
        mm[axis] -= 1
        out[tuple(mm)] = c * m[axis]
    return out


class ExpTrigPoly:
    """Immutable sum of ``poly * exp(a.x) * trig(b.x)`` terms in ``dim`` variables."""

    __slots__ = ("dim", "_terms")

    def __init__(self, dim: int, terms: Optional[Mapping] = None):
        self.dim = int(dim)
        clean = {}
        for (a, b, kind), poly in (terms or {}).items():
            a = tuple(as_fraction(v) for v in a)
            b = tuple(as_fraction(v) for v in b)
            if len(a) != self.dim or len(b) != self.dim:
                raise ValueError("frequency vector has wrong length")
            key, sign = _canon_key(a, b, kind)
            if key is None:
                continue
            poly = {tuple(m): as_fraction(c) for m, c in poly.items()}
            merged = _poly_add(clean.get(key, {}), poly, sign)
            if merged:
                clean[key] = merged
            else:
                clean.pop(key, None)
        self._terms = clean

    # ---- constructors

    @classmethod
    def constant(cls, dim: int, c=1) -> "ExpTrigPoly":
        z = (Fraction(0),) * dim
        return cls(dim, {(z, z, COS): {(0,) * dim: as_fraction(c)}})

    @classmethod
    def zero(cls, dim: int) -> "ExpTrigPoly":
        return cls(dim)

    @classmethod
    def variable(cls, dim: int, axis: int) -> "ExpTrigPoly":
        z = (Fraction(0),) * dim
        m = tuple(int(i == axis) for i in range(dim))
        return cls(dim, {(z, z, COS): {m: Fraction(1)}})

    @classmethod
    def term(cls, dim: int, poly: Mapping, a=None, b=None, kind: str = COS) -> "ExpTrigPoly":
        z = (0,) * dim
        return cls(dim, {(tuple(a or z), tuple(b or z), kind): dict(poly)})

    # ---- views

    @property
    def terms(self) -> dict:
        return {k: dict(v) for k, v in self._terms.items()}

    def is_zero(self) -> bool:
        return not self._terms

    def __eq__(self, other):
        if isinstance(other, (int, Fraction)):
            other = ExpTrigPoly.constant(self.dim, other)
        if not isinstance(other, ExpTrigPoly):
            return NotImplemented
        return self.dim == other.dim and self._terms == other._terms

    def __hash__(self):
        return hash((self.dim, tuple(sorted((k, tuple(sorted(v.items()))) for k, v in self._terms.items()))))

    # ---- arithmetic

    def _coerce(self, other) -> "ExpTrigPoly":
        if isinstance(other, ExpTrigPoly):
            if other.dim != self.dim:
                raise ValueError("dimension mismatch")
            return other
        return ExpTrigPoly.constant(self.dim, other)

    def __add__(self, other):
        other = self._coerce(other)
        terms = self.terms
        for k, p in other._terms.items():
            terms[k] = _poly_add(terms.get(k, {}), p)
        return ExpTrigPoly(self.dim, terms)

    __radd__ = __add__

    def __neg__(self):
        return ExpTrigPoly(self.dim, {k: _poly_scale(p, -1) for k, p in self._terms.items()})

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __mul__(self, other):
        if isinstance(other, (int, Fraction, str)):
            c = as_fraction(other)
            return ExpTrigPoly(self.dim, {k: _poly_scale(p, c) for k, p in self._terms.items()})
        return multiply(self, self._coerce(other))

    __rmul__ = __mul__

    # ---- calculus and metrics

    def diff(self, axis: int) -> "ExpTrigPoly":
        return differentiate(self, axis)

    def growth_rate(self) -> Fraction:
        """max ||a||_1 over terms (0 for the zero function)."""
        return max((sum(abs(v) for v in a) for (a, _, _) in self._terms), default=Fraction(0))

    def growth_constant(self, eps: Optional[float] = None, radius: Optional[float] = None) -> float:
        """C with |f(x)| <= C exp(rate * |x|_inf) (times exp(eps |x|_inf) if eps is given).

        With ``radius`` the bound holds for |x|_inf <= radius using max(1, radius)^deg
        for the polynomial factors; with ``eps`` it holds on all of R^d via
        r^k exp(-eps r) <= (k / (e eps))^k.
        """
        total = 0.0
        for poly in self._terms.values():
            for m, c in poly.items():
                k = sum(m)
                if radius is not None:
                    w = max(1.0, float(radius)) ** k
                elif eps is not None:
                    w = (k / (math.e * eps)) ** k if k else 1.0
                else:
                    if k:
                        raise ValueError("polynomial factors need eps or radius")
                    w = 1.0
                total += abs(float(c)) * w
        return total

    def degree(self) -> int:
        return max((sum(m) for p in self._terms.values() for m in p), default=0)

    def __call__(self, x) -> np.ndarray:
        return self.evaluate(x)

    def evaluate(self, x) -> np.ndarray:
        """Evaluate at points ``x`` with trailing axis of length ``dim``."""
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.dim:
            raise ValueError(f"expected trailing dimension {self.dim}")
        out = np.zeros(x.shape[:-1])
        for (a, b, kind), poly in self._terms.items():
            pv = np.zeros(x.shape[:-1])
            for m, c in poly.items():
                mono = np.full(x.shape[:-1], float(c))
                for i, e in enumerate(m):
                    if e:
                        mono = mono * x[..., i] ** e
                pv = pv + mono
            af = np.array([float(v) for v in a])
            bf = np.array([float(v) for v in b])
            fac = np.exp(x @ af) if any(a) else 1.0
            phase = x @ bf
            trig = np.cos(phase) if kind == COS else np.sin(phase)
            out = out + pv * fac * trig
        return out

    def embed(self, dim: int, axes: Sequence[int]) -> "ExpTrigPoly":
        """Reinterpret variable i as variable axes[i] of a dim-variable function."""
        def lift(v, fill):
            out = [fill] * dim
            for i, ax in enumerate(axes):
                out[ax] = v[i]
            return tuple(out)

        terms = {}
        for (a, b, kind), poly in self._terms.items():
            terms[(lift(a, Fraction(0)), lift(b, Fraction(0)), kind)] = {lift(m, 0): c for m, c in poly.items()}
        return ExpTrigPoly(dim, terms)

    # ---- formats

    def _sorted_terms(self):
        return sorted(self._terms.items(), key=lambda kv: (kv[0][0], kv[0][1], kv[0][2]))

    def to_json(self) -> dict:
        return {
            "dim": self.dim,
            "terms": [
                {
                    "a": [str(v) for v in a],
                    "b": [str(v) for v in b],
                    "trig": kind,
                    "poly": [[list(m), str(c)] for m, c in sorted(poly.items())],
                }
                for (a, b, kind), poly in self._sorted_terms()
            ],
        }

    @classmethod
    def from_json(cls, data: dict) -> "ExpTrigPoly":
        terms = {}
        for t in data["terms"]:
            key = (tuple(t["a"]), tuple(t["b"]), t["trig"])
            terms[key] = {tuple(m): c for m, c in t["poly"]}
        return cls(int(data["dim"]), terms)

    def format(self, names: Optional[Sequence[str]] = None) -> str:
        names = list(names) if names else [f"x{i + 1}" for i in range(self.dim)]
        if not self._terms:
            return "0"
        parts = []
        for (a, b, kind), poly in self._sorted_terms():
            p = _format_poly(poly, names)
            factors = [f"({p})"]
            if any(a):
                factors.append(f"exp({_format_linear(a, names)})")
            if any(b) or kind == SIN:
                factors.append(f"{kind}({_format_linear(b, names)})")
            parts.append(" * ".join(factors))
        return " + ".join(parts)

    def __str__(self):
        return self.format()

    def __repr__(self):
        return f"ExpTrigPoly({self.format()})"


def _format_poly(poly, names) -> str:
    out = []
    for m, c in sorted(poly.items(), key=lambda kv: (-sum(kv[0]), kv[0]), reverse=False):
        mono = "*".join(n if e == 1 else f"{n}**{e}" for n, e in zip(names, m) if e)
        if not mono:
            out.append(str(c))
        elif c == 1:
            out.append(mono)
        elif c == -1:
            out.append(f"-{mono}")
        else:
            out.append(f"{c}*{mono}")
    return " + ".join(out).replace("+ -", "- ")


def _format_linear(v, names) -> str:
    s = " + ".join(f"{c}*{n}" if c != 1 else n for c, n in zip(v, names) if c != 0)
    return s.replace("+ -", "- ") or "0"


def differentiate(f: ExpTrigPoly, axis: int) -> ExpTrigPoly:
    if not 0 <= axis < f.dim:
        raise ValueError("axis out of range")
    terms: dict = {}

    def acc(key, poly):
        terms.setdefault(key, [])
        terms[key].append(poly)

    for (a, b, kind), p in f._terms.items():
        same = _poly_add(_poly_diff(p, axis), _poly_scale(p, a[axis]))
        if kind == COS:
            acc((a, b, COS), same)
            acc((a, b, SIN), _poly_scale(p, -b[axis]))
        else:
            acc((a, b, SIN), same)
            acc((a, b, COS), _poly_scale(p, b[axis]))
    out = ExpTrigPoly.zero(f.dim)
    for key, polys in terms.items():
        for poly in polys:
            if poly:
                out = out + ExpTrigPoly(f.dim, {key: poly})
    return out


def multiply(f: ExpTrigPoly, g: ExpTrigPoly) -> ExpTrigPoly:
    """Exact product with trig products linearized."""
    if f.dim != g.dim:
        raise ValueError("dimension mismatch")
    d = f.dim
    half = Fraction(1, 2)
    acc: dict = {}

    def put(a, b, kind, poly, c):
        key, sign = _canon_key(a, b, kind)
        if key is None or c == 0:
            return
        acc[key] = _poly_add(acc.get(key, {}), _poly_scale(poly, c * sign))

    for (a1, b1, k1), p1 in f._terms.items():
        for (a2, b2, k2), p2 in g._terms.items():
            a = tuple(x + y for x, y in zip(a1, a2))
            p = _poly_mul(p1, p2)
            bp = tuple(x + y for x, y in zip(b1, b2))
            bm = tuple(x - y for x, y in zip(b1, b2))
            if k1 == COS and k2 == COS:
                put(a, bm, COS, p, half)
                put(a, bp, COS, p, half)
            elif k1 == SIN and k2 == SIN:
                put(a, bm, COS, p, half)
                put(a, bp, COS, p, -half)
            elif k1 == SIN and k2 == COS:
                put(a, bp, SIN, p, half)
                put(a, bm, SIN, p, half)
            else:
                put(a, bp, SIN, p, half)
                put(a, bm, SIN, p, -half)
    return ExpTrigPoly(d, {k: v for k, v in acc.items() if v})


# --------------------------------------------------------------------------
# differential operators


class DiffOp:
    """Finite sum of ExpTrigPoly coefficients times d^alpha (alpha a multi-index)."""

    __slots__ = ("dim", "_coeffs")

    def __init__(self, dim: int, coeffs: Optional[Mapping] = None):
        self.dim = int(dim)
        clean = {}
        for alpha, c in (coeffs or {}).items():
            alpha = tuple(int(v) for v in alpha)
            if len(alpha) != self.dim:
                raise ValueError("multi-index has wrong length")
            if not isinstance(c, ExpTrigPoly):
                c = ExpTrigPoly.constant(self.dim, c)
            c = clean.get(alpha, ExpTrigPoly.zero(self.dim)) + c
            if c.is_zero():
                clean.pop(alpha, None)
            else:
                clean[alpha] = c
        self._coeffs = clean

    @classmethod
    def identity(cls, dim: int) -> "DiffOp":
        return cls(dim, {(0,) * dim: 1})

    @classmethod
    def partial(cls, dim: int, axis: int) -> "DiffOp":
        return cls(dim, {tuple(int(i == axis) for i in range(dim)): 1})

    @classmethod
    def first_order(cls, coeffs: Sequence[ExpTrigPoly]) -> "DiffOp":
        d = len(coeffs)
        return cls(d, {tuple(int(i == k) for i in range(d)): c for k, c in enumerate(coeffs)})

    @property
    def coeffs(self) -> dict:
        return dict(self._coeffs)

    def coefficient(self, alpha) -> ExpTrigPoly:
        return self._coeffs.get(tuple(alpha), ExpTrigPoly.zero(self.dim))

    def first_order_coefficients(self) -> list:
        """Coefficients of d_1..d_d (zero for missing entries)."""
        return [self.coefficient(tuple(int(i == k) for i in range(self.dim))) for k in range(self.dim)]

    def order(self) -> int:
        return max((sum(a) for a in self._coeffs), default=0)

    def __add__(self, other: "DiffOp") -> "DiffOp":
        out = dict(self._coeffs)
        for a, c in other._coeffs.items():
            out[a] = out.get(a, ExpTrigPoly.zero(self.dim)) + c
        return DiffOp(self.dim, out)

    def __sub__(self, other: "DiffOp") -> "DiffOp":
        return self + other.scale(-1)

    def scale(self, c) -> "DiffOp":
        return DiffOp(self.dim, {a: v * c for a, v in self._coeffs.items()})

    def __eq__(self, other):
        return isinstance(other, DiffOp) and self.dim == other.dim and self._coeffs == other._coeffs

    def __matmul__(self, other: "DiffOp") -> "DiffOp":
        """Composition self o other, expanded with the Leibniz rule."""
        out: dict = {}
        for alpha, ca in self._coeffs.items():
            for beta, cb in other._coeffs.items():
                for gamma in iproduct(*(range(k + 1) for k in alpha)):
                    w = 1
                    for k, g in zip(alpha, gamma):
                        w *= math.comb(k, g)
                    dc = cb
                    for ax, g in enumerate(gamma):
                        for _ in range(g):
                            dc = dc.diff(ax)
                    if dc.is_zero():
                        continue
                    idx = tuple(a - g + b for a, g, b in zip(alpha, gamma, beta))
                    term = multiply(ca, dc) * w
                    out[idx] = out.get(idx, ExpTrigPoly.zero(self.dim)) + term
        return DiffOp(self.dim, out)

    def growth_rate(self) -> Fraction:
        return max((c.growth_rate() for c in self._coeffs.values()), default=Fraction(0))

    def to_json(self) -> dict:
        return {
            "dim": self.dim,
            "terms": [{"alpha": list(a), "coeff": c.to_json()} for a, c in sorted(self._coeffs.items())],
        }

    def format(self, names: Optional[Sequence[str]] = None) -> str:
        names = list(names) if names else [f"x{i + 1}" for i in range(self.dim)]
        if not self._coeffs:
            return "0"
        parts = []
        for alpha, c in sorted(self._coeffs.items(), key=lambda kv: (sum(kv[0]), [-v for v in kv[0]])):
            d = "".join(f"d_{n}" + (f"^{e}" if e > 1 else "") for n, e in zip(names, alpha) if e)
            cs = c.format(names)
            if cs == "(1)":
                parts.append(d or "1")
            else:
                parts.append(f"[{cs}]{d}" if d else f"[{cs}]")
        return " + ".join(parts)

    def __str__(self):
        return self.format()

    def __repr__(self):
        return f"DiffOp({self.format()})"


def apply(op: DiffOp, f: ExpTrigPoly) -> ExpTrigPoly:
    if op.dim != f.dim:
        raise ValueError("dimension mismatch")
    out = ExpTrigPoly.zero(f.dim)
    for alpha, c in op._coeffs.items():
        g = f
        for ax, k in enumerate(alpha):
            for _ in range(k):
                g = g.diff(ax)
        out = out + multiply(c, g)
    return out


# --------------------------------------------------------------------------
# numeric application on sampled functions


class GridFunction:
    """Samples of a function on a tensor grid of uniformly spaced axes."""

    def __init__(self, axes: Sequence[np.ndarray], values: np.ndarray):
        self.axes = [np.asarray(a, dtype=float) for a in axes]
        self.values = np.asarray(values, dtype=float)
        if self.values.shape != tuple(len(a) for a in self.axes):
            raise ValueError("values shape does not match axes")
        self.steps = [float(a[1] - a[0]) for a in self.axes]

    @classmethod
    def sample(cls, fn, axes) -> "GridFunction":
        mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
        return cls(axes, fn(mesh))

    @property
    def dim(self) -> int:
        return len(self.axes)

    def index_of(self, point) -> tuple:
        idx = []
        for ax, h, p in zip(self.axes, self.steps, point):
            i = int(round((p - ax[0]) / h))
            if not 0 <= i < len(ax) or abs(ax[i] - p) > 1e-9 * max(1.0, abs(h)):
                raise ValueError(f"point coordinate {p} is not a grid node")
            idx.append(i)
        return tuple(idx)

    def node(self, idx) -> np.ndarray:
        return np.array([ax[i] for ax, i in zip(self.axes, idx)])


def _stencil(order: int) -> tuple[np.ndarray, np.ndarray]:
    """Central finite-difference weights: 5 points up to second order, 7 beyond."""
    p = 2 if order <= 2 else 3
    offs = np.arange(-p, p + 1)
    vander = np.vander(offs, 2 * p + 1, increasing=True).T.astype(float)
    rhs = np.zeros(2 * p + 1)
    rhs[order] = math.factorial(order)
    return offs, np.linalg.solve(vander, rhs)


def _partial_numeric(gf: GridFunction, idx, alpha) -> float:
    stencils = []
    for ax, k in enumerate(alpha):
        if k == 0:
            stencils.append((np.array([0]), np.array([1.0])))
            continue
        offs, w = _stencil(k)
        lo, hi = idx[ax] + offs[0], idx[ax] + offs[-1]
        if lo < 0 or hi >= len(gf.axes[ax]):
            raise StencilOutOfWindow(f"stencil for axis {ax} leaves the sampled window")
        stencils.append((offs, w / gf.steps[ax] ** k))
    total = 0.0
    for combo in iproduct(*(range(len(s[0])) for s in stencils)):
        weight = 1.0
        pos = []
        for ax, j in enumerate(combo):
            offs, w = stencils[ax]
            weight *= w[j]
            pos.append(idx[ax] + offs[j])
        total += weight * gf.values[tuple(pos)]
    return total


def apply_numeric(op: DiffOp, gf: GridFunction, point) -> float:
    """(op f)(point) with f given by samples; point must be a grid node."""
    if op.dim != gf.dim:
        raise ValueError("dimension mismatch")
    idx = gf.index_of(point)
    x = gf.node(idx)
    out = 0.0
    for alpha, c in op._coeffs.items():
        out += float(c.evaluate(x)) * _partial_numeric(gf, idx, alpha)
    return out
