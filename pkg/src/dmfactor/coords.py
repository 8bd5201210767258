"""Second-kind exponential chart, its inverse, invariant-field pullbacks and Haar data.

Coordinates are ordered as (t_1..t_n, s_1..s_m) along the adapted basis
(A_1..A_n, N_1..N_m), and Phi(x) = exp(x_1 X_1) ... exp(x_d X_d).

Write W(x) for the matrix whose k-th column is

    w_k = exp(-x_d ad X_d) ... exp(-x_{k+1} ad X_{k+1}) X_k,

so that Phi(x)^{-1} dPhi(x)(v) = W(x) v.  W is unit lower triangular in the
adapted basis.  The left-invariant field X pulls back to the operator with
coefficient vector W^{-1} X, and the right-invariant one (the derivative of
r -> exp(rX) Phi(x)) to W^{-1} Ad(Phi(x)^{-1}) X.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import expm, logm

from . import rational as rq
from .exptrig import DiffOp, ExpTrigPoly
from .liealg import AdaptedBasis, LieAlgebra, adapted_basis

__all__ = [
    "Chart",
    "NotInGroup",
    "UnsupportedElement",
    "StructureViolation",
    "HaarWitness",
    "exp_ad_symbolic",
    "build_chart",
]


class NotInGroup(ValueError):
    pass


class UnsupportedElement(ValueError):
    pass


class StructureViolation(ValueError):
    def __init__(self, msg, entry=None):
        super().__init__(msg)
        self.entry = entry


# --------------------------------------------------------------------------
# exp(x D) with exp-trig-polynomial entries


def _sym_eigs(D):
    import sympy

    mat = sympy.Matrix(D)
    out = []
    try:
        ev = mat.eigenvals(multiple=False)
    except Exception:  # pragma: no cover - sympy failure goes to the numeric path
        ev = None
    if ev:
        for mu, mult in ev.items():
            re, im = sympy.re(mu), sympy.im(mu)
            if not (re.is_Rational and im.is_Rational):
                ev = None
                break
            out.append((Fraction(int(re.p), int(re.q)), Fraction(int(im.p), int(im.q)), int(mult)))
    if not ev:
        out = _lifted_eigs(D)
    return out


def _lifted_eigs(D, tol=1e-9):
    """Numeric eigenvalues lifted to Gaussian rationals, clustered by multiplicity."""
    vals = np.linalg.eigvals(np.array([[float(v) for v in row] for row in D]))
    clusters: list = []
    for v in vals:
        for c in clusters:
            if abs(c[0] - v) < 1e-6:
                c[1] += 1
                break
        else:
            clusters.append([v, 1])
    out = []
    for v, mult in clusters:
        re = Fraction(float(v.real)).limit_denominator(1000)
        im = Fraction(float(v.imag)).limit_denominator(1000)
        # clustered roots lose accuracy like tol**(1/mult)
        if abs(float(re) - v.real) > tol ** (1 / mult) or abs(float(im) - v.imag) > tol ** (1 / mult):
            raise UnsupportedElement(f"eigenvalue {v} of ad is not a Gaussian rational")
        out.append((re, im, mult))
    return out


@lru_cache(maxsize=None)
def _exp_ad_cached(D: tuple) -> tuple:
    import sympy

    n = len(D)
    Dm = sympy.Matrix(D)
    if (Dm ** n).is_zero_matrix:
        # nilpotent: finite series
        out = [[ExpTrigPoly.zero(1) for _ in range(n)] for _ in range(n)]
        power = sympy.eye(n)
        fact = 1
        for k in range(n):
            if k:
                power = power * Dm
                fact *= k
            for i in range(n):
                for j in range(n):
                    v = power[i, j]
                    if v != 0:
                        out[i][j] = out[i][j] + ExpTrigPoly.term(1, {(k,): Fraction(int(v.p), int(v.q) * fact)})
        return tuple(tuple(r) for r in out)

    eigs = _sym_eigs(D)
    # confluent Vandermonde: sum_{mu,k} C_{mu,k} p!/(p-k)! mu^{p-k} = D^p for p < n
    unknowns = [(re, im, k) for re, im, mult in eigs for k in range(mult)]
    I = sympy.I
    V = sympy.zeros(n, n)
    for col, (re, im, k) in enumerate(unknowns):
        mu = sympy.Rational(re.numerator, re.denominator) + I * sympy.Rational(im.numerator, im.denominator)
        for p in range(n):
            if p >= k:
                V[p, col] = sympy.ff(p, k) * mu ** (p - k)
    rhs = sympy.zeros(n, n * n)
    power = sympy.eye(n)
    for p in range(n):
        if p:
            power = power * Dm
        for i in range(n):
            for j in range(n):
                rhs[p, i * n + j] = power[i, j]
    sol = V.LUsolve(rhs)
    out = [[ExpTrigPoly.zero(1) for _ in range(n)] for _ in range(n)]
    for col, (re, im, k) in enumerate(unknowns):
        for i in range(n):
            for j in range(n):
                c = sympy.nsimplify(sympy.expand(sol[col, i * n + j]))
                cr, ci = sympy.re(c), sympy.im(c)
                if not (cr.is_Rational and ci.is_Rational):
                    raise UnsupportedElement("non-rational coefficient in exp(ad)")
                cr = Fraction(int(cr.p), int(cr.q))
                ci = Fraction(int(ci.p), int(ci.q))
                # Re(c x^k e^{(re + i im) x}) = x^k e^{re x}(Re c cos(im x) - Im c sin(im x))
                if cr:
                    out[i][j] = out[i][j] + ExpTrigPoly.term(1, {(k,): cr}, a=(re,), b=(im,), kind="cos")
                if ci:
                    out[i][j] = out[i][j] + ExpTrigPoly.term(1, {(k,): -ci}, a=(re,), b=(im,), kind="sin")
    return tuple(tuple(r) for r in out)


def exp_ad_symbolic(D: Sequence[Sequence]) -> list[list[ExpTrigPoly]]:
    """Entries of exp(x D) as univariate exp-trig-polynomials, checked against expm."""
    key = tuple(tuple(Fraction(v) for v in row) for row in D)
    out = _exp_ad_cached(key)
    Df = np.array([[float(v) for v in row] for row in key])
    for x in (-1.3, 0.7, 2.1):
        num = expm(x * Df)
        sym = np.array([[float(e.evaluate(np.array([x]))) for e in row] for row in out])
        if np.abs(num - sym).max() > 1e-8 * max(1.0, np.abs(num).max()):
            raise UnsupportedElement("symbolic exp(ad) disagrees with expm")
    return [list(r) for r in out]


# --------------------------------------------------------------------------
# symbolic matrix helpers


def _mat_mul(a, b):
    n, k, m = len(a), len(b), len(b[0])
    out = []
    for i in range(n):
        row = []
        for j in range(m):
            acc = ExpTrigPoly.zero(a[0][0].dim)
            for l in range(k):
                if a[i][l].is_zero() or b[l][j].is_zero():
                    continue
                acc = acc + a[i][l] * b[l][j]
            row.append(acc)
        out.append(row)
    return out


def _mat_vec(a, v):
    return [sum((a[i][l] * v[l] for l in range(len(v)) if not a[i][l].is_zero()), ExpTrigPoly.zero(a[0][0].dim)) for i in range(len(a))]


# --------------------------------------------------------------------------
# Chart


@dataclass(frozen=True)
class HaarWitness:
    matrix: tuple  # M[i][k]: coefficient of d_i in the pullback of basis element k
    det: Fraction
    n: int
    m: int

    def to_json(self, names=None) -> dict:
        return {
            "det": str(self.det),
            "block_sizes": [self.n, self.m],
            "unit_lower_triangular": True,
            "matrix": [[e.format(names) for e in row] for row in self.matrix],
        }


@dataclass(frozen=True, eq=False)
class Chart:
    algebra: LieAlgebra
    basis: AdaptedBasis
    labels: tuple
    _P: tuple = field(repr=False)  # adapted basis vectors as columns
    _ad: tuple = field(repr=False)  # ad X_k in adapted coordinates
    _models: Optional[np.ndarray] = field(default=None, repr=False)
    _ad_float: np.ndarray = field(default=None, repr=False)

    @property
    def dim(self) -> int:
        return self.algebra.dim

    @property
    def has_model(self) -> bool:
        return self._models is not None

    # ---- conversions

    def to_adapted(self, x: Sequence) -> tuple:
        """Adapted-basis coordinates of an algebra element."""
        return rq.solve(self._P, rq.vec(x))

    def element(self, x) -> tuple:
        """Parse a basis name, an adapted label or a coordinate vector (algebra basis)."""
        if isinstance(x, str):
            if x in self.algebra.basis_names:
                return rq.unit(self.dim, self.algebra.basis_names.index(x))
            if x in self.labels:
                return tuple(self.basis.vectors[self.labels.index(x)])
            raise UnsupportedElement(f"unknown element {x!r}")
        try:
            v = rq.vec(x)
        except (TypeError, ValueError) as exc:
            raise UnsupportedElement(f"cannot read element {x!r}") from exc
        if len(v) != self.dim:
            raise UnsupportedElement("element has the wrong number of coordinates")
        return v

    # ---- group side

    def phi(self, x: Sequence[float]) -> np.ndarray:
        self._need_model()
        x = np.asarray(x, dtype=float)
        g = np.eye(self._models.shape[1])
        for xk, mk in zip(x, self._models):
            if xk != 0:
                g = g @ expm(xk * mk)
        return g

    def _need_model(self):
        if self._models is None:
            raise NotInGroup("chart has no matrix model")

    def W_numeric(self, x: Sequence[float]) -> np.ndarray:
        d = self.dim
        W = np.zeros((d, d))
        acc = np.eye(d)
        for k in range(d - 1, -1, -1):
            W[:, k] = acc[:, k]
            acc = acc @ expm(-x[k] * self._ad_float[k])
        return W

    def vee(self, Y: np.ndarray) -> np.ndarray:
        """Adapted coordinates of a model matrix (least squares on the model span)."""
        A = self._models.reshape(self.dim, -1).T
        c, *_ = np.linalg.lstsq(A, Y.ravel(), rcond=None)
        return c

    def phi_inv(self, g: np.ndarray, tol: float = 1e-10, max_iter: int = 60, guess=None) -> np.ndarray:
        self._need_model()
        g = np.asarray(g, dtype=float)
        if g.shape != self._models.shape[1:]:
            raise NotInGroup("matrix has the wrong shape")
        closed = _closed_form_inverse(self, g)
        starts = [closed] if closed is not None else []
        if guess is not None:
            starts.append(np.asarray(guess, dtype=float))
        try:
            starts.append(self._newton_start(g))
        except NotInGroup:
            pass
        starts.append(np.zeros(self.dim))
        scale = max(1.0, np.abs(g).max())
        best = None
        for x0 in starts:
            x = self._gauss_newton(g, x0, tol, max_iter)
            err = np.abs(self.phi(x) - g).max()
            if not np.isfinite(err):
                continue
            if best is None or err < best[0]:
                best = (err, x)
            if err <= tol * scale:
                return x
        raise NotInGroup("chart inversion failed" + (f" (residual {best[0]:.3e})" if best else ""))

    def phi_batch(self, xs) -> np.ndarray:
        """Phi at many points (rows of ``xs``)."""
        self._need_model()
        xs = np.asarray(xs, dtype=float).reshape(-1, self.dim)
        g = np.broadcast_to(np.eye(self._models.shape[1]), (len(xs),) + self._models.shape[1:]).copy()
        for k, mk in enumerate(self._models):
            g = g @ _expm_many(xs[:, k], mk)
        return g

    def phi_inv_batch(self, gs) -> np.ndarray:
        """phi_inv over a stack of matrices; closed forms are vectorized, other charts loop."""
        self._need_model()
        gs = np.asarray(gs, dtype=float)
        kind = _closed_form_kind(self)
        if kind is None:
            return np.stack([self.phi_inv(g) for g in gs]) if len(gs) else np.zeros((0, self.dim))
        return _closed_form_batch(kind, gs, self._models)

    def _gauss_newton(self, g, x, tol, max_iter):
        """Damped Gauss-Newton on Phi(x) - g; the Jacobian column k is Phi(x) (W e_k)^model."""
        x = np.array(x, dtype=float)
        res = self.phi(x) - g
        for _ in range(max_iter):
            G = res + g
            W = self.W_numeric(x)
            if not np.all(np.isfinite(res)):
                break
            J = np.stack([(G @ np.tensordot(W[:, k], self._models, axes=1)).ravel() for k in range(self.dim)], axis=1)
            step, *_ = np.linalg.lstsq(J, -res.ravel(), rcond=None)
            lam = 1.0
            r0 = np.abs(res).max()
            while lam > 1e-4:
                trial = x + lam * step
                r1 = self.phi(trial) - g
                if np.abs(r1).max() < r0 or r0 < 1e-15:
                    break
                lam /= 2
            x, res = trial, r1
            if np.abs(lam * step).max() < tol * 1e-3 or np.abs(res).max() < 1e-15:
                break
        return x

    def product_coords(self, x, y, steps: int = 16) -> np.ndarray:
        """Coordinates of Phi(x) Phi(y), tracked by continuation along Phi(x) Phi(tau y)."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        gx = self.phi(x)
        try:
            return self.phi_inv(gx @ self.phi(y), guess=x + y)
        except NotInGroup:
            pass
        z = x.copy()
        for tau in np.linspace(0, 1, steps + 1)[1:]:
            z = self.phi_inv(gx @ self.phi(tau * y), guess=z)
        return z

    def _newton_start(self, g):
        # first-kind coordinates are a serviceable starting point
        return self.vee(_real_log(g))

    # ---- symbolic side

    @property
    def W(self) -> list:
        return _symbolic_W(self)

    def pullback_left(self, X) -> DiffOp:
        c = self._solve_W(list(self._const_vec(self.to_adapted(self.element(X)))))
        return DiffOp.first_order(c)

    def pullback_right(self, X) -> DiffOp:
        v = self._const_vec(self.to_adapted(self.element(X)))
        v = _mat_vec(_symbolic_Ad_inv(self), v)
        return DiffOp.first_order(self._solve_W(v))

    def _const_vec(self, v):
        return [ExpTrigPoly.constant(self.dim, a) for a in v]

    def _solve_W(self, rhs):
        W = self.W
        c = []
        for i in range(self.dim):
            acc = rhs[i]
            for l in range(i):
                if not W[i][l].is_zero():
                    acc = acc - W[i][l] * c[l]
            c.append(acc)
        return c

    def pullback_numeric(self, X, points, side: str = "left") -> np.ndarray:
        """Coefficient vectors at many points, evaluated from the symbolic operator."""
        op = self.pullback_left(X) if side == "left" else self.pullback_right(X)
        pts = np.asarray(points, dtype=float)
        return np.stack([c.evaluate(pts) for c in op.first_order_coefficients()], axis=-1)

    def haar_check(self) -> HaarWitness:
        d, n = self.dim, self.basis.n
        M = [self._solve_W([ExpTrigPoly.constant(d, int(i == k)) for i in range(d)]) for k in range(d)]
        M = [[M[k][i] for k in range(d)] for i in range(d)]
        one = ExpTrigPoly.constant(d, 1)
        for i in range(d):
            for k in range(d):
                e = M[i][k]
                if i == k and e != one:
                    raise StructureViolation("diagonal entry differs from 1", (i, k))
                if k > i and not e.is_zero():
                    raise StructureViolation("entry above the diagonal", (i, k))
                if i < n and k < n and i != k and not e.is_zero():
                    raise StructureViolation("A-block is not the identity", (i, k))
        return HaarWitness(matrix=tuple(tuple(r) for r in M), det=Fraction(1), n=n, m=self.basis.m)

    # ---- norm surrogate

    @property
    def basis_norms(self) -> np.ndarray:
        return np.array([np.sqrt(sum(float(v) ** 2 for v in vec)) for vec in self.basis.vectors])

    def norm_surrogate(self, g: np.ndarray) -> float:
        return self.norm_of_coords(self.phi_inv(g))

    def norm_of_coords(self, x) -> np.ndarray:
        return np.abs(np.asarray(x, dtype=float)) @ self.basis_norms

    def calibrate_subadditivity(self, rng, n_pairs: int = 100, box: float = 2.0) -> float:
        """Smallest B' with N(gh) <= N(g) + N(h) + B' on random pairs from a coordinate box."""
        worst = 0.0
        pairs = list(rng.uniform(-box, box, (n_pairs, 2, self.dim)))
        if 2 * self.dim <= 12:
            corners = np.array(np.meshgrid(*[[-box, box]] * (2 * self.dim), indexing="ij")).reshape(2 * self.dim, -1).T
            pairs += [c.reshape(2, self.dim) for c in corners]
        for x, y in pairs:
            z = self.product_coords(x, y)
            worst = max(worst, self.norm_of_coords(z) - self.norm_of_coords(x) - self.norm_of_coords(y))
        return max(0.0, float(worst))


@lru_cache(maxsize=None)
def _symbolic_ad_exps(chart: Chart) -> tuple:
    """exp(-x_k ad X_k) as d x d ExpTrigPoly matrices in all variables."""
    d = chart.dim
    out = []
    for k in range(d):
        neg = [[-v for v in row] for row in chart._ad[k]]
        E = exp_ad_symbolic(neg)
        out.append(tuple(tuple(e.embed(d, [k]) for e in row) for row in E))
    return tuple(out)


@lru_cache(maxsize=None)
def _symbolic_W(chart: Chart) -> list:
    d = chart.dim
    exps = _symbolic_ad_exps(chart)
    cols = []
    acc = None  # product exp(-x_d ad_d) ... exp(-x_{k+1} ad_{k+1})
    for k in range(d - 1, -1, -1):
        e_k = [ExpTrigPoly.constant(d, int(i == k)) for i in range(d)]
        cols.append(e_k if acc is None else _mat_vec(acc, e_k))
        acc = [list(r) for r in exps[k]] if acc is None else _mat_mul(acc, [list(r) for r in exps[k]])
    cols.reverse()
    return [[cols[k][i] for k in range(d)] for i in range(d)]


@lru_cache(maxsize=None)
def _symbolic_Ad_inv(chart: Chart) -> list:
    d = chart.dim
    exps = _symbolic_ad_exps(chart)
    acc = [list(r) for r in exps[d - 1]]
    for k in range(d - 2, -1, -1):
        acc = _mat_mul(acc, [list(r) for r in exps[k]])
    return acc


def _real_log(h: np.ndarray) -> np.ndarray:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        L = logm(h)
    if np.iscomplexobj(L):
        if np.abs(L.imag).max() > 1e-8:
            raise NotInGroup("matrix has no real logarithm near the chart")
        L = L.real
    return L


def _expm_many(ts: np.ndarray, M: np.ndarray) -> np.ndarray:
    """expm(t M) for every t, computed once per distinct value."""
    u, inv = np.unique(ts, return_inverse=True)
    return np.stack([expm(t * M) for t in u])[inv.ravel()]


def _closed_form_kind(chart: Chart):
    names = chart.algebra.basis_names
    models = chart._models
    if names == ("A", "N") and np.array_equal(models, np.array([[[1, 0], [0, 0]], [[0, 1], [0, 0]]])) and chart.basis.A == ((1, 0),):
        return "axb"
    if names == ("X", "Y", "Z") and chart.basis.A == ((1, 0, 0), (0, 1, 0)) and chart.basis.N == ((0, 0, 1),):
        return "h3"
    if models is not None and all(np.array_equal(m, np.diag(np.diag(m))) for m in models):
        return "diag"
    return None


def _closed_form_batch(kind: str, gs: np.ndarray, models=None) -> np.ndarray:
    if kind == "diag":
        dg = np.diagonal(gs, axis1=1, axis2=2)
        off = np.abs(gs - dg[:, :, None] * np.eye(gs.shape[1])).reshape(len(gs), -1).max(axis=1, initial=0.0)
        if np.any(dg <= 0) or np.any(off > 1e-12):
            raise NotInGroup("not a positive diagonal matrix")
        D = np.stack([np.diag(m) for m in models], axis=1)  # log diag(g) = D x
        x, *_ = np.linalg.lstsq(D, np.log(dg).T, rcond=None)
        x = x.T
        if np.abs(x @ D.T - np.log(dg)).max(initial=0.0) > 1e-9 * max(1.0, np.abs(np.log(dg)).max(initial=0.0)):
            raise NotInGroup("diagonal outside the model span")
        return x
    if kind == "axb":
        p, q = gs[:, 0, 0], gs[:, 0, 1]
        if np.any(p <= 0) or np.any(np.abs(gs[:, 1, 0]) > 1e-12) or np.any(np.abs(gs[:, 1, 1] - 1) > 1e-12):
            raise NotInGroup("not an affine matrix with positive scale")
        return np.stack([np.log(p), q / p], axis=1)
    low = np.abs(np.tril(np.ones(gs.shape[1:]), -1) * gs).reshape(len(gs), -1).max(axis=1, initial=0.0)
    diag = np.abs(np.diagonal(gs, axis1=1, axis2=2) - 1).max(axis=1, initial=0.0)
    if np.any(low > 1e-12) or np.any(diag > 1e-12):
        raise NotInGroup("not unitriangular")
    t, s = gs[:, 0, 1], gs[:, 1, 2]
    return np.stack([t, s, gs[:, 0, 2] - t * s], axis=1)


def _closed_form_inverse(chart: Chart, g: np.ndarray):
    """Closed-form inverses for the bundled low-dimensional models, else None."""
    kind = _closed_form_kind(chart)
    if kind is None:
        return None
    return _closed_form_batch(kind, np.asarray(g, dtype=float)[None], chart._models)[0]


def build_chart(alg: LieAlgebra, basis: Optional[AdaptedBasis] = None) -> Chart:
    basis = basis or adapted_basis(alg)
    d = alg.dim
    P = tuple(tuple(r) for r in rq.transpose(basis.vectors))
    Pinv = rq.inverse(P)
    ads = []
    for v in basis.vectors:
        cols = [rq.matvec(Pinv, tuple(Fraction(a) for a in alg.bracket(v, w))) for w in basis.vectors]
        ads.append(tuple(tuple(cols[j][i] for j in range(d)) for i in range(d)))
    labels = tuple(f"t{i + 1}" for i in range(basis.n)) + tuple(f"s{j + 1}" for j in range(basis.m))
    models = None
    if alg.matrix_model is not None:
        models = np.stack([alg.model_matrix(v) for v in basis.vectors])
    ad_float = np.array([[[float(a) for a in row] for row in ad] for ad in ads])
    return Chart(algebra=alg, basis=basis, labels=labels, _P=P, _ad=tuple(ads), _models=models, _ad_float=ad_float)
