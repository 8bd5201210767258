"""Factorization on the group through one-parameter factorizations along the chart axes.

With Phi(x) = exp(x_1 M_1) ... exp(x_d M_d) and a separable phi(x) = prod phi_k(x_k),

    int phi(x) pi(Phi(x)) v' dx = Pi_1(phi_1) Pi_2(phi_2) ... Pi_d(phi_d) v',

so factorizing along axis 1 first, then axis 2 on the new family, and so on, gives
v = Pi(chi) v' for chi = Phi_*(phi), with Lebesgue measure in coordinates as Haar measure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .coords import Chart, _closed_form_kind, _expm_many
from .entireq import StripEntire
from .exptrig import DiffOp
from .factor1d import ResidualExceeded, _kink_correction, factorize
from .repmodel import MatrixRep, smear, uniform_grid

__all__ = [
    "one_param_rep",
    "iterate_factorization",
    "SeparableKernel",
    "tensor_phi",
    "chi_kernel",
    "pushforward_and_verify",
    "pushforward_membership",
    "GroupFactorResult",
]

SLOW_CHECK_POINTS = 4096


def one_param_rep(chart: Chart, X) -> MatrixRep:
    """t -> pi(exp(tX)) in the matrix model, X a basis name, adapted label or vector."""
    M = chart.algebra.model_matrix(chart.element(X))
    return MatrixRep.from_generator(M, label=str(X) if isinstance(X, str) else "")


def _axis_reps(chart: Chart) -> list:
    return [MatrixRep.from_generator(m, label=l) for m, l in zip(chart._models, chart.labels)]


def iterate_factorization(
    chart: Chart,
    B: Sequence,
    order: Optional[Sequence[int]] = None,
    window: float = 8.0,
    n: int = 2**14,
    tol: float = 1e-6,
) -> list:
    """[(axis, FactorResult)] in application order; B' is the last result's B_prime.

    The default order is the chart order, which makes the composite an integral
    against Phi.
    """
    order = list(range(chart.dim)) if order is None else list(order)
    reps = _axis_reps(chart)
    current = [np.asarray(v, dtype=float) for v in B]
    out = []
    for k in order:
        try:
            res = factorize(reps[k], current, window=window, n=n, tol=tol)
        except ResidualExceeded as exc:
            raise ResidualExceeded(f"axis {chart.labels[k]}: {exc}", {"axis": chart.labels[k], "detail": exc.worst}) from exc
        out.append((k, res))
        current = res.B_prime
    return out


# ---------------------------------------------------------------- kernels on g


@dataclass(frozen=True, eq=False)
class SeparableKernel:
    """f(x) = prod_k f_k(x_k) with f_k(t, deriv) vectorized; rates are per-axis decay rates."""

    factors: tuple
    rates: tuple = ()
    label: str = "kernel"

    @property
    def dim(self) -> int:
        return len(self.factors)

    def __call__(self, xs) -> np.ndarray:
        return self.deriv(xs, (0,) * self.dim)

    def deriv(self, xs, alpha) -> np.ndarray:
        xs = np.asarray(xs, dtype=float)
        out = np.ones(xs.shape[:-1])
        for k, (f, a) in enumerate(zip(self.factors, alpha)):
            out = out * f(xs[..., k], a)
        return out

    def sample(self, axes: Sequence) -> np.ndarray:
        """Values on the tensor grid axes[0] x axes[1] x ..."""
        out = np.ones(())
        for f, ax in zip(self.factors, axes):
            out = np.multiply.outer(out, f(np.asarray(ax, dtype=float), 0))
        return out

    def apply(self, op: DiffOp, xs) -> np.ndarray:
        xs = np.asarray(xs, dtype=float)
        out = np.zeros(xs.shape[:-1])
        for alpha, c in op.coeffs.items():
            out = out + c.evaluate(xs) * self.deriv(xs, alpha)
        return out

    @property
    def decay(self) -> float:
        return float(sum(self.rates))

    def to_json(self) -> dict:
        return {"label": self.label, "rates": [float(r) for r in self.rates], "decay": self.decay}


def tensor_phi(kernels: Sequence, rates: Sequence = (), label: str = "tensor") -> SeparableKernel:
    """Tensor product of 1-D kernels; each is f(t, deriv) or a StripEntire (its chi)."""
    facs, rs = [], list(rates)
    for k in kernels:
        if isinstance(k, StripEntire):
            facs.append(k.chi)
            if not rates:
                rs.append(min(k.rhos))
        else:
            facs.append(k)
    return SeparableKernel(tuple(facs), tuple(rs), label)


def chi_kernel(per_axis: Sequence, dim: int) -> SeparableKernel:
    """The tensor of the per-axis chi's placed on their chart axes."""
    qs: list = [None] * dim
    for k, res in per_axis:
        if qs[k] is not None:
            raise ValueError("axis factorized twice")
        qs[k] = res.q
    if any(q is None for q in qs):
        raise ValueError("every chart axis needs a kernel")
    return tensor_phi(qs, label="chi")


def exp_sqrt_kernel(dim: int, beta: float) -> SeparableKernel:
    """prod_k exp(-beta sqrt(1 + x_k^2)): smooth, decay rate beta per axis."""

    def f(t, d):
        r = np.sqrt(1 + t * t)
        g = np.exp(-beta * r)
        if d == 0:
            return g
        if d == 1:
            return -beta * t / r * g
        if d == 2:
            return (beta**2 * t * t / r**2 - beta / r**3) * g
        raise ValueError("derivatives above order 2 are not provided")

    return SeparableKernel(tuple([f] * dim), tuple([beta] * dim), f"exp_sqrt(beta={beta:g})")


# ---------------------------------------------------------------- Pi(chi) v'


def _corrected_smear(rep: MatrixRep, q: StripEntire, w, ts, tail_budget: float) -> np.ndarray:
    h = float(ts[1] - ts[0])
    val = smear(rep, q.chi(ts), ts, w, tail_budget=tail_budget)
    return val + _kink_correction(q, rep.generator, np.asarray(w, dtype=float)[None], h)[0]


def apply_iterated(chart: Chart, per_axis: Sequence, v, ts, tail_budget: float = 1e-8) -> np.ndarray:
    """Pi_{k1}(chi_1) Pi_{k2}(chi_2) ... v for the application order of ``per_axis``."""
    reps = _axis_reps(chart)
    w = np.asarray(v, dtype=float)
    for k, res in reversed(list(per_axis)):
        w = _corrected_smear(reps[k], res.q, w, ts, tail_budget)
    return w


def coordinate_sum(chart: Chart, kernel: SeparableKernel, v, axis: np.ndarray) -> np.ndarray:
    """Trapezoid sum of phi(x) pi(Phi(x)) v over the tensor grid axis^d, axis by axis."""
    h = float(axis[1] - axis[0])
    wts = np.full(len(axis), h)
    wts[0] = wts[-1] = h / 2
    reps = _axis_reps(chart)
    w = np.asarray(v, dtype=float)
    for k in range(chart.dim - 1, -1, -1):
        orb = reps[k].orbit_samples(w, axis)
        w = (kernel.factors[k](axis, 0) * wts) @ orb
    return w


def chart_sum(chart: Chart, kernel: SeparableKernel, v, axis: np.ndarray, block: int = 2**16) -> np.ndarray:
    """The same sum evaluated on the group: g = Phi(x) as a matrix, chi(g) = phi(phi_inv(g)),
    pi(g) v = g v, and the coordinate density 1 / det W(x) of Haar measure."""
    h = float(axis[1] - axis[0])
    wts = np.full(len(axis), h)
    wts[0] = wts[-1] = h / 2
    d = chart.dim
    grids = np.meshgrid(*([axis] * d), indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=1)
    wprod = np.ones(())
    for _ in range(d):
        wprod = np.multiply.outer(wprod, wts)
    wprod = wprod.ravel()
    v = np.asarray(v, dtype=float)
    total = np.zeros(len(v))
    for a in range(0, len(pts), block):
        x = pts[a : a + block]
        g = chart.phi_batch(x)
        y = chart.phi_inv_batch(g)
        dens = 1.0 / np.linalg.det(_W_batch(chart, x))
        total += (kernel(y) * dens * wprod[a : a + block]) @ (g @ v)
    return total


def _W_batch(chart: Chart, xs: np.ndarray) -> np.ndarray:
    d = chart.dim
    W = np.zeros((len(xs), d, d))
    acc = np.broadcast_to(np.eye(d), (len(xs), d, d)).copy()
    for k in range(d - 1, -1, -1):
        W[:, :, k] = acc[:, :, k]
        acc = acc @ _expm_many(-xs[:, k], chart._ad_float[k])
    return W


# ---------------------------------------------------------------- weighted suprema on G


def _inverse_coords(chart: Chart, xs: np.ndarray) -> np.ndarray:
    return chart.phi_inv_batch(np.linalg.inv(chart.phi_batch(xs)))


def symmetric_norm(chart: Chart, xs: np.ndarray) -> np.ndarray:
    """min(N(g), N(g^{-1})): both are upper bounds for |g|_G, so the min is one too."""
    return np.minimum(chart.norm_of_coords(xs), chart.norm_of_coords(_inverse_coords(chart, xs)))


def _field_ops(chart: Chart, fields: Sequence, second_order: Optional[tuple] = None) -> dict:
    """name -> (operator at g, operator applied to chi at g for L(chi o inverse))."""
    d = chart.dim
    ops = {"Id": (DiffOp.identity(d), DiffOp.identity(d))}
    for X in fields:
        ops[str(X)] = (chart.pullback_left(X), chart.pullback_right(X))
    if second_order is not None:
        X, Y = second_order
        ops[f"{X}*{Y}"] = (chart.pullback_left(X) @ chart.pullback_left(Y), chart.pullback_right(X) @ chart.pullback_right(Y))
    return ops


def weighted_suprema(
    chart: Chart,
    f: SeparableKernel,
    lams: Sequence[float],
    fields: Sequence = (),
    second_order: Optional[tuple] = None,
    windows: Sequence[float] = (4.0, 8.0, 12.0),
    step: float = 0.25,
) -> dict:
    """sup over nested grid windows of e^{lam N(g)} (|L chi(g)| + |L(chi o inv)(g)|).

    The two terms are bounded separately; the second one is the right-invariant
    field applied to chi at g^{-1}, and N is symmetric, so it is sampled on the same grid.
    A sup that stops changing between the two largest windows is reported finite.
    """
    windows = sorted(windows)
    m = int(round(windows[-1] / step))
    axis = step * np.arange(-m, m + 1)
    grids = np.meshgrid(*([axis] * chart.dim), indexing="ij")
    xs = np.stack([g.ravel() for g in grids], axis=1)
    radius = np.abs(xs).max(axis=1)
    N = symmetric_norm(chart, xs)
    ops = _field_ops(chart, fields, second_order)
    table = {}
    for name, (left, right) in ops.items():
        a = np.abs(f.apply(left, xs))
        b = np.abs(f.apply(right, xs))
        rows = {}
        for lam in lams:
            wgt = np.exp(lam * N)
            sups = [float(np.max(wgt[radius <= W + 1e-12] * a[radius <= W + 1e-12]) + np.max(wgt[radius <= W + 1e-12] * b[radius <= W + 1e-12])) for W in windows]
            rows[repr(float(lam))] = {"sups": sups, "verdict": _verdict(sups)}
        table[name] = rows
    return {"windows": list(windows), "step": step, "by_operator": table}


def _verdict(sups: Sequence[float]) -> str:
    if not all(math.isfinite(s) for s in sups):
        return "diverging"
    if sups[-1] <= sups[-2] * (1 + 1e-9):
        return "finite"
    if all(b > a * (1 + 1e-6) for a, b in zip(sups, sups[1:])):
        return "diverging"
    return "inconclusive"


# ---------------------------------------------------------------- end to end


@dataclass(eq=False)
class GroupFactorResult:
    chart: Chart
    per_axis: list
    kernel: SeparableKernel
    B: list
    B_prime: list
    reconstructed: list = field(default_factory=list)
    residuals: list = field(default_factory=list)
    agreement: float = 0.0
    check_grid: int = 0
    certificate: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "algebra": list(self.chart.algebra.basis_names),
            "coordinates": list(self.chart.labels),
            "order": [self.chart.labels[k] for k, _ in self.per_axis],
            "axes": [
                {
                    "axis": self.chart.labels[k],
                    "lambda": r.lam,
                    "zeros_imag": [float(x) for x in r.q.rhos],
                    "residuals": {a: b for a, b in r.residuals.items() if a != "worst_vector"},
                }
                for k, r in self.per_axis
            ],
            "kernel": self.kernel.to_json(),
            "B": [np.asarray(v).tolist() for v in self.B],
            "B_prime": [np.asarray(v).tolist() for v in self.B_prime],
            "relative_residuals": self.residuals,
            "quadrature_agreement": self.agreement,
            "agreement_grid_per_axis": self.check_grid,
            "K_certificate": self.certificate,
        }


def pushforward_and_verify(
    chart: Chart,
    B: Sequence,
    per_axis: Sequence,
    tol: float = 1e-4,
    window: float = 8.0,
    n: int = 2**14,
    check_points: int = 2**18,
    check_window: float = 6.0,
    lam: float = 1.0,
    tail_budget: float = 1e-8,
    agreement_tol: float = 1e-6,
) -> GroupFactorResult:
    """Check v = Pi(chi) v' for chi = Phi_*(tensor of the per-axis kernels)."""
    chart.haar_check()
    if [k for k, _ in per_axis] != list(range(chart.dim)):
        raise ValueError("the group integral needs the chart order of axes")
    kernel = chi_kernel(per_axis, chart.dim)
    B_prime = per_axis[-1][1].B_prime
    ts = uniform_grid(window, n)
    recon, rel = [], []
    for v, vp in zip(B, B_prime):
        w = apply_iterated(chart, per_axis, vp, ts, tail_budget)
        recon.append(w)
        rel.append(float(np.linalg.norm(np.asarray(v, float) - w) / max(np.linalg.norm(v), 1e-300)))
    # the same Riemann sum two ways, on a grid small enough for full tensor evaluation
    if _closed_form_kind(chart) is None:
        # per-point Newton inversion: keep the tensor check small
        check_points = min(check_points, SLOW_CHECK_POINTS)
    nc = max(8, int(round(check_points ** (1.0 / chart.dim))))
    axis = uniform_grid(check_window, nc)
    agree = 0.0
    for vp, v in zip(B_prime, B):
        a = coordinate_sum(chart, kernel, vp, axis)
        b = chart_sum(chart, kernel, vp, axis)
        agree = max(agree, float(np.linalg.norm(a - b) / max(np.linalg.norm(v), 1e-300)))
    cert = weighted_suprema(chart, kernel, [lam], fields=chart.labels, windows=(2.0, 4.0, 6.0), step=0.125 if chart.dim < 3 else 0.25)
    result = GroupFactorResult(chart, list(per_axis), kernel, [np.asarray(v, float) for v in B], B_prime, recon, rel, agree, nc, cert)
    if rel and max(rel) > tol:
        raise ResidualExceeded(f"group reconstruction residual {max(rel):.3g} above {tol:g}", result)
    if agree > agreement_tol:
        raise ResidualExceeded(f"coordinate and chart quadratures differ by {agree:.3g}", result)
    bad = [name for name, rows in cert["by_operator"].items() if rows[repr(float(lam))]["verdict"] != "finite"]
    if bad:
        raise ResidualExceeded(f"K(G) certificate not finite for {bad} at lambda {lam:g}", result)
    return result


def pushforward_membership(
    chart: Chart,
    f: Optional[SeparableKernel] = None,
    beta: float = 3.0,
    ladder: Sequence[float] = (0.5, 1.0, 1.5, 3.5, 4.5),
    windows: Sequence[float] = (4.0, 8.0, 12.0),
    step: float = 0.25,
) -> dict:
    """Weighted suprema of Phi_* f under Id, the basis fields and one second-order product.

    The decay budget is beta minus the largest exponential growth of the pulled-back
    coefficients, divided by the largest basis norm.
    """
    f = f or exp_sqrt_kernel(chart.dim, beta)
    beta = min(f.rates) if f.rates else beta
    fields = list(chart.labels)
    second = (fields[0], fields[-1]) if len(fields) > 1 else None
    ops = _field_ops(chart, fields, second)
    growth = 0.0
    for left, right in ops.values():
        growth = max(growth, float(left.growth_rate()), float(right.growth_rate()))
    budget = (beta - growth) / float(np.max(chart.basis_norms))
    table = weighted_suprema(chart, f, ladder, fields, second, windows, step)
    summary = {}
    for lam in ladder:
        verdicts = {name: rows[repr(float(lam))]["verdict"] for name, rows in table["by_operator"].items()}
        summary[repr(float(lam))] = {
            "below_budget": bool(lam < budget),
            "all_finite": all(v == "finite" for v in verdicts.values()),
            "any_diverging": any(v == "diverging" for v in verdicts.values()),
        }
    return {"kernel": f.to_json(), "growth": growth, "budget": budget, "table": table, "summary": summary}
