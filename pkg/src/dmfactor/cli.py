"""dmfactor command line: one subcommand per module, JSON (and CSV) reports.

Exit codes: 0 when every certificate and residual passes, 1 when one fails
(the report then carries a "failure" entry), 2 on bad input.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import io
from .coords import NotInGroup, StructureViolation, UnsupportedElement, build_chart
from .entireq import BoundCertificateFailed, build_q
from .factor1d import InsufficientDamping, ResidualExceeded, factorize, simultaneity_check
from .factorgroup import exp_sqrt_kernel, iterate_factorization, pushforward_and_verify, pushforward_membership
from .fixtures import resolve_algebra
from .liealg import LieAlgebraError, adapted_basis, algebra_to_dict
from .repmodel import MatrixRep, TailTooFat, WindowTooSmall
from .weights import AxiomFailed, GridExhausted, InvalidTau, build_sigma, check_minorant, check_weight_axioms, log_grid, sigma_table

FAILURES = (
    ResidualExceeded,
    BoundCertificateFailed,
    AxiomFailed,
    StructureViolation,
    InsufficientDamping,
    TailTooFat,
    WindowTooSmall,
    GridExhausted,
    NotInGroup,
)
BAD_INPUT = (io.InputError, LieAlgebraError, UnsupportedElement, InvalidTau)


class Failure(Exception):
    def __init__(self, msg, report):
        super().__init__(msg)
        self.report = report


# ---------------------------------------------------------------- argument helpers


def _positive(kind):
    def parse(text):
        try:
            val = kind(text)
        except ValueError as exc:
            raise argparse.ArgumentTypeError(f"not a number: {text!r}") from exc
        if not val > 0:
            raise argparse.ArgumentTypeError(f"must be positive: {text!r}")
        return val

    return parse


def _tolerance(text):
    val = _positive(float)(text)
    if val < 1e-12:
        raise argparse.ArgumentTypeError("tolerance must be at least 1e-12")
    return val


def _float_list(text):
    try:
        vals = [float(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad list {text!r}") from exc
    if not vals or any(not v > 0 for v in vals):
        raise argparse.ArgumentTypeError("expected a comma list of positive numbers")
    return vals


def _load_rep(path) -> MatrixRep:
    data = io.read_table(path)
    if "generator" not in data:
        raise io.InputError(f"{path}: a representation needs a 'generator' matrix")
    try:
        M = np.array(data["generator"], dtype=float)
        return MatrixRep.from_generator(M, label=str(data.get("label", Path(path).stem)))
    except (ValueError, TypeError) as exc:
        raise io.InputError(f"{path}: bad generator: {exc}") from exc


def _vectors(args, dim: int) -> list:
    if args.vectors:
        data = io.read_table(args.vectors)
        try:
            vecs = [np.array(v, dtype=float) for v in data["vectors"]]
        except (KeyError, TypeError, ValueError) as exc:
            raise io.InputError(f"{args.vectors}: expected a 'vectors' list of number lists") from exc
    else:
        rng = np.random.default_rng(args.seed)
        vecs = [v / np.linalg.norm(v) for v in rng.normal(size=(args.random, dim))]
    if any(v.shape != (dim,) for v in vecs):
        raise io.InputError(f"vectors must have {dim} entries")
    return vecs


def _point(text, dim):
    try:
        x = [float(t) for t in text.split(",")]
    except ValueError as exc:
        raise io.InputError(f"bad point {text!r}") from exc
    if len(x) != dim:
        raise io.InputError(f"point needs {dim} coordinates")
    return np.array(x)


# ---------------------------------------------------------------- subcommands


def cmd_check_algebra(args, out):
    alg = resolve_algebra(args.algebra)
    basis = adapted_basis(alg)
    return {
        "algebra": algebra_to_dict(alg),
        "derived_basis": [[str(a) for a in v] for v in alg.derived_basis],
        "nilpotency_class_of_derived": alg.nilpotency_class_of_derived,
        "adapted_basis": {"A": [[str(a) for a in v] for v in basis.A], "N": [[str(a) for a in v] for v in basis.N]},
        "valid": True,
    }


def cmd_coords(args, out):
    ch = build_chart(resolve_algebra(args.algebra))
    x = _point(args.point, ch.dim)
    g = ch.phi(x)
    back = ch.phi_inv(g)
    err = float(np.abs(back - x).max())
    rep = {"labels": list(ch.labels), "point": x, "phi": g, "phi_inv": back, "round_trip_error": err}
    if err > args.tol:
        raise Failure(f"round trip error {err:.3g}", rep)
    return rep


def cmd_pullback(args, out):
    ch = build_chart(resolve_algebra(args.algebra))
    elems = [args.element] if args.element else list(ch.algebra.basis_names)
    rep = {"labels": list(ch.labels), "fields": {}}
    for X in elems:
        L, R = ch.pullback_left(X), ch.pullback_right(X)
        rep["fields"][X] = {"left": L.format(list(ch.labels)), "right": R.format(list(ch.labels)), "left_terms": L, "right_terms": R}
    return rep


def cmd_haar_check(args, out):
    ch = build_chart(resolve_algebra(args.algebra))
    w = ch.haar_check()
    return {"labels": list(ch.labels), "witness": w.to_json(list(ch.labels)), "det": str(w.det)}


def _sigma(args):
    return build_sigma(args.tau, t_max=args.t_max, max_jumps=args.max_jumps)


def cmd_weights(args, out):
    sigma = _sigma(args)
    grid = log_grid(1.0, sigma.t_max)
    axioms = check_weight_axioms(sigma, grid)
    minorant = check_minorant(sigma, args.tau)
    rep = {"sigma": sigma, "axioms": axioms, "minorant_excess": minorant}
    if out is not None:
        io.write_csv(out / "sigma.csv", ["t", "sigma", "ratio_2t", "ratio_log"], sigma_table(sigma, log_grid(1.0, sigma.t_max, 1.05)))
    if minorant > 1e-12:
        raise Failure(f"sigma exceeds tau_n / n by {minorant:.3g}", rep)
    return rep


def cmd_entire_q(args, out):
    sigma = _sigma(args)
    q = build_q(sigma, args.strip, args.K, window=args.calibration_window, strips=args.strips or ())
    rep = {"sigma": sigma, "Q": q}
    if out is not None:
        xs = np.linspace(-args.calibration_window, args.calibration_window, 801)
        io.write_csv(out / "log_abs_q.csv", ["x", "log_abs_Q", "omega"], zip(xs, q.log_abs(xs), q.omega(xs)))
    return rep


def cmd_factor1d(args, out):
    rep_ = _load_rep(args.rep)
    B = _vectors(args, rep_.dim)
    try:
        res = factorize(rep_, B, window=args.window, n=args.points, tol=args.tol)
    except ResidualExceeded as exc:
        partial = exc.worst.to_json() if hasattr(exc.worst, "to_json") else exc.worst
        raise Failure(str(exc), {"partial": partial}) from exc
    report = {"rep": rep_, "result": res}
    if len(B) >= 2:
        report["simultaneity"] = simultaneity_check(res)
    if out is not None and res.q is not None:
        ts = res.ts[:: args.csv_stride]
        io.write_csv(out / "chi.csv", ["t", "chi"], zip(ts, res.chi(ts)))
        for i, (v, h) in enumerate(zip(res.vectors, res.h)):
            g = rep_.orbit_samples(v, ts)
            hs = h[:: args.csv_stride]
            cols = [f"gamma{j}" for j in range(rep_.dim)] + [f"h{j}" for j in range(rep_.dim)]
            io.write_csv(out / f"orbit_{i}.csv", ["t"] + cols, (np.concatenate([[t], a, b]) for t, a, b in zip(ts, g, hs)))
    return report


def cmd_factor_group(args, out):
    ch = build_chart(resolve_algebra(args.algebra))
    if not ch.has_model:
        raise io.InputError("the algebra file needs a matrix model to act on vectors")
    if args.rep:
        data = io.read_table(args.rep)
        if data.get("kind", "model") != "model":
            raise io.InputError("group representations are taken from the algebra's matrix model")
    B = _vectors(args, ch._models.shape[1])
    try:
        per_axis = iterate_factorization(ch, B, window=args.window, n=args.points, tol=args.axis_tol)
        res = pushforward_and_verify(ch, B, per_axis, tol=args.tol, window=args.window, n=args.points)
    except ResidualExceeded as exc:
        partial = exc.worst.to_json() if hasattr(exc.worst, "to_json") else exc.worst
        raise Failure(str(exc), {"partial": partial}) from exc
    if out is not None:
        ax = np.linspace(-args.window, args.window, 401)
        for k in range(ch.dim):
            pts = np.zeros((len(ax), ch.dim))
            pts[:, k] = ax
            io.write_csv(out / f"chi_axis_{ch.labels[k]}.csv", ["x", "chi"], zip(ax, res.kernel(pts)))
    return {"result": res}


def cmd_pushforward_check(args, out):
    ch = build_chart(resolve_algebra(args.algebra))
    name, _, val = args.kernel.partition(":")
    if name != "exp_sqrt":
        raise io.InputError(f"unknown kernel {args.kernel!r} (expected exp_sqrt:beta)")
    try:
        beta = float(val)
    except ValueError as exc:
        raise io.InputError(f"bad kernel parameter in {args.kernel!r}") from exc
    if not beta > 0:
        raise io.InputError("beta must be positive")
    rep = pushforward_membership(ch, exp_sqrt_kernel(ch.dim, beta), ladder=args.lambda_ladder)
    bad = [lam for lam, s in rep["summary"].items() if s["below_budget"] and not s["all_finite"]]
    if bad:
        raise Failure(f"weighted suprema not finite below the budget at lambda {bad}", rep)
    return rep


# ---------------------------------------------------------------- parser and run


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dmfactor", description=__doc__.splitlines()[0])
    p.add_argument("--out", type=Path, help="directory for report.json and CSV files (default: JSON on stdout)")
    sub = p.add_subparsers(dest="command", required=True)

    def algebra_cmd(name, fn, help_):
        s = sub.add_parser(name, help=help_)
        s.add_argument("algebra", help="fixture name or TOML/JSON file")
        s.set_defaults(fn=fn)
        return s

    algebra_cmd("check-algebra", cmd_check_algebra, "validate structure constants")
    s = algebra_cmd("coords", cmd_coords, "evaluate the chart and its inverse")
    s.add_argument("--point", required=True, help="comma list of coordinates")
    s.add_argument("--tol", type=_tolerance, default=1e-10)
    s = algebra_cmd("pullback", cmd_pullback, "left and right invariant fields in coordinates")
    s.add_argument("--element", help="basis name (default: all)")
    algebra_cmd("haar-check", cmd_haar_check, "unit-triangular Jacobian witness")

    def weight_args(s):
        s.add_argument("--tau", action="append", default=None, help="linear[:c], power:p or logpower:p (repeatable)")
        s.add_argument("--t-max", type=_positive(float), default=1e6)
        s.add_argument("--max-jumps", type=_positive(int))

    s = sub.add_parser("weights", help="weight function below growth functions")
    weight_args(s)
    s.set_defaults(fn=cmd_weights)
    s = sub.add_parser("entire-q", help="strip multiplier and its certificates")
    weight_args(s)
    s.add_argument("--strip", type=_positive(float), default=3.0)
    s.add_argument("--K", type=_positive(int), default=32)
    s.add_argument("--strips", type=_float_list)
    s.add_argument("--calibration-window", type=_positive(float), default=200.0)
    s.set_defaults(fn=cmd_entire_q)

    def family_args(s):
        s.add_argument("--vectors", help="TOML/JSON file with a 'vectors' list")
        s.add_argument("--random", type=_positive(int), default=5, help="random unit vectors when --vectors is absent")
        s.add_argument("--seed", type=int, default=0)
        s.add_argument("--window", type=_positive(float), default=8.0)
        s.add_argument("--points", type=_positive(int), default=2**14)

    s = sub.add_parser("factor1d", help="factor a family under t -> exp(tM)")
    s.add_argument("--rep", required=True, help="TOML/JSON file with a 'generator' matrix")
    family_args(s)
    s.add_argument("--tol", type=_tolerance, default=1e-6)
    s.add_argument("--csv-stride", type=_positive(int), default=16)
    s.set_defaults(fn=cmd_factor1d)

    s = sub.add_parser("factor-group", help="factor a family under the matrix model of the group")
    s.add_argument("--algebra", required=True)
    s.add_argument("--rep", help="optional file; only kind = \"model\" is supported")
    family_args(s)
    s.add_argument("--tol", type=_tolerance, default=1e-4)
    s.add_argument("--axis-tol", type=_tolerance, default=1e-6)
    s.set_defaults(fn=cmd_factor_group, random=3)

    s = sub.add_parser("pushforward-check", help="weighted suprema of a pushed-forward kernel")
    s.add_argument("--algebra", required=True)
    s.add_argument("--kernel", default="exp_sqrt:3")
    s.add_argument("--lambda-ladder", type=_float_list, default=[0.5, 1.0, 1.5, 3.5, 4.5])
    s.set_defaults(fn=cmd_pushforward_check)
    return p


def _config(args) -> dict:
    cfg = {k: v for k, v in vars(args).items() if k not in ("fn",)}
    return {k: (str(v) if isinstance(v, Path) else v) for k, v in cfg.items()}


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    if getattr(args, "tau", "unset") is None:
        args.tau = ["linear"]
    out = args.out
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    config = _config(args)
    status, body = 0, {}
    try:
        body = args.fn(args, out)
    except BAD_INPUT as exc:
        print(f"dmfactor: {exc}", file=sys.stderr)
        return 2
    except Failure as exc:
        status, body = 1, dict(exc.report, failure=str(exc))
    except FAILURES as exc:
        status, body = 1, {"failure": f"{type(exc).__name__}: {exc}", "witness": getattr(exc, "witness", None)}
    report = {"command": args.command, "config": config, "status": "ok" if status == 0 else "failed", "report": body}
    text = io.dumps(report)
    if out is not None:
        (out / "report.json").write_text(text)
    else:
        sys.stdout.write(text)
    return status


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
