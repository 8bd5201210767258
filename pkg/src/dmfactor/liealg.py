"""Exact Lie-algebra arithmetic over the rationals.

A :class:`LieAlgebra` stores structure constants ``c[i][j][k]`` with
``[X_i, X_j] = sum_k c[i][j][k] X_k``.  Algebra elements are coordinate
tuples in that basis.  Brackets and BCH products are written against a
generic coefficient ring so the same code serves rational elements and
symbolic ones (sympy expressions) when reordering group products.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from math import factorial
from typing import Optional, Sequence

import numpy as np

from . import rational as rq

__all__ = [
    "LieAlgebraError",
    "AntisymmetryViolation",
    "JacobiViolation",
    "NotSolvable",
    "DerivedNotNilpotent",
    "NotNilpotentContext",
    "LieAlgebra",
    "AdaptedBasis",
    "validate",
    "from_brackets",
    "adapted_basis",
    "bch",
    "reorder_polynomials",
]


class LieAlgebraError(ValueError):
    pass


class AntisymmetryViolation(LieAlgebraError):
    def __init__(self, i, j, k):
        super().__init__(f"c[{i}][{j}][{k}] != -c[{j}][{i}][{k}]")
        self.triple = (i, j, k)


class JacobiViolation(LieAlgebraError):
    def __init__(self, i, j, k):
        super().__init__(f"Jacobi identity fails for basis triple ({i}, {j}, {k})")
        self.triple = (i, j, k)


class NotSolvable(LieAlgebraError):
    pass


class DerivedNotNilpotent(LieAlgebraError):
    pass


class NotNilpotentContext(LieAlgebraError):
    pass


@dataclass(frozen=True)
class LieAlgebra:
    dim: int
    basis_names: tuple
    c: tuple  # c[i][j][k] as Fractions
    derived_basis: tuple = ()  # RREF basis of [g, g]
    nilpotency_class_of_derived: int = 0
    matrix_model: Optional[tuple] = None  # per-basis-element rational matrices
    _sparse: tuple = field(default=(), repr=False, compare=False)

    def bracket(self, x: Sequence, y: Sequence) -> list:
        """[x, y] for coordinate vectors with entries in any commutative ring."""
        out = [0] * self.dim
        for i, j, k, cijk in self._sparse:
            xi, yj = x[i], y[j]
            if _is_zero(xi) or _is_zero(yj):
                continue
            out[k] = out[k] + _scal(cijk, xi * yj)
        return out

    def ad_matrix(self, x: Sequence) -> list[list[Fraction]]:
        """Matrix of ad_x acting on coordinate vectors (columns are images of basis)."""
        cols = [self.bracket(x, rq.unit(self.dim, j)) for j in range(self.dim)]
        return [[Fraction(cols[j][i]) for j in range(self.dim)] for i in range(self.dim)]

    def model_matrix(self, x: Sequence) -> np.ndarray:
        """Float matrix of ``x`` in the faithful matrix model."""
        if self.matrix_model is None:
            raise LieAlgebraError("algebra has no matrix model")
        mats = np.array([[[float(a) for a in row] for row in m] for m in self.matrix_model])
        coeffs = np.array([float(a) for a in x])
        return np.tensordot(coeffs, mats, axes=1)

    @property
    def model_size(self) -> int:
        if self.matrix_model is None:
            raise LieAlgebraError("algebra has no matrix model")
        return len(self.matrix_model[0])

    def span_bracket(self, u: Sequence[Sequence], w: Sequence[Sequence]) -> list:
        """RREF basis of [span u, span w]."""
        vs = [tuple(Fraction(a) for a in self.bracket(a, b)) for a in u for b in w]
        vs = [v for v in vs if not rq.is_zero(v)]
        return rq.span_basis(vs) if vs else []

    def is_nilpotent(self) -> bool:
        return _lower_central_class(self, [rq.unit(self.dim, i) for i in range(self.dim)]) is not None


def _is_zero(x) -> bool:
    try:
        return x == 0
    except Exception:  # pragma: no cover - exotic rings
        return False


def _scal(c: Fraction, x):
    if c == 1:
        return x
    if isinstance(x, (int, Fraction)):
        return c * x
    mod = type(x).__module__
    if mod.startswith("sympy"):
        import sympy

        return sympy.Rational(c.numerator, c.denominator) * x
    return x * c


def _lower_central_class(alg: LieAlgebra, sub: Sequence[Sequence]) -> Optional[int]:
    """Nilpotency class of the subalgebra spanned by ``sub`` (None if not nilpotent).

    Class 0 means the zero subalgebra; class c means C^{c+1} = 0 with C^1 = sub.
    """
    s = rq.span_basis(sub) if sub else []
    if not s:
        return 0
    cur = s
    for cls in range(1, alg.dim + 2):
        nxt = alg.span_bracket(s, cur)
        if not nxt:
            return cls
        if len(nxt) == len(cur):
            return None
        cur = nxt
    return None


def _derived_series(alg: LieAlgebra) -> list[list]:
    cur = [rq.unit(alg.dim, i) for i in range(alg.dim)]
    series = [cur]
    while cur:
        nxt = alg.span_bracket(cur, cur)
        if len(nxt) == len(cur):
            break
        series.append(nxt)
        cur = nxt
    return series


def _build(dim, names, table, model) -> LieAlgebra:
    sparse = tuple(
        (i, j, k, table[i][j][k])
        for i in range(dim)
        for j in range(dim)
        for k in range(dim)
        if table[i][j][k] != 0
    )
    return LieAlgebra(
        dim=dim,
        basis_names=tuple(names),
        c=tuple(tuple(tuple(row) for row in plane) for plane in table),
        matrix_model=model,
        _sparse=sparse,
    )


def validate(c, names: Optional[Sequence[str]] = None, matrix_model=None) -> LieAlgebra:
    """Check antisymmetry, Jacobi, solvability and nilpotency of [g, g]."""
    dim = len(c)
    if dim < 1:
        raise LieAlgebraError("dimension must be at least 1")
    table = [[[rq.as_fraction(c[i][j][k]) for k in range(dim)] for j in range(dim)] for i in range(dim)]
    for i, j, k in itertools.product(range(dim), repeat=3):
        if table[i][j][k] != -table[j][i][k]:
            raise AntisymmetryViolation(i, j, k)
    names = tuple(names) if names is not None else tuple(f"X{i + 1}" for i in range(dim))
    if len(names) != dim:
        raise LieAlgebraError("need one name per basis element")
    model = None
    if matrix_model is not None:
        model = tuple(tuple(tuple(rq.as_fraction(a) for a in row) for row in m) for m in matrix_model)
        if len(model) != dim:
            raise LieAlgebraError("matrix model needs one matrix per basis element")
    alg = _build(dim, names, table, model)

    e = [rq.unit(dim, i) for i in range(dim)]
    for i, j, k in itertools.combinations(range(dim), 3):
        x, y, z = e[i], e[j], e[k]
        t1 = alg.bracket(x, alg.bracket(y, z))
        t2 = alg.bracket(y, alg.bracket(z, x))
        t3 = alg.bracket(z, alg.bracket(x, y))
        if any(a + b + d != 0 for a, b, d in zip(t1, t2, t3)):
            raise JacobiViolation(i, j, k)

    series = _derived_series(alg)
    if series[-1]:
        raise NotSolvable(f"derived series stabilizes at dimension {len(series[-1])}")
    derived = series[1] if len(series) > 1 else []
    cls = _lower_central_class(alg, derived)
    if cls is None:
        raise DerivedNotNilpotent("[g, g] is not nilpotent")
    if model is not None:
        _check_model(alg)
    return LieAlgebra(
        dim=dim,
        basis_names=names,
        c=alg.c,
        derived_basis=tuple(tuple(v) for v in derived),
        nilpotency_class_of_derived=cls,
        matrix_model=model,
        _sparse=alg._sparse,
    )


def _check_model(alg: LieAlgebra) -> None:
    """The matrix model must be a faithful Lie-algebra homomorphism (exact check)."""
    model = alg.matrix_model
    n = len(model[0])
    flat = [tuple(a for row in m for a in row) for m in model]
    if rq.rank(flat) != alg.dim:
        raise LieAlgebraError("matrix model is not faithful")
    for i, j in itertools.combinations(range(alg.dim), 2):
        a, b = model[i], model[j]
        comm = [[x - y for x, y in zip(r1, r2)] for r1, r2 in zip(rq.matmul(a, b), rq.matmul(b, a))]
        target = [[sum((alg.c[i][j][k] * model[k][p][q] for k in range(alg.dim)), Fraction(0)) for q in range(n)] for p in range(n)]
        if comm != target:
            raise LieAlgebraError(f"matrix model does not represent [X{i + 1}, X{j + 1}]")


def from_brackets(dim: int, brackets: Sequence[Sequence], names=None, matrix_model=None) -> LieAlgebra:
    """Build from ``[i, j, k, num, den]`` entries (1-based indices).

    Each entry sets c_{ij}^k; the antisymmetric partner is filled in unless it
    is also listed, in which case the two must agree.
    """
    table = [[[Fraction(0)] * dim for _ in range(dim)] for _ in range(dim)]
    given = {}
    for entry in brackets:
        if len(entry) == 4:
            i, j, k, num = entry
            val = rq.as_fraction(num)
        else:
            i, j, k, num, den = entry
            val = Fraction(int(num), int(den))
        i, j, k = int(i) - 1, int(j) - 1, int(k) - 1
        if not all(0 <= a < dim for a in (i, j, k)):
            raise LieAlgebraError(f"bracket index out of range: {entry!r}")
        given[(i, j, k)] = val
    for (i, j, k), val in given.items():
        partner = given.get((j, i, k))
        if partner is not None and partner != -val:
            raise AntisymmetryViolation(i, j, k)
        table[i][j][k] = val
        table[j][i][k] = -val
    return validate(table, names, matrix_model)


# --------------------------------------------------------------------------
# adapted (coexponential + Malcev) basis


@dataclass(frozen=True)
class AdaptedBasis:
    A: tuple  # complement vectors, coordinates in the algebra basis
    N: tuple  # Malcev basis of the nilpotent ideal
    layers: tuple = ()  # sizes of the lower-central-series layers of n

    @property
    def vectors(self) -> tuple:
        return tuple(self.A) + tuple(self.N)

    @property
    def n(self) -> int:
        return len(self.A)

    @property
    def m(self) -> int:
        return len(self.N)

    def matrix(self) -> list[list[Fraction]]:
        """Columns are the adapted basis vectors."""
        return rq.transpose(self.vectors)


def adapted_basis(alg: LieAlgebra, ideal: Optional[Sequence[Sequence]] = None) -> AdaptedBasis:
    """Malcev basis N of n (default n = [g, g]) and a greedy complement A.

    N runs through the lower central series of n layer by layer, so every tail
    span(N_j, ..., N_m) is an ideal of n with [n, span(N_j..)] in span(N_{j+1}..).
    """
    dim = alg.dim
    if ideal is None:
        n_basis = [tuple(v) for v in alg.derived_basis]
    else:
        n_basis = rq.span_basis([rq.vec(v) for v in ideal]) if ideal else []
        full = [rq.unit(dim, i) for i in range(dim)]
        if not rq.subspace_contains(n_basis, alg.span_bracket(full, full)):
            raise LieAlgebraError("supplied ideal does not contain [g, g]")
        if not rq.subspace_contains(n_basis, alg.span_bracket(full, n_basis)):
            raise LieAlgebraError("supplied subspace is not an ideal")
        if _lower_central_class(alg, n_basis) is None:
            raise LieAlgebraError("supplied ideal is not nilpotent")

    series = [n_basis]
    cur = n_basis
    while cur:
        nxt = alg.span_bracket(n_basis, cur)
        series.append(nxt)
        cur = nxt
    # series: C1 = n, C2, ..., 0; pick complements from the bottom up
    N_rev_layers = []
    for upper, lower in zip(series[-2::-1], series[:0:-1]):
        chosen = rq.extend_to_basis(lower, upper)
        N_rev_layers.append(chosen)
    layers = list(reversed(N_rev_layers))
    N = [v for layer in layers for v in layer]
    A = rq.extend_to_basis(N, [rq.unit(dim, i) for i in range(dim)])
    basis = AdaptedBasis(A=tuple(A), N=tuple(N), layers=tuple(len(x) for x in layers))
    _check_adapted(alg, basis)
    return basis


def _check_adapted(alg: LieAlgebra, basis: AdaptedBasis) -> None:
    if rq.rank(basis.vectors) != alg.dim:
        raise LieAlgebraError("adapted basis is not a basis")
    N = list(basis.N)
    for j in range(len(N)):
        tail_next = N[j + 1 :]
        for x in N:
            if not rq.in_span(tuple(Fraction(a) for a in alg.bracket(x, N[j])), tail_next):
                raise LieAlgebraError("Malcev condition fails")


# --------------------------------------------------------------------------
# Baker-Campbell-Hausdorff


@lru_cache(maxsize=None)
def _bch_words(order: int) -> tuple:
    """Coefficients of log(exp(x) exp(y)) on words in {0: x, 1: y} up to ``order``.

    Returned per degree n as ((word, coef / n), ...) so that the degree-n BCH
    term is sum coef/n * [..[[w1, w2], w3].., wn] (Dynkin-Specht-Wever).
    """

    def mul(p, q):
        out: dict = {}
        for w1, c1 in p.items():
            for w2, c2 in q.items():
                if len(w1) + len(w2) > order:
                    continue
                w = w1 + w2
                out[w] = out.get(w, Fraction(0)) + c1 * c2
        return {w: c for w, c in out.items() if c != 0}

    def exp_letter(letter):
        return {(letter,) * k: Fraction(1, factorial(k)) for k in range(order + 1)}

    prod = mul(exp_letter(0), exp_letter(1))
    w = {k: v for k, v in prod.items() if k != ()}
    log: dict = {}
    power = {(): Fraction(1)}
    for k in range(1, order + 1):
        power = mul(power, w)
        sign = Fraction((-1) ** (k + 1), k)
        for word, c in power.items():
            log[word] = log.get(word, Fraction(0)) + sign * c
    by_degree = []
    for n in range(1, order + 1):
        terms = tuple((word, c / n) for word, c in sorted(log.items()) if len(word) == n and c != 0)
        by_degree.append(terms)
    return tuple(by_degree)


def _generated_class(alg: LieAlgebra, x, y) -> int:
    gens = [tuple(Fraction(a) for a in v) for v in (x, y) if not rq.is_zero(v)]
    if not gens:
        return 1
    sub = rq.span_basis(gens)
    while True:
        new = alg.span_bracket(sub, sub)
        bigger = rq.span_basis(sub + new) if new else sub
        if len(bigger) == len(sub):
            break
        sub = bigger
    cls = _lower_central_class(alg, sub)
    if cls is None:
        raise NotNilpotentContext("arguments generate a non-nilpotent subalgebra")
    return max(cls, 1)


def bch(alg: LieAlgebra, x: Sequence, y: Sequence, order: Optional[int] = None) -> list:
    """log(exp x exp y), exact and truncated at the nilpotency class.

    For rational arguments the class of the generated subalgebra is computed;
    symbolic callers pass ``order`` (the class of an ambient nilpotent ideal).
    """
    if order is None:
        x = rq.vec(x)
        y = rq.vec(y)
        order = _generated_class(alg, x, y)
    letters = (list(x), list(y))
    out = [a + b for a, b in zip(letters[0], letters[1])]
    cache: dict = {}

    def nested(word):
        if word in cache:
            return cache[word]
        if len(word) == 1:
            val = letters[word[0]]
        else:
            val = alg.bracket(nested(word[:-1]), letters[word[-1]])
        cache[word] = val
        return val

    for terms in _bch_words(order)[1:]:
        for word, c in terms:
            v = nested(word)
            out = [o + _scal(c, vi) if not _is_zero(vi) else o for o, vi in zip(out, v)]
    return out


# --------------------------------------------------------------------------
# reordering polynomials for products of one-parameter subgroups of n


def _ideal_algebra(alg: LieAlgebra, basis: AdaptedBasis) -> LieAlgebra:
    """Structure constants of n in its Malcev basis."""
    N = list(basis.N)
    m = len(N)
    cols = rq.transpose(N)
    table = [[[Fraction(0)] * m for _ in range(m)] for _ in range(m)]
    for a in range(m):
        for b in range(m):
            br = tuple(Fraction(v) for v in alg.bracket(N[a], N[b]))
            if rq.is_zero(br):
                continue
            # solve N-coordinates of br
            red, piv = rq.rref([list(row) + [br[i]] for i, row in enumerate(cols)])
            coords = [Fraction(0)] * m
            for r, p in enumerate(piv):
                coords[p] = red[r][m]
            table[a][b] = coords
    return _build(m, tuple(f"N{i + 1}" for i in range(m)), table, None)


def reorder_polynomials(alg: LieAlgebra, basis: AdaptedBasis, j: int):
    """Polynomials p_j..p_m (1-based j) with

        exp(s_j N_j) ... exp(s_m N_m) exp(r N_j) = exp(p_j N_j) ... exp(p_m N_m).

    Returns ``(symbols, polys)`` where ``symbols = (s_j, ..., s_m, r)``.
    """
    import sympy

    m = basis.m
    if not 1 <= j <= m:
        raise ValueError(f"j must lie in 1..{m}")
    nalg = _ideal_algebra(alg, basis)
    order = _lower_central_class(nalg, [rq.unit(m, i) for i in range(m)])
    if order is None:
        raise NotNilpotentContext("ideal is not nilpotent")
    order = max(order, 1)
    s = sympy.symbols(f"s{j}:{m + 1}")
    r = sympy.Symbol("r")
    zero = [sympy.Integer(0)] * m

    def gen(idx, coeff):
        v = list(zero)
        v[idx] = coeff
        return v

    z = gen(j - 1, s[0])
    for k in range(j, m):
        z = [sympy.expand(a) for a in bch(nalg, z, gen(k, s[k - j + 1]), order=order)]
    z = [sympy.expand(a) for a in bch(nalg, z, gen(j - 1, r), order=order)]
    polys = []
    for k in range(j - 1, m):
        if any(sympy.expand(z[i]) != 0 for i in range(k)):
            raise LieAlgebraError("reordering left the ideal chain")
        p = sympy.expand(z[k])
        polys.append(p)
        z = [sympy.expand(a) for a in bch(nalg, gen(k, -p), z, order=order)]
    if sympy.expand(polys[0] - s[0] - r) != 0:
        raise LieAlgebraError("leading reordering polynomial is not s_j + r")
    return tuple(s) + (r,), polys


# --------------------------------------------------------------------------
# loading


def algebra_from_dict(data: dict) -> LieAlgebra:
    """Build from ``{dim, names?, brackets, matrix_model?}``."""
    try:
        dim = int(data["dim"])
    except (KeyError, TypeError, ValueError) as exc:
        raise LieAlgebraError("algebra description needs an integer 'dim'") from exc
    brackets = data.get("brackets", [])
    return from_brackets(dim, brackets, names=data.get("names"), matrix_model=data.get("matrix_model"))


def load_algebra(path) -> LieAlgebra:
    """Read a TOML or JSON algebra description."""
    from .io import read_table

    return algebra_from_dict(read_table(path))


def algebra_to_dict(alg: LieAlgebra) -> dict:
    brackets = []
    for i in range(alg.dim):
        for j in range(i + 1, alg.dim):
            for k in range(alg.dim):
                v = alg.c[i][j][k]
                if v != 0:
                    brackets.append([i + 1, j + 1, k + 1, v.numerator, v.denominator])
    out = {"dim": alg.dim, "names": list(alg.basis_names), "brackets": brackets}
    if alg.matrix_model is not None:
        out["matrix_model"] = [[[str(a) for a in row] for row in m] for m in alg.matrix_model]
    return out
