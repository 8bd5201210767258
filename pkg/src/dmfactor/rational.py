"""Small exact linear algebra over the rationals.

Vectors are tuples of :class:`fractions.Fraction`; matrices are tuples of rows.
Dimensions in this package are tiny (a handful of basis elements), so plain
Gaussian elimination is all that is needed.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Iterable, Sequence

Vec = tuple  # tuple[Fraction, ...]


def as_fraction(x) -> Fraction:
    """Parse ints, Fractions, ``"p/q"`` strings, ``[p, q]`` pairs or exact floats."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, bool):
        raise TypeError("booleans are not rationals")
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, str):
        return Fraction(x.strip())
    if isinstance(x, (list, tuple)) and len(x) == 2:
        return Fraction(int(x[0]), int(x[1]))
    if isinstance(x, float):
        f = Fraction(x)
        if f.denominator > 2**20:
            f = f.limit_denominator(10**6)
        return f
    raise TypeError(f"cannot interpret {x!r} as a rational")


def vec(xs: Iterable) -> Vec:
    return tuple(as_fraction(x) for x in xs)


def zeros(n: int) -> Vec:
    return (Fraction(0),) * n


def unit(n: int, i: int) -> Vec:
    return tuple(Fraction(1) if k == i else Fraction(0) for k in range(n))


def add(x: Sequence, y: Sequence) -> Vec:
    return tuple(a + b for a, b in zip(x, y))


def sub(x: Sequence, y: Sequence) -> Vec:
    return tuple(a - b for a, b in zip(x, y))


def scale(c, x: Sequence) -> Vec:
    return tuple(c * a for a in x)


def is_zero(x: Sequence) -> bool:
    return all(a == 0 for a in x)


def rref(rows: Sequence[Sequence]) -> tuple[list[list[Fraction]], list[int]]:
    """Reduced row echelon form; returns (nonzero rows, pivot columns)."""
    m = [list(map(as_fraction, r)) for r in rows]
    if not m:
        return [], []
    ncol = len(m[0])
    pivots: list[int] = []
    r = 0
    for c in range(ncol):
        piv = next((i for i in range(r, len(m)) if m[i][c] != 0), None)
        if piv is None:
            continue
        m[r], m[piv] = m[piv], m[r]
        p = m[r][c]
        m[r] = [a / p for a in m[r]]
        for i in range(len(m)):
            if i != r and m[i][c] != 0:
                f = m[i][c]
                m[i] = [a - f * b for a, b in zip(m[i], m[r])]
        pivots.append(c)
        r += 1
        if r == len(m):
            break
    return m[:r], pivots


def rank(rows: Sequence[Sequence]) -> int:
    return len(rref(rows)[1])


def span_basis(vectors: Sequence[Sequence]) -> list[Vec]:
    """Canonical (RREF) basis of the span."""
    rows, _ = rref(vectors)
    return [tuple(r) for r in rows]


def in_span(x: Sequence, basis: Sequence[Sequence]) -> bool:
    if is_zero(x):
        return True
    if not basis:
        return False
    return rank(list(basis) + [x]) == rank(basis)


def subspace_contains(big: Sequence[Sequence], small: Sequence[Sequence]) -> bool:
    return all(in_span(v, big) for v in small)


def solve(a: Sequence[Sequence], b: Sequence) -> Vec:
    """Solve the square system a x = b exactly (raises on singular a)."""
    n = len(a)
    aug = [list(map(as_fraction, row)) + [as_fraction(bi)] for row, bi in zip(a, b)]
    red, piv = rref(aug)
    if piv != list(range(n)):
        raise ZeroDivisionError("singular system")
    return tuple(red[i][n] for i in range(n))


def transpose(m: Sequence[Sequence]) -> list[list]:
    return [list(col) for col in zip(*m)]


def matmul(a: Sequence[Sequence], b: Sequence[Sequence]) -> list[list]:
    bt = transpose(b)
    return [[sum((x * y for x, y in zip(row, col)), Fraction(0)) for col in bt] for row in a]


def matvec(a: Sequence[Sequence], x: Sequence) -> Vec:
    return tuple(sum((p * q for p, q in zip(row, x)), Fraction(0)) for row in a)


def inverse(a: Sequence[Sequence]) -> list[list[Fraction]]:
    n = len(a)
    aug = [list(map(as_fraction, row)) + list(unit(n, i)) for i, row in enumerate(a)]
    red, piv = rref(aug)
    if piv[:n] != list(range(n)) or len(red) < n:
        raise ZeroDivisionError("singular matrix")
    return [row[n:] for row in red]


def extend_to_basis(partial: Sequence[Sequence], candidates: Sequence[Sequence]) -> list[Vec]:
    """Greedily append candidates (in order) that increase the rank."""
    out = [tuple(v) for v in partial]
    current = rank(out) if out else 0
    chosen: list[Vec] = []
    for c in candidates:
        r = rank(out + [tuple(c)])
        if r > current:
            out.append(tuple(c))
            chosen.append(tuple(c))
            current = r
    return chosen
