"""Bundled example algebras (abelian, Heisenberg, ax+b, filiform, spiral)."""

from __future__ import annotations

from functools import lru_cache
from pathlib import Path

from .liealg import LieAlgebra, load_algebra

FIXTURE_DIR = Path(__file__).with_name("fixtures")
NAMES = ("abelian", "heisenberg", "axb", "filiform4", "spiral")


def fixture_path(name: str) -> Path:
    return FIXTURE_DIR / f"{name}.toml"


@lru_cache(maxsize=None)
def load_fixture(name: str) -> LieAlgebra:
    if name not in NAMES:
        raise KeyError(f"unknown fixture {name!r}; choose from {', '.join(NAMES)}")
    return load_algebra(fixture_path(name))


def resolve_algebra(spec: str) -> LieAlgebra:
    """A fixture name or a path to a TOML/JSON description."""
    if spec in NAMES:
        return load_fixture(spec)
    return load_algebra(spec)
