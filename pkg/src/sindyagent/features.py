"""Feature-library specifications and design-matrix construction.

A library spec is an ordered list of parts (polynomial, Fourier, custom
terms). Building the design matrix evaluates every feature column-wise on the
K x n state matrix; feature names are the stable textual contract used for
equation printing and ground-truth comparison, and every generated name is
itself a valid term expression.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations_with_replacement
from math import comb
from typing import Union

import numpy as np

from .terms import TermExpr, parse_term

MAX_POLY_DEGREE = 6
MAX_FOURIER_FREQUENCIES = 8


class FeatureSpecError(ValueError):
    """Invalid feature-library specification."""


class FeatureEvalError(ValueError):
    """A feature evaluated to a non-finite value."""

    def __init__(self, name: str, row: int):
        self.feature_name = name
        self.row = row
        super().__init__(f"feature {name!r} is non-finite at row {row}")


@dataclass(frozen=True)
class Polynomial:
    degree: int
    include_interaction: bool = True
    include_bias: bool = True

    def __post_init__(self):
        if not 0 <= self.degree <= MAX_POLY_DEGREE:
            raise FeatureSpecError(
                f"polynomial degree {self.degree} exceeds cap {MAX_POLY_DEGREE}"
                if self.degree > MAX_POLY_DEGREE
                else f"polynomial degree must be >= 0, got {self.degree}"
            )
        if self.degree == 0 and not self.include_bias:
            raise FeatureSpecError("degree-0 polynomial without bias is empty")


@dataclass(frozen=True)
class Fourier:
    n_frequencies: int
    include_sin: bool = True
    include_cos: bool = True

    def __post_init__(self):
        if not 1 <= self.n_frequencies <= MAX_FOURIER_FREQUENCIES:
            raise FeatureSpecError(
                f"n_frequencies {self.n_frequencies} outside "
                f"1..{MAX_FOURIER_FREQUENCIES}"
            )
        if not (self.include_sin or self.include_cos):
            raise FeatureSpecError("fourier part needs sin, cos, or both")


@dataclass(frozen=True)
class Custom:
    terms: tuple[TermExpr, ...]

    def __post_init__(self):
        if not self.terms:
            raise FeatureSpecError("custom part needs at least one term")


LibraryPart = Union[Polynomial, Fourier, Custom]


@dataclass(frozen=True)
class FeatureLibrarySpec:
    parts: tuple[LibraryPart, ...]

    def __post_init__(self):
        if not self.parts:
            raise FeatureSpecError("feature library needs at least one part")


def custom_part(sources: list[str], n: int) -> Custom:
    """Parse term sources into a Custom part for dimension n."""
    return Custom(terms=tuple(parse_term(s, n) for s in sources))


def _monomials(n: int, degree: int, interaction: bool, bias: bool):
    """Exponent vectors in graded order, descending-lex within each degree."""
    if bias:
        yield (0,) * n
    for d in range(1, degree + 1):
        if interaction:
            # combinations_with_replacement yields variable multisets whose
            # exponent vectors come out in descending-lex order.
            for combo in combinations_with_replacement(range(n), d):
                e = [0] * n
                for i in combo:
                    e[i] += 1
                yield tuple(e)
        else:
            for i in range(n):
                e = [0] * n
                e[i] = d
                yield tuple(e)


def _monomial_name(exponents: tuple[int, ...]) -> str:
    if all(e == 0 for e in exponents):
        return "1"
    factors = []
    for i, e in enumerate(exponents):
        if e == 1:
            factors.append(f"x{i}")
        elif e > 1:
            factors.append(f"x{i}^{e}")
    return " ".join(factors)


def _part_names(part: LibraryPart, n: int) -> list[str]:
    if isinstance(part, Polynomial):
        return [
            _monomial_name(e)
            for e in _monomials(n, part.degree, part.include_interaction, part.include_bias)
        ]
    if isinstance(part, Fourier):
        names = []
        for k in range(1, part.n_frequencies + 1):
            for fn in ("sin", "cos"):
                if (fn == "sin" and part.include_sin) or (fn == "cos" and part.include_cos):
                    names.extend(f"{fn}({k} x{i})" for i in range(n))
        return names
    if isinstance(part, Custom):
        return [str(t) for t in part.terms]
    raise FeatureSpecError(f"unknown library part {part!r}")


def feature_names(spec: FeatureLibrarySpec, n: int) -> list[str]:
    """All feature names in column order; duplicates are rejected."""
    names: list[str] = []
    for part in spec.parts:
        names.extend(_part_names(part, n))
    seen: set[str] = set()
    for name in names:
        if name in seen:
            raise FeatureSpecError(f"duplicate feature name {name!r}")
        seen.add(name)
    if not names:
        raise FeatureSpecError("feature library is empty")
    return names


def feature_count(spec: FeatureLibrarySpec, n: int) -> int:
    """Number of columns the spec produces for dimension n."""
    total = 0
    for part in spec.parts:
        if isinstance(part, Polynomial):
            if part.include_interaction:
                total += comb(n + part.degree, part.degree) - (0 if part.include_bias else 1)
            else:
                total += n * part.degree + (1 if part.include_bias else 0)
        elif isinstance(part, Fourier):
            enabled = int(part.include_sin) + int(part.include_cos)
            total += part.n_frequencies * n * enabled
        elif isinstance(part, Custom):
            total += len(part.terms)
    return total


@dataclass
class DesignMatrix:
    values: np.ndarray  # (K, p)
    feature_names: list[str]

    def __post_init__(self):
        if self.values.shape[1] != len(self.feature_names):
            raise ValueError("column count must equal feature name count")

    @property
    def p(self) -> int:
        return self.values.shape[1]


def build_design_matrix(spec: FeatureLibrarySpec, X: np.ndarray) -> DesignMatrix:
    """Evaluate the library on a K x n state matrix.

    Column order is deterministic: parts in declaration order; polynomials in
    graded lexicographic order by exponent vector; Fourier features
    frequency-major, sin before cos, then by variable index.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[0] < 1:
        raise ValueError("X needs at least one row")
    if not np.all(np.isfinite(X)):
        raise ValueError("X contains non-finite entries")
    n = X.shape[1]

    columns: list[np.ndarray] = []
    names: list[str] = []
    for part in spec.parts:
        if isinstance(part, Polynomial):
            for e in _monomials(n, part.degree, part.include_interaction, part.include_bias):
                col = np.ones(X.shape[0])
                with np.errstate(over="ignore"):  # finiteness checked below
                    for i, power in enumerate(e):
                        if power:
                            col = col * X[:, i] ** power
                columns.append(col)
                names.append(_monomial_name(e))
        elif isinstance(part, Fourier):
            for k in range(1, part.n_frequencies + 1):
                for fn in ("sin", "cos"):
                    if fn == "sin" and not part.include_sin:
                        continue
                    if fn == "cos" and not part.include_cos:
                        continue
                    trig = np.sin if fn == "sin" else np.cos
                    for i in range(n):
                        columns.append(trig(k * X[:, i]))
                        names.append(f"{fn}({k} x{i})")
        elif isinstance(part, Custom):
            for term in part.terms:
                name = str(term)
                col = term.evaluate(X)
                bad = np.flatnonzero(~np.isfinite(col))
                if bad.size:
                    raise FeatureEvalError(name, int(bad[0]))
                columns.append(col)
                names.append(name)
        else:
            raise FeatureSpecError(f"unknown library part {part!r}")

    seen: set[str] = set()
    for name in names:
        if name in seen:
            raise FeatureSpecError(f"duplicate feature name {name!r}")
        seen.add(name)

    values = np.column_stack(columns) if columns else np.empty((X.shape[0], 0))
    if values.shape[1] == 0:
        raise FeatureSpecError("feature library is empty")
    # every entry finite: polynomial columns can overflow for extreme states
    if not np.all(np.isfinite(values)):
        bad_col, bad_row = _first_non_finite(values)
        raise FeatureEvalError(names[bad_col], bad_row)
    return DesignMatrix(values=values, feature_names=names)


def _first_non_finite(values: np.ndarray) -> tuple[int, int]:
    rows, cols = np.nonzero(~np.isfinite(values))
    return int(cols[0]), int(rows[0])
