"""Burst-node repetition-degree distributions.

An active user repeats its packet r times, with r drawn from a sparse
probability distribution over small integer degrees.  The generating
function of the distribution, sum_r mass_r * x**r, drives both the
asymptotic analysis and the frame simulators.
"""
from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, EmptyDistribution, NegativeMass, ZeroTotalMass

DEFAULT_MAX_DEGREE = 16


@dataclass(frozen=True)
class DegreeDistribution:
    """Sparse probability masses over integer repetition degrees.

    Entries are (degree, mass) pairs with strictly increasing degrees and
    masses summing to one.  Instances are immutable and hashable, so they
    can be shared across workers and used as cache keys.
    """

    entries: tuple[tuple[int, float], ...]
    max_degree: int = DEFAULT_MAX_DEGREE

    @classmethod
    def from_coeffs(cls, pairs, max_degree: int = DEFAULT_MAX_DEGREE) -> "DegreeDistribution":
        """Build a normalized distribution from (degree, mass) pairs.

        Duplicate degrees are merged, masses are rescaled to sum to one,
        and zero-mass degrees are dropped.  Raises NegativeMass,
        EmptyDistribution or ZeroTotalMass on invalid input.
        """
        pairs = list(pairs)
        if not pairs:
            raise EmptyDistribution("at least one (degree, mass) pair is required")
        merged: dict[int, float] = {}
        for degree, mass in pairs:
            d = int(degree)
            if d != degree:
                raise DomainError(f"degree {degree!r} is not an integer")
            if d < 1:
                raise DomainError(f"degree {d} is below 1")
            if d > max_degree:
                raise DomainError(f"degree {d} exceeds max_degree={max_degree}")
            m = float(mass)
            if m < 0.0:
                raise NegativeMass(f"mass {m} for degree {d} is negative")
            merged[d] = merged.get(d, 0.0) + m
        total = sum(merged.values())
        if total <= 0.0:
            raise ZeroTotalMass("all masses are zero")
        entries = tuple(
            (d, m / total) for d, m in sorted(merged.items()) if m > 0.0
        )
        return cls(entries=entries, max_degree=max_degree)

    @classmethod
    def concentrated(cls, degree: int, max_degree: int = DEFAULT_MAX_DEGREE) -> "DegreeDistribution":
        """All mass on a single repetition degree."""
        return cls.from_coeffs([(degree, 1.0)], max_degree=max_degree)

    @property
    def degrees(self) -> np.ndarray:
        return np.array([d for d, _ in self.entries], dtype=np.int64)

    @property
    def masses(self) -> np.ndarray:
        return np.array([m for _, m in self.entries], dtype=float)

    @property
    def min_degree(self) -> int:
        return self.entries[0][0]

    @property
    def top_degree(self) -> int:
        return self.entries[-1][0]

    def mean_degree(self) -> float:
        """First derivative of the generating function at x = 1."""
        return float(sum(d * m for d, m in self.entries))

    def pgf(self, x: float) -> float:
        """Evaluate sum_r mass_r * x**r for x in [0, 1]."""
        if not 0.0 <= x <= 1.0:
            raise DomainError(f"pgf argument {x} outside [0, 1]")
        return float(sum(m * x**d for d, m in self.entries))

    def pgf_prime(self, x: float) -> float:
        """Evaluate sum_r mass_r * r * x**(r-1) for x in [0, 1]."""
        if not 0.0 <= x <= 1.0:
            raise DomainError(f"pgf argument {x} outside [0, 1]")
        return float(sum(m * d * x ** (d - 1) for d, m in self.entries))

    def edge_perspective(self) -> list[tuple[int, float]]:
        """Per-degree probability that a random edge touches that degree.

        lambda_r = mass_r * r / mean_degree; the result sums to one.
        """
        mean = self.mean_degree()
        return [(d, m * d / mean) for d, m in self.entries]

    def sample_degree(self, rng: np.random.Generator) -> int:
        """Draw one repetition degree."""
        return int(self.sample_degrees(rng, 1)[0])

    def sample_degrees(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Draw `size` i.i.d. repetition degrees (vectorized)."""
        cumulative = np.cumsum(self.masses)
        cumulative[-1] = 1.0  # guard against < 1 from rounding
        picks = np.searchsorted(cumulative, rng.random(size), side="right")
        return self.degrees[picks]

    def to_json_entries(self) -> list[dict]:
        return [{"degree": d, "mass": m} for d, m in self.entries]

    @classmethod
    def from_json_entries(cls, entries, max_degree: int = DEFAULT_MAX_DEGREE) -> "DegreeDistribution":
        return cls.from_coeffs(
            [(e["degree"], e["mass"]) for e in entries], max_degree=max_degree
        )

    def __str__(self) -> str:
        return format_distribution(self)


_TERM = re.compile(
    r"^\s*(?:(?P<coef>[0-9]*\.?[0-9]+(?:[eE][+-]?[0-9]+)?)\s*\*?\s*)?"
    r"x\s*(?:\^\s*(?P<deg>[0-9]+))?\s*$"
)


def parse_distribution(text: str, max_degree: int = DEFAULT_MAX_DEGREE) -> DegreeDistribution:
    """Parse a polynomial like "0.55*x^2+0.26*x^3+0.19*x^6" or "x^3".

    Coefficients default to 1, exponents to 1.  The result is normalized
    like any other construction.
    """
    # split on '+' except inside exponents of scientific notation
    terms = re.split(r"(?<![eE])\+", text.strip())
    pairs = []
    for term in terms:
        m = _TERM.match(term)
        if m is None:
            raise DomainError(f"cannot parse distribution term {term!r}")
        coef = float(m.group("coef")) if m.group("coef") else 1.0
        degree = int(m.group("deg")) if m.group("deg") else 1
        pairs.append((degree, coef))
    return DegreeDistribution.from_coeffs(pairs, max_degree=max_degree)


def format_distribution(dist: DegreeDistribution) -> str:
    """Inverse of parse_distribution, up to coefficient rounding."""
    parts = []
    for d, m in dist.entries:
        coef = "" if m == 1.0 else f"{m:.12g}*"
        power = "" if d == 1 else f"^{d}"
        parts.append(f"{coef}x{power}")
    return "+".join(parts)
