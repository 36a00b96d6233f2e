"""Per-slot edge-erasure updates for the three channel abstractions.

Each model maps the average burst-side erasure probability q and the slot
occupancy c to the probability that a replica in such a slot is still
unresolved after the current cancellation round:

* collision channel:            1 - (1 - q)**(c-1)
* c orthogonal resources/slot:  1 - (1 - q/n_pilots)**(c-1)
* realistic multi-antenna PHY:  the resource update plus a decode-failure
  term that accounts for pilot collisions and imperfect subtraction.

The decode-failure probabilities come from a hard-decision QPSK error
model: a burst facing n interfering units has per-symbol error rate
erfc(sqrt(M/2n)) - erfc(sqrt(M/2n))**2 / 4 and fails when more than t of
its payload symbols are wrong.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import bdtrc, erfc, gammaln


@dataclass(frozen=True)
class PhyFailureParams:
    """Scalars the decode-failure model depends on."""

    antennas: int
    payload_symbols: int
    correction_capability: int
    pilots: int

    def __post_init__(self):
        if self.antennas < 1:
            raise ValueError("antennas must be >= 1")
        if self.payload_symbols < 1:
            raise ValueError("payload_symbols must be >= 1")
        if not 0 <= self.correction_capability <= self.payload_symbols:
            raise ValueError("correction_capability must lie in [0, payload_symbols]")
        if self.pilots < 1:
            raise ValueError("pilots must be >= 1")


def collision_update(q: float, c: int) -> float:
    """Erasure update on the plain collision channel."""
    return 1.0 - (1.0 - q) ** (c - 1)


def resource_update(q: float, c: int, n_pilots: int) -> float:
    """Erasure update with n_pilots orthogonal resources per slot.

    Reduces to collision_update when n_pilots == 1.
    """
    return 1.0 - (1.0 - q / n_pilots) ** (c - 1)


def symbol_error_prob(n, antennas: int):
    """Hard-decision QPSK symbol error rate against n interfering units.

    Defined as 0 at n = 0: with no interference (and no noise) the
    combined estimate is exact.  Accepts scalars or arrays.
    """
    n_arr = np.asarray(n, dtype=float)
    out = np.zeros_like(n_arr)
    pos = n_arr > 0
    if np.any(pos):
        e = erfc(np.sqrt(antennas / (2.0 * n_arr[pos])))
        out[pos] = e - 0.25 * e * e
    if np.isscalar(n) or np.ndim(n) == 0:
        return float(out)
    return out


@lru_cache(maxsize=None)
def decode_fail_prob(n: int, params: PhyFailureParams) -> float:
    """Probability that decoding fails against n interfering units.

    Upper binomial tail P(errors > t) over payload_symbols symbols, each
    wrong independently with symbol_error_prob(n).  Evaluated through the
    regularized incomplete beta function, which stays accurate where a
    1 - sum(...) formulation would lose the tiny tails that threshold
    searches are sensitive to.
    """
    if n < 0:
        raise ValueError("interferer count must be >= 0")
    p_e = symbol_error_prob(n, params.antennas)
    if p_e == 0.0:
        return 0.0
    return float(
        bdtrc(params.correction_capability, params.payload_symbols, p_e)
    )


def _decode_fail_array(n_values: np.ndarray, params: PhyFailureParams) -> np.ndarray:
    """Vectorized decode_fail_prob over an integer array."""
    p_e = symbol_error_prob(n_values, params.antennas)
    out = np.zeros_like(p_e)
    pos = p_e > 0.0
    if np.any(pos):
        out[pos] = bdtrc(
            params.correction_capability, params.payload_symbols, p_e[pos]
        )
    return out


def pilot_collider_pmf(c: int, n_pilots: int) -> np.ndarray:
    """P(i | c): i of the other c-1 arrivals picked the same pilot.

    Binomial(c-1, 1/n_pilots) masses for i = 0..c-1; sums to one.
    """
    if c < 1:
        raise ValueError("slot occupancy must be >= 1")
    i = np.arange(c)
    if n_pilots == 1:
        out = np.zeros(c)
        out[c - 1] = 1.0
        return out
    a = 1.0 / n_pilots
    log_pmf = (
        gammaln(c) - gammaln(i + 1) - gammaln(c - i)
        + i * np.log(a) + (c - 1 - i) * np.log1p(-a)
    )
    return np.exp(log_pmf)


def subtracted_collider_pmf(i: int, q: float) -> np.ndarray:
    """P(s | i): s of i pilot-colliders already cancelled, each w.p. 1-q.

    Binomial(i, 1-q) masses for s = 0..i.
    """
    s = np.arange(i + 1)
    if q <= 0.0:
        out = np.zeros(i + 1)
        out[i] = 1.0
        return out
    if q >= 1.0:
        out = np.zeros(i + 1)
        out[0] = 1.0
        return out
    log_pmf = (
        gammaln(i + 1) - gammaln(s + 1) - gammaln(i - s + 1)
        + s * np.log1p(-q) + (i - s) * np.log(q)
    )
    return np.exp(log_pmf)


def realistic_update(q: float, c: int, params: PhyFailureParams) -> float:
    """Erasure update for the multi-antenna PHY with random pilots.

    Resource update plus, for each possible pilot-collider count i, the
    probability that all i colliders were cancelled (each w.p. 1-q) yet
    decoding still fails against (i+1)*c - 1 interfering units.
    """
    base = resource_update(q, c, params.pilots)
    i = np.arange(c)
    fail = _decode_fail_array((i + 1) * c - 1, params)
    extra = float(np.dot((1.0 - q) ** i * fail, pilot_collider_pmf(c, params.pilots)))
    return base + extra


@lru_cache(maxsize=64)
def realistic_update_table(params: PhyFailureParams, c_max: int) -> np.ndarray:
    """Precompute A[c-1, i] = P(i | c) * decode_fail_prob((i+1)c - 1).

    With this table the realistic update over all slot degrees collapses
    to base(q) + A @ (1-q)**i, which is what the density evolution loop
    evaluates thousands of times.
    """
    A = np.zeros((c_max, c_max))
    for c in range(1, c_max + 1):
        i = np.arange(c)
        fail = _decode_fail_array((i + 1) * c - 1, params)
        A[c - 1, :c] = pilot_collider_pmf(c, params.pilots) * fail
    return A


@dataclass(frozen=True)
class Collision:
    """Ideal collision channel: singleton slots decode, others wait."""

    def update(self, q: float, c: int) -> float:
        return collision_update(q, c)

    def describe(self) -> str:
        return "collision"


@dataclass(frozen=True)
class OrthogonalResources:
    """Collision channel with n_pilots orthogonal resources per slot."""

    pilots: int

    def __post_init__(self):
        if self.pilots < 1:
            raise ValueError("pilots must be >= 1")

    def update(self, q: float, c: int) -> float:
        return resource_update(q, c, self.pilots)

    def describe(self) -> str:
        return f"resources(pilots={self.pilots})"


@dataclass(frozen=True)
class RealisticPhy:
    """Multi-antenna PHY with random pilots and imperfect subtraction."""

    params: PhyFailureParams

    def update(self, q: float, c: int) -> float:
        return realistic_update(q, c, self.params)

    def describe(self) -> str:
        p = self.params
        return (
            f"realistic(antennas={p.antennas}, pilots={p.pilots}, "
            f"payload_symbols={p.payload_symbols}, t={p.correction_capability})"
        )


SlotModel = Collision | OrthogonalResources | RealisticPhy
