"""Density evolution: asymptotic erasure recursion and load thresholds.

For a load of G active users per slot, slot occupancies are Poisson with
mean G times the mean repetition degree.  Starting from p = 1, each
round maps the slot-side erasure probability p through

    q = sum_r lambda_r * p**(r-1)          (burst side)
    p = sum_c rho_c * model.update(q, c)   (slot side)

until the predicted packet loss Q = pgf(p) drops below the convergence
target (the load is achievable) or the iteration stalls (it is not).
The threshold G* is the supremum of achievable loads, found by bisection.
"""
from __future__ import annotations

import concurrent.futures
import enum
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import poisson

from .degree_dist import DegreeDistribution
from .errors import BracketError, TruncationError
from .slot_models import (
    Collision,
    OrthogonalResources,
    RealisticPhy,
    SlotModel,
    realistic_update_table,
)


@dataclass(frozen=True)
class DeConfig:
    """Iteration controls for the erasure recursion."""

    max_iterations: int = 5000
    convergence_plr: float = 1e-4
    stall_epsilon: float = 1e-12
    c_max: int | None = None  # None: grow until tail mass < tail_mass
    tail_mass: float = 1e-12

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.convergence_plr <= 0.0:
            raise ValueError("convergence_plr must be > 0")
        if self.c_max is not None and self.c_max < 1:
            raise ValueError("c_max must be >= 1")


class Verdict(enum.Enum):
    CONVERGED = "converged"
    STALLED = "stalled"


@dataclass
class DeTrace:
    """One density evolution run at a fixed load.

    iterates[0] is the initial condition (1, 1, 1); iterates[k] holds
    (q_k, p_k, Q_k) for round k.
    """

    load: float
    iterates: list[tuple[float, float, float]]
    verdict: Verdict

    @property
    def iterations(self) -> int:
        return len(self.iterates) - 1

    @property
    def final_p(self) -> float:
        return self.iterates[-1][1]

    @property
    def final_plr(self) -> float:
        return self.iterates[-1][2]

    @property
    def plr_limit(self) -> float:
        """Limiting packet loss: 0 when converged, else the stall value."""
        return 0.0 if self.verdict is Verdict.CONVERGED else self.final_plr


@dataclass(frozen=True)
class ThresholdResult:
    """Bisection outcome: the last achievable load and its bracket."""

    g_star: float
    bracket: tuple[float, float]
    bisection_tol: float
    model: str


def slot_edge_pmf(
    G: float,
    mean_degree: float,
    c_max: int | None = None,
    *,
    tail_mass: float = 1e-12,
    hard_cap: int | None = None,
) -> list[tuple[int, float]]:
    """Edge-perspective slot-degree masses rho_c for c = 1..c_max.

    rho_c is the Poisson(G * mean_degree) mass at c - 1.  The truncation
    point grows until the retained mass is at least 1 - tail_mass; if the
    cap (10 * mean + 50 by default) cannot reach that, TruncationError.
    """
    if G < 0.0:
        raise ValueError("load must be >= 0")
    mu = G * mean_degree
    cap = hard_cap if hard_cap is not None else int(10.0 * mu + 50.0)
    c_max = c_max if c_max is not None else _suggest_c_max(mu)
    c_max = min(max(c_max, 1), cap) if cap >= 1 else 1
    while poisson.sf(c_max - 1, mu) > tail_mass:
        if c_max >= cap:
            raise TruncationError(
                f"tail mass {poisson.sf(c_max - 1, mu):.3e} above {tail_mass:.1e} "
                f"at the c_max cap {cap}"
            )
        c_max = min(cap, c_max + max(16, c_max // 2))
    masses = poisson.pmf(np.arange(c_max), mu)
    return [(c, float(masses[c - 1])) for c in range(1, c_max + 1)]


def _suggest_c_max(mu: float) -> int:
    # Poisson upper tail at mu + 12*sqrt(mu) is far below 1e-12.
    return max(8, int(mu + 12.0 * np.sqrt(mu) + 12.0))


class _Kernel:
    """Precomputed arrays for one (distribution, model, load) triple."""

    def __init__(self, dist: DegreeDistribution, model: SlotModel, G: float, cfg: DeConfig):
        self.degrees = dist.degrees.astype(float)
        self.masses = dist.masses
        mean = dist.mean_degree()
        self.edge_masses = self.masses * self.degrees / mean
        pmf = slot_edge_pmf(G, mean, cfg.c_max, tail_mass=cfg.tail_mass)
        self.rho = np.array([m for _, m in pmf])
        c_max = len(pmf)
        self._c_minus_1 = np.arange(c_max, dtype=float)
        if isinstance(model, Collision):
            self._n_pilots = 1.0
            self._table = None
        elif isinstance(model, OrthogonalResources):
            self._n_pilots = float(model.pilots)
            self._table = None
        elif isinstance(model, RealisticPhy):
            self._n_pilots = float(model.params.pilots)
            self._table = realistic_update_table(model.params, c_max)
        else:
            raise TypeError(f"unsupported slot model {model!r}")

    def step(self, p_prev: float) -> tuple[float, float, float]:
        """One round: returns (q, p, Q)."""
        q = float(np.dot(self.edge_masses, p_prev ** (self.degrees - 1.0)))
        per_slot = 1.0 - (1.0 - q / self._n_pilots) ** self._c_minus_1
        if self._table is not None:
            per_slot = per_slot + self._table @ (1.0 - q) ** self._c_minus_1
        p = float(np.dot(self.rho, per_slot))
        Q = float(np.dot(self.masses, p ** self.degrees))
        return q, p, Q


def de_step(
    p_prev: float,
    dist: DegreeDistribution,
    model: SlotModel,
    G: float,
    cfg: DeConfig = DeConfig(),
) -> tuple[float, float]:
    """One composite round from slot-side erasure p_prev; returns (q, p)."""
    q, p, _ = _Kernel(dist, model, G, cfg).step(p_prev)
    return q, p


def run_de(
    G: float,
    dist: DegreeDistribution,
    model: SlotModel,
    cfg: DeConfig = DeConfig(),
) -> DeTrace:
    """Iterate the recursion at load G until convergence or stall."""
    kernel = _Kernel(dist, model, G, cfg)
    iterates = [(1.0, 1.0, 1.0)]
    p_prev = 1.0
    for _ in range(cfg.max_iterations):
        q, p, Q = kernel.step(p_prev)
        iterates.append((q, p, Q))
        if Q < cfg.convergence_plr:
            return DeTrace(load=G, iterates=iterates, verdict=Verdict.CONVERGED)
        if abs(p - p_prev) < cfg.stall_epsilon:
            return DeTrace(load=G, iterates=iterates, verdict=Verdict.STALLED)
        p_prev = p
    return DeTrace(load=G, iterates=iterates, verdict=Verdict.STALLED)


def converges(G: float, dist: DegreeDistribution, model: SlotModel, cfg: DeConfig = DeConfig()) -> bool:
    return run_de(G, dist, model, cfg).verdict is Verdict.CONVERGED


def threshold(
    dist: DegreeDistribution,
    model: SlotModel,
    cfg: DeConfig = DeConfig(),
    g_lo: float = 0.01,
    g_hi: float | None = None,
    tol: float = 1e-3,
) -> ThresholdResult:
    """Bisect for the largest load whose recursion still converges.

    g_lo must converge (else BracketError).  g_hi, when given, should
    stall; when omitted or converging it is doubled until a stalling
    load is found.
    """
    if tol <= 0.0:
        raise ValueError("tol must be > 0")
    if not converges(g_lo, dist, model, cfg):
        raise BracketError(f"lower bracket {g_lo} already stalls")
    hi = g_hi if g_hi is not None else max(4.0 * g_lo, 1.0)
    expansions = 0
    while converges(hi, dist, model, cfg):
        g_lo = hi  # reuse: anything converging is a valid lower bound
        hi *= 2.0
        expansions += 1
        if expansions > 40:
            raise BracketError(f"no stalling load found up to {hi}")
    lo = g_lo
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if converges(mid, dist, model, cfg):
            lo = mid
        else:
            hi = mid
    return ThresholdResult(
        g_star=lo, bracket=(lo, hi), bisection_tol=tol, model=model.describe()
    )


def _plr_point(args) -> tuple[float, float]:
    G, dist, model, cfg = args
    return G, run_de(G, dist, model, cfg).plr_limit


def plr_curve(
    dist: DegreeDistribution,
    model: SlotModel,
    cfg: DeConfig,
    loads,
    jobs: int = 1,
) -> list[tuple[float, float]]:
    """Limiting packet loss for each load in `loads`."""
    loads = [float(G) for G in loads]
    if any(G <= 0.0 for G in loads):
        raise ValueError("loads must be positive")
    work = [(G, dist, model, cfg) for G in loads]
    if jobs > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_plr_point, work))
    return [_plr_point(w) for w in work]
