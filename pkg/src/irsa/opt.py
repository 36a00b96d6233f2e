"""Differential-evolution search for the threshold-maximizing distribution.

Candidates are non-negative vectors over the allowed degrees.  Before
evaluation each vector is projected onto the intersection of the
probability simplex with the fixed-mean plane, so every fitness call sees
a valid distribution with the requested mean degree.  Fitness is the load
threshold from a coarse bisection; the final best is re-evaluated at a
finer tolerance.
"""
from __future__ import annotations

import concurrent.futures
from dataclasses import dataclass

import numpy as np

from .de_core import DeConfig, threshold
from .degree_dist import DEFAULT_MAX_DEGREE, DegreeDistribution
from .errors import InfeasibleConstraint
from .slot_models import SlotModel

_SEARCH_G_LO = 1e-3


@dataclass(frozen=True)
class OptConfig:
    target_mean: float
    allowed_degrees: tuple[int, ...]
    population: int = 40
    generations: int = 200
    mutation_factor: float = 0.5
    crossover_rate: float = 0.9
    threshold_tol: float = 5e-3
    final_tol: float = 1e-3
    seed: int = 0
    allow_degree_one: bool = False

    def __post_init__(self):
        object.__setattr__(
            self, "allowed_degrees", tuple(sorted(set(int(d) for d in self.allowed_degrees)))
        )
        if not self.allowed_degrees:
            raise InfeasibleConstraint("allowed_degrees is empty")
        if self.allowed_degrees[0] < 1:
            raise ValueError("degrees must be >= 1")
        if self.allowed_degrees[0] == 1 and not self.allow_degree_one:
            raise ValueError(
                "degree-1 bursts degrade peeling; pass allow_degree_one=True to search them"
            )
        if self.population < 4:
            raise ValueError("population must be >= 4")
        if not 0.0 < self.mutation_factor <= 2.0:
            raise ValueError("mutation_factor must lie in (0, 2]")
        if not 0.0 <= self.crossover_rate <= 1.0:
            raise ValueError("crossover_rate must lie in [0, 1]")
        if self.target_mean < self.allowed_degrees[0]:
            raise InfeasibleConstraint(
                f"target mean {self.target_mean} below the smallest allowed degree"
            )


@dataclass
class OptResult:
    best: DegreeDistribution
    g_star: float
    history: list[float]
    evaluations: int


def project_to_constraint(
    raw,
    allowed_degrees,
    target_mean: float,
    max_degree: int = DEFAULT_MAX_DEGREE,
) -> DegreeDistribution:
    """Nearest point (Euclidean) on the simplex-and-mean-plane intersection.

    The raw vector is first normalized to unit total mass, then projected
    onto {m >= 0, sum m = 1, sum degree*m = target_mean} by an active-set
    iteration: solve the two-constraint least squares on the free support,
    clamp negative coordinates, and re-admit clamped coordinates whose
    optimality condition is violated.
    """
    degrees = np.asarray(sorted(set(int(d) for d in allowed_degrees)), dtype=float)
    v = np.asarray(raw, dtype=float).copy()
    if v.shape != degrees.shape:
        raise ValueError("raw vector length must match allowed_degrees")
    if np.any(v < 0.0):
        v = np.clip(v, 0.0, None)
    eps = 1e-9
    if not degrees[0] - eps <= target_mean <= degrees[-1] + eps:
        raise InfeasibleConstraint(
            f"target mean {target_mean} outside the degree hull "
            f"[{degrees[0]:g}, {degrees[-1]:g}]"
        )
    if degrees.size == 1:
        return DegreeDistribution.from_coeffs(
            [(int(degrees[0]), 1.0)], max_degree=max_degree
        )
    total = v.sum()
    v = v / total if total > 0.0 else np.full_like(v, 1.0 / v.size)

    free = np.ones(v.size, dtype=bool)
    for _ in range(200):
        d_f = degrees[free]
        v_f = v[free]
        k = int(free.sum())
        gram = np.array([[k, d_f.sum()], [d_f.sum(), (d_f * d_f).sum()]])
        rhs = np.array([v_f.sum() - 1.0, (d_f * v_f).sum() - target_mean])
        if abs(np.linalg.det(gram)) < 1e-12:
            # remaining degrees all equal; feasible only at that exact mean
            if abs(d_f[0] - target_mean) > eps:
                raise InfeasibleConstraint(
                    f"support collapsed onto degree {int(d_f[0])} != mean {target_mean}"
                )
            alpha, beta = (v_f.sum() - 1.0) / k, 0.0
        else:
            alpha, beta = np.linalg.solve(gram, rhs)
        m = np.zeros_like(v)
        m[free] = v_f - alpha - beta * d_f
        negative = free & (m < -1e-12)
        if negative.any():
            free &= ~negative
            if not free.any():
                raise InfeasibleConstraint("projection emptied the support")
            continue
        # optimality of the clamped coordinates: v_i - alpha - beta*d_i <= 0
        clamped = ~free
        violated = clamped & (v - alpha - beta * degrees > 1e-12)
        if violated.any():
            free |= violated
            continue
        m = np.clip(m, 0.0, None)
        pairs = [(int(d), float(mass)) for d, mass in zip(degrees, m) if mass > 0.0]
        return DegreeDistribution.from_coeffs(pairs, max_degree=max_degree)
    raise RuntimeError("constraint projection did not settle in 200 active-set steps")


def _fitness_key(dist: DegreeDistribution) -> tuple:
    return tuple((d, round(m, 12)) for d, m in dist.entries)


def _evaluate(args) -> float:
    dist, model, de_cfg, tol = args
    return threshold(dist, model, de_cfg, g_lo=_SEARCH_G_LO, tol=tol).g_star


def optimize(model: SlotModel, cfg: OptConfig, de_cfg: DeConfig = DeConfig(), jobs: int = 1) -> OptResult:
    """DE/rand/1/bin over projected candidates, maximizing the threshold.

    Deterministic for a fixed config and seed; per-generation best
    fitness is non-decreasing because selection never discards a parent
    for a worse trial.
    """
    rng = np.random.default_rng(cfg.seed)
    degrees = cfg.allowed_degrees
    dim = len(degrees)
    max_degree = max(DEFAULT_MAX_DEGREE, degrees[-1])

    cache: dict[tuple, float] = {}
    evaluations = 0

    def fitness_batch(vectors: np.ndarray) -> np.ndarray:
        nonlocal evaluations
        dists = [
            project_to_constraint(vec, degrees, cfg.target_mean, max_degree=max_degree)
            for vec in vectors
        ]
        pending = {}
        for dist in dists:
            key = _fitness_key(dist)
            if key not in cache and key not in pending:
                pending[key] = dist
        if pending:
            work = [
                (dist, model, de_cfg, cfg.threshold_tol) for dist in pending.values()
            ]
            if jobs > 1:
                with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
                    results = list(pool.map(_evaluate, work))
            else:
                results = [_evaluate(w) for w in work]
            evaluations += len(work)
            for key, g_star in zip(pending.keys(), results):
                cache[key] = g_star
        return np.array([cache[_fitness_key(dist)] for dist in dists])

    population = rng.random((cfg.population, dim))
    fitness = fitness_batch(population)
    history = [float(fitness.max())]

    for _ in range(cfg.generations):
        trials = np.empty_like(population)
        for i in range(cfg.population):
            choices = [j for j in range(cfg.population) if j != i]
            r1, r2, r3 = rng.choice(choices, size=3, replace=False)
            mutant = np.clip(
                population[r1] + cfg.mutation_factor * (population[r2] - population[r3]),
                0.0,
                None,
            )
            cross = rng.random(dim) < cfg.crossover_rate
            cross[rng.integers(dim)] = True
            trials[i] = np.where(cross, mutant, population[i])
        trial_fitness = fitness_batch(trials)
        accept = trial_fitness >= fitness
        population[accept] = trials[accept]
        fitness[accept] = trial_fitness[accept]
        history.append(float(fitness.max()))

    best_idx = int(np.argmax(fitness))  # lowest index wins ties
    best = project_to_constraint(
        population[best_idx], degrees, cfg.target_mean, max_degree=max_degree
    )
    final = threshold(best, model, de_cfg, g_lo=_SEARCH_G_LO, tol=cfg.final_tol)
    return OptResult(
        best=best, g_star=final.g_star, history=history, evaluations=evaluations
    )
