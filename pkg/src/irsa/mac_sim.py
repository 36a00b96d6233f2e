"""Graph-level Monte Carlo frame simulator with iterative cancellation.

Frames place each user's replicas in distinct random slots, one random
pilot per replica.  Peeling decodes a replica once every other undecoded
user sharing its slot-pilot cell is gone; decoding a user removes all of
its replicas.  The stochastic mode additionally gates each decode attempt
by a Bernoulli draw whose failure probability reflects the multi-antenna
PHY model.
"""
from __future__ import annotations

import concurrent.futures
import enum
from dataclasses import dataclass

import numpy as np

from .degree_dist import DegreeDistribution
from .errors import DegreeExceedsSlots
from .slot_models import PhyFailureParams, decode_fail_prob

_WILSON_Z = 1.959963984540054  # two-sided 95%


class PeelMode(enum.Enum):
    IDEAL_COLLISION = "ideal-collision"
    IDEAL_RESOURCES = "ideal-resources"
    STOCHASTIC_PHY = "stochastic-phy"


@dataclass
class FrameGraph:
    """Replica placement for one frame.

    users[k] = (degree, slots, pilots) with `slots` distinct and one
    pilot index in [0, n_pilots) per replica.
    """

    n_slots: int
    n_pilots: int
    users: list[tuple[int, tuple[int, ...], tuple[int, ...]]]
    seed: int | None = None

    @property
    def n_users(self) -> int:
        return len(self.users)


@dataclass
class FrameOutcome:
    decoded: frozenset
    lost: frozenset
    sic_iterations: int
    decoded_order: tuple[int, ...] | None = None


@dataclass
class SimRow:
    k_a: int
    trials: int
    plr: float
    ci_lo: float
    ci_hi: float
    seed: int


@dataclass
class SimStats:
    rows: list[SimRow]
    base_seed: int


def wilson_interval(losses: int, total: int) -> tuple[float, float]:
    """95% Wilson score interval for a binomial proportion."""
    if total == 0:
        return float("nan"), float("nan")
    z2 = _WILSON_Z**2
    p = losses / total
    denom = 1.0 + z2 / total
    center = (p + z2 / (2 * total)) / denom
    half = _WILSON_Z * np.sqrt(p * (1.0 - p) / total + z2 / (4 * total**2)) / denom
    return max(0.0, center - half), min(1.0, center + half)


def build_frame(
    k_a: int,
    dist: DegreeDistribution,
    n_slots: int,
    n_pilots: int,
    rng,
) -> FrameGraph:
    """Sample a frame with k_a active users.

    `rng` may be an integer seed (recorded on the frame) or a Generator.
    """
    if dist.top_degree > n_slots:
        raise DegreeExceedsSlots(
            f"degree {dist.top_degree} cannot pick distinct slots out of {n_slots}"
        )
    seed = rng if isinstance(rng, (int, np.integer)) else None
    gen = np.random.default_rng(rng) if seed is not None else rng
    if k_a == 0:
        return FrameGraph(n_slots=n_slots, n_pilots=n_pilots, users=[], seed=seed)
    degrees = dist.sample_degrees(gen, k_a)
    r_max = int(degrees.max())
    # distinct slots per user: take the r smallest of a random row
    keys = gen.random((k_a, n_slots))
    slot_picks = np.argpartition(keys, r_max - 1, axis=1)[:, :r_max]
    pilots = gen.integers(0, n_pilots, size=int(degrees.sum()))
    users = []
    offset = 0
    for k in range(k_a):
        r = int(degrees[k])
        slots = tuple(sorted(int(s) for s in slot_picks[k, :r]))
        users.append((r, slots, tuple(int(j) for j in pilots[offset : offset + r])))
        offset += r
    return FrameGraph(n_slots=n_slots, n_pilots=n_pilots, users=users, seed=seed)


def peel(
    frame: FrameGraph,
    mode: PeelMode,
    params: PhyFailureParams | None = None,
    rng: np.random.Generator | None = None,
    *,
    residual_interference: bool = False,
) -> FrameOutcome:
    """Iterate cancellation on a frame until no further user decodes."""
    if mode is PeelMode.STOCHASTIC_PHY:
        if params is None or rng is None:
            raise ValueError("stochastic peeling needs params and rng")
        return _peel_stochastic(frame, params, rng, residual_interference)
    return _peel_ideal(frame, use_pilots=mode is PeelMode.IDEAL_RESOURCES)


def _peel_ideal(frame: FrameGraph, use_pilots: bool) -> FrameOutcome:
    members: dict[tuple[int, int], set] = {}
    cells_of: list[list[tuple[int, int]]] = []
    for uid, (_, slots, pilots) in enumerate(frame.users):
        cells = []
        for s, j in zip(slots, pilots):
            cell = (s, j if use_pilots else 0)
            members.setdefault(cell, set()).add(uid)
            cells.append(cell)
        cells_of.append(cells)

    wave = [cell for cell, occupants in members.items() if len(occupants) == 1]
    decoded: list[int] = []
    decoded_set: set = set()
    iterations = 0
    while wave:
        iterations += 1
        next_wave = []
        for cell in wave:
            occupants = members.get(cell)
            if not occupants or len(occupants) != 1:
                continue
            uid = next(iter(occupants))
            decoded.append(uid)
            decoded_set.add(uid)
            for other in cells_of[uid]:
                group = members[other]
                group.discard(uid)
                if len(group) == 1:
                    next_wave.append(other)
                elif not group:
                    del members[other]
        wave = next_wave
    lost = frozenset(range(frame.n_users)) - decoded_set
    return FrameOutcome(
        decoded=frozenset(decoded_set),
        lost=lost,
        sic_iterations=iterations,
        decoded_order=tuple(decoded),
    )


def _peel_stochastic(
    frame: FrameGraph,
    params: PhyFailureParams,
    rng: np.random.Generator,
    residual_interference: bool,
) -> FrameOutcome:
    slot_users: list[set] = [set() for _ in range(frame.n_slots)]
    cell_count: dict[tuple[int, int], int] = {}
    for uid, (_, slots, pilots) in enumerate(frame.users):
        for s, j in zip(slots, pilots):
            slot_users[s].add(uid)
            cell_count[(s, j)] = cell_count.get((s, j), 0) + 1
    occupancy0 = [len(s) for s in slot_users]
    colliders0 = {
        (uid, k): cell_count[(s, j)] - 1
        for uid, (_, slots, pilots) in enumerate(frame.users)
        for k, (s, j) in enumerate(zip(slots, pilots))
    }

    # A replica gets a fresh decode draw only when its gating interference
    # state changes.  With frozen interference that state is the set of
    # undecoded pilot-colliders in its cell, which can only shrink to
    # empty, so each replica is drawn exactly once.  With residual
    # interference the state is the whole residual slot membership, which
    # changes on every subtraction in the slot.
    slot_version = [0] * frame.n_slots
    last_attempt: dict[tuple[int, int], int] = {}
    undecoded = set(range(frame.n_users))
    decoded: list[int] = []
    passes = 0
    progress = True
    while progress:
        progress = False
        passes += 1
        for uid in sorted(undecoded):
            if uid not in undecoded:
                continue
            _, slots, pilots = frame.users[uid]
            for k, (s, j) in enumerate(zip(slots, pilots)):
                if cell_count[(s, j)] > 1:
                    continue  # an undecoded pilot-collider blocks this replica
                if residual_interference:
                    version = slot_version[s]
                    if last_attempt.get((uid, k)) == version:
                        continue  # this residual state already failed once
                    c = len(slot_users[s])
                    i = cell_count[(s, j)] - 1
                else:
                    version = 0
                    if (uid, k) in last_attempt:
                        continue  # one-shot: the cell state cannot change again
                    c = occupancy0[s]
                    i = colliders0[(uid, k)]
                n = (i + 1) * c - 1
                if rng.random() < 1.0 - decode_fail_prob(n, params):
                    undecoded.discard(uid)
                    decoded.append(uid)
                    for s2, j2 in zip(slots, pilots):
                        slot_users[s2].discard(uid)
                        cell_count[(s2, j2)] -= 1
                        slot_version[s2] += 1
                    progress = True
                    break
                last_attempt[(uid, k)] = version
    lost = frozenset(undecoded)
    return FrameOutcome(
        decoded=frozenset(decoded),
        lost=lost,
        sic_iterations=passes,
        decoded_order=tuple(decoded),
    )


def _run_point(args) -> SimRow:
    (
        index,
        k_a,
        dist,
        mode,
        params,
        trials,
        base_seed,
        n_slots,
        n_pilots,
        poisson_arrivals,
        residual_interference,
    ) = args
    losses = 0
    total = 0
    point_seed = base_seed + index * trials
    for trial in range(trials):
        rng = np.random.default_rng(point_seed + trial)
        k = int(rng.poisson(k_a)) if poisson_arrivals else k_a
        if k == 0:
            continue  # empty frame: loss rate undefined, skip the trial
        frame = build_frame(k, dist, n_slots, n_pilots, rng)
        outcome = peel(
            frame,
            mode,
            params,
            rng,
            residual_interference=residual_interference,
        )
        losses += len(outcome.lost)
        total += k
    plr = losses / total if total else float("nan")
    ci_lo, ci_hi = wilson_interval(losses, total)
    return SimRow(
        k_a=k_a, trials=trials, plr=plr, ci_lo=ci_lo, ci_hi=ci_hi, seed=point_seed
    )


def run_campaign(
    loads,
    dist: DegreeDistribution,
    mode: PeelMode,
    params: PhyFailureParams | None,
    trials_per_point: int,
    base_seed: int,
    *,
    n_slots: int,
    n_pilots: int,
    jobs: int = 1,
    poisson_arrivals: bool = False,
    residual_interference: bool = False,
) -> SimStats:
    """Estimate packet loss across user counts; trial seeds are sequential."""
    if trials_per_point < 1:
        raise ValueError("trials_per_point must be >= 1")
    work = [
        (
            idx,
            int(k_a),
            dist,
            mode,
            params,
            trials_per_point,
            base_seed,
            n_slots,
            n_pilots,
            poisson_arrivals,
            residual_interference,
        )
        for idx, k_a in enumerate(loads)
    ]
    if jobs > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_run_point, work))
    else:
        rows = [_run_point(w) for w in work]
    return SimStats(rows=rows, base_seed=base_seed)
