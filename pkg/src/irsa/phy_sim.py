"""Symbol-level simulator: Rayleigh block fading, pilot-based channel
estimation, combining, hard-decision QPSK, and cross-slot cancellation.

Each slot carries a pilot block and a payload block.  The receiver
correlates against every pilot sequence to estimate a channel vector,
combines the payload block with it, slices QPSK symbols, and validates
the result against the true codeword under a t-error criterion.  Decoded
users are then subtracted from every slot they transmitted in, which can
unlock further users; passes repeat until nothing new decodes.
"""
from __future__ import annotations

import concurrent.futures
import enum
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import hadamard

from .degree_dist import DegreeDistribution
from .errors import DoubleSubtraction, NotPowerOfTwo
from .mac_sim import FrameGraph, FrameOutcome, SimRow, SimStats, build_frame, wilson_interval
from .params import SystemParams

_SQRT_HALF = np.sqrt(0.5)


class SicMode(enum.Enum):
    PRCE = "prce"  # subtract with the true per-slot channel
    RE_ESTIMATE = "re-estimate"  # least-squares re-estimate over the known burst


class DecodeCriterion(enum.Enum):
    BITS = "bits"  # at most t wrong bits out of 2 * payload_symbols
    SYMBOLS = "symbols"  # at most t wrong symbols out of payload_symbols


def hadamard_pilots(n_pilots: int) -> np.ndarray:
    """Mutually orthogonal +-1 pilot rows (Sylvester construction)."""
    if n_pilots < 1 or n_pilots & (n_pilots - 1):
        raise NotPowerOfTwo(f"pilot count {n_pilots} is not a power of two")
    return hadamard(n_pilots).astype(float)


def qpsk_modulate(bits: np.ndarray) -> np.ndarray:
    """Gray-mapped unit-modulus QPSK: bit pairs to (+-1 +- 1j)/sqrt(2)."""
    pairs = np.asarray(bits).reshape(-1, 2)
    return _SQRT_HALF * ((1.0 - 2.0 * pairs[:, 0]) + 1j * (1.0 - 2.0 * pairs[:, 1]))


def qpsk_hard_bits(symbols: np.ndarray) -> np.ndarray:
    """Quadrant slicer, inverse of qpsk_modulate for clean symbols."""
    symbols = np.asarray(symbols)
    bits = np.empty((symbols.size, 2), dtype=np.uint8)
    bits[:, 0] = symbols.real < 0.0
    bits[:, 1] = symbols.imag < 0.0
    return bits.reshape(-1)


@dataclass
class SlotSignal:
    """Received pilot and payload blocks for one slot (antennas x length)."""

    pilot_part: np.ndarray
    data_part: np.ndarray


@dataclass
class UserBurst:
    """One user's transmission: per-replica channels, shared payload."""

    user_id: int
    slots: tuple[int, ...]
    pilots: tuple[int, ...]
    channels: np.ndarray  # (replicas, antennas), independent per slot
    payload: np.ndarray  # (payload_symbols,) QPSK symbols
    bits: np.ndarray  # (2 * payload_symbols,)


@dataclass
class SicState:
    """Cross-slot cancellation bookkeeping."""

    residuals: list[np.ndarray]  # per slot, antennas x (pilots + payload)
    buffer: list[int] = field(default_factory=list)
    subtracted: set = field(default_factory=set)
    passes: int = 0


def rayleigh_channel(rng: np.random.Generator, shape) -> np.ndarray:
    """i.i.d. circular complex Gaussian entries with unit variance."""
    return _SQRT_HALF * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def synthesize_slot(
    bursts,
    noise_variance: float,
    rng: np.random.Generator,
    pilot_matrix: np.ndarray,
    antennas: int,
    payload_symbols: int,
) -> SlotSignal:
    """Superpose bursts (channel, pilot index, payload) plus noise."""
    n_pilots = pilot_matrix.shape[0]
    pilot_part = np.zeros((antennas, n_pilots), dtype=complex)
    data_part = np.zeros((antennas, payload_symbols), dtype=complex)
    if bursts:
        channels = np.stack([h for h, _, _ in bursts])
        pilot_rows = pilot_matrix[[j for _, j, _ in bursts]]
        payloads = np.stack([x for _, _, x in bursts])
        pilot_part += channels.T @ pilot_rows
        data_part += channels.T @ payloads
    if noise_variance > 0.0:
        scale = np.sqrt(noise_variance / 2.0)
        pilot_part += scale * (
            rng.standard_normal(pilot_part.shape)
            + 1j * rng.standard_normal(pilot_part.shape)
        )
        data_part += scale * (
            rng.standard_normal(data_part.shape)
            + 1j * rng.standard_normal(data_part.shape)
        )
    return SlotSignal(pilot_part=pilot_part, data_part=data_part)


def mrc_estimate(
    slot: SlotSignal, pilot_matrix: np.ndarray, pilot_index: int
) -> tuple[np.ndarray, np.ndarray | None]:
    """Channel estimate for one pilot and the combined payload estimate.

    phi = P s^H / ||s||^2; x_hat = phi^H Y / ||phi||^2 (None when phi = 0).
    """
    s = pilot_matrix[pilot_index]
    phi = slot.pilot_part @ s.conj() / float(np.dot(s, s.conj()).real)
    energy = float(np.vdot(phi, phi).real)
    if energy == 0.0:
        return phi, None
    x_hat = phi.conj() @ slot.data_part / energy
    return phi, x_hat


def _error_count(bits_hat: np.ndarray, bits_true: np.ndarray, criterion: DecodeCriterion) -> int:
    wrong = bits_hat != bits_true
    if criterion is DecodeCriterion.BITS:
        return int(np.count_nonzero(wrong))
    return int(np.count_nonzero(wrong.reshape(-1, 2).any(axis=1)))


def estimate_and_decode(
    slot: SlotSignal,
    pilot_matrix: np.ndarray,
    candidates,
    correction_capability: int,
    noise_variance: float,
    criterion: DecodeCriterion = DecodeCriterion.BITS,
) -> list[int]:
    """Attempt every pilot once; at most one success per pilot.

    candidates: (user_id, pilot_index, true_bits) for the users still
    undecoded in this slot.  A pilot whose estimate energy falls below
    10 * noise_variance * antennas / n_pilots is treated as unused.
    """
    by_pilot: dict[int, list] = {}
    for user_id, pilot_index, bits in candidates:
        by_pilot.setdefault(pilot_index, []).append((user_id, bits))
    antennas = slot.pilot_part.shape[0]
    n_pilots = pilot_matrix.shape[0]
    floor = 10.0 * noise_variance * antennas / n_pilots
    decoded = []
    for pilot_index in sorted(by_pilot):
        phi, x_hat = mrc_estimate(slot, pilot_matrix, pilot_index)
        if x_hat is None or float(np.vdot(phi, phi).real) <= floor:
            continue
        bits_hat = qpsk_hard_bits(x_hat)
        for user_id, bits in sorted(by_pilot[pilot_index]):
            if _error_count(bits_hat, bits, criterion) <= correction_capability:
                decoded.append(user_id)
                break
    return decoded


def sic_subtract(
    state: SicState,
    burst: UserBurst,
    pilot_matrix: np.ndarray,
    mode: SicMode = SicMode.RE_ESTIMATE,
) -> None:
    """Remove a decoded user's replicas from every slot residual."""
    if burst.user_id in state.subtracted:
        raise DoubleSubtraction(f"user {burst.user_id} already subtracted")
    block_len = pilot_matrix.shape[0] + burst.payload.size
    for k, slot_index in enumerate(burst.slots):
        sent = np.concatenate([pilot_matrix[burst.pilots[k]], burst.payload])
        residual = state.residuals[slot_index]
        if mode is SicMode.PRCE:
            h_hat = burst.channels[k]
        else:
            h_hat = residual @ sent.conj() / block_len
        residual -= np.outer(h_hat, sent)
    state.subtracted.add(burst.user_id)


def _materialize(
    frame: FrameGraph,
    params: SystemParams,
    noise_variance: float,
    rng: np.random.Generator,
    pilot_matrix: np.ndarray,
) -> tuple[list[UserBurst], SicState]:
    bursts = []
    for uid, (degree, slots, pilots) in enumerate(frame.users):
        channels = rayleigh_channel(rng, (degree, params.antennas))
        bits = rng.integers(0, 2, size=2 * params.payload_symbols).astype(np.uint8)
        bursts.append(
            UserBurst(
                user_id=uid,
                slots=slots,
                pilots=pilots,
                channels=channels,
                payload=qpsk_modulate(bits),
                bits=bits,
            )
        )
    per_slot: list[list] = [[] for _ in range(frame.n_slots)]
    for burst in bursts:
        for k, slot_index in enumerate(burst.slots):
            per_slot[slot_index].append(
                (burst.channels[k], burst.pilots[k], burst.payload)
            )
    residuals = []
    for slot_index in range(frame.n_slots):
        signal = synthesize_slot(
            per_slot[slot_index],
            noise_variance,
            rng,
            pilot_matrix,
            params.antennas,
            params.payload_symbols,
        )
        residuals.append(np.hstack([signal.pilot_part, signal.data_part]))
    return bursts, SicState(residuals=residuals)


def _slot_view(state: SicState, slot_index: int, n_pilots: int) -> SlotSignal:
    residual = state.residuals[slot_index]
    return SlotSignal(pilot_part=residual[:, :n_pilots], data_part=residual[:, n_pilots:])


def simulate_frame(
    frame: FrameGraph,
    params: SystemParams,
    noise_variance: float | None = None,
    mode: SicMode = SicMode.RE_ESTIMATE,
    rng: np.random.Generator | None = None,
    criterion: DecodeCriterion = DecodeCriterion.BITS,
) -> FrameOutcome:
    """Two-phase receiver: scan all slots, then subtract-and-rescan."""
    if rng is None:
        rng = np.random.default_rng(frame.seed)
    if noise_variance is None:
        noise_variance = params.noise_variance
    pilot_matrix = hadamard_pilots(params.pilots)
    bursts, state = _materialize(frame, params, noise_variance, rng, pilot_matrix)
    users_in_slot: list[list[int]] = [[] for _ in range(frame.n_slots)]
    for burst in bursts:
        for slot_index in burst.slots:
            users_in_slot[slot_index].append(burst.user_id)

    undecoded = set(range(frame.n_users))
    decoded_order: list[int] = []

    def attempt(slot_index: int) -> list[int]:
        candidates = [
            (uid, bursts[uid].pilots[bursts[uid].slots.index(slot_index)], bursts[uid].bits)
            for uid in users_in_slot[slot_index]
            if uid in undecoded
        ]
        if not candidates:
            return []
        return estimate_and_decode(
            _slot_view(state, slot_index, params.pilots),
            pilot_matrix,
            candidates,
            params.correction_capability,
            noise_variance,
            criterion,
        )

    state.passes = 1
    for slot_index in range(frame.n_slots):
        for uid in attempt(slot_index):
            undecoded.discard(uid)
            decoded_order.append(uid)
            state.buffer.append(uid)

    while state.buffer:
        state.passes += 1
        affected: set[int] = set()
        to_subtract, state.buffer = state.buffer, []
        for uid in to_subtract:
            sic_subtract(state, bursts[uid], pilot_matrix, mode)
            affected.update(bursts[uid].slots)
        for slot_index in sorted(affected):
            for uid in attempt(slot_index):
                undecoded.discard(uid)
                decoded_order.append(uid)
                state.buffer.append(uid)

    decoded = frozenset(decoded_order)
    return FrameOutcome(
        decoded=decoded,
        lost=frozenset(undecoded),
        sic_iterations=state.passes,
        decoded_order=tuple(decoded_order),
    )


def _run_phy_point(args) -> tuple[SimRow, list[dict]]:
    (
        index,
        k_a,
        dist,
        params,
        trials,
        base_seed,
        noise_variance,
        mode,
        criterion,
        keep_trace,
    ) = args
    losses = 0
    total = 0
    traces: list[dict] = []
    point_seed = base_seed + index * trials
    for trial in range(trials):
        rng = np.random.default_rng(point_seed + trial)
        if k_a == 0:
            continue
        frame = build_frame(k_a, dist, params.n_slots, params.pilots, rng)
        outcome = simulate_frame(frame, params, noise_variance, mode, rng, criterion)
        losses += len(outcome.lost)
        total += k_a
        if keep_trace:
            traces.append(
                {
                    "k_a": k_a,
                    "trial": trial,
                    "seed": point_seed + trial,
                    "decoded_order": list(outcome.decoded_order or ()),
                    "sic_iterations": outcome.sic_iterations,
                }
            )
    plr = losses / total if total else float("nan")
    ci_lo, ci_hi = wilson_interval(losses, total)
    row = SimRow(
        k_a=k_a, trials=trials, plr=plr, ci_lo=ci_lo, ci_hi=ci_hi, seed=point_seed
    )
    return row, traces


def run_phy_campaign(
    loads,
    dist: DegreeDistribution,
    params: SystemParams,
    trials_per_point: int,
    base_seed: int,
    *,
    noise_variance: float | None = None,
    mode: SicMode = SicMode.RE_ESTIMATE,
    criterion: DecodeCriterion = DecodeCriterion.BITS,
    jobs: int = 1,
    keep_trace: bool = False,
) -> tuple[SimStats, list[dict]]:
    """Symbol-level campaign; same statistics schema as the graph-level one."""
    if trials_per_point < 1:
        raise ValueError("trials_per_point must be >= 1")
    if noise_variance is None:
        noise_variance = params.noise_variance
    work = [
        (
            idx,
            int(k_a),
            dist,
            params,
            trials_per_point,
            base_seed,
            noise_variance,
            mode,
            criterion,
            keep_trace,
        )
        for idx, k_a in enumerate(loads)
    ]
    if jobs > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_phy_point, work))
    else:
        results = [_run_phy_point(w) for w in work]
    rows = [row for row, _ in results]
    traces = [t for _, ts in results for t in ts]
    return SimStats(rows=rows, base_seed=base_seed), traces


def _batch_combine(pilot_parts: np.ndarray, data_parts: np.ndarray, s0: np.ndarray):
    """mrc_estimate over a batch of slots for pilot row s0.

    pilot_parts: (slots, antennas, n_pilots); data_parts: (slots, antennas,
    payload).  Same formulas as mrc_estimate, vectorized over slots.
    """
    n_pilots = s0.size
    phi = pilot_parts @ s0.conj() / float(np.dot(s0, s0.conj()).real)
    energy = np.sum(np.abs(phi) ** 2, axis=1)
    x_hat = np.einsum("sm,smd->sd", phi.conj(), data_parts) / energy[:, None]
    return phi, x_hat


def _interference_error_counts(
    n_interferers: int,
    antennas: int,
    payload_symbols: int,
    n_slots: int,
    seed: int,
    noise_variance: float = 0.0,
    chunk: int = 1024,
) -> np.ndarray:
    """Per-slot symbol error counts for a pilot-clean target user.

    Each slot holds the target on pilot 0 and n_interferers on other
    orthogonal pilots, with fresh fading, payloads and noise per slot.
    """
    if n_interferers < 0:
        raise ValueError("n_interferers must be >= 0")
    n_pilots = _next_power_of_two(n_interferers + 1)
    pilot_matrix = hadamard_pilots(n_pilots)
    s0 = pilot_matrix[0]
    if n_interferers:
        rows = [1 + (k % (n_pilots - 1)) for k in range(n_interferers)]
        interferer_rows = pilot_matrix[rows]
    rng = np.random.default_rng(seed)
    counts = np.empty(n_slots, dtype=np.int64)
    done = 0
    while done < n_slots:
        b = min(chunk, n_slots - done)
        bits = rng.integers(0, 2, size=(b, 2 * payload_symbols)).astype(np.uint8)
        x0 = qpsk_modulate(bits.reshape(-1)).reshape(b, payload_symbols)
        h0 = rayleigh_channel(rng, (b, antennas))
        pilot_parts = h0[:, :, None] * s0[None, None, :]
        data_parts = h0[:, :, None] * x0[:, None, :]
        if n_interferers:
            hi = rayleigh_channel(rng, (b, n_interferers, antennas))
            xi = qpsk_modulate(
                rng.integers(0, 2, size=b * n_interferers * 2 * payload_symbols)
            ).reshape(b, n_interferers, payload_symbols)
            pilot_parts = pilot_parts + np.einsum("snm,np->smp", hi, interferer_rows)
            data_parts = data_parts + np.einsum("snm,snd->smd", hi, xi)
        if noise_variance > 0.0:
            scale = np.sqrt(noise_variance / 2.0)
            for part in (pilot_parts, data_parts):
                part += scale * (
                    rng.standard_normal(part.shape)
                    + 1j * rng.standard_normal(part.shape)
                )
        _, x_hat = _batch_combine(pilot_parts, data_parts, s0)
        bits_hat = qpsk_hard_bits(x_hat.reshape(-1)).reshape(b, 2 * payload_symbols)
        wrong = (bits_hat != bits).reshape(b, payload_symbols, 2).any(axis=2)
        counts[done : done + b] = np.count_nonzero(wrong, axis=1)
        done += b
    return counts


def measure_symbol_error_rate(
    n_interferers: int,
    antennas: int,
    n_symbols: int,
    seed: int,
    *,
    payload_symbols: int = 1,
    noise_variance: float = 0.0,
) -> tuple[int, int]:
    """Count hard-decision symbol errors for a pilot-clean user.

    The default of one payload symbol per slot gives a fresh fading
    realization per symbol, so the error events are independent and the
    plain binomial confidence interval applies.  Returns (errors, symbols).
    """
    n_slots = -(-n_symbols // payload_symbols)
    counts = _interference_error_counts(
        n_interferers, antennas, payload_symbols, n_slots, seed, noise_variance
    )
    return int(counts.sum()), n_slots * payload_symbols


def measure_decode_failure_rate(
    n_interferers: int,
    antennas: int,
    payload_symbols: int,
    correction_capability: int,
    n_codewords: int,
    seed: int,
    *,
    noise_variance: float = 0.0,
) -> tuple[int, int]:
    """Count codewords with more than t wrong symbols, one per slot."""
    counts = _interference_error_counts(
        n_interferers, antennas, payload_symbols, n_codewords, seed, noise_variance
    )
    return int(np.count_nonzero(counts > correction_capability)), n_codewords


def _next_power_of_two(n: int) -> int:
    p = 1
    while p < n:
        p *= 2
    return p
