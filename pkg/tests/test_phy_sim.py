import numpy as np
import pytest

from irsa import (
    DecodeCriterion,
    DoubleSubtraction,
    FrameGraph,
    NotPowerOfTwo,
    SicMode,
    SicState,
    SystemParams,
    build_frame,
    estimate_and_decode,
    hadamard_pilots,
    measure_decode_failure_rate,
    measure_symbol_error_rate,
    parse_distribution,
    qpsk_hard_bits,
    qpsk_modulate,
    run_phy_campaign,
    sic_subtract,
    simulate_frame,
    synthesize_slot,
)
from irsa.phy_sim import SlotSignal, UserBurst, mrc_estimate, rayleigh_channel

X3 = parse_distribution("x^3")

# frozen quadrature of the exact fading law E[2q - q^2], q = Q(sqrt(g/n)),
# g ~ Gamma(antennas, 1); this is what an unbiased simulator must match
SER_EXACT_N2_M16 = 0.007970767226
SER_EXACT_N4_M64 = 0.0001064819689
PFAIL_EXACT_N2_M16_ND32_T2 = 0.009297025722

DESK = SystemParams(
    antennas=16,
    pilots=8,
    payload_symbols=32,
    correction_capability=2,
    n_slots=12,
    noise_variance=0.0,
)


def test_hadamard_basics():
    assert hadamard_pilots(1).tolist() == [[1.0]]
    two = hadamard_pilots(2)
    assert two.tolist() == [[1.0, 1.0], [1.0, -1.0]]
    gram = hadamard_pilots(64) @ hadamard_pilots(64).T
    assert np.array_equal(gram, 64 * np.eye(64))


def test_hadamard_rejects_non_power_of_two():
    with pytest.raises(NotPowerOfTwo):
        hadamard_pilots(3)
    with pytest.raises(NotPowerOfTwo):
        hadamard_pilots(0)


def test_qpsk_roundtrip_and_modulus():
    rng = np.random.default_rng(0)
    bits = rng.integers(0, 2, size=512).astype(np.uint8)
    symbols = qpsk_modulate(bits)
    assert np.allclose(np.abs(symbols), 1.0)
    assert np.array_equal(qpsk_hard_bits(symbols), bits)


def test_synthesize_empty_slot_is_zero():
    rng = np.random.default_rng(0)
    slot = synthesize_slot([], 0.0, rng, hadamard_pilots(4), antennas=8, payload_symbols=16)
    assert not slot.pilot_part.any()
    assert not slot.data_part.any()


def test_synthesize_single_burst_is_rank_one():
    rng = np.random.default_rng(1)
    pilots = hadamard_pilots(4)
    h = rayleigh_channel(rng, 8)
    x = qpsk_modulate(rng.integers(0, 2, 32))
    slot = synthesize_slot([(h, 2, x)], 0.0, rng, pilots, 8, 16)
    assert np.array_equal(slot.pilot_part, np.outer(h, pilots[2]))
    assert np.allclose(slot.data_part, np.outer(h, x), rtol=1e-15)


def test_synthesize_superposition_rank():
    rng = np.random.default_rng(2)
    pilots = hadamard_pilots(4)
    bursts = [
        (rayleigh_channel(rng, 8), 0, qpsk_modulate(rng.integers(0, 2, 32))),
        (rayleigh_channel(rng, 8), 1, qpsk_modulate(rng.integers(0, 2, 32))),
    ]
    slot = synthesize_slot(bursts, 0.0, rng, pilots, 8, 16)
    stacked = np.hstack([slot.pilot_part, slot.data_part])
    singular = np.linalg.svd(stacked, compute_uv=False)
    assert np.count_nonzero(singular > 1e-9) <= 2


def test_mrc_single_user_exact():
    rng = np.random.default_rng(3)
    pilots = hadamard_pilots(8)
    h = rayleigh_channel(rng, 16)
    bits = rng.integers(0, 2, 64).astype(np.uint8)
    x = qpsk_modulate(bits)
    slot = synthesize_slot([(h, 5, x)], 0.0, rng, pilots, 16, 32)
    phi, x_hat = mrc_estimate(slot, pilots, 5)
    assert np.array_equal(phi, h)  # orthogonal +-1 pilots: exact recovery
    assert np.allclose(x_hat, x, rtol=1e-12)
    decoded = estimate_and_decode(slot, pilots, [(0, 5, bits)], 0, 0.0)
    assert decoded == [0]


def test_empty_pilot_is_skipped():
    rng = np.random.default_rng(4)
    pilots = hadamard_pilots(8)
    h = rayleigh_channel(rng, 16)
    bits = rng.integers(0, 2, 64).astype(np.uint8)
    slot = synthesize_slot([(h, 5, qpsk_modulate(bits))], 0.0, rng, pilots, 16, 32)
    phi, x_hat = mrc_estimate(slot, pilots, 2)
    assert not phi.any()
    assert x_hat is None
    assert estimate_and_decode(slot, pilots, [(0, 2, bits)], 32, 0.0) == []


def test_channel_estimate_ignores_other_pilots():
    rng = np.random.default_rng(5)
    pilots = hadamard_pilots(8)
    h0 = rayleigh_channel(rng, 16)
    x0 = qpsk_modulate(rng.integers(0, 2, 64))
    other_a = (rayleigh_channel(rng, 16), 3, qpsk_modulate(rng.integers(0, 2, 64)))
    other_b = (rayleigh_channel(rng, 16), 3, qpsk_modulate(rng.integers(0, 2, 64)))
    slot_a = synthesize_slot([(h0, 0, x0), other_a], 0.0, rng, pilots, 16, 32)
    slot_b = synthesize_slot([(h0, 0, x0), other_b], 0.0, rng, pilots, 16, 32)
    phi_a, _ = mrc_estimate(slot_a, pilots, 0)
    phi_b, _ = mrc_estimate(slot_b, pilots, 0)
    assert np.allclose(phi_a, h0, rtol=1e-12, atol=1e-12)
    assert np.allclose(phi_a, phi_b, rtol=1e-12, atol=1e-12)


def _lone_user_state(rng, pilots, mode_payload=32, antennas=16):
    h = rayleigh_channel(rng, antennas)
    bits = rng.integers(0, 2, 2 * mode_payload).astype(np.uint8)
    payload = qpsk_modulate(bits)
    slot = synthesize_slot([(h, 1, payload)], 0.0, rng, pilots, antennas, mode_payload)
    state = SicState(residuals=[np.hstack([slot.pilot_part, slot.data_part])])
    burst = UserBurst(
        user_id=0,
        slots=(0,),
        pilots=(1,),
        channels=h[None, :],
        payload=payload,
        bits=bits,
    )
    return state, burst


@pytest.mark.parametrize("mode", [SicMode.PRCE, SicMode.RE_ESTIMATE])
def test_subtract_lone_user_cancels_exactly(mode):
    rng = np.random.default_rng(6)
    pilots = hadamard_pilots(8)
    state, burst = _lone_user_state(rng, pilots)
    sic_subtract(state, burst, pilots, mode)
    assert np.max(np.abs(state.residuals[0])) < 1e-10


def test_double_subtraction_rejected():
    rng = np.random.default_rng(7)
    pilots = hadamard_pilots(8)
    state, burst = _lone_user_state(rng, pilots)
    sic_subtract(state, burst, pilots, SicMode.PRCE)
    with pytest.raises(DoubleSubtraction):
        sic_subtract(state, burst, pilots, SicMode.PRCE)


def test_reestimate_subtraction_reduces_energy_under_interference():
    rng = np.random.default_rng(8)
    pilots = hadamard_pilots(8)
    improvements = []
    for _ in range(100):
        h = rayleigh_channel(rng, 16)
        bits = rng.integers(0, 2, 64).astype(np.uint8)
        payload = qpsk_modulate(bits)
        interferer = (rayleigh_channel(rng, 16), 3, qpsk_modulate(rng.integers(0, 2, 64)))
        slot = synthesize_slot([(h, 1, payload), interferer], 0.0, rng, pilots, 16, 32)
        state = SicState(residuals=[np.hstack([slot.pilot_part, slot.data_part])])
        before = np.linalg.norm(state.residuals[0]) ** 2
        burst = UserBurst(0, (0,), (1,), h[None, :], payload, bits)
        sic_subtract(state, burst, pilots, SicMode.RE_ESTIMATE)
        improvements.append(before - np.linalg.norm(state.residuals[0]) ** 2)
    assert np.mean(improvements) > 0


def test_simulate_frame_single_user():
    frame = build_frame(1, X3, DESK.n_slots, DESK.pilots, 1)
    outcome = simulate_frame(frame, DESK, rng=np.random.default_rng(1))
    assert outcome.decoded == frozenset({0})


def test_simulate_frame_pilot_collision_pair_lost():
    frame = FrameGraph(n_slots=4, n_pilots=8, users=[(1, (0,), (2,)), (1, (0,), (2,))], seed=0)
    outcome = simulate_frame(frame, DESK, rng=np.random.default_rng(2))
    assert outcome.lost == frozenset({0, 1})


def test_simulate_frame_distinct_pilots_decode_in_one_slot():
    frame = FrameGraph(n_slots=4, n_pilots=8, users=[(1, (0,), (2,)), (1, (0,), (5,))], seed=0)
    outcome = simulate_frame(frame, DESK, rng=np.random.default_rng(3))
    assert outcome.decoded == frozenset({0, 1})


def test_simulate_frame_sic_unlocks_users():
    # user 1 is pilot-collided with user 0 in slot 0; user 0 decodes alone
    # in slot 1, subtraction then frees user 1
    frame = FrameGraph(
        n_slots=3,
        n_pilots=8,
        users=[(2, (0, 1), (4, 4)), (1, (0,), (4,))],
        seed=0,
    )
    outcome = simulate_frame(frame, DESK, rng=np.random.default_rng(4))
    assert outcome.decoded == frozenset({0, 1})
    assert outcome.sic_iterations >= 2


def test_simulate_frame_deterministic():
    frame = build_frame(25, X3, DESK.n_slots, DESK.pilots, 11)
    a = simulate_frame(frame, DESK, rng=np.random.default_rng(11))
    b = simulate_frame(frame, DESK, rng=np.random.default_rng(11))
    assert a.decoded == b.decoded
    assert a.decoded_order == b.decoded_order
    assert a.sic_iterations == b.sic_iterations


def test_simulate_frame_with_noise_still_decodes_lone_user():
    params = SystemParams(
        antennas=64, pilots=8, payload_symbols=32, correction_capability=2,
        n_slots=6, noise_variance=0.01,
    )
    frame = build_frame(1, X3, params.n_slots, params.pilots, 5)
    outcome = simulate_frame(frame, params, rng=np.random.default_rng(5))
    assert outcome.decoded == frozenset({0})


def test_batch_combiner_matches_single_slot_estimator():
    rng = np.random.default_rng(12)
    pilots = hadamard_pilots(4)
    bursts = [
        (rayleigh_channel(rng, 8), 0, qpsk_modulate(rng.integers(0, 2, 32))),
        (rayleigh_channel(rng, 8), 2, qpsk_modulate(rng.integers(0, 2, 32))),
    ]
    slot = synthesize_slot(bursts, 0.0, rng, pilots, 8, 16)
    phi_ref, x_ref = mrc_estimate(slot, pilots, 0)
    from irsa.phy_sim import _batch_combine

    phi, x_hat = _batch_combine(slot.pilot_part[None], slot.data_part[None], pilots[0])
    assert np.allclose(phi[0], phi_ref, rtol=1e-14)
    assert np.allclose(x_hat[0], x_ref, rtol=1e-12)


def test_symbol_error_rate_matches_fading_law():
    # one symbol per slot: fresh fading per symbol, so errors are i.i.d.
    # and the exact law (not the hardening approximation) must match
    errors, total = measure_symbol_error_rate(2, 16, 100_000, seed=2026)
    rate = errors / total
    sigma = np.sqrt(SER_EXACT_N2_M16 * (1 - SER_EXACT_N2_M16) / total)
    assert abs(rate - SER_EXACT_N2_M16) <= 3 * sigma


def test_symbol_error_rate_matches_fading_law_large_m():
    errors, total = measure_symbol_error_rate(4, 64, 300_000, seed=2027)
    rate = errors / total
    sigma = np.sqrt(SER_EXACT_N4_M64 * (1 - SER_EXACT_N4_M64) / total)
    assert abs(rate - SER_EXACT_N4_M64) <= 3 * sigma


def _independent_decode_failure_mc(n, antennas, payload, t, slots, seed):
    """Raw-numpy re-derivation of the decode failure rate, bypassing the
    simulator code path: fixed per-slot combining coefficients, fresh
    interferer symbols per payload position."""
    rng = np.random.default_rng(seed)
    failures = 0
    sqrt_half = np.sqrt(0.5)
    for _ in range(slots):
        h = sqrt_half * (rng.standard_normal(antennas) + 1j * rng.standard_normal(antennas))
        hi = sqrt_half * (
            rng.standard_normal((n, antennas)) + 1j * rng.standard_normal((n, antennas))
        )
        coeff = (h.conj() @ hi.T) / np.sum(np.abs(h) ** 2)
        phases = np.exp(1j * (np.pi / 4 + np.pi / 2 * rng.integers(0, 4, (n, payload))))
        interference = coeff @ phases
        wrong = (interference.real < -sqrt_half) | (interference.imag < -sqrt_half)
        if np.count_nonzero(wrong) > t:
            failures += 1
    return failures / slots


def test_decode_failure_matches_independent_mc():
    # same quantity, two implementations; both are Monte Carlo estimates
    failures, total = measure_decode_failure_rate(2, 16, 32, 2, 8000, seed=2028)
    rate = failures / total
    reference = _independent_decode_failure_mc(2, 16, 32, 2, 8000, seed=515)
    pooled = (failures / total + reference) / 2
    sigma = np.sqrt(pooled * (1 - pooled) * (1 / total + 1 / 8000))
    assert abs(rate - reference) <= 4 * sigma


def test_phy_campaign_deterministic_and_schema():
    stats_a, traces_a = run_phy_campaign([6, 10], X3, DESK, 8, 4, keep_trace=True)
    stats_b, traces_b = run_phy_campaign([6, 10], X3, DESK, 8, 4, keep_trace=True)
    assert stats_a.rows == stats_b.rows
    assert traces_a == traces_b
    assert traces_a[0]["sic_iterations"] >= 1
    row = stats_a.rows[0]
    assert row.trials == 8 and 0.0 <= row.plr <= 1.0


def test_phy_campaign_parallel_matches_serial():
    serial, _ = run_phy_campaign([6, 10], X3, DESK, 6, 4)
    parallel, _ = run_phy_campaign([6, 10], X3, DESK, 6, 4, jobs=2)
    assert serial.rows == parallel.rows


@pytest.mark.slow
def test_full_scale_low_load_loss():
    params = SystemParams()  # 256 antennas, 64 pilots, 78 slots
    stats, _ = run_phy_campaign([300], X3, params, 15, 99)
    assert stats.rows[0].plr < 1e-2
