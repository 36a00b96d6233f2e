import math

import numpy as np
import pytest

from irsa import (
    BracketError,
    Collision,
    DeConfig,
    DegreeDistribution,
    OrthogonalResources,
    PhyFailureParams,
    RealisticPhy,
    TruncationError,
    Verdict,
    de_step,
    parse_distribution,
    plr_curve,
    run_de,
    slot_edge_pmf,
    threshold,
)

X2 = DegreeDistribution.from_coeffs([(2, 1.0)])
X3 = DegreeDistribution.from_coeffs([(3, 1.0)])
MIX = parse_distribution("0.5*x^2+0.5*x^3")
REALISTIC = RealisticPhy(
    PhyFailureParams(antennas=256, payload_symbols=256, correction_capability=10, pilots=64)
)


def collision_fixed_point_converges(G: float, dist: DegreeDistribution) -> bool:
    """Independent oracle: no fixed point of the closed-form map in (0, 1]."""
    ps = np.linspace(1e-5, 1.0, 20000)
    exponent = sum(r * m * ps ** (r - 1) for r, m in dist.entries)
    return bool(np.all(1.0 - np.exp(-G * exponent) < ps))


def test_slot_edge_pmf_zero_load():
    pmf = slot_edge_pmf(0.0, 3.0)
    assert pmf[0] == (1, pytest.approx(1.0, abs=1e-15))
    assert sum(m for _, m in pmf[1:]) == pytest.approx(0.0, abs=1e-15)


def test_slot_edge_pmf_unit_mean():
    # G * mean = 1: masses are exp(-1)/(c-1)!
    pmf = dict(slot_edge_pmf(0.5, 2.0))
    for c in (1, 2, 3, 6):
        assert pmf[c] == pytest.approx(math.exp(-1) / math.factorial(c - 1), rel=1e-12)


def test_slot_edge_pmf_tail_mass_auto_extension():
    pmf = slot_edge_pmf(6.99, 3.0, c_max=5)
    assert len(pmf) > 5
    assert sum(m for _, m in pmf) >= 1.0 - 1e-12


def test_slot_edge_pmf_truncation_error():
    with pytest.raises(TruncationError):
        slot_edge_pmf(6.99, 3.0, hard_cap=10)


@pytest.mark.parametrize("dist", [X3, MIX])
def test_de_step_matches_collision_closed_form(dist):
    for G in np.linspace(0.1, 1.2, 10):
        for p in np.linspace(0.05, 1.0, 10):
            _, stepped = de_step(p, dist, Collision(), G)
            closed = 1.0 - math.exp(-G * sum(r * m * p ** (r - 1) for r, m in dist.entries))
            assert stepped == pytest.approx(closed, abs=1e-9)


@pytest.mark.parametrize("n_pilots", [2, 64])
def test_de_step_matches_resources_closed_form(n_pilots):
    model = OrthogonalResources(pilots=n_pilots)
    for G in np.linspace(0.5, 40.0, 10):
        for p in np.linspace(0.05, 1.0, 10):
            _, stepped = de_step(p, MIX, model, G)
            closed = 1.0 - math.exp(
                -G / n_pilots * sum(r * m * p ** (r - 1) for r, m in MIX.entries)
            )
            assert stepped == pytest.approx(closed, abs=1e-9)


def test_de_step_zero_is_fixed_point():
    q, p = de_step(0.0, X3, Collision(), 0.9)
    assert q == 0.0
    assert p == 0.0


def test_run_de_below_collision_threshold():
    assert collision_fixed_point_converges(0.5, X3)
    trace = run_de(0.5, X3, Collision())
    assert trace.verdict is Verdict.CONVERGED


def test_run_de_above_collision_threshold():
    assert not collision_fixed_point_converges(1.0, X3)
    trace = run_de(1.0, X3, Collision())
    assert trace.verdict is Verdict.STALLED
    assert trace.final_p > 0.1


def test_run_de_realistic_below_threshold():
    trace = run_de(6.0, X3, REALISTIC)
    assert trace.verdict is Verdict.CONVERGED


def test_trace_invariants():
    for G, verdict in ((0.6, Verdict.CONVERGED), (1.1, Verdict.STALLED)):
        trace = run_de(G, MIX, Collision())
        assert trace.verdict is verdict
        assert trace.iterates[0] == (1.0, 1.0, 1.0)
        ps = [p for _, p, _ in trace.iterates]
        assert all(b <= a + 1e-15 for a, b in zip(ps, ps[1:]))
        for _, p, Q in trace.iterates:
            assert Q == pytest.approx(MIX.pgf(p), abs=1e-12)


def test_threshold_collision_x3_against_scan_oracle():
    # scan oracle at 1e-3 resolution over the closed-form map
    gs = np.arange(0.70, 0.95, 1e-3)
    oracle = gs[np.array([collision_fixed_point_converges(g, X3) for g in gs])].max()
    result = threshold(X3, Collision(), tol=1e-3)
    assert result.g_star == pytest.approx(oracle, abs=5e-3)
    lo, hi = result.bracket
    assert lo <= result.g_star <= hi
    assert hi - lo <= 1e-3


def test_threshold_realistic_x3():
    assert threshold(X3, REALISTIC).g_star == pytest.approx(6.99, abs=0.05)


def test_threshold_realistic_x2():
    assert threshold(X2, REALISTIC).g_star == pytest.approx(7.64, abs=0.05)


def test_threshold_resource_scaling():
    base = threshold(X3, Collision(), tol=1e-3).g_star
    for n_pilots in (4, 64):
        scaled = threshold(
            X3, OrthogonalResources(pilots=n_pilots), tol=1e-3, g_hi=1.5 * n_pilots
        )
        assert scaled.g_star / n_pilots == pytest.approx(base, abs=2e-3)


def test_threshold_bracket_error():
    with pytest.raises(BracketError):
        threshold(X3, Collision(), g_lo=2.0)


def test_threshold_degenerate_degree_one():
    ones = DegreeDistribution.from_coeffs([(1, 1.0)])
    with pytest.raises(BracketError):
        threshold(ones, Collision(), g_lo=0.5)


def test_threshold_invariant_to_iteration_budget():
    a = threshold(X3, Collision(), DeConfig(max_iterations=2500), tol=1e-3).g_star
    b = threshold(X3, Collision(), DeConfig(max_iterations=5000), tol=1e-3).g_star
    assert a == pytest.approx(b, abs=2e-3)


def test_threshold_invariant_to_c_max():
    a = threshold(X3, Collision(), DeConfig(c_max=300), tol=1e-3).g_star
    b = threshold(X3, Collision(), tol=1e-3).g_star
    assert a == pytest.approx(b, abs=2e-3)


def test_plr_curve_shape():
    points = plr_curve(X3, Collision(), DeConfig(), [0.5, 0.9, 1.2, 3.0, 50.0])
    values = [q for _, q in points]
    assert values[0] == 0.0  # below threshold
    assert all(b >= a - 1e-12 for a, b in zip(values, values[1:]))  # monotone
    assert values[-1] > 0.9  # saturates toward full loss


def test_plr_curve_rejects_nonpositive_loads():
    with pytest.raises(ValueError):
        plr_curve(X3, Collision(), DeConfig(), [0.0, 0.5])


def test_plr_curve_parallel_matches_serial():
    loads = [0.4, 0.8, 1.0]
    serial = plr_curve(X3, Collision(), DeConfig(), loads)
    parallel = plr_curve(X3, Collision(), DeConfig(), loads, jobs=2)
    assert serial == parallel
