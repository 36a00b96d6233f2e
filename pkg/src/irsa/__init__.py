"""Analysis and simulation toolkit for repetition-based random access.

Library surface:

* degree_dist: repetition-degree distributions and their transforms
* slot_models: per-slot erasure updates for three channel abstractions
* de_core: density evolution, limiting loss curves, load thresholds
* opt: differential-evolution search over constrained distributions
* mac_sim: graph-level frame Monte Carlo with iterative cancellation
* phy_sim: symbol-level simulator with fading, estimation and SIC
* cli: the `irsa` command
"""

from .de_core import (
    DeConfig,
    DeTrace,
    ThresholdResult,
    Verdict,
    de_step,
    plr_curve,
    run_de,
    slot_edge_pmf,
    threshold,
)
from .degree_dist import DegreeDistribution, format_distribution, parse_distribution
from .errors import (
    BracketError,
    DegreeExceedsSlots,
    DomainError,
    DoubleSubtraction,
    EmptyDistribution,
    InfeasibleConstraint,
    IrsaError,
    NegativeMass,
    NotPowerOfTwo,
    TruncationError,
    ZeroSlots,
    ZeroTotalMass,
)
from .mac_sim import (
    FrameGraph,
    FrameOutcome,
    PeelMode,
    SimRow,
    SimStats,
    build_frame,
    peel,
    run_campaign,
    wilson_interval,
)
from .opt import OptConfig, OptResult, optimize, project_to_constraint
from .params import SystemParams, derive_slots
from .phy_sim import (
    DecodeCriterion,
    SicMode,
    SicState,
    SlotSignal,
    UserBurst,
    estimate_and_decode,
    hadamard_pilots,
    measure_decode_failure_rate,
    measure_symbol_error_rate,
    qpsk_hard_bits,
    qpsk_modulate,
    run_phy_campaign,
    sic_subtract,
    simulate_frame,
    synthesize_slot,
)
from .slot_models import (
    Collision,
    OrthogonalResources,
    PhyFailureParams,
    RealisticPhy,
    SlotModel,
    collision_update,
    decode_fail_prob,
    pilot_collider_pmf,
    realistic_update,
    resource_update,
    subtracted_collider_pmf,
    symbol_error_prob,
)

__version__ = "0.1.0"
