"""Frame-level simulator and stability analyzer for slotted random-access
channels (slotted Aloha and CRDSA with iterative interference cancellation)."""

from .core import (
    ChannelConfig,
    ConfigError,
    DegreeDistribution,
    FinitePopulation,
    Icp,
    InfinitePopulation,
    NoPolicy,
    Policy,
    Population,
    RandomStream,
    Rcp,
    RunSettings,
    load_settings,
    parse_settings,
    require_valid,
    sample_degree,
    validate,
    validate_policy,
)
from .decoder import (
    DecodeResult,
    FrameLayout,
    brute_force_plr,
    place_replicas,
    sic_decode,
)
from .plr import (
    PlrCurve,
    PlrSample,
    build_plr_curve,
    curve_from_csv,
    curve_to_csv,
    default_g_max,
    estimate_plr,
    plr_at,
)
from .simulator import (
    FrameRecord,
    PopulationState,
    SimMetrics,
    run_simulation,
    step_frame,
    sweep_threshold,
)
from .stability import (
    ChannelClass,
    ChannelKind,
    ContourPoint,
    EquilibriumKind,
    EquilibriumPoint,
    analyze,
    classify_channel,
    equilibrium_contour,
    find_equilibria,
    load_line_gt,
    sweep_parameter,
)

__version__ = "0.1.0"
