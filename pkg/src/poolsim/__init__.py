"""poolsim: agent-based ride-pooling and solo-hailing fleet simulator."""

__version__ = "0.1.0"

from .demand import (  # noqa: F401
    DemandConfig,
    FileSource,
    HotZonesSource,
    Mode,
    Position,
    Request,
    RequestState,
    UniformSource,
    Vehicle,
    VehicleStatus,
    init_fleet,
    load_requests,
    synthesize_requests,
)
from .engine import Simulation, SimConfig, run  # noqa: F401
from .matching import (  # noqa: F401
    Assignment,
    CandidateMatch,
    MatchingParams,
    Trip,
    build_candidates,
    match_utility,
    solve_assignment,
)
from .metrics import (  # noqa: F401
    FitResult,
    Metrics,
    ScalingParams,
    compute_metrics,
    fit_scaling,
    predict_performance,
    system_load,
)
from .netgraph import Edge, PathResult, RoadNetwork, WeightMode, load_network  # noqa: F401
from .pricing import GridSurface, LogisticSurface, ModeDecision, Tariff, decide_mode, quote  # noqa: F401
from .repositioning import (  # noqa: F401
    RepositionPlan,
    RepositionStrategy,
    StrategyKind,
    plan_cruise,
    plan_stay,
    plan_to_waiting,
)
from .routing import (  # noqa: F401
    FeasibilityReport,
    Route,
    Stop,
    StopKind,
    detour_ratio,
    enumerate_route,
    nn_route,
)
