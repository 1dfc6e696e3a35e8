"""Multi-period mean-variance portfolio selection with bankruptcy control."""

from .dual import BarrierSettings, DualResult, solve_dual
from .errors import (
    ContractError,
    DegenerateRecursionError,
    InfeasibleMarketError,
    InputFileError,
    MarketWarning,
    OptimalityViolation,
    PortfolioError,
    SingularUpdateError,
    SpecError,
    ValidationError,
)
from .gmv import (
    BankruptcySpec,
    GMVRecursion,
    build_gmv_policy,
    dual_objective,
    lagrangian_from_moments,
    slackness_table,
    solve_gmv_recursions,
)
from .market import (
    AssetMoments,
    MarketData,
    PeriodDerived,
    derive_period,
    example_market,
    sherman_morrison,
)
from .mmv import (
    IntertemporalSpec,
    MMVSolution,
    classical_frontier,
    segment_params,
    solve_mmv,
    solve_pq,
)
from .montecarlo import SamplerSpec, SimReport, check_tchebycheff, perturb_optimality, simulate
from .policy import AffinePolicy, PolicyStep, WealthMoments, affine_moments, propagate_variance

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
