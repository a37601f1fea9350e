"""Spreadsheets whose cells may hold random quantities and observed data.

Cells are written in ordinary formula syntax (`=A1+B2*2`), extended with
random primitives (`GAUSSIAN`, `BETWEEN`, `CHOICE`, `NEAR`) and an `ACTUAL`
form that conditions the sheet on recorded data.  Two engines answer queries
about the conditioned sheet: a particle filter that exploits the dependency
structure between observations, and a stochastic-gradient variational fit
with one factor per random choice.
"""

from .errors import (
    AllZeroWeightsError,
    AlreadyBoundError,
    ArityError,
    CellSyntaxError,
    ConfigError,
    CycleError,
    DanglingRefError,
    DimensionError,
    DomainError,
    DuplicateNameError,
    EvalError,
    FormulaError,
    GradientUnavailableError,
    LexError,
    NoRootError,
    ParamError,
    ParseError,
    ProbsheetError,
    ReservedNameError,
    SupportError,
    UnboundRefError,
    UnboundTargetError,
    UnknownOpError,
    UnsupportedModelError,
)
from .formula import (
    Actual,
    BlackApp,
    CellRef,
    Const,
    ErpApp,
    ErpKind,
    Expr,
    If,
    Label,
    PrimApp,
    PrimOp,
    Ref,
    format_cell,
    format_expr,
    parse_cell,
)
from .graph import (
    CompiledSheet,
    DepGraph,
    Sheet,
    build_graph,
    check_wellformed,
    compile_sheet,
    decompose,
    latent_cells,
    parse_sheet,
    topo_order,
)
from .dist import (
    ErpParams,
    GaussianFamily,
    ScaledBetaFamily,
    SoftmaxChoiceFamily,
    VariationalFamily,
    default_family,
    digamma,
    sample_erp,
    score_erp,
)
from .blackbox import BlackOpDef, Registry, builtin_registry, irr, npv
from .evaluator import (
    Bookkeeping,
    PriorProposal,
    VariationalProposal,
    combine,
    eval_expr,
    run_sheet,
    step_cell,
)
from .smc import (
    Histogram,
    ParticleStore,
    PosteriorMixture,
    combined_log_evidence,
    island_sizes,
    particle_values,
    posterior_histogram,
    resample,
    run_island,
    run_smc,
)
from .bbvi import (
    BbviConfig,
    BbviResult,
    FamilySummary,
    elbo_estimate,
    estimate_gradient,
    init_state,
    run_bbvi,
)
from .cli import load_model, load_sheet, main

__version__ = "0.1.0"

__all__ = [
    "AllZeroWeightsError", "AlreadyBoundError", "ArityError",
    "CellSyntaxError", "ConfigError", "CycleError", "DanglingRefError",
    "DimensionError", "DomainError", "DuplicateNameError", "EvalError",
    "FormulaError", "GradientUnavailableError", "LexError", "NoRootError",
    "ParamError", "ParseError", "ProbsheetError", "ReservedNameError",
    "SupportError", "UnboundRefError", "UnboundTargetError", "UnknownOpError",
    "UnsupportedModelError",
    "Actual", "BlackApp", "CellRef", "Const", "ErpApp", "ErpKind", "Expr",
    "If", "Label", "PrimApp", "PrimOp", "Ref", "format_cell", "format_expr",
    "parse_cell",
    "CompiledSheet", "DepGraph", "Sheet", "build_graph", "check_wellformed",
    "compile_sheet", "decompose", "latent_cells", "parse_sheet", "topo_order",
    "ErpParams", "GaussianFamily", "ScaledBetaFamily", "SoftmaxChoiceFamily",
    "VariationalFamily", "default_family", "digamma", "sample_erp",
    "score_erp",
    "BlackOpDef", "Registry", "builtin_registry", "irr", "npv",
    "Bookkeeping", "PriorProposal", "VariationalProposal", "combine",
    "eval_expr", "run_sheet", "step_cell",
    "Histogram", "ParticleStore", "PosteriorMixture",
    "combined_log_evidence", "island_sizes", "particle_values",
    "posterior_histogram", "resample", "run_island", "run_smc",
    "BbviConfig", "BbviResult", "FamilySummary", "elbo_estimate",
    "estimate_gradient", "init_state", "run_bbvi",
    "load_model", "load_sheet", "main",
    "__version__",
]
