"""infobench: an exactly computable compression-efficiency laboratory.

Discrete information-bottleneck machinery, MDL two-part model families,
exception-accumulation dynamics and seeded protocol runners over synthetic
environments with known ground truth.
"""

__version__ = "0.1.0"

from .dynamics import (
    AlphaFit,
    DecayTrace,
    classify_model_signature,
    fit_alpha,
    fit_alpha_points,
    simulate_decay,
)
from .env_gen import (
    EnvSpec,
    SymbolStream,
    gen_hierarchical,
    gen_markov,
    gen_rule_exception,
    generate,
    markov_entropy_rate,
    stationary_distribution,
)
from .errors import (
    CapacityError,
    ConfigError,
    DistributionError,
    InfobenchError,
    InsufficientDataError,
    ModelCoverageError,
    NumericError,
    UsageError,
)
from .hierarchy import LayerStack, layer_efficiency, optimize_stack, total_efficiency
from .ib_solver import (
    FrontierCurve,
    IBPoint,
    RDGap,
    epsilon_ib,
    ib_fixed_point,
    rd_gap,
    sweep_frontier,
)
from .info_core import (
    Channel,
    JointTable,
    MIEstimate,
    conditional_entropy,
    entropy,
    epistemic_entropy_rate,
    estimate_mi_from_samples,
    mutual_information,
)
from .model_zoo import (
    CorrelationalModel,
    GenerativeModel,
    ModelLedger,
    PredictiveModel,
    corr_model_update,
    efficiency_functional,
    gen_model_update,
    run_stream,
)

__all__ = [
    "__version__",
    "AlphaFit",
    "CapacityError",
    "Channel",
    "ConfigError",
    "CorrelationalModel",
    "DecayTrace",
    "DistributionError",
    "EnvSpec",
    "FrontierCurve",
    "GenerativeModel",
    "IBPoint",
    "InfobenchError",
    "InsufficientDataError",
    "JointTable",
    "LayerStack",
    "MIEstimate",
    "ModelCoverageError",
    "ModelLedger",
    "NumericError",
    "PredictiveModel",
    "RDGap",
    "SymbolStream",
    "UsageError",
    "classify_model_signature",
    "conditional_entropy",
    "corr_model_update",
    "efficiency_functional",
    "entropy",
    "epistemic_entropy_rate",
    "epsilon_ib",
    "estimate_mi_from_samples",
    "fit_alpha",
    "fit_alpha_points",
    "gen_hierarchical",
    "gen_markov",
    "gen_model_update",
    "gen_rule_exception",
    "generate",
    "ib_fixed_point",
    "layer_efficiency",
    "markov_entropy_rate",
    "mutual_information",
    "optimize_stack",
    "rd_gap",
    "run_stream",
    "simulate_decay",
    "stationary_distribution",
    "sweep_frontier",
    "total_efficiency",
]
