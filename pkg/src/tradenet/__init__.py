"""Community structure, statistics, and co-membership models for layered
directed trade networks."""

__version__ = "0.1.0"

from .community import DetectionResult, DetectorConfig, coarsen, detect, \
    evaluate_modularity, local_move_gain
from .compare import confusion_matrix, herfindahl, nmi, size_distribution
from .errors import (
    ConvergenceError,
    EdgeDataError,
    PipelineError,
    RankDeficiencyError,
    SeparationError,
    TradenetError,
    UndefinedStatisticError,
)
from .glm import DyadFrame, GlmFit, build_dyads, build_panel_dyads, fit, \
    fit_all_layers, load_covariates, marginal_effects
from .graph import (
    Layer,
    MultiNetwork,
    MultilayerPartition,
    Partition,
    build_layer,
    degrees,
    load_layers,
    log_weights,
    strengths,
    write_edge_csv,
)
from .multilayer import MultilayerConfig, detect_multilayer, diversification, \
    evaluate_q_star, project
from .pca import PcaResult, pca, prune, prune_and_pca
from .pipeline import RunConfig, parse_config, run_pipeline
from .stats import StatsRecord, layer_stats
