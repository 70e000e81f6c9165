"""t-SNE embedding plus parsimonious linear Gaussian cluster-weighted models."""

from .covariances import (
    MODEL_CODES,
    EigenDecomposition,
    ScatterInput,
    compose,
    decompose,
    gaussian_q_value,
    mstep_covariances,
    param_count,
)
from .cwm import (
    CwmParams,
    FitResult,
    e_step,
    fit,
    initialize,
    input_density,
    m_step,
    output_density,
    predict_cluster,
)
from .data import (
    LabeledDataset,
    StandardizeResult,
    load_csv,
    standardize,
    transform_labels,
    validate_matrix,
    write_csv,
    write_label_mapping,
)
from .errors import ConfigError, DataError, DegeneracyError, TsnecwmError
from .metrics import (
    PairCounts,
    PartitionIndices,
    contingency_table,
    indices,
    majority_accuracy,
    pair_counts,
    score_partitions,
)
from .rng import RandomSource
from .selection import (
    CRITERIA,
    CriteriaSet,
    FitConfig,
    SweepResult,
    count_parameters,
    information_criteria,
    sweep,
)
from .tsne import (
    AffinityMatrix,
    EmbeddingState,
    TsneConfig,
    conditional_affinities,
    embed,
    kl_cost,
    low_dim_affinities,
    pairwise_sq_distances,
    symmetrize,
    tsne_gradient,
)

__version__ = "0.1.0"

__all__ = [
    "MODEL_CODES",
    "CRITERIA",
    "AffinityMatrix",
    "ConfigError",
    "CriteriaSet",
    "CwmParams",
    "DataError",
    "DegeneracyError",
    "EigenDecomposition",
    "EmbeddingState",
    "FitConfig",
    "FitResult",
    "LabeledDataset",
    "PairCounts",
    "PartitionIndices",
    "RandomSource",
    "ScatterInput",
    "StandardizeResult",
    "SweepResult",
    "TsneConfig",
    "TsnecwmError",
    "compose",
    "conditional_affinities",
    "contingency_table",
    "count_parameters",
    "decompose",
    "e_step",
    "embed",
    "fit",
    "gaussian_q_value",
    "indices",
    "information_criteria",
    "initialize",
    "input_density",
    "kl_cost",
    "load_csv",
    "low_dim_affinities",
    "m_step",
    "majority_accuracy",
    "mstep_covariances",
    "output_density",
    "pair_counts",
    "pairwise_sq_distances",
    "param_count",
    "predict_cluster",
    "score_partitions",
    "standardize",
    "sweep",
    "symmetrize",
    "transform_labels",
    "tsne_gradient",
    "validate_matrix",
    "write_csv",
    "write_label_mapping",
]
