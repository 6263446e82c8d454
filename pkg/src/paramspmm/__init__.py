"""Parameterised CSR sparse-times-dense multiplication with a learned
configuration decider.

Typical flow::

    A = load_matrix_market("graph.mtx")
    cfg = SpmmConfig(W=4, F=2, V=2, S=True, dim=64)
    C, report = spmm(A, B, cfg)
"""

from .decider import (
    DeciderModel,
    HyperParams,
    LabeledCorpus,
    find_model,
    label_corpus,
    load_models,
    predict,
    save_models,
    score_normalized,
    train,
)
from .engine import EngineReport, benchmark_config, benchmark_configs, enumerate_warp_tasks, spmm, spmm_csr_reference, spmm_pcsr
from .errors import (
    DimensionMismatchError,
    FormatError,
    MatrixMarketError,
    ModelNotFoundError,
    ParameterError,
    ParamSpMMError,
    SchemaError,
    UndefinedMetricError,
    VerificationError,
)
from .features import FEATURE_NAMES, FeatureVector, extract_features
from .matrix_io import (
    CsrMatrix,
    dense_oracle_spmm,
    generate_synthetic,
    load_matrix_market,
    random_dense,
    write_matrix_market,
)
from .pcsr import (
    LatticeSpec,
    Pcsr,
    SpmmConfig,
    build_pcsr,
    compute_mac_gap,
    padding_ratio,
    read_pcsr,
    split_granularity,
    split_ratio,
    write_pcsr,
)
from .reorder import Permutation, apply_permutation, reorder_locality

__version__ = "0.1.0"
