"""cspq: product-quantization construction toolkit.

Library surface: core data model (PQParams, Codebook, PQCodes), per-subspace
k-means training, three equivalence-checked encoder kernels, chunk-major bulk
execution, flat ADC evaluation, and fvecs/ivecs/bvecs plus binary
codebook/code persistence. The ``cspq`` CLI fronts the same machinery.
"""

from .core import (
    Codebook,
    ConfigError,
    CorruptionError,
    DataError,
    Error,
    FormatError,
    PQCodes,
    PQParams,
    ScoreBlock,
    TrainingError,
    VectorDataset,
    compute_biases,
    partition_vector,
    transpose_codebook,
)
from .kernels import (
    EncoderVariant,
    encode_blocked,
    encode_ref,
    encode_reform,
    encode_vector,
    native_lane_width,
)
from .training import KMeansResult, TrainConfig, train_all_codebooks, train_codebook
from .bulk import (
    CodebookSet,
    ExecutionPlan,
    encode_dataset,
    estimate_working_set,
)
from .evaluation import EvalReport, adc_search, evaluate, reconstruct
from .io import (
    read_bvecs,
    read_codebooks,
    read_codes,
    read_fvecs,
    read_ivecs,
    synth_dataset,
    write_codebooks,
    write_codes,
    write_fvecs,
    write_ivecs,
)

__version__ = "0.1.0"

__all__ = [
    "Codebook",
    "CodebookSet",
    "ConfigError",
    "CorruptionError",
    "DataError",
    "EncoderVariant",
    "Error",
    "EvalReport",
    "ExecutionPlan",
    "FormatError",
    "KMeansResult",
    "PQCodes",
    "PQParams",
    "ScoreBlock",
    "TrainConfig",
    "TrainingError",
    "VectorDataset",
    "adc_search",
    "compute_biases",
    "encode_blocked",
    "encode_dataset",
    "encode_ref",
    "encode_reform",
    "encode_vector",
    "estimate_working_set",
    "evaluate",
    "native_lane_width",
    "partition_vector",
    "read_bvecs",
    "read_codebooks",
    "read_codes",
    "read_fvecs",
    "read_ivecs",
    "reconstruct",
    "synth_dataset",
    "train_all_codebooks",
    "train_codebook",
    "transpose_codebook",
    "write_codebooks",
    "write_codes",
    "write_fvecs",
    "write_ivecs",
    "__version__",
]
