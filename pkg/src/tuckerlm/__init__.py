"""Rank-pruned Tucker decomposition of language-model weights.

Tensor kernels and HOOI, compression and roofline accounting, a design-space
toolkit for choosing which layers and weights to factor, a binary checkpoint
format, and a small llama-style forward pass for measuring output drift.
"""

from .checkpoint import (AlreadyDecomposedError, BadMagicError, Checkpoint, CheckpointError,
                         DuplicateTensorError, LayoutError, TruncatedCheckpointError,
                         VersionMismatchError, apply_decomposition, load_checkpoint,
                         random_checkpoint, save_checkpoint)
from .compress import (CompressionStats, CostProfile, HardwareSpec, RooflineEstimate,
                       a100_like, compression_stats, factored_forward_flops, factored_params,
                       load_hardware, model_compression, model_cost_profile, model_macs,
                       model_params, pr_upper_bound, roofline_estimate)
from .config import (DecompConfig, InvalidConfigError, Validity, Violation, ladder_config,
                     from_document, to_document, validate)
from .models import ModelSpec, TensorRole, builtin_specs, get_spec, load_spec, save_spec
from .space import (ObjectiveOutcome, SearchResult, count_configs, describe_space,
                    enumerate_configs, heuristic_prune, search, space_size)
from .svd import SvdConvergenceError, SvdResult, truncated_svd
from .tensor import as_tensor, fold, frobenius_norm, mode_product, unfold
from .toy import DivergenceReport, logit_divergence, proxy_accuracy, toy_forward
from .tucker import HooiReport, TuckerFactors, hooi, reconstruct, relative_error, tucker2d

__version__ = "0.1.0"
