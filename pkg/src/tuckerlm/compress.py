"""Parameter, MAC and roofline accounting for dense and decomposed models.

Counting conventions:

* MACs cover every weight-bearing matmul (the per-block roles plus heads
  such as the LM head) and the two attention batched matmuls per block
  (``Q @ K.T`` and ``P @ V``).  Embedding lookups, norms, softmax and
  activations are not counted.
* DRAM traffic for one forward pass is the weight footprint: weights are
  streamed once, activations are assumed cache resident.  Operational
  intensity is therefore MACs per weight byte.
* A decomposed ``H x W`` weight at pruned rank ``p`` is evaluated either
  ``"factored"`` (``((x @ A) @ B) @ C``, never rebuilding ``W``) or
  ``"reconstruct"`` (rebuild ``W = (A @ B) @ C`` once, then a dense matmul).
"""

from __future__ import annotations

import configparser
import math
from dataclasses import asdict, dataclass
from pathlib import Path

from .config import DecompConfig, require_valid
from .models import ModelSpec

STYLES = ("factored", "reconstruct")


@dataclass(frozen=True)
class CompressionStats:
    params_before: int
    params_after: int

    @property
    def compression_ratio(self) -> float:
        return self.params_before / self.params_after

    @property
    def reduction_fraction(self) -> float:
        return 1.0 - self.params_after / self.params_before


def _check_dims(h: int, w: int):
    if h < 1 or w < 1:
        raise ValueError(f"dimensions must be >= 1, got {h}x{w}")


def factored_params(h: int, w: int, pr: int) -> int:
    return h * pr + pr * pr + pr * w


def compression_stats(h: int, w: int, pr: int) -> CompressionStats:
    _check_dims(h, w)
    if not 1 <= pr <= min(h, w):
        raise ValueError(f"pruned rank {pr} out of range 1..{min(h, w)}")
    return CompressionStats(h * w, factored_params(h, w, pr))


def pr_upper_bound(h: int, w: int) -> int:
    """Exclusive bound on pruned ranks that shrink an ``h x w`` weight.

    A rank compresses iff ``pr < pr_upper_bound(h, w)``.  This is the integer
    ceiling of ``(sqrt((H+W)^2 + 4HW) - (H+W)) / 2``, i.e. one more than the
    largest ``p`` with ``p^2 + (H+W)p - HW < 0`` (1 if no rank compresses).
    """
    _check_dims(h, w)
    s = h + w

    def shrinks(p):
        return p * p + s * p - h * w < 0

    p = (math.isqrt(s * s + 4 * h * w) - s) // 2
    while shrinks(p + 1):
        p += 1
    while p > 0 and not shrinks(p):
        p -= 1
    return p + 1


def factored_forward_flops(h: int, w: int, pr: int, batch_rows: int) -> int:
    """MACs for ``((x @ A) @ B) @ C`` with ``x`` of shape ``batch_rows x h``."""
    _check_dims(h, w)
    if batch_rows < 1:
        raise ValueError("batch_rows must be >= 1")
    if not 1 <= pr <= min(h, w):
        raise ValueError(f"pruned rank {pr} out of range 1..{min(h, w)}")
    return batch_rows * factored_params(h, w, pr)


def reconstruction_macs(h: int, w: int, pr: int) -> int:
    """MACs to rebuild ``W = (A @ B) @ C``."""
    return h * pr * pr + h * pr * w


def reconstruct_forward_flops(h: int, w: int, pr: int, batch_rows: int) -> int:
    """MACs for rebuilding the dense weight and then ``x @ W``."""
    if batch_rows < 1:
        raise ValueError("batch_rows must be >= 1")
    return reconstruction_macs(h, w, pr) + batch_rows * h * w


@dataclass(frozen=True)
class HardwareSpec:
    peak_macs_per_s: float
    peak_bw_bytes_per_s: float
    board_power_w: float

    def __post_init__(self):
        for k, v in asdict(self).items():
            if not v > 0:
                raise ValueError(f"{k} must be positive, got {v}")

    @property
    def knee(self) -> float:
        """Operational intensity (MAC/byte) where compute and memory time meet."""
        return self.peak_macs_per_s / self.peak_bw_bytes_per_s


def a100_like() -> HardwareSpec:
    return HardwareSpec(312e12, 2.0e12, 300.0)


def load_hardware(path) -> HardwareSpec:
    """Read ``key = value`` lines (an optional ``[hardware]`` header is allowed)."""
    text = Path(path).read_text()
    parser = configparser.ConfigParser()
    if not text.lstrip().startswith("["):
        text = "[hardware]\n" + text
    parser.read_string(text)
    section = parser[parser.sections()[0]]
    try:
        return HardwareSpec(*(float(section[k]) for k in
                              ("peak_macs_per_s", "peak_bw_bytes_per_s", "board_power_w")))
    except KeyError as exc:
        raise ValueError(f"hardware file {path} is missing key {exc}") from None


def save_hardware(hw: HardwareSpec, path) -> None:
    lines = [f"{k} = {v!r}" for k, v in asdict(hw).items()]
    Path(path).write_text("\n".join(lines) + "\n")


@dataclass(frozen=True)
class RooflineEstimate:
    latency_s: float
    energy_j: float
    bound: str
    compute_s: float
    traffic_s: float


def roofline_estimate(macs: float, traffic_bytes: float, hw: HardwareSpec) -> RooflineEstimate:
    compute_s = macs / hw.peak_macs_per_s
    traffic_s = traffic_bytes / hw.peak_bw_bytes_per_s
    latency = max(compute_s, traffic_s)
    oi = macs / traffic_bytes
    bound = "memory_bound" if oi < hw.knee else "compute_bound"
    return RooflineEstimate(latency, latency * hw.board_power_w, bound, compute_s, traffic_s)


@dataclass(frozen=True)
class CostProfile:
    macs: int
    params: int
    model_bytes: int
    oi: float
    roofline_latency_s: float
    roofline_energy_j: float
    bound: str

    @property
    def traffic_bytes(self) -> int:
        return self.model_bytes

    @property
    def compute_to_model_ratio(self) -> float:
        return self.macs / self.model_bytes


def model_params(spec: ModelSpec, cfg: DecompConfig | None = None) -> int:
    total = spec.total_params
    if cfg is None:
        return total
    for _, k, p in cfg.pruned_ranks:
        h, w = spec.roles[k].shape
        total -= h * w - factored_params(h, w, p)
    return total


def model_compression(spec: ModelSpec, cfg: DecompConfig) -> CompressionStats:
    """Whole-model parameter counts; embeddings and heads are in the denominator."""
    require_valid(cfg, spec)
    return CompressionStats(spec.total_params, model_params(spec, cfg))


def dense_macs(spec: ModelSpec, batch: int = 1, seq_len: int = 128) -> int:
    rows = batch * seq_len
    per_layer = rows * spec.layer_params + 2 * batch * seq_len * seq_len * spec.hidden
    heads = sum((rows if hd.per_token else batch) * hd.in_features * hd.out_features
                for hd in spec.heads)
    return spec.n_layers * per_layer + heads


def model_macs(spec: ModelSpec, cfg: DecompConfig | None = None, batch: int = 1,
               seq_len: int = 128, style: str = "factored") -> int:
    if style not in STYLES:
        raise ValueError(f"style must be one of {STYLES}, got {style!r}")
    macs = dense_macs(spec, batch, seq_len)
    if cfg is None:
        return macs
    rows = batch * seq_len
    for _, k, p in cfg.pruned_ranks:
        h, w = spec.roles[k].shape
        if style == "factored":
            macs += factored_forward_flops(h, w, p, rows) - rows * h * w
        else:
            macs += reconstruction_macs(h, w, p)
    return macs


def model_cost_profile(spec: ModelSpec, cfg: DecompConfig | None = None, batch: int = 1,
                       seq_len: int = 128, precision_bytes: int = 2,
                       hw: HardwareSpec | None = None,
                       style: str = "factored") -> CostProfile:
    if cfg is not None:
        require_valid(cfg, spec)
    hw = hw or a100_like()
    macs = model_macs(spec, cfg, batch, seq_len, style)
    params = model_params(spec, cfg)
    model_bytes = params * precision_bytes
    est = roofline_estimate(macs, model_bytes, hw)
    return CostProfile(macs, params, model_bytes, macs / model_bytes,
                       est.latency_s, est.energy_j, est.bound)
