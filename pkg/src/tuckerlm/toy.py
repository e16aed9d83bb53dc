"""Llama-style forward pass over a checkpoint, plus a logit-divergence proxy.

Block graph: RMSNorm -> Q/K/V -> softmax(QK^T / sqrt(d)) V -> W_SO -> residual
-> RMSNorm -> W_D(silu(x W_G) * (x W_U)) -> residual.  There are no positional
encodings and attention is bidirectional; the model only has to be a
deterministic function of its weights.

A decomposed weight is applied as ``((x @ A) @ B) @ C`` and never rebuilt.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .checkpoint import Checkpoint, LayoutError, check_layout, layer_tensor_name
from .models import ModelSpec, get_spec

RMS_EPS = 1e-6


def _rms_norm(x: np.ndarray, weight: np.ndarray) -> np.ndarray:
    return x / np.sqrt(np.mean(x * x, axis=-1, keepdims=True) + RMS_EPS) * weight


def softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    z = x - x.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def _log_softmax(x: np.ndarray) -> np.ndarray:
    z = x - x.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def _silu(x):
    return x / (1.0 + np.exp(-x))


def linear(x: np.ndarray, ckpt: Checkpoint, name: str) -> np.ndarray:
    e = ckpt.entries
    if name in e:
        return x @ e[name]
    if f"{name}.A" in e:
        return ((x @ e[f"{name}.A"]) @ e[f"{name}.B"]) @ e[f"{name}.C"]
    raise LayoutError(f"checkpoint has no dense or factored tensor {name!r}")


def toy_forward(ckpt: Checkpoint, token_ids, spec: ModelSpec | None = None,
                return_attention: bool = False):
    """Logits of shape ``(batch, seq, vocab)`` for integer ``token_ids``."""
    spec = spec or get_spec(ckpt.spec_name)
    if spec.family == "encoder":
        raise ValueError("the forward pass implements llama-style blocks only")
    check_layout(ckpt, spec)
    ids = np.asarray(token_ids)
    if ids.ndim == 1:
        ids = ids[None, :]
    if ids.ndim != 2 or ids.min() < 0 or ids.max() >= spec.vocab:
        raise ValueError(f"token ids must be a (batch, seq) array in 0..{spec.vocab - 1}")
    e = ckpt.entries
    b, s = ids.shape
    nh, hd = spec.n_heads, spec.head_dim
    x = e["embed"][ids]
    attn_maps = []
    for l in range(spec.n_layers):
        name = lambda role: layer_tensor_name(l, role)  # noqa: E731
        h = _rms_norm(x, e[name("attn_norm")])
        q = linear(h, ckpt, name("W_Q")).reshape(b, s, nh, hd).transpose(0, 2, 1, 3)
        k = linear(h, ckpt, name("W_K")).reshape(b, s, nh, hd).transpose(0, 2, 1, 3)
        v = linear(h, ckpt, name("W_V")).reshape(b, s, nh, hd).transpose(0, 2, 1, 3)
        p = softmax(q @ k.transpose(0, 1, 3, 2) / math.sqrt(hd))
        if return_attention:
            attn_maps.append(p)
        ctx = (p @ v).transpose(0, 2, 1, 3).reshape(b, s, spec.hidden)
        x = x + linear(ctx, ckpt, name("W_SO"))
        h = _rms_norm(x, e[name("mlp_norm")])
        gated = _silu(linear(h, ckpt, name("W_G"))) * linear(h, ckpt, name("W_U"))
        x = x + linear(gated, ckpt, name("W_D"))
    logits = _rms_norm(x, e["norm_final"]) @ e["lm_head"]
    if return_attention:
        return logits, attn_maps
    return logits


@dataclass(frozen=True)
class DivergenceReport:
    mean_cosine_similarity: float
    max_abs_logit_diff: float
    mean_kl: float
    n_inputs: int
    seed: int

    def to_dict(self) -> dict:
        return asdict(self)


def random_tokens(vocab: int, n_inputs: int, seq_len: int, seed: int) -> np.ndarray:
    return np.random.default_rng(seed).integers(0, vocab, size=(n_inputs, seq_len))


def logit_divergence(original: Checkpoint, decomposed: Checkpoint, n_inputs: int = 8,
                     seed: int = 42, seq_len: int = 16,
                     spec: ModelSpec | None = None) -> DivergenceReport:
    """Compare two checkpoints of the same spec on seeded random token sequences.

    KL is ``KL(softmax(original) || softmax(decomposed))`` in nats, averaged
    over every position of every input, as is the cosine similarity.
    """
    if original.spec_name != decomposed.spec_name:
        raise ValueError(f"spec mismatch: {original.spec_name!r} vs {decomposed.spec_name!r}")
    if n_inputs < 1:
        raise ValueError("n_inputs must be >= 1")
    spec = spec or get_spec(original.spec_name)
    ids = random_tokens(spec.vocab, n_inputs, seq_len, seed)
    a = toy_forward(original, ids, spec).reshape(-1, spec.vocab)
    b = toy_forward(decomposed, ids, spec).reshape(-1, spec.vocab)
    na, nb = np.linalg.norm(a, axis=1), np.linalg.norm(b, axis=1)
    denom = na * nb
    cos = np.where(denom > 0, np.sum(a * b, axis=1) / np.where(denom > 0, denom, 1.0),
                   np.where((na == 0) & (nb == 0), 1.0, 0.0))
    la, lb = _log_softmax(a), _log_softmax(b)
    kl = np.sum(np.exp(la) * (la - lb), axis=1)
    return DivergenceReport(float(np.clip(cos.mean(), -1.0, 1.0)),
                            float(np.max(np.abs(a - b))),
                            float(max(kl.mean(), 0.0)), n_inputs, seed)


def proxy_accuracy(report: DivergenceReport, vocab: int) -> float:
    """Monotone score in [0, 1]: 1 for identical outputs, 0 at KL >= ln(vocab)."""
    return 1.0 - min(report.mean_kl / math.log(vocab), 1.0)


def divergence_accuracy_provider(ckpt: Checkpoint, n_inputs: int = 8, seed: int = 42,
                                 seq_len: int = 16, spec: ModelSpec | None = None):
    """Accuracy provider for :func:`tuckerlm.space.search` backed by ``ckpt``."""
    from .checkpoint import apply_decomposition

    spec = spec or get_spec(ckpt.spec_name)

    def provide(cfg) -> float:
        dec = apply_decomposition(ckpt, cfg, spec)
        report = logit_divergence(ckpt, dec, n_inputs, seed, seq_len, spec)
        return proxy_accuracy(report, spec.vocab)

    return provide
