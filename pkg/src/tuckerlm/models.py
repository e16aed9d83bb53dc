"""Architecture descriptions of the language models the toolkit analyzes.

Weights of decomposable linear layers are described as ``(in_features,
out_features)`` so that a layer computes ``y = x @ W`` and a factored layer
computes ``((x @ A) @ B) @ C``.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

FAMILIES = ("encoder", "decoder", "toy")


@dataclass(frozen=True)
class TensorRole:
    name: str
    shape: tuple[int, int]

    @property
    def params(self) -> int:
        return self.shape[0] * self.shape[1]

    @property
    def rank(self) -> int:
        return min(self.shape)


@dataclass(frozen=True)
class HeadSpec:
    """A weight-bearing linear layer outside the repeated blocks.

    ``per_token`` heads run on every position (LM head); the rest run once
    per sequence (BERT pooler).
    """
    name: str
    in_features: int
    out_features: int
    per_token: bool = True


@dataclass(frozen=True)
class ModelSpec:
    name: str
    family: str
    n_layers: int
    hidden: int
    n_heads: int
    ffn: int
    vocab: int
    roles: tuple[TensorRole, ...]
    heads: tuple[HeadSpec, ...]
    non_decomposable_params: int

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        names = [r.name for r in self.roles]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate role names in {names}")
        if any(s < 1 for r in self.roles for s in r.shape):
            raise ValueError("role shapes must be positive")
        if self.n_layers < 1 or self.hidden < 1 or self.n_heads < 1:
            raise ValueError("n_layers, hidden and n_heads must be positive")
        if self.hidden % self.n_heads:
            raise ValueError("hidden size must divide evenly into heads")

    @property
    def n_tensors(self) -> int:
        return len(self.roles)

    @property
    def role_names(self) -> tuple[str, ...]:
        return tuple(r.name for r in self.roles)

    def role_index(self, name: str) -> int:
        try:
            return self.role_names.index(name)
        except ValueError:
            raise KeyError(f"{self.name} has no tensor role {name!r}; "
                           f"roles are {', '.join(self.role_names)}") from None

    def rank(self, layer: int, tensor: int) -> int:
        # homogeneous blocks: the rank does not depend on the layer
        return self.roles[tensor].rank

    @property
    def layer_params(self) -> int:
        return sum(r.params for r in self.roles)

    @property
    def decomposable_params(self) -> int:
        return self.n_layers * self.layer_params

    @property
    def total_params(self) -> int:
        return self.decomposable_params + self.non_decomposable_params

    @property
    def head_dim(self) -> int:
        return self.hidden // self.n_heads


def _llama(name, family, n_layers, hidden, n_heads, ffn, vocab, kv_dim=None) -> ModelSpec:
    kv = kv_dim or hidden
    roles = (
        TensorRole("W_Q", (hidden, hidden)),
        TensorRole("W_K", (hidden, kv)),
        TensorRole("W_V", (hidden, kv)),
        TensorRole("W_SO", (hidden, hidden)),
        TensorRole("W_G", (hidden, ffn)),
        TensorRole("W_U", (hidden, ffn)),
        TensorRole("W_D", (ffn, hidden)),
    )
    # token embedding + untied LM head + two RMSNorms per block + final norm
    extra = 2 * vocab * hidden + (2 * n_layers + 1) * hidden
    return ModelSpec(name, family, n_layers, hidden, n_heads, ffn, vocab, roles,
                     (HeadSpec("lm_head", hidden, vocab, True),), extra)


def _bert(name, n_layers, hidden, n_heads, ffn, vocab=30522, max_pos=512,
          type_vocab=2) -> ModelSpec:
    roles = (
        TensorRole("W_Q", (hidden, hidden)),
        TensorRole("W_K", (hidden, hidden)),
        TensorRole("W_V", (hidden, hidden)),
        TensorRole("W_SO", (hidden, hidden)),
        TensorRole("W_Int", (hidden, ffn)),
        TensorRole("W_O", (ffn, hidden)),
    )
    embeddings = (vocab + max_pos + type_vocab) * hidden + 2 * hidden
    per_layer = 4 * hidden + ffn + hidden + 4 * hidden  # biases + two LayerNorms
    pooler = hidden * hidden + hidden
    extra = embeddings + n_layers * per_layer + pooler
    return ModelSpec(name, "encoder", n_layers, hidden, n_heads, ffn, vocab, roles,
                     (HeadSpec("pooler", hidden, hidden, False),), extra)


def builtin_specs() -> dict[str, ModelSpec]:
    return {
        "bert_base": _bert("bert_base", 12, 768, 12, 3072),
        "bert_large": _bert("bert_large", 24, 1024, 16, 4096),
        "llama2_7b": _llama("llama2_7b", "decoder", 32, 4096, 32, 11008, 32000),
        "llama2_70b": _llama("llama2_70b", "decoder", 80, 8192, 64, 28672, 32000,
                             kv_dim=1024),
        "toy_llama": _llama("toy_llama", "toy", 4, 64, 4, 172, 256),
    }


def spec_to_dict(spec: ModelSpec) -> dict:
    d = asdict(spec)
    d["roles"] = [{"name": r.name, "shape": list(r.shape)} for r in spec.roles]
    return d


def spec_from_dict(d: dict) -> ModelSpec:
    roles = tuple(TensorRole(r["name"], tuple(int(x) for x in r["shape"]))
                  for r in d["roles"])
    heads = tuple(HeadSpec(h["name"], int(h["in_features"]), int(h["out_features"]),
                           bool(h.get("per_token", True)))
                  for h in d.get("heads", ()))
    return ModelSpec(d["name"], d["family"], int(d["n_layers"]), int(d["hidden"]),
                     int(d["n_heads"]), int(d["ffn"]), int(d["vocab"]), roles, heads,
                     int(d["non_decomposable_params"]))


def save_spec(spec: ModelSpec, path) -> None:
    Path(path).write_text(json.dumps(spec_to_dict(spec), indent=2) + "\n")


def load_spec(path) -> ModelSpec:
    return spec_from_dict(json.loads(Path(path).read_text()))


def get_spec(name_or_path: str) -> ModelSpec:
    """A built-in spec by name, or one loaded from a JSON spec file."""
    specs = builtin_specs()
    if name_or_path in specs:
        return specs[name_or_path]
    p = Path(name_or_path)
    if p.is_file():
        return load_spec(p)
    raise KeyError(f"unknown model {name_or_path!r}; built-ins are "
                   f"{', '.join(sorted(specs))}")
