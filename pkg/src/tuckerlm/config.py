"""Decomposition configurations: which layers, which tensor roles, which ranks.

Layer and role ids are 0-based everywhere in the API.  The JSON document
format (``to_document``/``from_document``) uses 1-based layer numbers and role
names, e.g.::

    {"pruned_rank": 1, "layers": [3, 9, 15, 21, 27], "tensors": "all"}
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, NamedTuple

from .models import ModelSpec

# 1-based layer sets for Llama2-7B at PR=1 over all seven roles, keyed by the
# parameter reduction in percent they achieve (the reduction ladder).
LADDER_LAYER_SETS: dict[int, tuple[int, ...]] = {
    6: (3, 30),
    9: (3, 18, 32),
    15: (3, 9, 15, 21, 27),
    21: (5, 9, 13, 17, 21, 25, 29),
    33: (3, 6, 9, 12, 15, 18, 21, 24, 27, 30, 32),
    48: tuple(range(1, 32, 2)),
    60: (2, 4, 6, 8, 10, *range(11, 20), 21, 23, 25, 27, 29, 31),
    75: (2, 4, 6, 8, *range(10, 31)),
    84: (1, 3, 5, 7, *range(9, 33)),
    96: tuple(range(1, 33)),
}


@dataclass(frozen=True)
class DecompConfig:
    pruned_ranks: frozenset[tuple[int, int, int]]
    layers: tuple[int, ...]
    tensors: tuple[int, ...]

    @classmethod
    def empty(cls) -> "DecompConfig":
        return cls(frozenset(), (), ())

    @classmethod
    def uniform(cls, layers: Iterable[int], tensors: Iterable[int], pr: int) -> "DecompConfig":
        layers = tuple(sorted(set(int(x) for x in layers)))
        tensors = tuple(sorted(set(int(x) for x in tensors)))
        ranks = frozenset((l, k, int(pr)) for l in layers for k in tensors)
        return cls(ranks, layers, tensors)

    @property
    def is_empty(self) -> bool:
        return not self.pruned_ranks and not self.layers and not self.tensors

    @property
    def uniform_rank(self) -> int | None:
        ps = {p for _, _, p in self.pruned_ranks}
        return ps.pop() if len(ps) == 1 else None

    def triples(self) -> list[tuple[int, int, int]]:
        return sorted(self.pruned_ranks)

    def sort_key(self):
        return (len(self.layers), self.layers, len(self.tensors), self.tensors,
                tuple(self.triples()))


class Violation(NamedTuple):
    rule: str
    message: str


class Validity(NamedTuple):
    valid: bool
    violations: list[Violation]

    def __bool__(self):
        return self.valid


def validate(cfg: DecompConfig, spec: ModelSpec) -> Validity:
    """Check ``cfg`` against ``spec``; every failed rule is reported."""
    out: list[Violation] = []
    for name, ids, bound in (("layer", cfg.layers, spec.n_layers),
                             ("tensor", cfg.tensors, spec.n_tensors)):
        if len(set(ids)) != len(ids):
            out.append(Violation("duplicate-id", f"repeated {name} ids in {list(ids)}"))
        for i in ids:
            if not 0 <= i < bound:
                out.append(Violation(f"{name}-range",
                                     f"{name} {i} outside 0..{bound - 1}"))
    if bool(cfg.layers) != bool(cfg.tensors):
        out.append(Violation("partial-empty",
                             "decomposed layers and tensors must be both empty or both non-empty"))
    layers, tensors = set(cfg.layers), set(cfg.tensors)
    seen: dict[tuple[int, int], int] = {}
    for l, k, p in sorted(cfg.pruned_ranks):
        if l not in layers or k not in tensors:
            out.append(Violation("coverage-membership",
                                 f"triple ({l}, {k}, {p}) names a layer or tensor outside the decomposed sets"))
        if p <= 0:
            out.append(Violation("rank-positive", f"pruned rank {p} at ({l}, {k}) must be positive"))
        elif 0 <= k < spec.n_tensors and p > spec.rank(l, k):
            out.append(Violation("rank-bound",
                                 f"pruned rank {p} at ({l}, {k}) exceeds the tensor rank {spec.rank(l, k)}"))
        seen[(l, k)] = seen.get((l, k), 0) + 1
    for (l, k), n in sorted(seen.items()):
        if n > 1:
            out.append(Violation("coverage-unique", f"({l}, {k}) has {n} pruned ranks"))
    missing = [(l, k) for l in sorted(layers) for k in sorted(tensors) if (l, k) not in seen]
    if missing:
        out.append(Violation("coverage-complete",
                             f"no pruned rank for {len(missing)} decomposed (layer, tensor) pairs, "
                             f"first {missing[0]}"))
    return Validity(not out, out)


class InvalidConfigError(ValueError):
    def __init__(self, violations: list[Violation]):
        self.violations = violations
        super().__init__("; ".join(f"[{v.rule}] {v.message}" for v in violations))


def require_valid(cfg: DecompConfig, spec: ModelSpec) -> None:
    verdict = validate(cfg, spec)
    if not verdict.valid:
        raise InvalidConfigError(verdict.violations)


def to_document(cfg: DecompConfig, spec: ModelSpec) -> dict:
    doc: dict = {}
    pr = cfg.uniform_rank
    if pr is not None or cfg.is_empty:
        doc["pruned_rank"] = pr
    else:
        doc["pruned_ranks"] = [[l + 1, spec.roles[k].name, p] for l, k, p in cfg.triples()]
    doc["layers"] = [l + 1 for l in cfg.layers]
    doc["tensors"] = [spec.roles[k].name for k in cfg.tensors]
    return doc


def from_document(doc: dict, spec: ModelSpec) -> DecompConfig:
    """Parse a config document (1-based layers, role names or ``"all"``)."""
    layers = [int(l) - 1 for l in doc.get("layers", [])]
    tensors = doc.get("tensors", [])
    if tensors == "all":
        tensors = list(range(spec.n_tensors))
    else:
        tensors = [t if isinstance(t, int) else spec.role_index(t) for t in tensors]
    if "pruned_ranks" in doc:
        triples = frozenset((int(l) - 1, k if isinstance(k, int) else spec.role_index(k), int(p))
                            for l, k, p in doc["pruned_ranks"])
        return DecompConfig(triples, tuple(layers), tuple(tensors))
    pr = doc.get("pruned_rank")
    if pr is None:
        if layers or tensors:
            raise ValueError("config document lists layers/tensors but no pruned_rank")
        return DecompConfig.empty()
    return DecompConfig(frozenset((l, k, int(pr)) for l in layers for k in tensors),
                        tuple(layers), tuple(tensors))


def dumps(cfg: DecompConfig, spec: ModelSpec) -> str:
    return json.dumps(to_document(cfg, spec), indent=2) + "\n"


def loads(text: str, spec: ModelSpec) -> DecompConfig:
    return from_document(json.loads(text), spec)


def ladder_config(reduction_pct: int, spec: ModelSpec, pr: int = 1) -> DecompConfig:
    """PR-``pr`` config over all roles for one of the reduction-ladder layer sets."""
    layers = [l - 1 for l in LADDER_LAYER_SETS[reduction_pct]]
    return DecompConfig.uniform(layers, range(spec.n_tensors), pr)
