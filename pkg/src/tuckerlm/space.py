"""Size, enumeration, heuristic pruning and search of the decomposition space."""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterable, Iterator, Sequence

from .compress import HardwareSpec, a100_like, model_compression, model_cost_profile
from .config import DecompConfig, to_document, validate
from .models import ModelSpec


def space_size(n_layers: int, n_tensors: int, rank: int) -> int:
    """Number of valid uniform configurations, including the undecomposed model."""
    if min(n_layers, n_tensors, rank) < 1:
        raise ValueError("n_layers, n_tensors and rank must all be >= 1")
    return (2 ** n_layers - 1) * (2 ** n_tensors - 1) * rank + 1


@dataclass(frozen=True)
class SpaceDescriptor:
    n_layers: int
    n_tensors: int
    rank: int
    size: int

    @property
    def log2_size(self) -> float:
        return math.log2(self.size)

    @property
    def log2_size_fixed_rank(self) -> float:
        """log2 of the count with the rank term set to one value."""
        return math.log2(space_size(self.n_layers, self.n_tensors, 1))

    @property
    def big_o_exponent(self) -> int:
        # (2^L - 1)(2^T - 1) grows as 2^(L+T)
        return self.n_layers + self.n_tensors


def describe_space(spec: ModelSpec, rank: int | None = None) -> SpaceDescriptor:
    """Design-space size for ``spec``.

    By default the rank term is the smallest rank among the decomposable
    roles, i.e. the number of pruned-rank values every role admits.
    """
    if rank is None:
        rank = min(r.rank for r in spec.roles)
    return SpaceDescriptor(spec.n_layers, spec.n_tensors, rank,
                           space_size(spec.n_layers, spec.n_tensors, rank))


def _ids(mask: int) -> tuple[int, ...]:
    return tuple(i for i in range(mask.bit_length()) if mask >> i & 1)


def layers_include(ids: Iterable[int]) -> Callable[[DecompConfig], bool]:
    need = set(ids)
    return lambda cfg: need <= set(cfg.layers)


def layers_exclude(ids: Iterable[int]) -> Callable[[DecompConfig], bool]:
    banned = set(ids)
    return lambda cfg: not banned & set(cfg.layers)


def tensors_include(ids: Iterable[int]) -> Callable[[DecompConfig], bool]:
    need = set(ids)
    return lambda cfg: need <= set(cfg.tensors)


def enumerate_configs(spec: ModelSpec, uniform_rank: int | Sequence[int],
                      filters: Sequence[Callable[[DecompConfig], bool]] = ()
                      ) -> Iterator[DecompConfig]:
    """Stream homogeneous configurations, the undecomposed model first.

    Order: layer bitmask ascending, then tensor bitmask ascending, then rank.
    Every yielded config passes ``validate``; combinations whose rank exceeds
    a selected role's rank are skipped.
    """
    ranks = [uniform_rank] if isinstance(uniform_rank, int) else list(uniform_rank)
    if any(p < 1 for p in ranks):
        raise ValueError("pruned ranks must be positive")
    yield DecompConfig.empty()
    role_rank = [r.rank for r in spec.roles]
    for lmask in range(1, 2 ** spec.n_layers):
        layers = _ids(lmask)
        for tmask in range(1, 2 ** spec.n_tensors):
            tensors = _ids(tmask)
            cap = min(role_rank[k] for k in tensors)
            for p in ranks:
                if p > cap:
                    continue
                cfg = DecompConfig.uniform(layers, tensors, p)
                if all(f(cfg) for f in filters):
                    yield cfg


def count_configs(spec: ModelSpec, uniform_rank: int | Sequence[int] = 1,
                  filters: Sequence[Callable[[DecompConfig], bool]] = ()) -> int:
    ranks = [uniform_rank] if isinstance(uniform_rank, int) else list(uniform_rank)
    if not filters and max(ranks) <= min(r.rank for r in spec.roles):
        return space_size(spec.n_layers, spec.n_tensors, len(ranks))
    return sum(1 for _ in enumerate_configs(spec, ranks, filters))


# -- heuristic pruning -------------------------------------------------------

EARLY_LAYERS = 2
LATE_LAYERS = 3


def _spread(lo: int, hi: int, n: int) -> list[int] | None:
    """``n`` layers in ``[lo, hi]`` with the largest minimum gap, lowest start."""
    size = hi - lo + 1
    if n > size:
        return None
    if n == 1:
        return [lo]
    gap = (size - 1) // (n - 1)
    return [lo + i * gap for i in range(n)]


def heuristic_prune(spec: ModelSpec, target_reduction: float) -> DecompConfig:
    """Smallest PR-1, all-roles configuration reaching ``target_reduction``.

    Layers are spread as far apart as possible, avoiding the first two and
    the last three layers.  When there are not enough layers, the late-layer
    rule is dropped first and the early-layer rule after it.
    """
    all_roles = range(spec.n_tensors)
    per_layer = model_compression(
        spec, DecompConfig.uniform([0], all_roles, 1)).reduction_fraction
    max_reduction = per_layer * spec.n_layers
    if not 0 < target_reduction <= max_reduction + 1e-12:
        raise ValueError(f"target reduction {target_reduction:.4f} unreachable; "
                         f"PR=1 on every layer gives {max_reduction:.4f}")
    n = next(n for n in range(1, spec.n_layers + 1)
             if per_layer * n >= target_reduction - 1e-12)
    last = spec.n_layers - 1
    regions = [(EARLY_LAYERS, last - LATE_LAYERS), (EARLY_LAYERS, last), (0, last)]
    for lo, hi in regions:
        if lo > hi:
            continue
        layers = _spread(lo, hi, n)
        if layers is not None:
            return DecompConfig.uniform(layers, all_roles, 1)
    raise AssertionError("unreachable: the full layer range always fits n layers")


# -- objective-driven search -----------------------------------------------

@dataclass(frozen=True)
class ObjectiveOutcome:
    config: DecompConfig
    latency_s: float
    energy_j: float
    accuracy_proxy: float
    accuracy_drop: float
    feasible: bool

    @property
    def edp(self) -> float:
        return self.latency_s * self.energy_j


@dataclass(frozen=True)
class SearchResult:
    best: ObjectiveOutcome
    ranked: list[ObjectiveOutcome]

    @property
    def feasible(self) -> bool:
        return self.best.feasible


class ProviderError(RuntimeError):
    def __init__(self, cfg: DecompConfig, cause: BaseException):
        self.config = cfg
        super().__init__(f"provider failed on config layers={list(cfg.layers)} "
                         f"tensors={list(cfg.tensors)}: {cause}")


def _rank_key(o: ObjectiveOutcome):
    return (not o.feasible, o.edp, o.config.sort_key())


def search(candidates: Iterable[DecompConfig],
           cost_provider: Callable[[DecompConfig], tuple[float, float]],
           accuracy_provider: Callable[[DecompConfig], float],
           tau: float, baseline_accuracy: float | None = None,
           workers: int | None = None) -> SearchResult:
    """Minimize latency x energy subject to an accuracy drop below ``tau``.

    The drop is ``max(baseline - accuracy, 0)``, so configurations that
    improve accuracy are always feasible.  ``baseline_accuracy`` defaults to
    the provider's value for the undecomposed model.  If nothing is feasible
    the best infeasible outcome is returned and ``result.feasible`` is False.
    """
    cands = list(candidates)
    if not cands:
        raise ValueError("no candidate configurations")
    if baseline_accuracy is None:
        baseline_accuracy = accuracy_provider(DecompConfig.empty())

    def evaluate(cfg):
        try:
            latency, energy = cost_provider(cfg)
            acc = accuracy_provider(cfg)
        except Exception as exc:
            raise ProviderError(cfg, exc) from exc
        drop = max(baseline_accuracy - acc, 0.0)
        return ObjectiveOutcome(cfg, float(latency), float(energy), float(acc),
                                drop, drop < tau)

    if workers and workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            outcomes = list(pool.map(evaluate, cands))
    else:
        outcomes = [evaluate(c) for c in cands]
    ranked = sorted(outcomes, key=_rank_key)
    return SearchResult(ranked[0], ranked)


def roofline_cost_provider(spec: ModelSpec, hw: HardwareSpec | None = None, batch: int = 1,
                           seq_len: int = 128, precision_bytes: int = 2,
                           style: str = "factored"):
    hw = hw or a100_like()

    def provide(cfg: DecompConfig) -> tuple[float, float]:
        prof = model_cost_profile(spec, cfg, batch, seq_len, precision_bytes, hw, style)
        return prof.roofline_latency_s, prof.roofline_energy_j

    return provide


CSV_FIELDS = ["rank", "feasible", "edp", "latency_s", "energy_j", "accuracy_proxy",
              "accuracy_drop", "pruned_rank", "layers", "tensors", "parameter_reduction"]


def write_ranked_csv(result: SearchResult, spec: ModelSpec, fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(CSV_FIELDS)
    for i, o in enumerate(result.ranked, 1):
        doc = to_document(o.config, spec)
        red = model_compression(spec, o.config).reduction_fraction if validate(o.config, spec) else ""
        w.writerow([i, int(o.feasible), repr(o.edp), repr(o.latency_s), repr(o.energy_j),
                    repr(o.accuracy_proxy), repr(o.accuracy_drop), doc.get("pruned_rank", ""),
                    " ".join(map(str, doc["layers"])), " ".join(doc["tensors"]),
                    repr(red) if red != "" else ""])

