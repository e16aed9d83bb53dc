import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tuckerlm.compress import model_compression
from tuckerlm.config import (LADDER_LAYER_SETS, DecompConfig, InvalidConfigError,
                             ladder_config, dumps, from_document, loads, require_valid,
                             to_document, validate)
from tuckerlm.models import get_spec

from .helpers import tiny_spec

TOY = get_spec("toy_llama")


def rules(cfg, spec=TOY):
    return {v.rule for v in validate(cfg, spec).violations}


def test_empty_config_is_valid():
    verdict = validate(DecompConfig.empty(), TOY)
    assert verdict.valid and bool(verdict) and verdict.violations == []


def test_zero_rank_is_invalid():
    cfg = DecompConfig.uniform([0], [0], 0)
    assert "rank-positive" in rules(cfg)


def test_triple_outside_decomposed_layers_is_invalid():
    cfg = DecompConfig(frozenset({(0, 0, 1), (2, 0, 1)}), (0,), (0,))
    assert "coverage-membership" in rules(cfg)


def test_rank_above_tensor_rank():
    assert "rank-bound" in rules(DecompConfig.uniform([0], [0], 65))
    assert validate(DecompConfig.uniform([0], [0], 64), TOY).valid


def test_out_of_range_ids():
    assert "layer-range" in rules(DecompConfig.uniform([4], [0], 1))
    assert "tensor-range" in rules(DecompConfig.uniform([0], [7], 1))


def test_duplicate_ids():
    cfg = DecompConfig(frozenset({(0, 0, 1)}), (0, 0), (0,))
    assert "duplicate-id" in rules(cfg)


def test_partial_empty():
    assert "partial-empty" in rules(DecompConfig(frozenset(), (0,), ()))


def test_coverage_unique_and_complete():
    cfg = DecompConfig(frozenset({(0, 0, 1), (0, 0, 2)}), (0,), (0, 1))
    assert {"coverage-unique", "coverage-complete"} <= rules(cfg)


def test_require_valid_message_names_rule():
    with pytest.raises(InvalidConfigError, match="rank-positive") as info:
        require_valid(DecompConfig.uniform([0], [0], 0), TOY)
    assert info.value.violations[0].rule == "rank-positive"


@settings(max_examples=80, deadline=None)
@given(st.data())
def test_mutations_break_validity(data):
    spec = tiny_spec(4, 3, rank=3)
    layers = data.draw(st.sets(st.integers(0, 3), min_size=1))
    tensors = data.draw(st.sets(st.integers(0, 2), min_size=1))
    pr = data.draw(st.integers(1, 3))
    cfg = DecompConfig.uniform(layers, tensors, pr)
    assert validate(cfg, spec).valid
    triples = set(cfg.pruned_ranks)
    victim = data.draw(st.sampled_from(sorted(triples)))
    l, k, p = victim
    mutation = data.draw(st.sampled_from(["drop", "zero", "big", "stray-layer", "dup"]))
    if mutation == "drop":
        triples.discard(victim)
    elif mutation == "zero":
        triples = (triples - {victim}) | {(l, k, 0)}
    elif mutation == "big":
        triples = (triples - {victim}) | {(l, k, 4)}
    elif mutation == "stray-layer":
        outside = sorted(set(range(4)) - set(layers)) or [9]
        triples.add((outside[0], k, p))
    else:
        triples.add((l, k, p % 3 + 1))
    bad = DecompConfig(frozenset(triples), cfg.layers, cfg.tensors)
    assert not validate(bad, spec).valid


def test_document_round_trip_and_one_based_layers():
    cfg = DecompConfig.uniform([0, 3], [0, 6], 3)
    doc = to_document(cfg, TOY)
    assert doc == {"pruned_rank": 3, "layers": [1, 4], "tensors": ["W_Q", "W_D"]}
    assert from_document(doc, TOY) == cfg
    big = DecompConfig.uniform([2, 8, 31], [0, 6], 3)
    assert loads(dumps(big, get_spec("llama2_7b")), get_spec("llama2_7b")) == big


def test_document_all_tensors_and_empty():
    doc = {"pruned_rank": 1, "layers": [1], "tensors": "all"}
    assert from_document(doc, TOY).tensors == tuple(range(7))
    assert from_document({"layers": [], "tensors": []}, TOY).is_empty
    assert from_document(to_document(DecompConfig.empty(), TOY), TOY).is_empty
    with pytest.raises(ValueError):
        from_document({"layers": [1], "tensors": "all"}, TOY)
    with pytest.raises(KeyError):
        from_document({"pruned_rank": 1, "layers": [1], "tensors": ["W_X"]}, TOY)


def test_heterogeneous_document_round_trip():
    cfg = DecompConfig(frozenset({(0, 0, 1), (0, 1, 2)}), (0,), (0, 1))
    doc = json.loads(json.dumps(to_document(cfg, TOY)))
    assert "pruned_ranks" in doc
    assert from_document(doc, TOY) == cfg


def test_ladder_sets_are_valid_and_sized():
    spec = get_spec("llama2_7b")
    for pct, layers in LADDER_LAYER_SETS.items():
        cfg = ladder_config(pct, spec)
        assert cfg.layers == tuple(l - 1 for l in layers)
        red = model_compression(spec, cfg).reduction_fraction
        assert abs(100 * red - pct) <= 1.0
