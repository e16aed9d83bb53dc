# # How many configurations are there, and which one to pick?
#
# A configuration chooses a set of layers, a set of weight roles and a
# pruned rank.  The count explodes with depth.

from tuckerlm import describe_space, enumerate_configs, get_spec, heuristic_prune, space_size

print("2 layers, 2 roles, rank 3:", space_size(2, 2, 3))
for name in ("bert_base", "bert_large", "llama2_7b", "llama2_70b"):
    d = describe_space(get_spec(name))
    print(f"{name:11s} log2 size (single rank) {d.log2_size_fixed_rank:6.2f}   "
          f"O(2^{d.big_o_exponent})")

# Small spaces can be listed outright.  The empty configuration comes first.

toy = get_spec("toy_llama")
for cfg in list(enumerate_configs(toy, 1))[:5]:
    print(" ", "empty" if cfg.is_empty else f"layers {list(cfg.layers)} tensors {list(cfg.tensors)}")

# The spread-out heuristic picks the fewest rank-1 layers that hit a target
# reduction and spaces them evenly through the stack.

llama = get_spec("llama2_7b")
for target in (0.06, 0.15, 0.33):
    cfg = heuristic_prune(llama, target)
    print(f"target {target:.0%}: layers (1-based) {[l + 1 for l in cfg.layers]}")
