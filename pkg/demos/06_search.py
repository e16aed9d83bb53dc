# # Searching for the cheapest configuration within an accuracy budget
#
# Each candidate gets a roofline latency and energy and an accuracy from the
# toy model's drift.  The winner has the smallest energy-delay product among
# candidates whose accuracy drop stays under tau.

from tuckerlm import enumerate_configs, get_spec, random_checkpoint, search
from tuckerlm.space import roofline_cost_provider
from tuckerlm.toy import divergence_accuracy_provider

toy = get_spec("toy_llama")
ckpt = random_checkpoint(toy, seed=0)
cands = [c for c in enumerate_configs(toy, [1, 16]) if len(c.layers) == 1 and len(c.tensors) <= 2]
print("candidates:", len(cands))

result = search(cands, roofline_cost_provider(toy), divergence_accuracy_provider(ckpt, n_inputs=4, spec=toy),
                tau=0.002)
print("feasible:", result.feasible)
for o in result.ranked[:5]:
    print(f"  layers {list(o.config.layers)} tensors {list(o.config.tensors)} rank {o.config.uniform_rank}"
          f"  edp {o.edp:.3e}  drop {o.accuracy_drop:.5f}  {'ok' if o.feasible else 'over budget'}")
