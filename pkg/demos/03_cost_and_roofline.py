# # Parameter, MAC and roofline accounting
#
# Whole-model counts for the built-in specs, then what rank-1 pruning of a
# few layers does to the operational intensity of llama2_7b.

from tuckerlm import (a100_like, ladder_config, get_spec, model_compression,
                      model_cost_profile)

for name in ("bert_base", "llama2_7b"):
    p = model_cost_profile(get_spec(name), None, 1, 128, 2)  # batch, seq, bytes/param
    print(f"{name:10s} {p.model_bytes / 1e9:7.3f} GB  {p.macs / 1e9:8.2f} GMACs  "
          f"ratio {p.macs / p.model_bytes:6.2f}")

# Pruning every weight of five layers at rank 1 removes about 15% of the
# parameters.  Reconstructing dense weights keeps MACs almost flat, so the
# operational intensity rises; running the factors directly cuts MACs too.

llama = get_spec("llama2_7b")
cfg = ladder_config(15, llama)
print("\nlayers (0-based):", list(cfg.layers))
print(f"reduction: {100 * model_compression(llama, cfg).reduction_fraction:.2f}%")
base = model_cost_profile(llama, None, 1, 128, 2)
for style in ("reconstruct", "factored"):
    d = model_cost_profile(llama, cfg, 1, 128, 2, style=style)
    print(f"{style:11s} ops {100 * (d.macs / base.macs - 1):+7.3f}%  "
          f"OI {base.oi:.2f} -> {d.oi:.2f}")

# On an A100-like roofline the 7B decode is memory-bound, so latency and
# energy follow the model size down the reduction ladder.

hw = a100_like()
print("\nreduction  latency_ms  energy_J  bound")
for pct in (0, 15, 33, 60, 96):
    c = ladder_config(pct, llama) if pct else None
    p = model_cost_profile(llama, c, 1, 128, 2, hw, "factored")
    print(f"{pct:8d}%  {1e3 * p.roofline_latency_s:10.3f}  {p.roofline_energy_j:8.3f}  {p.bound}")
