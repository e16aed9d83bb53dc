# # Decomposing a checkpoint and measuring output drift
#
# A toy llama-style model is small enough to factor for real.  We save the
# result in the binary checkpoint format, load it back and compare logits.

import tempfile
from pathlib import Path

from tuckerlm import (DecompConfig, apply_decomposition, get_spec, load_checkpoint,
                      logit_divergence, proxy_accuracy, random_checkpoint, save_checkpoint)

toy = get_spec("toy_llama")
ckpt = random_checkpoint(toy, seed=42)
print("toy params:", ckpt.n_params)

with tempfile.TemporaryDirectory() as tmp:
    dec = apply_decomposition(ckpt, DecompConfig.uniform([1, 3], range(7), 1), toy)
    path = Path(tmp) / "toy_pr1.lrdk"
    save_checkpoint(dec, path)
    back = load_checkpoint(path, toy)
    print(f"decomposed params: {back.n_params} ({path.stat().st_size} bytes on disk)")
    print("record survives the round trip:", back.decomposition == dec.decomposition)

# Factoring more layers pushes the outputs further from the original.
# Decomposition is applied incrementally, so each step reuses the last.

cur = ckpt
for extra in ([1], [3], [0, 2]):
    cur = apply_decomposition(cur, DecompConfig.uniform(extra, range(7), 1), toy)
    r = logit_divergence(ckpt, cur, n_inputs=8, seed=0, spec=toy)
    print(f"layers {list(cur.decomposition.layers)}: KL {r.mean_kl:.5f}  "
          f"cosine {r.mean_cosine_similarity:.4f}  proxy accuracy {proxy_accuracy(r, toy.vocab):.4f}")
