# # Rank-pruning a single weight matrix
#
# An H x W weight becomes A (H x PR), B (PR x PR) and C (PR x W).  The
# factored form stores PR*(H + W + PR) numbers, so it only pays off below a
# closed-form rank bound.

import numpy as np

from tuckerlm import compression_stats, pr_upper_bound, reconstruct, tucker2d

h, w = 4096, 11008
print(f"{h} x {w}: compression needs PR < {pr_upper_bound(h, w)}")
for pr in (1, 64, 512, 2048, 3000):
    s = compression_stats(h, w, pr)
    print(f"  PR={pr:5d}  params {s.params_after:>11,d}  ratio {s.compression_ratio:8.2f}")

# A smaller matrix we can actually decompose.  The residual equals the norm
# of the discarded singular values, as the Eckart-Young bound promises.

rng = np.random.default_rng(1)
m = rng.standard_normal((64, 172)) * 0.02
sv = np.linalg.svd(m, compute_uv=False)
for pr in (1, 8, 32, 64):
    f = tucker2d(m, pr)
    resid = np.linalg.norm(m - reconstruct(f))
    print(f"PR={pr:2d}  residual {resid:.6f}  tail norm {np.linalg.norm(sv[pr:]):.6f}  "
          f"A{f.a.shape} B{f.b.shape} C{f.c.shape}")

# Inference can use the factors directly: y = ((x A) B) C.

x = rng.standard_normal((3, 64))
f = tucker2d(m, 8)
print("factored vs reconstructed:", np.abs((x @ f.a) @ f.b @ f.c - x @ reconstruct(f)).max())
