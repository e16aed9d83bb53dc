# # Unfolding, mode products and HOOI
#
# A third-order tensor can be flattened along any of its modes.  Folding
# undoes it, and the mode-n product multiplies a matrix into one mode.

import numpy as np

from tuckerlm import fold, hooi, mode_product, reconstruct, relative_error, unfold

rng = np.random.default_rng(0)
t = rng.standard_normal((4, 5, 6))

for mode in range(3):
    m = unfold(t, mode)
    print(f"mode {mode} unfolding: {m.shape}, round trip exact: "
          f"{np.array_equal(fold(m, mode, t.shape), t)}")

u = rng.standard_normal((2, 5))
print("mode-1 product shape:", mode_product(t, u, 1).shape)

# Build a tensor with multilinear rank (2, 3, 2) and let HOOI find it.

core = rng.standard_normal((2, 3, 2))
x = core
for mode, n in enumerate((8, 9, 10)):
    q = np.linalg.qr(rng.standard_normal((n, core.shape[mode])))[0]
    x = mode_product(x, q, mode)

factors, report = hooi(x, (2, 3, 2))
print(f"\nexact recovery: error {report.relative_error:.2e} after {report.iterations} sweep(s)")

# On noise the error history falls monotonically until it stalls.

noise = rng.standard_normal((8, 8, 8))
factors, report = hooi(noise, (3, 3, 3), tol=0.0, max_iter=10)
print("error history:", " ".join(f"{e:.4f}" for e in report.error_history))
print("core shape:", factors.core.shape, "stored params:", factors.n_params,
      "of", noise.size)
direct = np.linalg.norm(noise - reconstruct(factors)) / np.linalg.norm(noise)
print(f"reported {report.relative_error:.12f}  direct {direct:.12f}  "
      f"helper {relative_error(noise, factors):.12f}")
