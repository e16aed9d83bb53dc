"""Tucker decomposition by higher-order orthogonal iteration (HOOI).

Factor matrices follow the ``r_i x n_i`` layout with orthonormal rows, so a
tensor is approximated by ``core x_1 U1 x_2 U2 x_3 U3`` where each product
lifts mode ``i`` from ``r_i`` to ``n_i``.

The in-loop error uses the identity ``||T - K||^2 = ||T||^2 - ||core||^2``
that holds for orthonormal factors and the projected core.  When that value
gets small enough for cancellation to matter it is recomputed from an
explicit reconstruction.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .svd import SvdConvergenceError, truncated_svd
from .tensor import as_tensor, frobenius_norm, mode_product, unfold

DEFAULT_TOL = 1e-6
DEFAULT_MAX_ITER = 50
# below this relative error the norm identity loses too many digits
_DIRECT_ERROR_BELOW = 1e-5


@dataclass(frozen=True)
class TuckerFactors:
    core: np.ndarray
    factors: tuple[np.ndarray, ...]
    original_shape: tuple[int, ...]

    def __post_init__(self):
        if self.core.ndim != len(self.factors) or len(self.factors) != len(self.original_shape):
            raise ValueError("core order, factor count and original shape disagree")
        for i, (u, n) in enumerate(zip(self.factors, self.original_shape)):
            if u.shape != (self.core.shape[i], n):
                raise ValueError(
                    f"factor {i} has shape {u.shape}, expected "
                    f"({self.core.shape[i]}, {n})")
            if not 1 <= u.shape[0] <= n:
                raise ValueError(f"rank {u.shape[0]} out of range 1..{n} on mode {i}")

    @property
    def ranks(self) -> tuple[int, ...]:
        return self.core.shape

    @property
    def n_params(self) -> int:
        return int(self.core.size + sum(u.size for u in self.factors))

    # order-2 views in the H x PR, PR x PR, PR x W layout
    @property
    def a(self) -> np.ndarray:
        self._require_matrix()
        return self.factors[0].T

    @property
    def b(self) -> np.ndarray:
        self._require_matrix()
        return self.core

    @property
    def c(self) -> np.ndarray:
        self._require_matrix()
        return self.factors[1]

    def _require_matrix(self):
        if len(self.factors) != 2:
            raise AttributeError("A/B/C views exist only for order-2 factorizations")


@dataclass
class HooiReport:
    iterations: int = 0
    relative_error: float = 0.0
    converged: bool = False
    error_history: list[float] = field(default_factory=list)


def reconstruct(f: TuckerFactors) -> np.ndarray:
    out = f.core
    for mode, u in enumerate(f.factors):
        out = mode_product(out, u, mode, transpose=True)
    return out


def relative_error(t: np.ndarray, f: TuckerFactors) -> float:
    """``||t - reconstruct(f)|| / ||t||``; defined as 0 when ``t`` is all zeros."""
    t = np.asarray(t, dtype=np.float64)
    if t.shape != tuple(f.original_shape):
        raise ValueError(f"shape mismatch: {t.shape} vs {f.original_shape}")
    tn = frobenius_norm(t)
    if tn == 0.0:
        return 0.0
    return frobenius_norm(t - reconstruct(f)) / tn


def _project_except(t: np.ndarray, factors: list, skip: int) -> np.ndarray:
    out = t
    for mode, u in enumerate(factors):
        if mode != skip:
            out = mode_product(out, u, mode)
    return out


def _leading_rows(m: np.ndarray, r: int, where: str) -> np.ndarray:
    try:
        return truncated_svd(m, r).left.T
    except SvdConvergenceError as exc:
        raise SvdConvergenceError(f"{where}: subspace iteration did not converge",
                                  exc.residual, exc.iterations) from exc


def _check_ranks(shape, ranks) -> tuple[int, ...]:
    ranks = tuple(int(r) for r in ranks)
    if len(ranks) != len(shape):
        raise ValueError(f"need {len(shape)} ranks, got {len(ranks)}")
    for i, (r, n) in enumerate(zip(ranks, shape)):
        if not 1 <= r <= n:
            raise ValueError(f"rank r{i + 1}={r} out of range 1..{n}")
    total = int(np.prod(ranks))
    for i, r in enumerate(ranks):
        # a mode-i unfolding of an r1 x ... core has at most prod(others) columns
        if r * r > total:
            raise ValueError(f"rank r{i + 1}={r} exceeds the product of the other ranks "
                             f"{ranks}; no Tucker core has that multilinear rank")
    return ranks


def uniform_ranks(shape: Sequence[int], pr: int) -> tuple[int, ...]:
    """Expand a single pruned rank to every mode, clipped to the mode sizes."""
    if pr < 1:
        raise ValueError(f"pruned rank must be positive, got {pr}")
    return tuple(min(int(pr), int(n)) for n in shape)


def hooi(t, ranks: Sequence[int], tol: float = DEFAULT_TOL,
         max_iter: int = DEFAULT_MAX_ITER, init: str = "hosvd",
         seed: int | None = None) -> tuple[TuckerFactors, HooiReport]:
    """Tucker factors of an order-2 or order-3 tensor by HOOI.

    ``init="hosvd"`` seeds every factor from the truncated SVD of its
    unfolding; ``init="random"`` draws seeded random orthonormal factors.
    The loop stops once the relative error is at most ``tol`` or after
    ``max_iter`` sweeps.
    """
    t = as_tensor(t)
    if t.ndim not in (2, 3):
        raise ValueError(f"HOOI supports order 2 or 3, got order {t.ndim}")
    ranks = _check_ranks(t.shape, ranks)
    if tol < 0:
        raise ValueError("tolerance must be non-negative")
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")

    d = t.ndim
    tnorm = frobenius_norm(t)
    if tnorm == 0.0:
        factors = tuple(np.eye(r, n) for r, n in zip(ranks, t.shape))
        report = HooiReport(0, 0.0, True, [0.0])
        return TuckerFactors(np.zeros(ranks), factors, t.shape), report

    if init == "hosvd":
        factors = [_leading_rows(unfold(t, i), ranks[i], f"init mode {i}")
                   for i in range(d)]
    elif init == "random":
        rng = np.random.default_rng(seed)
        factors = [np.linalg.qr(rng.standard_normal((n, r)))[0].T
                   for r, n in zip(ranks, t.shape)]
    else:
        raise ValueError(f"unknown init {init!r}")

    report = HooiReport()
    err = np.inf
    while report.iterations < max_iter and err > tol:
        for i in range(d):
            partial = _project_except(t, factors, i)
            factors[i] = _leading_rows(unfold(partial, i), ranks[i],
                                       f"iteration {report.iterations + 1}, mode {i}")
        core = mode_product(partial, factors[d - 1], d - 1)
        report.iterations += 1
        gap = max(tnorm ** 2 - frobenius_norm(core) ** 2, 0.0)
        err = np.sqrt(gap) / tnorm
        if err < _DIRECT_ERROR_BELOW:
            err = relative_error(t, TuckerFactors(core, tuple(factors), t.shape))
        report.error_history.append(float(err))

    core = _project_except(t, factors, -1)
    report.relative_error = report.error_history[-1]
    report.converged = report.relative_error <= tol
    return TuckerFactors(core, tuple(factors), t.shape), report


def tucker2d(w, pr: int) -> TuckerFactors:
    """Order-2 Tucker factors of an ``H x W`` weight at pruned rank ``pr``.

    The result stores ``A = U1.T`` (H x PR), core ``B`` (PR x PR) and
    ``C = U2`` (PR x W); ``A @ B @ C`` is the rank-``pr`` truncated SVD
    approximation of ``w``.
    """
    w = as_tensor(w)
    if w.ndim != 2:
        raise ValueError(f"expected a matrix, got order {w.ndim}")
    h, width = w.shape
    if not 1 <= pr <= min(h, width):
        raise ValueError(f"pruned rank {pr} out of range 1..{min(h, width)}")
    res = truncated_svd(w, pr)
    u1, u2 = res.left.T, res.right.T
    core = u1 @ w @ u2.T
    return TuckerFactors(core, (u1, u2), w.shape)
