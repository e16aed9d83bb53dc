"""Truncated SVD used as the HOOI kernel.

Two paths:

* one-sided (Hestenes) Jacobi over the columns of the narrower side, for
  matrices whose smaller dimension is at most ``JACOBI_MAX_DIM``.  Column
  pairs are rotated a whole round-robin round at a time, so each round is a
  handful of vectorized numpy operations.
* block subspace iteration with QR re-orthonormalization and a Rayleigh-Ritz
  step for larger matrices, where only the leading ``k`` triplets are wanted.

Every returned singular vector pair is sign-normalized so that the largest
magnitude entry of the left vector is positive.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

JACOBI_MAX_DIM = 512
OVERSAMPLE = 8
MAX_SUBSPACE_ITERS = 300
SUBSPACE_TOL = 1e-10
MAX_JACOBI_SWEEPS = 60
MIN_BLOCK = 8
N_BLOCKS = 8
BLOCK_TOL = 1e-12


class SvdConvergenceError(ArithmeticError):
    """The iterative SVD did not converge within its iteration cap."""

    def __init__(self, message: str, residual: float, iterations: int):
        super().__init__(f"{message} (achieved residual {residual:.3e} "
                         f"after {iterations} iterations)")
        self.residual = residual
        self.iterations = iterations


@dataclass(frozen=True)
class SvdResult:
    left: np.ndarray            # m x k, orthonormal columns
    singular_values: np.ndarray  # k, non-increasing
    right: np.ndarray           # n x k, orthonormal columns

    @property
    def rank(self) -> int:
        return len(self.singular_values)

    def reconstruct(self) -> np.ndarray:
        return (self.left * self.singular_values) @ self.right.T


def _round_robin(n: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Disjoint column pairings covering every pair once (circle method)."""
    players = list(range(n)) + ([-1] if n % 2 else [])
    size = len(players)
    rounds = []
    for _ in range(size - 1):
        p, q = [], []
        for i in range(size // 2):
            a, b = players[i], players[size - 1 - i]
            if a >= 0 and b >= 0:
                p.append(min(a, b))
                q.append(max(a, b))
        rounds.append((np.array(p, dtype=np.intp), np.array(q, dtype=np.intp)))
        players = [players[0]] + [players[-1]] + players[1:-1]
    return rounds


def _block_pairs(n: int, block: int):
    """Column blocks of near-equal size, paired by the circle method."""
    nb = -(-n // block)
    nb += nb % 2
    edges = np.linspace(0, n, nb + 1).round().astype(int)
    blocks = [np.arange(edges[i], edges[i + 1]) for i in range(nb)]
    rounds = []
    for p, q in _round_robin(nb):
        rounds.append([(blocks[i], blocks[j]) for i, j in zip(p, q)])
    return rounds, 2 * max(len(b) for b in blocks)


def _block_sweeps(g: np.ndarray, v: np.ndarray, block: int) -> None:
    """Coarse phase: diagonalize the Gram matrix of each block pair exactly.

    Pairs are padded to a common width with a negative diagonal so their
    eigenvectors stay apart from the real ones, then solved in one batched
    ``eigh`` per round.
    """
    rounds, width = _block_pairs(g.shape[1], block)
    for _ in range(MAX_JACOBI_SWEEPS):
        worst = 0.0
        for pairs in rounds:
            idx = [np.concatenate(pq) for pq in pairs]
            gram = np.zeros((len(idx), width, width))
            for i, cols in enumerate(idx):
                x = g[:, cols]
                sub = x.T @ x
                w = len(cols)
                gram[i, :w, :w] = sub
                d = np.sqrt(np.diag(sub))
                off = np.abs(sub) - np.diag(np.diag(sub))
                with np.errstate(divide="ignore", invalid="ignore"):
                    c = np.where(np.outer(d, d) > 0, off / np.outer(d, d), 0.0)
                worst = max(worst, float(c.max()))
                pad = -(np.trace(sub) + 1.0)
                gram[i, range(w, width), range(w, width)] = pad
            _, vecs = np.linalg.eigh(gram)
            for i, cols in enumerate(idx):
                w = len(cols)
                rot = vecs[i, :w, width - w:]
                g[:, cols] = g[:, cols] @ rot
                v[:, cols] = v[:, cols] @ rot
        if worst <= BLOCK_TOL:
            return


def _max_cosine(g: np.ndarray) -> float:
    """Largest |cos| between two distinct nonzero columns of ``g``."""
    gram = g.T @ g
    d = np.sqrt(np.diag(gram))
    outer = np.outer(d, d)
    np.fill_diagonal(gram, 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        c = np.where(outer > 0, np.abs(gram) / outer, 0.0)
    return float(c.max()) if c.size else 0.0


def _jacobi_columns(a: np.ndarray):
    """Orthogonalize the columns of ``a`` (rows >= cols) by plane rotations.

    Returns ``(g, v)`` with ``a @ v == g`` and the columns of ``g`` mutually
    orthogonal; column norms of ``g`` are the singular values.  Wide problems
    first go through block sweeps, which leave only a few cheap scalar
    sweeps to reach full accuracy.
    """
    g = np.array(a, dtype=np.float64, order="F", copy=True)
    n = g.shape[1]
    v = np.eye(n)
    if n < 2:
        return g, v
    block = max(MIN_BLOCK, -(-n // N_BLOCKS))
    if n > 2 * block:
        _block_sweeps(g, v, block)
    # stop once every column pair is orthogonal to working precision
    tol = g.shape[0] * np.finfo(np.float64).eps
    rounds = _round_robin(n)
    for _ in range(MAX_JACOBI_SWEEPS):
        if _max_cosine(g) <= tol:
            return g, v
        worst = 0.0
        for p, q in rounds:
            gp, gq = g[:, p], g[:, q]
            alpha = np.einsum("ij,ij->j", gp, gp)
            beta = np.einsum("ij,ij->j", gq, gq)
            gamma = np.einsum("ij,ij->j", gp, gq)
            denom = np.sqrt(alpha * beta)
            with np.errstate(divide="ignore", invalid="ignore"):
                cos = np.where(denom > 0, np.abs(gamma) / denom, 0.0)
            active = cos > tol
            if not active.any():
                continue
            worst = max(worst, float(cos.max()))
            p, q = p[active], q[active]
            alpha, beta, gamma = alpha[active], beta[active], gamma[active]
            zeta = (beta - alpha) / (2.0 * gamma)
            t = np.where(zeta >= 0, 1.0, -1.0) / (np.abs(zeta) + np.sqrt(1.0 + zeta * zeta))
            c = 1.0 / np.sqrt(1.0 + t * t)
            s = c * t
            gp, gq = g[:, p], g[:, q]
            g[:, p] = c * gp - s * gq
            g[:, q] = s * gp + c * gq
            vp, vq = v[:, p], v[:, q]
            v[:, p] = c * vp - s * vq
            v[:, q] = s * vp + c * vq
        if worst <= tol:
            return g, v
    return g, v


def _complete_basis(u: np.ndarray, good: np.ndarray) -> np.ndarray:
    """Replace columns of ``u`` not flagged ``good`` by an orthonormal completion."""
    if good.all():
        return u
    m = u.shape[0]
    keep = u[:, good]
    # Gram-Schmidt of standard basis vectors against the kept columns
    fill = []
    basis = [keep[:, i] for i in range(keep.shape[1])]
    for e in range(m):
        if len(fill) == int((~good).sum()):
            break
        x = np.zeros(m)
        x[e] = 1.0
        for _ in range(2):
            for b in basis:
                x -= (b @ x) * b
        nrm = np.linalg.norm(x)
        if nrm > 1e-8:
            x /= nrm
            basis.append(x)
            fill.append(x)
    out = u.copy()
    out[:, ~good] = np.column_stack(fill)
    return out


def _jacobi_svd(a: np.ndarray):
    """Full thin SVD ``a = u @ diag(s) @ v.T`` via one-sided Jacobi."""
    m, n = a.shape
    flipped = m < n
    work = a.T if flipped else a
    g, v = _jacobi_columns(work)
    s = np.linalg.norm(g, axis=0)
    order = np.argsort(-s, kind="stable")
    s, g, v = s[order], g[:, order], v[:, order]
    tiny = s.max() * max(work.shape) * np.finfo(float).eps if s.size else 0.0
    good = s > tiny
    u = np.zeros_like(g)
    u[:, good] = g[:, good] / s[good]
    u = _complete_basis(u, good)
    s = np.where(good, s, 0.0)
    if flipped:
        return v, s, u
    return u, s, v


def _sign_normalize(left: np.ndarray, right: np.ndarray):
    idx = np.argmax(np.abs(left), axis=0)
    signs = np.sign(left[idx, np.arange(left.shape[1])])
    signs[signs == 0] = 1.0
    return left * signs, right * signs


def _orth(x: np.ndarray) -> np.ndarray:
    q, _ = np.linalg.qr(x)
    return q


def _subspace_svd(a: np.ndarray, k: int):
    m, n = a.shape
    p = min(k + OVERSAMPLE, m, n)
    rng = np.random.default_rng(0)
    q = _orth(a @ rng.standard_normal((n, p)))
    prev = None
    angle = np.inf
    for it in range(1, MAX_SUBSPACE_ITERS + 1):
        z = _orth(a.T @ q)
        q = _orth(a @ z)
        ub, s, vb = _jacobi_svd(q.T @ a)
        uk = q @ ub[:, :k]
        if prev is not None:
            # sin of the largest principal angle between successive leading subspaces
            resid = prev - uk @ (uk.T @ prev)
            angle = float(np.linalg.norm(resid, 2))
            if angle < SUBSPACE_TOL:
                return uk, s[:k], vb[:, :k]
        prev = uk
    raise SvdConvergenceError("subspace iteration did not converge", angle,
                              MAX_SUBSPACE_ITERS)


def truncated_svd(m: np.ndarray, k: int, method: str = "auto") -> SvdResult:
    """The ``k`` dominant singular triplets of matrix ``m``.

    ``method`` is ``"jacobi"``, ``"subspace"`` or ``"auto"`` (Jacobi when the
    smaller dimension is at most 512).  Raises :class:`SvdConvergenceError`
    if subspace iteration hits its iteration cap.
    """
    a = np.asarray(m, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError(f"expected a matrix, got shape {a.shape}")
    small = min(a.shape)
    if not 1 <= k <= small:
        raise ValueError(f"rank k={k} out of range 1..{small}")
    if method == "auto":
        method = "jacobi" if small <= JACOBI_MAX_DIM else "subspace"
    if method == "jacobi":
        u, s, v = _jacobi_svd(a)
        u, s, v = u[:, :k], s[:k], v[:, :k]
    elif method == "subspace":
        u, s, v = _subspace_svd(a, k)
    else:
        raise ValueError(f"unknown SVD method {method!r}")
    u, v = _sign_normalize(u, v)
    return SvdResult(np.ascontiguousarray(u), np.ascontiguousarray(s),
                     np.ascontiguousarray(v))
