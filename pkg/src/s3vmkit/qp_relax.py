"""QP relaxation over soft labels: objectives, dual bound, and a local solver.

The relaxed objective is concave (negative-definite quadratic), so its global
minimum over the box/sum polytope sits at a vertex; the solver here is a
multi-restart projected-gradient local method and small instances are checked
against vertex enumeration.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .kernels import KernelBlocks


class BoxViolationError(ValueError):
    """A dual point lies outside its box constraints (invalid test point)."""


@dataclass(frozen=True)
class S3vmConfig:
    """Loss weights, balancing ratio and solver knobs."""

    C: float
    C_star: float
    r: float
    tol: float = 1e-8
    max_iters: int = 500
    restarts: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.C <= 0:
            raise ValueError("C must be positive")
        if self.C_star < 0:
            raise ValueError("C_star must be nonnegative")
        if not 0.0 < self.r < 1.0:
            raise ValueError("r must lie strictly between 0 and 1")


@dataclass(frozen=True)
class SoftLabels:
    """Per-unlabeled-sample probability of the positive class."""

    p: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.p, dtype=np.float64)
        if p.ndim != 1:
            raise ValueError("p must be a vector")
        if p.size and (p.min() < -1e-9 or p.max() > 1 + 1e-9):
            raise ValueError("soft labels must lie in [0, 1]")
        object.__setattr__(self, "p", p)


@dataclass(frozen=True)
class DualPoint:
    """Multiplier vectors for the labeled and the two unlabeled loss constraints."""

    alpha: np.ndarray
    beta: np.ndarray
    gamma_: np.ndarray


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def positive_count(r: float, n_unlabeled: int) -> int:
    """Number of unlabeled samples assigned to the positive class."""
    return round_half_up(r * n_unlabeled)


def _pvec(P) -> np.ndarray:
    if isinstance(P, SoftLabels):
        return P.p
    return np.asarray(P, dtype=np.float64)


def _check_dims(p: np.ndarray, K: KernelBlocks, Y: np.ndarray) -> None:
    if len(p) != K.n_unlabeled:
        raise ValueError(f"P has length {len(p)}, expected {K.n_unlabeled}")
    if len(Y) != K.n_labeled:
        raise ValueError(f"Y has length {len(Y)}, expected {K.n_labeled}")


def qp_objective(P, K: KernelBlocks, cfg: S3vmConfig, Y) -> float:
    """Relaxed objective 0.5*C*^2 (1-P)'K_uu P + C*C_star Y'K_lu (1-P)."""
    p = _pvec(P)
    Y = np.asarray(Y, dtype=np.float64)
    _check_dims(p, K, Y)
    one_minus = 1.0 - p
    quad = 0.5 * cfg.C_star**2 * float(one_minus @ (K.K_uu @ p))
    lin = cfg.C * cfg.C_star * float(Y @ (K.K_lu @ one_minus))
    return quad + lin


def qp_objective_standard(P, K: KernelBlocks, cfg: S3vmConfig, Y) -> float:
    """Same objective in standard quadratic form; differs by the value at P=0."""
    p = _pvec(P)
    Y = np.asarray(Y, dtype=np.float64)
    _check_dims(p, K, Y)
    quad = -0.5 * cfg.C_star**2 * float(p @ (K.K_uu @ p))
    coeff = 0.5 * cfg.C_star**2 * K.K_uu.sum(axis=0) - cfg.C * cfg.C_star * (Y @ K.K_lu)
    return quad + float(coeff @ p)


def decompose_objective(P, K: KernelBlocks, cfg: S3vmConfig, Y):
    """Split the objective into diagnostic parts.

    Returns (q_diag, q_pair, q_pos, q_neg): the diagonal term that pushes
    each p_j toward 0 or 1, the pairwise coupling term that makes similar
    unlabeled samples share a label, and the attraction terms toward the
    positively and negatively labeled samples.  q_diag + q_pair equals the
    quadratic part and q_pos + q_neg the labeled part of qp_objective.
    """
    p = _pvec(P)
    Y = np.asarray(Y, dtype=np.float64)
    _check_dims(p, K, Y)
    cs2 = 0.5 * cfg.C_star**2
    diag = np.diag(K.K_uu)
    q_diag = cs2 * float(diag @ (p * (1.0 - p)))

    Z = p[:, None] + p[None, :] - 2.0 * np.outer(p, p)
    full = float((K.K_uu * Z).sum())
    diag_part = float(diag @ (2.0 * p * (1.0 - p)))
    q_pair = cs2 * 0.5 * (full - diag_part)

    cc = cfg.C * cfg.C_star
    pos = Y > 0
    one_minus = 1.0 - p
    q_pos = cc * float(K.K_lu[pos].sum(axis=0) @ one_minus)
    q_neg = -cc * float(K.K_lu[~pos].sum(axis=0) @ one_minus)
    return q_diag, q_pair, q_pos, q_neg


def _check_box(dp: DualPoint, p: np.ndarray, cfg: S3vmConfig) -> None:
    tol = 1e-9
    if dp.alpha.min(initial=0.0) < -tol or dp.alpha.max(initial=0.0) > cfg.C + tol:
        raise BoxViolationError("alpha outside [0, C]")
    hi_g = cfg.C_star * p
    hi_b = cfg.C_star * (1.0 - p)
    if dp.gamma_.min(initial=0.0) < -tol or np.any(dp.gamma_ > hi_g + tol):
        raise BoxViolationError("gamma outside [0, C_star * P]")
    if dp.beta.min(initial=0.0) < -tol or np.any(dp.beta > hi_b + tol):
        raise BoxViolationError("beta outside [0, C_star * (1 - P)]")


def dual_objective(dp: DualPoint, P, K: KernelBlocks, cfg: S3vmConfig, Y) -> float:
    """Value of the dual function at a feasible multiplier point."""
    p = _pvec(P)
    Y = np.asarray(Y, dtype=np.float64)
    _check_dims(p, K, Y)
    _check_box(dp, p, cfg)
    ay = dp.alpha * Y
    gb = dp.gamma_ - dp.beta
    val = float(dp.alpha.sum() + dp.gamma_.sum() + dp.beta.sum())
    val -= 0.5 * float(ay @ (K.K_ll @ ay))
    val -= 0.5 * float(gb @ (K.K_uu @ gb))
    val -= float(ay @ (K.K_lu @ gb))
    return val


def dual_objective_batch(alphas, betas, gammas, P, K: KernelBlocks,
                         cfg: S3vmConfig, Y) -> np.ndarray:
    """dual_objective for many points at once (rows of the multiplier arrays)."""
    p = _pvec(P)
    Y = np.asarray(Y, dtype=np.float64)
    _check_dims(p, K, Y)
    ay = alphas * Y[None, :]
    gb = gammas - betas
    vals = alphas.sum(axis=1) + gammas.sum(axis=1) + betas.sum(axis=1)
    vals -= 0.5 * np.einsum("ni,ij,nj->n", ay, K.K_ll, ay)
    vals -= 0.5 * np.einsum("ni,ij,nj->n", gb, K.K_uu, gb)
    vals -= np.einsum("ni,ij,nj->n", ay, K.K_lu, gb)
    return vals


def random_feasible_dual(rng: np.random.Generator, P, cfg: S3vmConfig,
                         n_labeled: int) -> DualPoint:
    """Uniform sample from the box constraints paired with P."""
    p = _pvec(P)
    return DualPoint(
        alpha=rng.uniform(0.0, cfg.C, n_labeled),
        beta=rng.uniform(0.0, 1.0, len(p)) * cfg.C_star * (1.0 - p),
        gamma_=rng.uniform(0.0, 1.0, len(p)) * cfg.C_star * p,
    )


def dual_upper_bound(P, K: KernelBlocks, cfg: S3vmConfig, Y, i_wstar: float) -> float:
    """Upper bound on the dual: supervised optimum + C_star*|U| + qp_objective(P)."""
    return i_wstar + cfg.C_star * K.n_unlabeled + qp_objective(P, K, cfg, Y)


def project_capped_simplex(v: np.ndarray, total: float, iters: int = 100) -> np.ndarray:
    """Euclidean projection onto {0 <= p <= 1, sum(p) = total}.

    Bisection on the shift parameter of clip(v - tau, 0, 1); the sum is
    monotone decreasing in tau.
    """
    n = len(v)
    if not 0.0 <= total <= n:
        raise ValueError(f"target sum {total} outside [0, {n}]")
    lo = v.min() - 1.0
    hi = v.max()
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        s = np.clip(v - mid, 0.0, 1.0).sum()
        if s > total:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-14 * max(1.0, abs(hi)):
            break
    return np.clip(v - 0.5 * (lo + hi), 0.0, 1.0)


def solve_qp(K: KernelBlocks, cfg: S3vmConfig, Y) -> SoftLabels:
    """Local minimizer of qp_objective over the balanced box polytope.

    Projected gradient descent with backtracking from cfg.restarts random
    feasible starts; returns the best endpoint (ties break toward the earlier
    restart, keeping the result deterministic for a fixed seed).
    """
    if K.K_uu is None:
        raise ValueError("solve_qp needs materialized K_uu blocks")
    Y = np.asarray(Y, dtype=np.float64)
    n_u = K.n_unlabeled
    k = positive_count(cfg.r, n_u)
    if k < 1 or k > n_u:
        raise ValueError(f"balancing count {k} infeasible for |U|={n_u}")
    if k == n_u:
        return SoftLabels(p=np.ones(n_u))

    cs2 = cfg.C_star**2
    half_rowsum = 0.5 * cs2 * K.K_uu.sum(axis=0)
    lin = cfg.C * cfg.C_star * (Y @ K.K_lu)
    norm_inf = np.abs(K.K_uu).sum(axis=1).max()
    base_step = 1.0 / max(cs2 * norm_inf, 1e-12)

    def objective(p):
        return qp_objective(p, K, cfg, Y)

    def gradient(p):
        return half_rowsum - cs2 * (K.K_uu @ p) - lin

    rng = np.random.default_rng(cfg.seed)
    best_p = None
    best_obj = np.inf
    for _ in range(max(cfg.restarts, 1)):
        p = project_capped_simplex(rng.uniform(0.0, 1.0, n_u), float(k))
        obj = objective(p)
        for _ in range(cfg.max_iters):
            g = gradient(p)
            step = base_step
            moved = False
            for _ in range(40):
                cand = project_capped_simplex(p - step * g, float(k))
                cand_obj = objective(cand)
                if cand_obj <= obj:
                    moved = True
                    break
                step *= 0.5
            if not moved:
                break
            shift = np.abs(cand - p).max()
            p, obj = cand, cand_obj
            if shift <= cfg.tol:
                break
        if obj < best_obj:
            best_obj = obj
            best_p = p
    return SoftLabels(p=best_p)


def round_to_labels(P, r: float) -> np.ndarray:
    """Assign +1 to the k = round(r*|U|) largest soft labels, -1 to the rest.

    Ties break toward the lower index.
    """
    p = _pvec(P)
    k = positive_count(r, len(p))
    order = np.argsort(-p, kind="stable")
    labels = np.full(len(p), -1, dtype=np.int8)
    labels[order[:k]] = 1
    return labels


def binary_polytope_minimum(K: KernelBlocks, cfg: S3vmConfig, Y, k: int,
                            max_subsets: int = 3_000_000):
    """Enumerate all binary P with sum k; the concave objective attains its
    polytope minimum at such a vertex.  Testing oracle, desk scale only.
    """
    n_u = K.n_unlabeled
    n_subsets = math.comb(n_u, k)
    if n_subsets > max_subsets:
        raise ValueError(f"{n_subsets} vertices exceed the enumeration guard")
    best_val = np.inf
    best_subset = None
    for subset in itertools.combinations(range(n_u), k):
        p = np.zeros(n_u)
        p[list(subset)] = 1.0
        val = qp_objective(p, K, cfg, Y)
        if val < best_val:
            best_val = val
            best_subset = subset
    return best_subset, best_val
