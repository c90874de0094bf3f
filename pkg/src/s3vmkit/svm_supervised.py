"""Supervised linear SVM on the labeled samples only (baseline and bound constant)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .dataio import Dataset


@dataclass(frozen=True)
class LinearModel:
    """Primal hyperplane: weights over the feature space plus an intercept."""

    w: np.ndarray
    b: float


@dataclass(frozen=True)
class SvmFit:
    model: LinearModel
    objective: float
    slacks: np.ndarray


def _hinge_slacks(w, b, Xl, y) -> np.ndarray:
    margins = y * (Xl @ w + b)
    return np.maximum(0.0, 1.0 - margins)


def _exact_bias(scores, y, b0: float) -> float:
    """Minimizer over b of the total hinge loss at fixed scores.

    The loss is convex piecewise linear in b, so the minimum sits at one of
    the per-sample breakpoints (1 - y_i * score_i) / y_i.
    """
    breakpoints = y * (1.0 - y * scores)   # y_i in {+1,-1} makes 1/y_i = y_i
    best_b, best_loss = b0, float(np.maximum(0.0, 1.0 - y * (scores + b0)).sum())
    for b in breakpoints:
        loss = float(np.maximum(0.0, 1.0 - y * (scores + b)).sum())
        if loss < best_loss:
            best_b, best_loss = float(b), loss
    return best_b


def _exact_scale(w, scores, b, y, C) -> float:
    """Minimizer over s of 0.5*|s*w|^2 + C * hinge(s*scores + b), by ternary
    search on a convex piecewise-quadratic function."""
    wn2 = float(w @ w)
    if wn2 == 0.0:
        return 1.0

    def phi(s):
        return 0.5 * s * s * wn2 + C * float(
            np.maximum(0.0, 1.0 - y * (s * scores + b)).sum()
        )

    lo, hi = 0.0, 1.0
    while phi(hi * 2.0) < phi(hi) and hi < 1e12:
        hi *= 2.0
    hi *= 2.0
    for _ in range(200):
        m1 = lo + (hi - lo) / 3.0
        m2 = hi - (hi - lo) / 3.0
        if phi(m1) <= phi(m2):
            hi = m2
        else:
            lo = m1
        if hi - lo <= 1e-14 * max(1.0, hi):
            break
    return 0.5 * (lo + hi)


def _polish(w, b, Xl, y, C):
    """Alternate exact scale and bias line searches from a candidate iterate."""
    for _ in range(3):
        scores = Xl @ w
        s = _exact_scale(w, scores, b, y, C)
        w = s * w
        b = _exact_bias(s * scores, y, b)
    return w, b


def objective_value(model: LinearModel, data: Dataset, C: float) -> float:
    """Regularized hinge objective over the labeled samples: 0.5*|w|^2 + C*sum(slacks)."""
    Xl = data.X[data.labeled_idx].toarray()
    y = data.labeled_labels().astype(np.float64)
    slacks = _hinge_slacks(model.w, model.b, Xl, y)
    return 0.5 * float(model.w @ model.w) + C * float(slacks.sum())


def train_supervised(data: Dataset, C: float, epochs: int = 200, seed: int = 0) -> SvmFit:
    """Deterministic subgradient descent on the primal hinge objective.

    Processes the labeled samples in seeded epoch order with step 1/(lambda*t),
    keeps a running average of the iterates, and returns the best objective
    seen at any epoch boundary.  The bias is an unregularized extra coordinate
    updated by the same subgradient step.
    """
    if C <= 0:
        raise ValueError("C must be positive")
    if epochs < 1:
        raise ValueError("epochs must be at least 1")
    nl = len(data.labeled_idx)
    if nl < 2:
        raise ValueError("need at least 2 labeled samples")
    y = data.labeled_labels().astype(np.float64)
    if len(np.unique(y)) < 2:
        raise ValueError("labeled set must contain both classes")

    Xl = data.X[data.labeled_idx].toarray()
    lam = 1.0 / (C * nl)
    rng = np.random.default_rng(seed)

    w = np.zeros(data.n_features)
    b = 0.0
    sum_w = np.zeros_like(w)
    sum_b = 0.0
    t = 0
    # epoch-boundary snapshots of the running sums, for suffix averages
    snapshots = [(0, sum_w.copy(), 0.0)]

    def labeled_objective(wv, bv):
        return 0.5 * float(wv @ wv) + C * float(_hinge_slacks(wv, bv, Xl, y).sum())

    best_obj = labeled_objective(w, b)
    best_w, best_b = w.copy(), b

    for epoch in range(epochs):
        for i in rng.permutation(nl):
            t += 1
            eta = 1.0 / (lam * t)
            margin = y[i] * (Xl[i] @ w + b)
            w *= 1.0 - eta * lam
            if margin < 1.0:
                w += eta * y[i] * Xl[i]
                b += eta * y[i]
            sum_w += w
            sum_b += b
        snapshots.append((t, sum_w.copy(), sum_b))
        t_half, sw_half, sb_half = snapshots[(epoch + 1) // 2]
        span = t - t_half
        candidates = [(sum_w / t, sum_b / t), (w, b),
                      ((sum_w - sw_half) / span, (sum_b - sb_half) / span)]
        for cand_w, cand_b in candidates:
            for ww, bb in ((cand_w, cand_b), _polish(cand_w, cand_b, Xl, y, C)):
                obj = labeled_objective(ww, bb)
                if obj < best_obj:
                    best_obj = obj
                    best_w, best_b = np.array(ww, copy=True), float(bb)

    slacks = _hinge_slacks(best_w, best_b, Xl, y)
    return SvmFit(model=LinearModel(w=best_w, b=best_b), objective=best_obj, slacks=slacks)


def predict(model: LinearModel, x) -> int:
    """Sign of the decision value; exactly 0 maps to +1."""
    if sp.issparse(x):
        val = float((x @ model.w)[0]) + model.b
    else:
        val = float(np.asarray(x) @ model.w) + model.b
    return 1 if val >= 0.0 else -1


def predict_many(model: LinearModel, X) -> np.ndarray:
    vals = np.asarray(X @ model.w).ravel() + model.b
    return np.where(vals >= 0.0, 1, -1).astype(np.int8)


def serialize_model(model: LinearModel) -> str:
    """Flat text form: one 1-based index:value line per nonzero weight, then b."""
    lines = [f"{i + 1}:{v:.17g}" for i, v in enumerate(model.w) if v != 0.0]
    lines.append(f"b:{model.b:.17g}")
    return "\n".join(lines) + "\n"


def parse_model(text: str, n_features: int) -> LinearModel:
    w = np.zeros(n_features)
    b = 0.0
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        key, _, val = line.partition(":")
        if key == "b":
            b = float(val)
        else:
            w[int(key) - 1] = float(val)
    return LinearModel(w=w, b=b)
