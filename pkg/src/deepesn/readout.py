"""Ridge-regression readout over concatenated reservoir states, plus NRMSE.

The readout solves ``min_W ||W X - Y||^2 + lambda ||W||^2`` in closed form
through a thin SVD of the state matrix. When features outnumber samples the
SVD is obtained from a QR factorization of the transposed state matrix,
which is substantially cheaper and equally accurate. Normal equations are
deliberately avoided: squaring the condition number loses the small singular
values that carry most of the signal on near-periodic tasks.

``lambda = 0`` falls back to the minimum-norm least-squares solution with a
pseudo-inverse cutoff; rank deficiency is then flagged on the result rather
than raised.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Readout:
    """Trained linear readout: ``predictions(t) = weights @ state(t)``."""

    weights: np.ndarray          # (output_dim, state_dim)
    regularization: float
    rank: int                    # singular values above the pinv cutoff
    rank_deficient: bool         # min-norm fallback engaged (lambda == 0 only)


def _thin_svd(states: np.ndarray):
    """SVD of the (samples, features) matrix; QR route when features dominate."""
    t, d = states.shape
    if d > t:
        q, r = np.linalg.qr(states.T)          # states.T = q r, q: (d, t)
        u, s, wt = np.linalg.svd(r.T)          # r.T: (t, t)
        v = q @ wt.T
    else:
        u, s, vt = np.linalg.svd(states, full_matrices=False)
        v = vt.T
    return u, s, v                              # states = u @ diag(s) @ v.T


def _as_targets(targets, t: int) -> np.ndarray:
    y = np.asarray(targets, dtype=float)
    if y.ndim == 1:
        y = y[:, None]
    if y.ndim != 2 or y.shape[0] != t:
        raise ValueError(f"targets must have {t} rows, got shape {y.shape}")
    return y


def fit_ridge_sweep(states, targets, lambdas) -> list[Readout]:
    """Fit one readout per regularization value, sharing a single SVD.

    The states are independent of lambda, so a sweep costs one factorization
    plus a cheap diagonal reweighting per value.
    """
    s_mat = np.asarray(states, dtype=float)
    if s_mat.ndim != 2 or s_mat.shape[0] < 1:
        raise ValueError(f"states must be a (samples, features) matrix, got shape {s_mat.shape}")
    if not np.isfinite(s_mat).all():
        raise ValueError("states must be finite")
    y = _as_targets(targets, s_mat.shape[0])
    if not np.isfinite(y).all():
        raise ValueError("targets must be finite")
    lams = [float(l) for l in lambdas]
    if not lams:
        raise ValueError("lambdas must be nonempty")
    if any(l < 0 or not np.isfinite(l) for l in lams):
        raise ValueError("regularization values must be finite and nonnegative")

    t, d = s_mat.shape
    u, s, v = _thin_svd(s_mat)
    uty = u.T @ y                                           # (k, output_dim)
    cutoff = max(t, d) * np.finfo(float).eps * (s[0] if s.size else 0.0)
    rank = int(np.count_nonzero(s > cutoff))

    fits = []
    for lam in lams:
        if lam > 0.0:
            gain = s / (s * s + lam)
            deficient = False
        else:
            gain = np.zeros_like(s)
            above = s > cutoff
            gain[above] = 1.0 / s[above]
            deficient = rank < d
        weights = (v @ (gain[:, None] * uty)).T             # (output_dim, d)
        fits.append(Readout(weights=weights, regularization=lam,
                            rank=rank, rank_deficient=deficient))
    return fits


def fit_ridge(states, targets, lam: float) -> Readout:
    """Closed-form ridge fit of a linear readout on washout-trimmed states."""
    return fit_ridge_sweep(states, targets, [lam])[0]


def predict(readout: Readout, states) -> np.ndarray:
    """Apply a readout to a state matrix; row ``t`` is the output at step ``t``."""
    s_mat = np.asarray(states, dtype=float)
    if s_mat.ndim != 2 or s_mat.shape[1] != readout.weights.shape[1]:
        raise ValueError(
            f"states must have width {readout.weights.shape[1]}, got shape {s_mat.shape}"
        )
    return s_mat @ readout.weights.T


def nrmse(pred, target) -> float:
    """Root mean square error normalized by the target's standard deviation.

    The variance is the population variance over the scored window, so a
    constant prediction at the target mean scores exactly 1. Both variance
    and numerator are evaluated with the same expression shape, keeping that
    identity exact in floating point.
    """
    p = np.asarray(pred, dtype=float).reshape(-1)
    y = np.asarray(target, dtype=float).reshape(-1)
    if p.shape != y.shape:
        raise ValueError(f"length mismatch: {p.shape} vs {y.shape}")
    if y.size < 2:
        raise ValueError("need at least two samples to normalize")
    if not (np.isfinite(p).all() and np.isfinite(y).all()):
        raise ValueError("inputs must be finite")
    variance = np.mean((y - np.mean(y)) ** 2)
    if variance == 0.0:
        raise ValueError("target variance is zero; NRMSE is undefined")
    return float(np.sqrt(np.mean((y - p) ** 2) / variance))
