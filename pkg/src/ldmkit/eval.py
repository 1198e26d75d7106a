"""Link-prediction metrics, pair scoring and projection helpers."""
import json
import logging
import warnings
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np
from scipy.stats import rankdata

from .disee import cumulative_intensity, sepp_event_prob
from .graph import Graph
from .ldm import SimplexConfig, hm_ldm_rate, poisson_rate
from .skellam import skellam_log_pmf, skellam_rates

log = logging.getLogger(__name__)

TASKS = ("link_pred", "p@n", "p@z", "n@z")
SIGNED_MODELS = ("sldm", "shm_ldm", "slim")
POISSON_MODELS = ("ldm", "hbdm", "hm_ldm")
SIGN_TRUNCATION = 50


@dataclass
class EvalReport:
    task: str
    auc_roc: float
    auc_pr: float
    n_pos: int
    n_neg: int


def _check_binary(scores, labels):
    s = np.asarray(scores, dtype=float).ravel()
    y = np.asarray(labels).ravel().astype(bool)
    if s.shape != y.shape:
        raise ValueError("scores and labels differ in length")
    if y.all() or not y.any():
        raise ValueError("AUC needs at least one positive and one negative label")
    if not np.all(np.isfinite(s)):
        raise ValueError("scores must be finite")
    return s, y


def auc_roc(scores, labels) -> float:
    """Mann-Whitney U / (n_pos n_neg) with mid-ranks for ties."""
    s, y = _check_binary(scores, labels)
    r = rankdata(s)
    n1 = int(y.sum())
    n0 = len(y) - n1
    return float((r[y].sum() - n1 * (n1 + 1) / 2.0) / (n1 * n0))


def auc_pr(scores, labels) -> float:
    """Step-wise average precision: sum over thresholds of (R_k - R_{k-1}) P_k.

    Tied scores enter as one threshold.
    """
    s, y = _check_binary(scores, labels)
    order = np.argsort(-s, kind="stable")
    s, y = s[order], y[order]
    tp = np.cumsum(y)
    fp = np.cumsum(~y)
    last = np.r_[np.flatnonzero(np.diff(s)), len(s) - 1]
    tp, fp = tp[last], fp[last]
    precision = tp / (tp + fp)
    recall = tp / tp[-1]
    return float(np.sum(np.diff(np.r_[0.0, recall]) * precision))


# scoring

def skellam_sign_probs(lp, lm, ymax: int = SIGN_TRUNCATION):
    """(P(y > 0), P(y < 0)) by summing the pmf over 1 <= |y| <= ymax."""
    lp = np.asarray(lp, dtype=float).ravel()
    lm = np.asarray(lm, dtype=float).ravel()
    ks = np.arange(1, ymax + 1)
    pos = np.exp(skellam_log_pmf(ks[None, :], lp[:, None], lm[:, None])).sum(axis=1)
    neg = np.exp(skellam_log_pmf(-ks[None, :], lp[:, None], lm[:, None])).sum(axis=1)
    zero = np.exp(skellam_log_pmf(np.zeros(len(lp), dtype=np.int64), lp, lm))
    dropped = 1.0 - (pos + neg + zero)
    if np.any(dropped > 1e-12):
        warnings.warn(f"sign probabilities drop up to {dropped.max():.2e} mass beyond |y| = {ymax}",
                      RuntimeWarning)
    return pos, neg


def score_pairs(model: str, params, pairs, task: str = "link_pred", variant: str = "undirected",
                simplex: Optional[SimplexConfig] = None, impact=None, appearance=None,
                horizon: Optional[float] = None):
    """Scores for ``pairs`` ((src, dst) rows as in edge lists) under ``task``.

    Poisson models score by rate; signed models by lp - lm (p@n), P(y > 0)
    (p@z) or P(y < 0) (n@z); DISEE by the event probability over [t_i, T]
    with the target taken as ``dst``.
    """
    if task not in TASKS:
        raise ValueError(f"task must be one of {TASKS}")
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    i, j = pairs[:, 0], pairs[:, 1]
    if model in POISSON_MODELS or model == "disee":
        if task != "link_pred":
            raise ValueError(f"{model} supports link_pred only")
        if model == "hm_ldm":
            return hm_ldm_rate(i, j, params, simplex or SimplexConfig())
        if model == "disee":
            if appearance is None or horizon is None or impact is None:
                raise ValueError("DISEE scoring needs impact config, appearance times and horizon")
            appearance = np.asarray(appearance, dtype=float)
            L = cumulative_intensity(j, i, appearance[j], np.full(len(j), float(horizon)), params, impact, horizon)
            return sepp_event_prob(np.atleast_1d(L))
        return poisson_rate(i, j, params)
    if model in SIGNED_MODELS:
        if task == "link_pred":
            raise ValueError("signed models are scored on p@n, p@z and n@z")
        lp, lm = skellam_rates(i, j, params, model, variant, simplex)
        if task == "p@n":
            return lp - lm
        pos, neg = skellam_sign_probs(lp, lm)
        return pos if task == "p@z" else neg
    raise ValueError(f"unknown model {model!r}")


def evaluate(task: str, scores, labels) -> EvalReport:
    y = np.asarray(labels).astype(bool)
    return EvalReport(task, auc_roc(scores, y), auc_pr(scores, y), int(y.sum()), int((~y).sum()))


def signed_task_sets(test_links, test_weights, test_nonlinks):
    """Pairs and labels for p@n (positive vs negative links), p@z (positive
    links vs zeros) and n@z (negative links vs zeros)."""
    links = np.asarray(test_links).reshape(-1, 2)
    w = np.asarray(test_weights)
    zeros = np.asarray(test_nonlinks).reshape(-1, 2)
    pos, neg = links[w > 0], links[w < 0]
    return {
        "p@n": (np.vstack([pos, neg]), np.r_[np.ones(len(pos)), np.zeros(len(neg))]),
        "p@z": (np.vstack([pos, zeros]), np.r_[np.ones(len(pos)), np.zeros(len(zeros))]),
        "n@z": (np.vstack([neg, zeros]), np.r_[np.ones(len(neg)), np.zeros(len(zeros))]),
    }


def reconstruction_stats(g: Graph):
    """(density, fraction positive, fraction negative); fractions are 0 for an empty graph."""
    pairs = g.n_pairs
    density = g.n_edges / pairs if pairs else 0.0
    if g.n_edges == 0:
        return density, 0.0, 0.0
    w = np.asarray(g.weight)
    return density, float(np.mean(w > 0)), float(np.mean(w < 0))


def format_stats(stats) -> str:
    d, p, n = stats
    return f"({d:.3g}, {100 * p:.0f}%, {100 * n:.0f}%)"


# projections

def pca_project(Z):
    """Centre and project onto the top two right singular vectors."""
    Z = np.asarray(Z, dtype=float)
    if Z.ndim != 2 or Z.shape[1] < 2:
        raise ValueError("PCA projection needs D >= 2")
    X = Z - Z.mean(axis=0)
    _, s, vt = np.linalg.svd(X, full_matrices=False)
    out = X @ vt[:2].T
    tol = max(X.shape) * np.finfo(float).eps * (s[0] if len(s) else 0.0)
    if len(s) < 2 or s[1] <= tol:
        warnings.warn("embedding has rank < 2; second coordinate set to zero", RuntimeWarning)
        out[:, 1] = 0.0
    return out


def circular_coords(Z, D: Optional[int] = None):
    """Corner d at angle 2*pi*d/D on the unit circle; rows map to convex combinations."""
    Z = np.asarray(Z, dtype=float)
    D = Z.shape[1] if D is None else int(D)
    if Z.shape[1] != D:
        raise ValueError("membership width does not match D")
    ang = 2.0 * np.pi * np.arange(D) / D
    corners = np.stack([np.cos(ang), np.sin(ang)], axis=1)
    return Z @ corners


def ordered_adjacency(memberships):
    """Permutation grouping nodes by argmax corner, then by descending
    membership, ties by ascending node id."""
    Z = np.asarray(memberships, dtype=float)
    top = np.argmax(Z, axis=1)
    mag = Z[np.arange(len(Z)), top]
    return np.lexsort((np.arange(len(Z)), -mag, top))


# artifacts

def write_metrics_json(path, reports) -> None:
    with open(path, "w") as fh:
        json.dump([asdict(r) for r in reports], fh, indent=1)
        fh.write("\n")


def read_metrics_json(path):
    with open(path) as fh:
        return [EvalReport(**d) for d in json.load(fh)]


def write_coords_csv(path, ids, xy) -> None:
    xy = np.asarray(xy, dtype=float)
    with open(path, "w") as fh:
        fh.write("node_id x y\n")
        for name, (x, y) in zip(ids, xy):
            fh.write(f"{name} {float(x)!r} {float(y)!r}\n")


def read_coords_csv(path):
    ids, rows = [], []
    with open(path) as fh:
        next(fh)
        for line in fh:
            a, x, y = line.split()
            ids.append(a)
            rows.append((float(x), float(y)))
    return ids, np.asarray(rows, dtype=float).reshape(-1, 2)
