"""Hierarchical block approximation of the Poisson LDM likelihood.

A divisive tree is grown with Euclidean (non-squared) k-means: the first level
splits into round(ln N) clusters and every cluster larger than ceil(ln N) is
split in two until all leaves are small. Dyads inside a leaf are evaluated
exactly; dyads separated at some level are approximated through the distance
between the two clusters' centroids. With O(log N) levels of O(N) terms the
evaluation is O(N log N).
"""
import json
import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from scipy.special import gammaln

from .graph import Graph
from .ldm import init_ldm_params, edge_log_rates, step_seed, _scatter_rows
from .optim import TrainConfig, minimize

PHI_FLOOR = 1e-9
_DIST_FLOOR = 1e-12


@dataclass
class KMeansState:
    assignments: np.ndarray
    centroids: np.ndarray
    phi: np.ndarray
    objective: float
    n_iter: int
    history: List[float] = field(default_factory=list)


def _nearest(points, centroids):
    diff = points[:, None, :] - centroids[None, :, :]
    dist = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    r = np.argmin(dist, axis=1)
    return r, dist[np.arange(len(points)), r]


def _objective(points, centroids, r):
    return float(np.linalg.norm(points - centroids[r], axis=1).sum())


def _weiszfeld(points, centroids, r, K):
    """One majorize-minimize centroid update for fixed assignments."""
    phi = np.maximum(np.linalg.norm(points - centroids[r], axis=1), PHI_FLOOR)
    w = 1.0 / phi
    wsum = np.bincount(r, weights=w, minlength=K)
    new = np.empty_like(centroids)
    for d in range(points.shape[1]):
        new[:, d] = np.bincount(r, weights=w * points[:, d], minlength=K)
    occupied = wsum > 0
    new[occupied] /= wsum[occupied, None]
    new[~occupied] = centroids[~occupied]
    return new, phi


def _fill_empty(points, centroids, r, K):
    """Move the point farthest from its centroid into each empty cluster."""
    counts = np.bincount(r, minlength=K)
    for k in np.flatnonzero(counts == 0):
        dist = np.linalg.norm(points - centroids[r], axis=1)
        # never strip a singleton cluster of its only member
        counts = np.bincount(r, minlength=K)
        dist[counts[r] <= 1] = -1.0
        far = int(np.argmax(dist))
        if dist[far] < 0:
            break
        r[far] = k
        centroids[k] = points[far]
    return centroids, r


def _spread_seeds(points, K, rng):
    """Distinct seeds, each drawn with probability proportional to its distance
    from the nearest seed chosen so far (uniform among leftovers on ties at 0)."""
    M = len(points)
    seeds = [int(rng.integers(M))]
    dist = np.linalg.norm(points - points[seeds[0]], axis=1)
    for _ in range(1, K):
        w = dist.copy()
        w[seeds] = 0.0
        if w.sum() <= 0:
            w = np.ones(M)
            w[seeds] = 0.0
        nxt = int(rng.choice(M, p=w / w.sum()))
        seeds.append(nxt)
        dist = np.minimum(dist, np.linalg.norm(points - points[nxt], axis=1))
    return np.asarray(seeds)


def _kmeans_once(points, K, rng, max_iter):
    M = len(points)
    seeds = _spread_seeds(points, K, rng)
    r, _ = _nearest(points, points[seeds])
    r[seeds] = np.arange(K)  # seeds own their cluster even with duplicate points
    centroids = np.zeros((K, points.shape[1]))
    counts = np.bincount(r, minlength=K)
    for d in range(points.shape[1]):
        centroids[:, d] = np.bincount(r, weights=points[:, d], minlength=K)
    centroids /= np.maximum(counts, 1)[:, None]
    J = _objective(points, centroids, r)
    history = [J]
    scale = float(np.abs(points).max()) + 1.0
    it = 0
    for it in range(1, max_iter + 1):
        old = centroids
        centroids, _ = _weiszfeld(points, centroids, r, K)
        J_mu = _objective(points, centroids, r)
        if J_mu > J:
            # the majorizer only guarantees descent up to rounding; keep the old centroids
            centroids, J_mu = old, J
        shift = float(np.abs(centroids - old).max())
        # with phi at its optimum the surrogate reduces to ||z - mu||, so the
        # reassignment is to the nearest centroid; ties keep the current label
        r_new, _ = _nearest(points, centroids)
        keep = np.linalg.norm(points - centroids[r_new], axis=1) >= \
            np.linalg.norm(points - centroids[r], axis=1)
        r_new[keep] = r[keep]
        cand_c, cand_r = _fill_empty(points, centroids.copy(), r_new, K)
        J_new = _objective(points, cand_c, cand_r)
        if J_new <= J_mu:
            centroids, r_new = cand_c, cand_r
        else:
            r_new, J_new = r.copy(), J_mu
        history.append(J_new)
        stable = np.array_equal(r_new, r) and shift <= 1e-6 * scale
        r, J = r_new, J_new
        if stable:
            break
    phi = np.maximum(np.linalg.norm(points - centroids[r], axis=1), PHI_FLOOR)
    return KMeansState(r, centroids, phi, history[-1], it, history)


def euclidean_kmeans(points, K: int, seed=0, max_iter: int = 100, n_init: int = 5) -> KMeansState:
    """k-means under the plain Euclidean norm, J = sum_i ||z_i - mu_{r_i}||.

    Each restart seeds K distinct points, takes arithmetic means of the
    induced assignment, then alternates Weiszfeld centroid steps
    (mu_k = sum z/phi / sum 1/phi with phi = max(||z - mu||, 1e-9)) with
    nearest-centroid reassignment until assignments stop changing. J never
    increases along ``history``. The best of ``n_init`` restarts is returned.
    """
    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        points = points[:, None]
    M = len(points)
    if not 1 <= K <= M:
        raise ValueError("need 1 <= K <= number of points")
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(max(1, n_init)):
        st = _kmeans_once(points, K, rng, max_iter)
        if best is None or st.objective < best.objective:
            best = st
    return best


@dataclass
class TreeLevel:
    labels: np.ndarray      # cluster id per node at this level
    centroids: np.ndarray   # (K, D) centroids found by the k-means split
    weights: np.ndarray     # per-node Weiszfeld weight 1/phi used for the centroid
    parent: np.ndarray      # parent cluster id at the previous level (-1 at level 1)
    is_leaf: np.ndarray     # per-cluster leaf flag (leaves are carried to later levels)
    pairs: np.ndarray       # (P, 2) cluster pairs approximated at this level


@dataclass
class ClusterTree:
    levels: List[TreeLevel]
    leaf_size: int
    n_points: int
    leaf_pairs: np.ndarray  # (Q, 2) exact within-leaf dyads over the stacked point index
    n_first: Optional[int] = None  # bipartite: number of first-mode points in the stack

    @property
    def depth(self) -> int:
        return len(self.levels)

    def leaves(self) -> List[np.ndarray]:
        last = self.levels[-1]
        order = np.argsort(last.labels, kind="stable")
        cuts = np.cumsum(np.bincount(last.labels, minlength=len(last.is_leaf)))[:-1]
        return np.split(order, cuts)

    def clusters(self, level: int) -> List[np.ndarray]:
        lv = self.levels[level]
        K = len(lv.is_leaf)
        order = np.argsort(lv.labels, kind="stable")
        return np.split(order, np.cumsum(np.bincount(lv.labels, minlength=K))[:-1])


def default_first_level(N: int) -> int:
    return max(2, int(round(math.log(N)))) if N > 1 else 1


def default_leaf_size(N: int) -> int:
    return max(2, int(math.ceil(math.log(N)))) if N > 1 else 1


def _within_pairs(members, n_first):
    """Exact dyads inside a leaf: i < j for unipartite, first x second mode for bipartite."""
    if n_first is None:
        a, b = np.triu_indices(len(members), k=1)
        return members[a], members[b]
    rows = members[members < n_first]
    cols = members[members >= n_first]
    ii, jj = np.meshgrid(rows, cols, indexing="ij")
    return ii.ravel(), jj.ravel()


def _build(Z, seed, first_k, is_leaf_fn, n_first, n_init):
    N = len(Z)
    ss = np.random.SeedSequence(int(seed))
    next_seed = iter(ss.generate_state(4 * N + 16))
    levels = []
    everything = np.arange(N)
    if is_leaf_fn(everything):
        lv = TreeLevel(labels=np.zeros(N, dtype=np.int64), centroids=Z.mean(axis=0, keepdims=True),
                       weights=np.ones(N), parent=np.array([-1]), is_leaf=np.array([True]),
                       pairs=np.zeros((0, 2), dtype=np.int64))
        levels.append(lv)
    else:
        K = min(first_k, N)
        st = euclidean_kmeans(Z, K, seed=int(next(next_seed)), n_init=n_init)
        groups = [np.flatnonzero(st.assignments == k) for k in range(K)]
        labels = st.assignments.astype(np.int64)
        leaf = np.array([is_leaf_fn(m) for m in groups])
        a, b = np.triu_indices(K, k=1)
        levels.append(TreeLevel(labels=labels, centroids=st.centroids, weights=1.0 / st.phi,
                                parent=np.full(K, -1), is_leaf=leaf,
                                pairs=np.stack([a, b], axis=1).astype(np.int64)))
        while not levels[-1].is_leaf.all():
            prev = levels[-1]
            K_prev = len(prev.is_leaf)
            prev_groups = [np.flatnonzero(prev.labels == k) for k in range(K_prev)]
            labels = np.empty(N, dtype=np.int64)
            weights = prev.weights.copy()
            cents, parents, leaves, pairs = [], [], [], []
            for k, members in enumerate(prev_groups):
                if prev.is_leaf[k]:
                    labels[members] = len(cents)
                    cents.append(prev.centroids[k])
                    parents.append(k)
                    leaves.append(True)
                    continue
                st = euclidean_kmeans(Z[members], 2, seed=int(next(next_seed)), n_init=n_init)
                base = len(cents)
                for c in range(2):
                    sub = members[st.assignments == c]
                    labels[sub] = base + c
                    weights[sub] = 1.0 / st.phi[st.assignments == c]
                    cents.append(st.centroids[c])
                    parents.append(k)
                    leaves.append(is_leaf_fn(sub))
                pairs.append((base, base + 1))
            levels.append(TreeLevel(labels=labels, centroids=np.asarray(cents),
                                    weights=weights, parent=np.asarray(parents),
                                    is_leaf=np.asarray(leaves),
                                    pairs=np.asarray(pairs, dtype=np.int64).reshape(-1, 2)))
    last = levels[-1]
    src, dst = [], []
    for k in range(len(last.is_leaf)):
        a, b = _within_pairs(np.flatnonzero(last.labels == k), n_first)
        src.append(a)
        dst.append(b)
    leaf_pairs = np.stack([np.concatenate(src), np.concatenate(dst)], axis=1).astype(np.int64)
    return levels, leaf_pairs


def build_hierarchy(Z, seed=0, leaf_size: Optional[int] = None, first_k: Optional[int] = None,
                    n_init: int = 1) -> ClusterTree:
    """Divisive tree over the rows of ``Z``.

    Level 1 has max(2, round(ln N)) clusters; any cluster with more than
    ``leaf_size`` (default max(2, ceil(ln N))) members is split in two at the
    next level. Leaves are carried down so every level partitions all points.
    """
    Z = np.asarray(Z, dtype=float)
    N = len(Z)
    if N < 2:
        raise ValueError("need at least two points")
    ls = default_leaf_size(N) if leaf_size is None else int(leaf_size)
    fk = default_first_level(N) if first_k is None else int(first_k)
    levels, leaf_pairs = _build(Z, seed, fk, lambda m: len(m) <= ls, None, n_init)
    return ClusterTree(levels, ls, N, leaf_pairs)


def build_bipartite_hierarchy(Z, W, seed=0, n_init: int = 1, leaf_rule=None) -> ClusterTree:
    """Tree over the stacked rows [Z; W] of a bipartite model.

    A cluster is a leaf when it holds fewer than ceil(ln N1) first-mode or
    fewer than ceil(ln N2) second-mode points. ``leaf_rule`` may override the
    two thresholds (e.g. (N1 + 1, N2 + 1) forces a single leaf).
    """
    Z = np.asarray(Z, dtype=float)
    W = np.asarray(W, dtype=float)
    n1, n2 = len(Z), len(W)
    X = np.vstack([Z, W])
    t1, t2 = leaf_rule if leaf_rule is not None else (
        max(1, math.ceil(math.log(n1))) if n1 > 1 else 1,
        max(1, math.ceil(math.log(n2))) if n2 > 1 else 1)

    def is_leaf(m):
        if len(m) <= 1:
            return True
        k1 = int(np.count_nonzero(m < n1))
        return k1 < t1 or (len(m) - k1) < t2

    levels, leaf_pairs = _build(X, seed, default_first_level(n1 + n2), is_leaf, n1, n_init)
    return ClusterTree(levels, max(t1, t2), n1 + n2, leaf_pairs, n_first=n1)


def single_leaf_tree(N: int, n_first: Optional[int] = None) -> ClusterTree:
    """Degenerate tree whose only leaf holds every point (reduces to the exact model)."""
    lv = TreeLevel(labels=np.zeros(N, dtype=np.int64), centroids=np.zeros((1, 1)),
                   weights=np.ones(N), parent=np.array([-1]), is_leaf=np.array([True]),
                   pairs=np.zeros((0, 2), dtype=np.int64))
    a, b = _within_pairs(np.arange(N), n_first)
    return ClusterTree([lv], N, N, np.stack([a, b], axis=1).astype(np.int64), n_first=n_first)


def _centroids(level: TreeLevel, X):
    """Weighted means sum w z / sum w per cluster, with the split's Weiszfeld weights."""
    K = len(level.is_leaf)
    wsum = np.bincount(level.labels, weights=level.weights, minlength=K)
    mu = np.empty((K, X.shape[1]))
    for d in range(X.shape[1]):
        mu[:, d] = np.bincount(level.labels, weights=level.weights * X[:, d], minlength=K)
    return mu / wsum[:, None], wsum


def _flatten(tree: ClusterTree):
    """Stack every level's paired clusters into one global cluster index space.

    Returns (node, gid, weight, pairs, K): entry e says point ``node[e]``
    belongs to global cluster ``gid[e]`` with centroid weight ``weight[e]``;
    ``pairs`` lists the approximated global cluster pairs. Cached on the tree.
    """
    cached = getattr(tree, "_flat", None)
    if cached is not None:
        return cached
    nodes, gids, wts, pairs = [], [], [], []
    offset = 0
    for level in tree.levels:
        if len(level.pairs) == 0:
            continue
        used = np.unique(level.pairs)
        remap = np.full(len(level.is_leaf), -1)
        remap[used] = np.arange(len(used)) + offset
        member = np.flatnonzero(remap[level.labels] >= 0)
        nodes.append(member)
        gids.append(remap[level.labels[member]])
        wts.append(level.weights[member])
        pairs.append(remap[level.pairs])
        offset += len(used)
    if nodes:
        flat = (np.concatenate(nodes), np.concatenate(gids), np.concatenate(wts),
                np.concatenate(pairs), offset)
    else:
        flat = (np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64), np.zeros(0),
                np.zeros((0, 2), dtype=np.int64), 0)
    tree._flat = flat
    return flat


def _cross_terms(tree: ClusterTree, X, ea, eb, grad, centroid_grad):
    """Centroid-approximated mass of dyads separated in the tree.

    ``ea``/``eb`` are the exponentiated sender/receiver effects on the stacked
    points (equal for unipartite models, zero-padded per mode for bipartite).
    All levels are handled in one vectorised pass over the flattened tree.
    """
    node, gid, w, pairs, K = _flatten(tree)
    N, D = X.shape
    if K == 0:
        zero = (np.zeros_like(X), np.zeros_like(ea), np.zeros_like(eb)) if grad else (None,) * 3
        return 0.0, zero[0], zero[1], zero[2]
    wsum = np.bincount(gid, weights=w, minlength=K)
    mu = np.empty((K, D))
    for d in range(D):
        mu[:, d] = np.bincount(gid, weights=w * X[node, d], minlength=K)
    mu /= wsum[:, None]
    bip = tree.n_first is not None
    Sa = np.bincount(gid, weights=ea[node], minlength=K)
    Sb = np.bincount(gid, weights=eb[node], minlength=K) if bip else Sa
    p, q = pairs[:, 0], pairs[:, 1]
    diff = mu[p] - mu[q]
    dist = np.sqrt(np.einsum("ij,ij->i", diff, diff))
    kern = np.exp(-dist)
    mass_pq = Sa[p] * Sb[q] + Sa[q] * Sb[p] if bip else Sa[p] * Sb[q]
    contrib = kern * mass_pq
    total = float(contrib.sum())
    if not grad:
        return total, None, None, None
    gSa = np.bincount(p, weights=kern * Sb[q], minlength=K) + \
        np.bincount(q, weights=kern * Sb[p] if bip else kern * Sa[p], minlength=K)
    dea = np.bincount(node, weights=gSa[gid], minlength=N)
    if bip:
        gSb = np.bincount(q, weights=kern * Sa[p], minlength=K) + \
            np.bincount(p, weights=kern * Sa[q], minlength=K)
        deb = np.bincount(node, weights=gSb[gid], minlength=N)
    else:
        deb = dea
    dX = np.zeros_like(X)
    if centroid_grad:
        coef = np.where(dist > _DIST_FLOOR, contrib / np.maximum(dist, _DIST_FLOOR), 0.0)
        scale = w / wsum[gid]
        for d in range(D):
            gmu = np.bincount(p, weights=-coef * diff[:, d], minlength=K) + \
                np.bincount(q, weights=coef * diff[:, d], minlength=K)
            dX[:, d] = np.bincount(node, weights=scale * gmu[gid], minlength=N)
    return total, dX, dea, deb


def _check_tree(tree: ClusterTree, n_points):
    if tree.n_points != n_points:
        raise ValueError(f"tree covers {tree.n_points} points but the model has {n_points}")


def hbdm_loss(g: Graph, params, tree: ClusterTree, rho: float = 0.0, grad: bool = True,
              centroid_grad: bool = True):
    """Hierarchical NLL of an undirected unipartite graph; gradients are keyed like ``params``.

    The link term runs over every edge, the Poisson mass inside each leaf is
    exact, and each pair of clusters separated at a level contributes
    exp(-||mu_k - mu_k'||) * S_k * S_k' with S_k = sum_{i in k} exp(gamma_i).
    With ``centroid_grad`` the centroids are differentiated as weighted means
    of the current positions; otherwise they are treated as constants.
    """
    if g.bipartite:
        raise ValueError("use hbdm_bipartite_loss for bipartite graphs")
    if g.directed:
        raise ValueError("the hierarchical model is implemented for undirected graphs")
    if g.signed:
        raise ValueError("Poisson likelihood needs nonnegative weights")
    Z, gam = params["Z"], params["gamma"]
    _check_tree(tree, len(Z))
    y = g.weight.astype(float)
    logr, dlr = edge_log_rates(Z, Z, gam, gam, g.src, g.dst, grad=grad)
    link = float(y @ logr) - float(gammaln(y + 1.0).sum())
    li, lj = tree.leaf_pairs[:, 0], tree.leaf_pairs[:, 1]
    lr, dleaf = edge_log_rates(Z, Z, gam, gam, li, lj, grad=grad)
    lam = np.exp(lr)
    within = float(lam.sum())
    eg = np.exp(gam)
    cross, dXc, dea, _ = _cross_terms(tree, Z, eg, eg, grad, centroid_grad)
    value = within + cross - link
    if rho:
        value += 0.5 * rho * (float(np.sum(Z * Z)) + float(gam @ gam))
    if not grad:
        return value, None
    N = len(Z)
    ew = y[:, None] * dlr
    dZ = -(_scatter_rows(N, g.src, ew) - _scatter_rows(N, g.dst, ew))
    dg = -(np.bincount(g.src, weights=y, minlength=N) + np.bincount(g.dst, weights=y, minlength=N))
    lw = lam[:, None] * dleaf
    dZ += _scatter_rows(N, li, lw) - _scatter_rows(N, lj, lw)
    dg += np.bincount(li, weights=lam, minlength=N) + np.bincount(lj, weights=lam, minlength=N)
    dZ += dXc
    dg += dea * eg
    if rho:
        dZ += rho * Z
        dg += rho * gam
    return value, {"Z": dZ, "gamma": dg}


def hbdm_nll(g: Graph, params, tree: ClusterTree) -> float:
    return hbdm_loss(g, params, tree, 0.0, grad=False)[0]


def hbdm_bipartite_loss(g: Graph, params, tree: ClusterTree, rho: float = 0.0, grad: bool = True,
                        centroid_grad: bool = True):
    """Hierarchical NLL of a bipartite graph with sender/receiver effects psi/omega.

    The tree is built on the stacked positions [Z; W]. Within leaves only
    cross-mode dyads are summed; a separated cluster pair contributes
    exp(-||mu_k - mu_k'||) * (S^psi_k S^omega_k' + S^psi_k' S^omega_k).
    """
    if not g.bipartite:
        raise ValueError("hbdm_bipartite_loss needs a bipartite graph")
    if g.signed:
        raise ValueError("Poisson likelihood needs nonnegative weights")
    Z, W, psi, omg = params["Z"], params["W"], params["psi"], params["omega"]
    n1, n2 = len(Z), len(W)
    _check_tree(tree, n1 + n2)
    if tree.n_first != n1:
        raise ValueError("tree was not built on this bipartite split")
    X = np.vstack([Z, W])
    y = g.weight.astype(float)
    logr, dlr = edge_log_rates(Z, W, psi, omg, g.src, g.dst, grad=grad)
    link = float(y @ logr) - float(gammaln(y + 1.0).sum())
    li, lj = tree.leaf_pairs[:, 0], tree.leaf_pairs[:, 1] - n1
    lr, dleaf = edge_log_rates(Z, W, psi, omg, li, lj, grad=grad)
    lam = np.exp(lr)
    within = float(lam.sum())
    ea = np.concatenate([np.exp(psi), np.zeros(n2)])
    eb = np.concatenate([np.zeros(n1), np.exp(omg)])
    cross, dXc, dea, deb = _cross_terms(tree, X, ea, eb, grad, centroid_grad)
    value = within + cross - link
    if rho:
        value += 0.5 * rho * sum(float(np.sum(v * v)) for v in (Z, W, psi, omg))
    if not grad:
        return value, None
    ew = y[:, None] * dlr
    dZ = -_scatter_rows(n1, g.src, ew)
    dW = _scatter_rows(n2, g.dst, ew)
    dpsi = -np.bincount(g.src, weights=y, minlength=n1)
    domg = -np.bincount(g.dst, weights=y, minlength=n2)
    lw = lam[:, None] * dleaf
    dZ += _scatter_rows(n1, li, lw)
    dW -= _scatter_rows(n2, lj, lw)
    dpsi += np.bincount(li, weights=lam, minlength=n1)
    domg += np.bincount(lj, weights=lam, minlength=n2)
    dZ += dXc[:n1]
    dW += dXc[n1:]
    dpsi += dea[:n1] * np.exp(psi)
    domg += deb[n1:] * np.exp(omg)
    grads = {"Z": dZ, "W": dW, "psi": dpsi, "omega": domg}
    if rho:
        for k, v in (("Z", Z), ("W", W), ("psi", psi), ("omega", omg)):
            grads[k] = grads[k] + rho * v
    return value, grads


def hbdm_bipartite_nll(g: Graph, params, tree: ClusterTree) -> float:
    return hbdm_bipartite_loss(g, params, tree, 0.0, grad=False)[0]


REBUILD_PERIOD = 25


def hbdm_train(g: Graph, D: int, cfg: TrainConfig, rebuild_every: int = REBUILD_PERIOD,
               centroid_grad: bool = True, init=None):
    """Adam on the hierarchical NLL, rebuilding the tree from the current embedding
    every ``rebuild_every`` steps. Returns (params, tree, LossReport)."""
    params = init if init is not None else init_ldm_params(g, D, cfg.seed)
    rho = cfg.rho(0.0)
    state = {}

    def build(p, step):
        seed = step_seed(cfg.seed, step)
        if g.bipartite:
            return build_bipartite_hierarchy(p["Z"], p["W"], seed)
        return build_hierarchy(p["Z"], seed)

    def make_loss(tree):
        if g.bipartite:
            return lambda p, step: hbdm_bipartite_loss(g, p, tree, rho, centroid_grad=centroid_grad)
        return lambda p, step: hbdm_loss(g, p, tree, rho, centroid_grad=centroid_grad)

    def callback(step, p):
        if step % rebuild_every == 0:
            state["tree"] = build(p, step)
            return make_loss(state["tree"])
        return None

    params, report = minimize(make_loss(None), params, cfg, callback=callback)
    tree = build(params, cfg.iterations)
    return params, tree, report


def tree_to_json(tree: ClusterTree, ids=None, X=None) -> dict:
    """{levels: [{clusters: [[node ids]], centroids: [[...]]}]}.

    Centroids are recomputed from ``X`` (current positions) when given.
    """
    ids = list(ids) if ids is not None else [str(i) for i in range(tree.n_points)]
    out = []
    for l, level in enumerate(tree.levels):
        groups = tree.clusters(l)
        cents = _centroids(level, X)[0] if X is not None else level.centroids
        out.append({"clusters": [[ids[i] for i in grp] for grp in groups],
                    "centroids": [[float(v) for v in row] for row in cents],
                    "leaf": [bool(v) for v in level.is_leaf],
                    "parent": [int(v) for v in level.parent]})
    return {"leaf_size": tree.leaf_size, "levels": out}


def write_tree_json(path, tree: ClusterTree, ids=None, X=None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(tree_to_json(tree, ids, X), fh, indent=1)


def read_tree_json(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)
