"""Poisson latent distance models.

Parameters are dicts of arrays. Undirected unipartite models use ``Z`` (N x D)
and ``gamma`` (N,). Directed and bipartite models use sender positions ``Z``,
receiver positions ``W`` and effects ``psi`` (sender) / ``omega`` (receiver).
The hybrid-membership model replaces ``Z`` with softmax logits ``Zlogit``
(N x (D+1)).
"""
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .graph import Graph
from .optim import LossReport, TrainConfig, minimize

_CHUNK_ELEMS = 1 << 18
_DIST_FLOOR = 1e-12


@dataclass(frozen=True)
class SimplexConfig:
    delta: float = 1.0
    p: int = 2

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError("simplex scale delta must be positive")
        if self.p not in (1, 2):
            raise ValueError("norm power p must be 1 or 2")

    @property
    def scale(self) -> float:
        return float(self.delta) ** self.p


def softmax(logits):
    x = np.asarray(logits, dtype=float)
    e = np.exp(x - x.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def softmax_backward(z, dz):
    """Pull a gradient w.r.t. softmax rows ``z`` back to the logits."""
    return z * (dz - np.sum(dz * z, axis=-1, keepdims=True))


def pair_mass(X, Y, a, b, scale=1.0, power=1, exclude_diagonal=False, grad=True):
    """Sum of exp(a_i + b_j - scale * ||x_i - y_j||^power) over all (i, j).

    With ``exclude_diagonal`` the i == j terms are dropped (X and Y index the
    same node set). Evaluated in row chunks with a fixed reduction order so
    repeated calls are bitwise identical. Returns (value, dX, dY, da, db).
    """
    n, m = X.shape[0], Y.shape[0]
    rows = max(1, _CHUNK_ELEMS // max(m * X.shape[1], 1))
    total = 0.0
    dX = np.zeros_like(X) if grad else None
    dY = np.zeros_like(Y) if grad else None
    da = np.zeros(n) if grad else None
    db = np.zeros(m) if grad else None
    for start in range(0, n, rows):
        stop = min(n, start + rows)
        xb = X[start:stop]
        diff = xb[:, None, :] - Y[None, :, :]
        sq = np.einsum("ijk,ijk->ij", diff, diff)
        if power == 1:
            dist = np.sqrt(sq)
            expo = a[start:stop, None] + b[None, :] - scale * dist
        else:
            dist = None
            expo = a[start:stop, None] + b[None, :] - scale * sq
        lam = np.exp(expo)
        if exclude_diagonal:
            idx = np.arange(start, stop)
            lam[idx - start, idx] = 0.0
        total += float(lam.sum())
        if not grad:
            continue
        da[start:stop] = lam.sum(axis=1)
        db += lam.sum(axis=0)
        if power == 1:
            q = np.where(dist > _DIST_FLOOR, lam * scale / np.maximum(dist, _DIST_FLOOR), 0.0)
        else:
            q = 2.0 * scale * lam
        # d/dx_i of -scale*||x_i-y_j||^p gives -q_ij (x_i - y_j)
        qr = q.sum(axis=1)
        dX[start:stop] = -(qr[:, None] * xb - q @ Y)
        dY += q.T @ xb - q.sum(axis=0)[:, None] * Y
    return total, dX, dY, da, db


def edge_log_rates(X, Y, a, b, src, dst, scale=1.0, power=1, grad=True):
    """Log-rates a_i + b_j - scale*||x_i - y_j||^p on the listed pairs, plus d/d(x_i-y_j)."""
    diff = X[src] - Y[dst]
    sq = np.einsum("ij,ij->i", diff, diff)
    if power == 1:
        dist = np.sqrt(sq)
        logr = a[src] + b[dst] - scale * dist
        if not grad:
            return logr, None
        coef = np.where(dist > _DIST_FLOOR, scale / np.maximum(dist, _DIST_FLOOR), 0.0)
    else:
        logr = a[src] + b[dst] - scale * sq
        if not grad:
            return logr, None
        coef = np.full_like(sq, 2.0 * scale)
    # derivative of the log-rate with respect to x_i (and minus that for y_j)
    return logr, -coef[:, None] * diff


def _scatter_rows(n, idx, vals):
    out = np.zeros((n,) + vals.shape[1:])
    np.add.at(out, idx, vals)
    return out


def _model_blocks(g: Graph, params):
    """Map a parameter dict to (X, Y, a, b, undirected) for the pair kernel."""
    if g.directed or g.bipartite:
        return params["Z"], params["W"], params["psi"], params["omega"], False
    return params["Z"], params["Z"], params["gamma"], params["gamma"], True


def _poisson_core(g: Graph, X, Y, a, b, undirected, scale=1.0, power=1, grad=True):
    """Exact Poisson NLL of ``g`` with generic positions/effects, and block gradients.

    Returns (value, (dX, dY, da, db)); for undirected models X is Y and the
    gradient is folded into (dX, None, da, None).
    """
    if g.signed:
        raise ValueError("Poisson likelihood needs nonnegative weights; use the skellam module")
    mass, dXm, dYm, dam, dbm = pair_mass(X, Y, a, b, scale, power,
                                         exclude_diagonal=not g.bipartite, grad=grad)
    y = g.weight.astype(float)
    logr, dlr = edge_log_rates(X, Y, a, b, g.src, g.dst, scale, power, grad=grad)
    link = float(np.dot(y, logr))
    logfact = float(gammaln(y + 1.0).sum())
    if undirected:
        mass *= 0.5
    value = mass - link + logfact
    if not grad:
        return value, None
    ew = y[:, None] * dlr
    lx = _scatter_rows(X.shape[0], g.src, ew)
    ly = -_scatter_rows(Y.shape[0], g.dst, ew)
    la = np.bincount(g.src, weights=y, minlength=X.shape[0])
    lb = np.bincount(g.dst, weights=y, minlength=Y.shape[0])
    if undirected:
        dX = 0.5 * (dXm + dYm) - (lx + ly)
        da = 0.5 * (dam + dbm) - (la + lb)
        return value, (dX, None, da, None)
    return value, (dXm - lx, dYm - ly, dam - la, dbm - lb)


def _regularize(params, grads, rho, keys):
    value = 0.0
    if rho == 0:
        return value
    for k in keys:
        v = params[k]
        value += 0.5 * rho * float(np.sum(v * v))
        grads[k] = grads[k] + rho * v
    return value


def init_ldm_params(g: Graph, D: int, seed: int) -> dict:
    """Embeddings ~ Normal(0, 0.1^2), random effects at zero."""
    rng = np.random.default_rng(seed)
    if g.directed or g.bipartite:
        return {"Z": 0.1 * rng.standard_normal((g.n_rows, D)),
                "W": 0.1 * rng.standard_normal((g.n_cols, D)),
                "psi": np.zeros(g.n_rows), "omega": np.zeros(g.n_cols)}
    return {"Z": 0.1 * rng.standard_normal((g.n_rows, D)), "gamma": np.zeros(g.n_rows)}


def poisson_rate(i, j, params):
    """exp(gamma_i + gamma_j - ||z_i - z_j||), or exp(psi_i + omega_j - ||z_i - w_j||)."""
    i = np.asarray(i)
    j = np.asarray(j)
    if "W" in params:
        d = np.linalg.norm(params["Z"][i] - params["W"][j], axis=-1)
        return np.exp(params["psi"][i] + params["omega"][j] - d)
    d = np.linalg.norm(params["Z"][i] - params["Z"][j], axis=-1)
    return np.exp(params["gamma"][i] + params["gamma"][j] - d)


def _check_shapes(g: Graph, params):
    Z = params["Z"]
    if Z.shape[0] != g.n_rows:
        raise ValueError("Z has the wrong number of rows for this graph")
    if (g.directed or g.bipartite) and "W" not in params:
        raise ValueError("directed and bipartite models need W, psi and omega")
    if "W" in params and params["W"].shape[0] != g.n_cols:
        raise ValueError("W has the wrong number of rows for this graph")


def poisson_ldm_loss(g: Graph, params, rho: float = 0.0, grad: bool = True):
    """Exact Poisson NLL plus (rho/2)*||theta||^2, with gradients keyed like ``params``."""
    _check_shapes(g, params)
    X, Y, a, b, undirected = _model_blocks(g, params)
    value, blocks = _poisson_core(g, X, Y, a, b, undirected, grad=grad)
    if not grad:
        if rho:
            value += 0.5 * rho * sum(float(np.sum(v * v)) for v in params.values())
        return value, None
    dX, dY, da, db = blocks
    if undirected:
        grads = {"Z": dX, "gamma": da}
    else:
        grads = {"Z": dX, "W": dY, "psi": da, "omega": db}
    value += _regularize(params, grads, rho, list(grads))
    return value, grads


def poisson_ldm_nll(g: Graph, params) -> float:
    """-[sum_edges y log(rate) - sum_pairs (rate + log y!)] over unordered (or ordered) pairs."""
    return poisson_ldm_loss(g, params, 0.0, grad=False)[0]


def _subgraph(g: Graph, rows, cols):
    """Induced subgraph on sorted row/column index sets, reindexed."""
    rmap = np.full(g.n_rows, -1)
    rmap[rows] = np.arange(len(rows))
    cmap = np.full(g.n_cols, -1)
    cmap[cols] = np.arange(len(cols))
    keep = (rmap[g.src] >= 0) & (cmap[g.dst] >= 0)
    return Graph(n_rows=len(rows), n_cols=len(cols), src=rmap[g.src[keep]],
                 dst=cmap[g.dst[keep]], weight=g.weight[keep], directed=g.directed,
                 bipartite=g.bipartite)


def _draw_block(n, S, rng):
    # condition on at least two distinct nodes so every draw carries pairs
    while True:
        nodes = np.unique(rng.integers(n, size=S))
        if len(nodes) >= 2:
            return nodes


def block_sample(g: Graph, S: int, seed):
    """Node sets (rows, cols, scale) for the random-block estimator."""
    if S < 2:
        raise ValueError("random-block sample size must be >= 2")
    rng = np.random.default_rng(seed)
    if g.bipartite:
        rows = np.arange(g.n_rows) if S >= g.n_rows else _draw_block(g.n_rows, S, rng)
        cols = np.arange(g.n_cols) if S >= g.n_cols else _draw_block(g.n_cols, S, rng)
        scale = (g.n_rows * g.n_cols) / (len(rows) * len(cols))
        return rows, cols, scale
    n = g.n_rows
    if S >= n:
        nodes = np.arange(n)
    else:
        nodes = _draw_block(n, S, rng)
    s = len(nodes)
    return nodes, nodes, (n * (n - 1)) / (s * (s - 1))


def random_block_loss(g: Graph, params, S: int, seed, rho: float = 0.0, grad: bool = True):
    """Unbiased block estimate of the Poisson NLL (plus full-parameter prior).

    S nodes are drawn uniformly with replacement and deduplicated to S' distinct
    nodes. Given S', the block is a uniform S'-subset, so every dyad is
    included with probability S'(S'-1)/(n(n-1)); scaling the whole block NLL
    by the inverse of that keeps the estimate unbiased. Bipartite graphs sample
    each mode separately.
    """
    _check_shapes(g, params)
    rows, cols, scale = block_sample(g, S, seed)
    sub = _subgraph(g, rows, cols)
    if "W" in params:
        sp = {"Z": params["Z"][rows], "W": params["W"][cols],
              "psi": params["psi"][rows], "omega": params["omega"][cols]}
    else:
        sp = {"Z": params["Z"][rows], "gamma": params["gamma"][rows]}
    value, sg = poisson_ldm_loss(sub, sp, 0.0, grad=grad)
    value *= scale
    if not grad:
        if rho:
            value += 0.5 * rho * sum(float(np.sum(v * v)) for v in params.values())
        return value, None
    grads = {k: np.zeros_like(v) for k, v in params.items()}
    if "W" in params:
        grads["Z"][rows] = scale * sg["Z"]
        grads["W"][cols] = scale * sg["W"]
        grads["psi"][rows] = scale * sg["psi"]
        grads["omega"][cols] = scale * sg["omega"]
    else:
        grads["Z"][rows] = scale * sg["Z"]
        grads["gamma"][rows] = scale * sg["gamma"]
    value += _regularize(params, grads, rho, list(grads))
    return value, grads


def random_block_nll(g: Graph, params, S: int, seed) -> float:
    return random_block_loss(g, params, S, seed, 0.0, grad=False)[0]


def step_seed(seed: int, step: int) -> int:
    """Per-iteration sampler seed derived from the run seed."""
    return int(np.random.SeedSequence([int(seed), int(step)]).generate_state(1)[0])


def ldm_train(g: Graph, D: int, cfg: TrainConfig, init=None):
    """Fit a Poisson LDM by Adam on the exact or random-block NLL."""
    params = init if init is not None else init_ldm_params(g, D, cfg.seed)
    rho = cfg.rho(0.0)
    if cfg.sampler == "random_block":
        def loss(p, step):
            return random_block_loss(g, p, cfg.sample_size, step_seed(cfg.seed, step), rho)
    elif cfg.sampler == "full":
        def loss(p, step):
            return poisson_ldm_loss(g, p, rho)
    else:
        raise ValueError("the Poisson LDM supports the full and random_block samplers")
    return minimize(loss, params, cfg)


# hybrid memberships

def hm_ldm_rate(i, j, params, s: SimplexConfig):
    """exp(gamma_i + gamma_j - delta^p * ||z_i - z_j||^p) with z = softmax(Zlogit)."""
    Z = softmax(params["Zlogit"])
    diff = Z[np.asarray(i)] - Z[np.asarray(j)]
    dist = np.linalg.norm(diff, axis=-1)
    return np.exp(params["gamma"][i] + params["gamma"][j] - s.scale * dist ** s.p)


def hm_ldm_loss(g: Graph, params, s: SimplexConfig, rho: float = 1.0, grad: bool = True):
    """Exact HM-LDM Poisson NLL plus (rho/2)*||gamma||^2."""
    if g.directed or g.bipartite:
        raise ValueError("the hybrid-membership model is implemented for undirected graphs")
    Z = softmax(params["Zlogit"])
    gam = params["gamma"]
    value, blocks = _poisson_core(g, Z, Z, gam, gam, True, s.scale, s.p, grad=grad)
    value += 0.5 * rho * float(gam @ gam)
    if not grad:
        return value, None
    dZ, _, dg, _ = blocks
    return value, {"Zlogit": softmax_backward(Z, dZ), "gamma": dg + rho * gam}


def hm_ldm_nll(g: Graph, params, s: SimplexConfig) -> float:
    return hm_ldm_loss(g, params, s, 0.0, grad=False)[0]


def init_hm_params(g: Graph, D: int, seed: int) -> dict:
    """Logits ~ Normal(0, 1) over D+1 corners; effects at zero."""
    rng = np.random.default_rng(seed)
    return {"Zlogit": rng.standard_normal((g.n_rows, D + 1)), "gamma": np.zeros(g.n_rows)}


def hm_ldm_train(g: Graph, D: int, cfg: TrainConfig, deltas, p: int = 2, init=None):
    """Train at each delta in ``deltas`` in order, warm-starting from the previous fit.

    Returns a list of (delta, params, LossReport).
    """
    params = init if init is not None else init_hm_params(g, D, cfg.seed)
    rho = cfg.rho(1.0)
    out = []
    for delta in deltas:
        s = SimplexConfig(float(delta), p)

        def loss(pr, step, s=s):
            return hm_ldm_loss(g, pr, s, rho)

        params, report = minimize(loss, params, cfg)
        out.append((float(delta), params, report))
    return out


@dataclass(frozen=True)
class ChampionReport:
    fraction: float
    counts: np.ndarray
    identifiable: bool


def champion_fraction(Z, tau: float = 1e-2) -> ChampionReport:
    """Champions of corner d are rows with z_d >= 1 - tau.

    ``Z`` is a membership matrix on the simplex or a params dict holding
    ``Zlogit``. ``identifiable`` is true when every corner has a champion.
    """
    if isinstance(Z, dict):
        Z = softmax(Z["Zlogit"])
    Z = np.asarray(Z, dtype=float)
    champ = Z >= 1.0 - tau
    counts = champ.sum(axis=0)
    frac = float(champ.any(axis=1).mean()) if len(Z) else 0.0
    return ChampionReport(frac, counts, bool(np.all(counts >= 1)))


def svd_align(Z, tol: float = 1e-8):
    """Centre ``Z`` and rotate onto its principal axes.

    Returns (U * S, unique). Column signs are fixed so the entry of largest
    magnitude in each column is positive. ``unique`` is False (and a warning
    is raised) when two singular values coincide within ``tol`` relative,
    in which case the rotation is not determined.
    """
    Z = np.asarray(Z, dtype=float)
    Zc = Z - Z.mean(axis=0)
    U, S, _ = np.linalg.svd(Zc, full_matrices=False)
    out = U * S
    for k in range(out.shape[1]):
        col = out[:, k]
        if col[np.argmax(np.abs(col))] < 0:
            out[:, k] = -col
    unique = True
    if len(S) > 1:
        gaps = np.abs(np.diff(S))
        if np.any(gaps <= tol * max(S[0], 1e-300)):
            unique = False
            warnings.warn("repeated singular values: alignment is not unique", RuntimeWarning)
    return out, unique


def write_matrix_tsv(path, ids, M) -> None:
    """One row per node: ``node_id v_0 ... v_{D-1}``, floats via repr."""
    M = np.asarray(M, dtype=float)
    with open(path, "w", encoding="utf-8") as fh:
        for tok, row in zip(ids, M):
            fh.write("\t".join([str(tok)] + [repr(float(v)) for v in np.atleast_1d(row)]) + "\n")


def read_matrix_tsv(path):
    ids, rows = [], []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            parts = line.rstrip("\n").split("\t")
            if not parts or parts == [""]:
                continue
            ids.append(parts[0])
            rows.append([float(v) for v in parts[1:]])
    return ids, np.asarray(rows, dtype=float)


def write_effects_tsv(path, ids, effects: dict) -> None:
    """Header ``node_id name ...`` then one row per node."""
    names = list(effects)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\t".join(["node_id"] + names) + "\n")
        for k, tok in enumerate(ids):
            fh.write("\t".join([str(tok)] + [repr(float(effects[n][k])) for n in names]) + "\n")


def read_effects_tsv(path):
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n").split("\t")
        names = header[1:]
        ids, vals = [], []
        for line in fh:
            parts = line.rstrip("\n").split("\t")
            if parts == [""]:
                continue
            ids.append(parts[0])
            vals.append([float(v) for v in parts[1:]])
    vals = np.asarray(vals, dtype=float).reshape(len(ids), len(names))
    return ids, {n: vals[:, k] for k, n in enumerate(names)}
