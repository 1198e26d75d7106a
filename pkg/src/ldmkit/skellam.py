"""Skellam latent distance models for signed networks.

A signed weight y_ij is modelled as the difference of two Poisson counts with
rates lp (attraction, decaying with distance) and lm (repulsion, growing with
distance). Parameter layouts (dict keys):

* ``sldm`` undirected: Z, gamma, delta
* ``sldm`` directed: Z, W, beta, gamma, delta, epsilon (+ U for extra capacity)
* ``shm_ldm`` (undirected): Zlogit (N x (D+1)), beta, psi
* ``slim``: Zlogit (N x D), R (D x D), G (D x M) with ``gamma, delta`` undirected
  or ``beta, gamma, delta, epsilon`` directed; directed adds Wlogit (and Ulogit)
"""
import json
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import expit

from .graph import Graph
from .ldm import SimplexConfig, softmax, softmax_backward
from .optim import TrainConfig, minimize
from .specfun import log_bessel_i

log = logging.getLogger(__name__)

VARIANTS = ("undirected", "directed", "extra_capacity")
RATE_FLOOR = 1e-30
_DIST_FLOOR = 1e-12
_PAIR_CHUNK = 1 << 20


def skellam_log_pmf(y, lp, lm):
    """log P(Y = y) for Y = Pois(lp) - Pois(lm)."""
    y = np.asarray(y)
    lp = np.maximum(np.asarray(lp, dtype=float), RATE_FLOOR)
    lm = np.maximum(np.asarray(lm, dtype=float), RATE_FLOOR)
    x = 2.0 * np.sqrt(lp * lm)
    out = -(lp + lm) + 0.5 * y * (np.log(lp) - np.log(lm)) + log_bessel_i(np.abs(y), x)
    return out[()] if np.ndim(out) == 0 else out


def _pair_terms(y, a, b, grad=True):
    """Per-pair negative log-pmf in terms of log-rates a = ln lp, b = ln lm.

    Returns (sum, dL/da, dL/db); x = 2 exp((a + b)/2) is the Bessel argument.
    """
    ay = np.abs(y)
    x = 2.0 * np.exp(0.5 * (a + b))
    lnI = log_bessel_i(ay, x)
    ea, eb = np.exp(a), np.exp(b)
    val = float(np.sum(ea + eb - 0.5 * y * (a - b) - lnI))
    if not grad:
        return val, None, None
    # I'_v / I_v = I_{v+1} / I_v + v / x, reusing the order-|y| evaluation
    ratio = np.exp(log_bessel_i(ay + 1, x) - lnI) + ay / x
    half = 0.5 * x * ratio
    return val, ea - 0.5 * y - half, eb + 0.5 * y - half


@dataclass(frozen=True)
class SignedPairs:
    """All dyads of a signed graph with their weights (0 for non-edges)."""

    n: int
    directed: bool
    I: np.ndarray
    J: np.ndarray
    y: np.ndarray

    @classmethod
    def from_graph(cls, g: Graph, exclude=None) -> "SignedPairs":
        """``exclude`` lists (i, j) dyads left out of the likelihood (held-out pairs)."""
        if g.bipartite:
            raise ValueError("signed models here are unipartite")
        w = np.asarray(g.weight)
        if not (np.issubdtype(w.dtype, np.integer) or np.all(w == np.round(w))):
            raise ValueError("Skellam models need integer signed weights")
        n = g.n_rows
        if g.directed:
            I, J = np.nonzero(~np.eye(n, dtype=bool))
        else:
            I, J = np.triu_indices(n, k=1)
        keys = I * n + J
        y = np.zeros(len(I), dtype=np.int64)
        ek = g.src * n + g.dst
        pos = np.searchsorted(keys, ek)
        if len(ek) and (np.any(pos >= len(keys)) or np.any(keys[np.minimum(pos, len(keys) - 1)] != ek)):
            raise ValueError("edge outside the admissible pair set")
        y[pos] = np.round(w).astype(np.int64)
        if exclude is not None and len(exclude):
            ex = np.asarray(exclude, dtype=np.int64).reshape(-1, 2)
            a, b = ex[:, 0], ex[:, 1]
            if not g.directed:
                a, b = np.minimum(a, b), np.maximum(a, b)
            keep = ~np.isin(keys, a * n + b)
            I, J, y = I[keep], J[keep], y[keep]
        return cls(n, g.directed, I.astype(np.int64), J.astype(np.int64), y)


def _as_pairs(g) -> SignedPairs:
    return g if isinstance(g, SignedPairs) else SignedPairs.from_graph(g)


def _dist(X, Y, I, J, power=1):
    diff = X[I] - Y[J]
    sq = np.einsum("ij,ij->i", diff, diff)
    if power == 2:
        return sq, diff, np.full_like(sq, 2.0)
    d = np.sqrt(sq)
    # derivative of d w.r.t. x_i is (x_i - y_j) / d
    inv = np.where(d > _DIST_FLOOR, 1.0 / np.maximum(d, _DIST_FLOOR), 0.0)
    return d, diff, inv


def _scatter(n, idx, vals):
    if vals.ndim == 1:
        return np.bincount(idx, vals, minlength=n)
    return np.stack([np.bincount(idx, vals[:, k], minlength=n) for k in range(vals.shape[1])], axis=1)


def _chunks(m):
    for s in range(0, m, _PAIR_CHUNK):
        yield slice(s, min(m, s + _PAIR_CHUNK))


def _variant_of(params):
    if "U" in params or "Ulogit" in params:
        return "extra_capacity"
    if "W" in params or "Wlogit" in params:
        return "directed"
    return "undirected"


def _effect_names(variant):
    if variant == "undirected":
        return ("gamma", "gamma"), ("delta", "delta")
    return ("beta", "gamma"), ("delta", "epsilon")


def _distance_loss(P: SignedPairs, Xp, Yp, Xm, Ym, eff, variant, scale=1.0, power=1, grad=True):
    """Shared Skellam core: lp = exp(e+_i + e+_j - s*d+^p), lm = exp(e-_i + e-_j +/- s*d-^p).

    (Xp, Yp) place the positive-rate distance and (Xm, Ym) the negative one;
    for the extra-capacity variant lm uses exp(... - s*||u_i - w_j||^p).
    Returns value and gradients w.r.t. the four position blocks and effects.
    """
    (pa, pb), (ma, mb) = _effect_names(variant)
    shared = Xm is Xp and Ym is Yp
    sign_m = -1.0 if variant == "extra_capacity" else 1.0
    n = P.n
    total = 0.0
    if grad:
        g = {k: np.zeros(n) for k in {pa, pb, ma, mb}}
        gXp, gYp = np.zeros_like(Xp), np.zeros_like(Yp)
        gXm, gYm = (gXp, gYp) if shared else (np.zeros_like(Xm), np.zeros_like(Ym))
    for sl in _chunks(len(P.I)):
        I, J, y = P.I[sl], P.J[sl], P.y[sl]
        dp, diffp, invp = _dist(Xp, Yp, I, J, power)
        if shared:
            dm, diffm, invm = dp, diffp, invp
        else:
            dm, diffm, invm = _dist(Xm, Ym, I, J, power)
        a = eff[pa][I] + eff[pb][J] - scale * dp
        b = eff[ma][I] + eff[mb][J] + sign_m * scale * dm
        val, la, lb = _pair_terms(y, a, b, grad)
        total += val
        if not grad:
            continue
        g[pa] += _scatter(n, I, la)
        g[pb] += _scatter(n, J, la)
        g[ma] += _scatter(n, I, lb)
        g[mb] += _scatter(n, J, lb)
        cp = (-scale * la * invp)[:, None] * diffp
        cm = (sign_m * scale * lb * invm)[:, None] * diffm
        gXp += _scatter(n, I, cp)
        gYp -= _scatter(n, J, cp)
        gXm += _scatter(n, I, cm)
        gYm -= _scatter(n, J, cm)
    if not grad:
        return total, None
    return total, (gXp, gYp, gXm, gYm, g)


def _prior(params, keys, rho):
    val = 0.0
    grads = {}
    for k in keys:
        v = params[k]
        val += 0.5 * rho * float(np.sum(v * v))
        grads[k] = rho * v
    return val, grads


def _merge(grads, extra):
    for k, v in extra.items():
        grads[k] = grads[k] + v if k in grads else v
    return grads


# SLDM

def sldm_rates(i, j, params, variant: Optional[str] = None):
    """(lp, lm) for the standard, directed or extra-capacity SLDM."""
    variant = variant or _variant_of(params)
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    i, j = np.asarray(i), np.asarray(j)
    Z = params["Z"]
    if variant == "undirected":
        d = np.linalg.norm(Z[i] - Z[j], axis=-1)
        return (np.exp(params["gamma"][i] + params["gamma"][j] - d),
                np.exp(params["delta"][i] + params["delta"][j] + d))
    if "W" not in params:
        raise ValueError(f"variant {variant!r} needs receiver embeddings W")
    W = params["W"]
    d = np.linalg.norm(Z[i] - W[j], axis=-1)
    lp = np.exp(params["beta"][i] + params["gamma"][j] - d)
    if variant == "directed":
        return lp, np.exp(params["delta"][i] + params["epsilon"][j] + d)
    if "U" not in params:
        raise ValueError("extra_capacity variant needs negative-sender embeddings U")
    du = np.linalg.norm(params["U"][i] - W[j], axis=-1)
    return lp, np.exp(params["delta"][i] + params["epsilon"][j] - du)


def sldm_loss(g, params, rho: float = 1.0, variant: Optional[str] = None, grad: bool = True):
    """Skellam MAP loss: -sum_pairs log Skellam(y | lp, lm) + (rho/2)*||theta||^2."""
    P = _as_pairs(g)
    variant = variant or _variant_of(params)
    if variant == "undirected":
        if P.directed:
            raise ValueError("undirected variant on a directed graph")
        Z = params["Z"]
        val, parts = _distance_loss(P, Z, Z, Z, Z, params, variant, grad=grad)
        keys = ["Z", "gamma", "delta"]
    else:
        if not P.directed:
            raise ValueError(f"variant {variant!r} needs a directed graph")
        if "W" not in params or (variant == "extra_capacity" and "U" not in params):
            raise ValueError(f"variant {variant!r} is missing parameter blocks")
        Z, W = params["Z"], params["W"]
        Xm = params["U"] if variant == "extra_capacity" else Z
        val, parts = _distance_loss(P, Z, W, Xm, W, params, variant, grad=grad)
        keys = ["Z", "W", "beta", "gamma", "delta", "epsilon"]
        if variant == "extra_capacity":
            keys.append("U")
    pv, pg = _prior(params, keys, rho)
    if not grad:
        return val + pv, None
    gXp, gYp, gXm, gYm, ge = parts
    if variant == "undirected":
        grads = {"Z": gXp + gYp, **ge}
        if gXm is not gXp:
            grads["Z"] = grads["Z"] + gXm + gYm
    elif variant == "directed":
        grads = {"Z": gXp, "W": gYp, **ge}
    else:
        grads = {"Z": gXp, "W": gYp + gYm, "U": gXm, **ge}
    return val + pv, _merge(grads, pg)


def skellam_map_loss(g, params, rho: float = 1.0, variant: Optional[str] = None) -> float:
    return sldm_loss(g, params, rho, variant, grad=False)[0]


# sHM-LDM

def shm_ldm_rates(i, j, params, s: SimplexConfig):
    Z = softmax(params["Zlogit"])
    i, j = np.asarray(i), np.asarray(j)
    dist = s.scale * np.linalg.norm(Z[i] - Z[j], axis=-1) ** s.p
    return (np.exp(params["beta"][i] + params["beta"][j] - dist),
            np.exp(params["psi"][i] + params["psi"][j] + dist))


def shm_eigen_rates(i, j, params, s: SimplexConfig):
    """p = 2 rates through the Eigenmodel form: lp uses a non-negative inner
    product with beta~ = beta - delta^2 ||z||^2, lm a non-positive one with
    psi~ = psi + delta^2 ||z||^2."""
    if s.p != 2:
        raise ValueError("the Eigenmodel identity holds for p = 2")
    Z = softmax(params["Zlogit"])
    c = float(s.delta) ** 2
    sq = np.einsum("ij,ij->i", Z, Z)
    bt = params["beta"] - c * sq
    pt = params["psi"] + c * sq
    i, j = np.asarray(i), np.asarray(j)
    inner = np.einsum("...k,...k->...", Z[i], Z[j])
    return np.exp(bt[i] + bt[j] + 2 * c * inner), np.exp(pt[i] + pt[j] - 2 * c * inner)


def shm_ldm_loss(g, params, s: SimplexConfig, rho: float = 1.0, grad: bool = True):
    """sHM-LDM MAP loss; the prior covers beta and psi only (flat Dirichlet on z)."""
    P = _as_pairs(g)
    if P.directed:
        raise ValueError("sHM-LDM is implemented for undirected graphs")
    Z = softmax(params["Zlogit"])
    eff = {"gamma": params["beta"], "delta": params["psi"]}
    val, parts = _distance_loss(P, Z, Z, Z, Z, eff, "undirected", s.scale, s.p, grad)
    pv, pg = _prior(params, ["beta", "psi"], rho)
    if not grad:
        return val + pv, None
    gXp, gYp, _, _, ge = parts
    grads = {"Zlogit": softmax_backward(Z, gXp + gYp), "beta": ge["gamma"], "psi": ge["delta"]}
    return val + pv, _merge(grads, pg)


# SLIM

def _slim_blocks(params):
    names = ["Zlogit"]
    if "Wlogit" in params:
        names.append("Wlogit")
    if "Ulogit" in params:
        names.append("Ulogit")
    return names


def slim_archetypes(params):
    """A = R * Zcat^T * C with C the column-normalised, gated memberships.

    Returns (A, pieces) where pieces holds intermediates for backprop.
    """
    names = _slim_blocks(params)
    Zs = [softmax(params[k]) for k in names]
    Zcat = np.vstack(Zs)
    S = expit(params["G"].T)
    Mt = Zcat * S
    col = Mt.sum(axis=0)
    dead = col <= 1e-300
    if np.any(dead):
        log.warning("gate column with no mass; using uniform weights for %d column(s)", int(dead.sum()))
        Mt = Mt.copy()
        Mt[:, dead] = 1.0
        col = np.where(dead, Mt.shape[0], col)
    C = Mt / col
    B0 = Zcat.T @ C
    A = params["R"] @ B0
    return A, {"names": names, "Zs": Zs, "Zcat": Zcat, "S": S, "col": col, "C": C,
               "B0": B0, "dead": dead}


def slim_rates(i, j, params, variant: Optional[str] = None):
    variant = variant or _variant_of(params)
    A, pc = slim_archetypes(params)
    pos = [Zb @ A.T for Zb in pc["Zs"]]
    i, j = np.asarray(i), np.asarray(j)
    if variant == "undirected":
        d = np.linalg.norm(pos[0][i] - pos[0][j], axis=-1)
        return (np.exp(params["gamma"][i] + params["gamma"][j] - d),
                np.exp(params["delta"][i] + params["delta"][j] + d))
    d = np.linalg.norm(pos[0][i] - pos[1][j], axis=-1)
    lp = np.exp(params["beta"][i] + params["gamma"][j] - d)
    if variant == "directed":
        return lp, np.exp(params["delta"][i] + params["epsilon"][j] + d)
    du = np.linalg.norm(pos[2][i] - pos[1][j], axis=-1)
    return lp, np.exp(params["delta"][i] + params["epsilon"][j] - du)


def slim_loss(g, params, rho: float = 1.0, variant: Optional[str] = None, grad: bool = True):
    """SLIM MAP loss with prior (rho/2)(||A||^2 + effects^2) in place of ||Z||^2."""
    P = _as_pairs(g)
    variant = variant or _variant_of(params)
    A, pc = slim_archetypes(params)
    pos = [Zb @ A.T for Zb in pc["Zs"]]
    if variant == "undirected":
        X = pos[0]
        val, parts = _distance_loss(P, X, X, X, X, params, variant, grad=grad)
        ekeys = ["gamma", "delta"]
    else:
        Xm = pos[2] if variant == "extra_capacity" else pos[0]
        val, parts = _distance_loss(P, pos[0], pos[1], Xm, pos[1], params, variant, grad=grad)
        ekeys = ["beta", "gamma", "delta", "epsilon"]
    pv, pg = _prior(params, ekeys, rho)
    val += pv + 0.5 * rho * float(np.sum(A * A))
    if not grad:
        return val, None
    gXp, gYp, gXm, gYm, ge = parts
    if variant == "undirected":
        dpos = [gXp + gYp]
    elif variant == "directed":
        dpos = [gXp, gYp]
    else:
        dpos = [gXp, gYp + gYm, gXm]
    # positions are Zb @ A^T, so dA = sum_b dpos_b^T Zb and dZb = dpos_b A
    dA = rho * A
    dZs = []
    for Zb, dp in zip(pc["Zs"], dpos):
        dA = dA + dp.T @ Zb
        dZs.append(dp @ A)
    dR = dA @ pc["B0"].T
    dB0 = params["R"].T @ dA
    Zcat, C, S, col = pc["Zcat"], pc["C"], pc["S"], pc["col"]
    dZcat = np.vstack(dZs) + C @ dB0.T
    dC = Zcat @ dB0
    dMt = (dC - np.sum(dC * C, axis=0, keepdims=True)) / col
    dMt[:, pc["dead"]] = 0.0
    dZcat += dMt * S
    dG = (dMt * Zcat * S * (1.0 - S)).T
    grads = {"R": dR, "G": dG, **{k: ge[k] for k in ekeys}}
    off = 0
    for name, Zb in zip(pc["names"], pc["Zs"]):
        grads[name] = softmax_backward(Zb, dZcat[off:off + len(Zb)])
        off += len(Zb)
    return val, _merge(grads, pg)


# initialisation and training

MODELS = ("sldm", "shm_ldm", "slim")


def init_skellam_params(n: int, D: int, model: str, variant: str, seed: int) -> dict:
    """Embeddings and R ~ Normal(0, 0.1^2), effects 0, simplex logits ~
    Normal(0, 1), gate logits 0."""
    rng = np.random.default_rng(seed)
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    if model == "sldm":
        p = {"Z": 0.1 * rng.standard_normal((n, D))}
        if variant != "undirected":
            p["W"] = 0.1 * rng.standard_normal((n, D))
        if variant == "extra_capacity":
            p["U"] = 0.1 * rng.standard_normal((n, D))
    elif model == "shm_ldm":
        if variant != "undirected":
            raise ValueError("sHM-LDM supports the undirected variant only")
        return {"Zlogit": rng.standard_normal((n, D + 1)), "beta": np.zeros(n), "psi": np.zeros(n)}
    elif model == "slim":
        p = {"Zlogit": rng.standard_normal((n, D))}
        blocks = 1
        if variant != "undirected":
            p["Wlogit"] = rng.standard_normal((n, D))
            blocks = 2
        if variant == "extra_capacity":
            p["Ulogit"] = rng.standard_normal((n, D))
            blocks = 3
        p["R"] = 0.1 * rng.standard_normal((D, D))
        p["G"] = np.zeros((D, blocks * n))
    else:
        raise ValueError(f"unknown model {model!r}")
    names = ("gamma", "delta") if variant == "undirected" else ("beta", "gamma", "delta", "epsilon")
    for k in names:
        p[k] = np.zeros(n)
    return p


def skellam_loss(g, params, model: str, variant: str, rho: float, simplex: Optional[SimplexConfig] = None,
                 grad: bool = True):
    if model == "sldm":
        return sldm_loss(g, params, rho, variant, grad)
    if model == "shm_ldm":
        return shm_ldm_loss(g, params, simplex or SimplexConfig(), rho, grad)
    if model == "slim":
        return slim_loss(g, params, rho, variant, grad)
    raise ValueError(f"unknown model {model!r}")


def skellam_rates(i, j, params, model: str, variant: str, simplex: Optional[SimplexConfig] = None):
    if model == "sldm":
        return sldm_rates(i, j, params, variant)
    if model == "shm_ldm":
        return shm_ldm_rates(i, j, params, simplex or SimplexConfig())
    if model == "slim":
        return slim_rates(i, j, params, variant)
    raise ValueError(f"unknown model {model!r}")


def skellam_train(g: Graph, D: int, model: str, variant: str, cfg: TrainConfig,
                  simplex: Optional[SimplexConfig] = None, init=None, exclude=None):
    """MAP fit by Adam; returns (params, LossReport).

    ``exclude`` drops held-out dyads from the likelihood instead of treating
    them as observed zeros.
    """
    if model not in MODELS:
        raise ValueError(f"unknown model {model!r}")
    if (variant != "undirected") != g.directed:
        raise ValueError(f"variant {variant!r} does not match the graph's directedness")
    if cfg.sampler != "full":
        raise ValueError("Skellam models train on the full pair set")
    P = SignedPairs.from_graph(g, exclude)
    params = init if init is not None else init_skellam_params(g.n_rows, D, model, variant, cfg.seed)
    rho = cfg.rho(1.0)

    def loss(p, step):
        return skellam_loss(P, p, model, variant, rho, simplex)

    return minimize(loss, params, cfg)


# generative polarization model

@dataclass(frozen=True)
class GenerativeConfig:
    N: int = 200
    D: int = 3
    alpha: float = 0.05
    mu_gamma: float = -0.5
    sigma_gamma: float = 0.5
    mu_delta: float = -2.5
    sigma_delta: float = 0.5
    mu_A: float = 0.0
    sigma_A: float = 1.5
    seed: int = 0

    def __post_init__(self):
        if self.N < 2 or self.D < 1:
            raise ValueError("need N >= 2 and D >= 1")
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        for k in ("sigma_gamma", "sigma_delta", "sigma_A"):
            if not getattr(self, k) > 0:
                raise ValueError(f"{k} must be positive")


def generate_polarized(cfg: GenerativeConfig):
    """Sample a signed network from the archetypal polarization model.

    gamma, delta ~ Normal; archetype columns of A ~ Normal(mu_A, sigma_A^2 I);
    z_i ~ Dirichlet(alpha * 1); y_ij = Pois(lp) - Pois(lm) for i < j with
    lp = exp(gamma_i + gamma_j - ||A(z_i - z_j)||) and lm = exp(delta_i + delta_j
    + ||A(z_i - z_j)||). Returns (Graph of the nonzero dyads, truth dict).
    """
    rng = np.random.default_rng(cfg.seed)
    N, D = cfg.N, cfg.D
    gamma = rng.normal(cfg.mu_gamma, cfg.sigma_gamma, N)
    delta = rng.normal(cfg.mu_delta, cfg.sigma_delta, N)
    A = rng.normal(cfg.mu_A, cfg.sigma_A, (D, D))
    Z = rng.dirichlet(np.full(D, cfg.alpha), size=N)
    # tiny-alpha draws can underflow to all-zero rows; renormalise defensively
    bad = ~np.isfinite(Z).all(axis=1) | (Z.sum(axis=1) <= 0)
    if np.any(bad):
        Z[bad] = np.eye(D)[rng.integers(D, size=int(bad.sum()))]
    Z = Z / Z.sum(axis=1, keepdims=True)
    I, J = np.triu_indices(N, k=1)
    X = Z @ A.T
    d = np.linalg.norm(X[I] - X[J], axis=1)
    lp = np.exp(gamma[I] + gamma[J] - d)
    lm = np.exp(delta[I] + delta[J] + d)
    y = rng.poisson(lp) - rng.poisson(lm)
    nz = y != 0
    g = Graph(n_rows=N, n_cols=N, src=I[nz], dst=J[nz], weight=y[nz])
    truth = {"A": A, "Z": Z, "gamma": gamma, "delta": delta, "config": cfg.__dict__.copy()}
    return g, truth


def write_truth_json(truth: dict, path) -> None:
    out = {k: (np.asarray(v).tolist() if isinstance(v, np.ndarray) else v) for k, v in truth.items()}
    with open(path, "w") as fh:
        json.dump(out, fh, indent=1, sort_keys=True)


def read_truth_json(path) -> dict:
    with open(path) as fh:
        d = json.load(fh)
    return {k: (np.asarray(v, dtype=float) if isinstance(v, list) else v) for k, v in d.items()}
