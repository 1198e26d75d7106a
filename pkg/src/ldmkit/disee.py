"""Single-event Poisson process embeddings with per-node impact functions.

A timed directed edge ``src -> dst`` at time t records that source ``src``
(e.g. a citing paper) linked to target ``dst`` once. For target i and source j

    lambda_ij(t) = f_i(t) * exp(alpha_i + beta_j - ||z_i - w_j||)

where f_i is a truncated-normal or log-normal density in absolute time (or
the constant 1/(hi - lo), which gives a homogeneous process). Each
admissible ordered (target, source) dyad contributes ``ln(1 + Lambda_ij)``,
with Lambda integrated from the target's appearance time to the horizon, and
each event adds ``-ln lambda_ij(t_ij)``.

Parameters are a dict: Z (targets), W (sources), alpha, beta, mu, log_sigma.
"""
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import minimize as sp_minimize
from scipy.special import ndtri

from .graph import Graph, default_appearance_times
from .ldm import step_seed
from .optim import TrainConfig, minimize
from .specfun import (DegenerateSupportError, log_normal_pdf, normal_interval_mass,
                      std_normal_cdf, std_normal_pdf, truncated_normal_pdf)

FAMILIES = ("truncated_normal", "log_normal", "uniform")
_LOG_SQRT_2PI = 0.5 * np.log(2.0 * np.pi)
_DIST_FLOOR = 1e-12


class DataError(ValueError):
    """Event data inconsistent with the single-event model."""


class DegenerateFitError(ValueError):
    """Too few events to fit an impact function."""


@dataclass(frozen=True)
class ImpactConfig:
    family: str = "truncated_normal"
    lo: float = 0.0
    hi: Optional[float] = None  # None -> graph horizon

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"family must be one of {FAMILIES}")
        if self.hi is not None and not self.lo < self.hi:
            raise ValueError("truncation bounds need lo < hi")

    def bounds(self, horizon: float):
        hi = float(horizon) if self.hi is None else float(self.hi)
        if not self.lo < hi:
            raise ValueError("truncation bounds need lo < hi")
        return float(self.lo), hi


def sepp_event_prob(Lambda):
    """Probability of the single event occurring: Lambda / (1 + Lambda)."""
    L = np.asarray(Lambda, dtype=float)
    if np.any(L < 0):
        raise ValueError("Lambda must be nonnegative")
    out = L / (1.0 + L)
    return out[()] if out.ndim == 0 else out


# impact functions

def _phi_x(x):
    # phi(x) * x with the limit 0 at infinity
    with np.errstate(invalid="ignore"):
        return np.where(np.isfinite(x), std_normal_pdf(x) * x, 0.0)


def _std(t, mu, sigma):
    with np.errstate(divide="ignore"):
        return (t - mu) / sigma


def impact_pdf(t, mu, sigma, impact: ImpactConfig, horizon: float):
    lo, hi = impact.bounds(horizon)
    if impact.family == "truncated_normal":
        return truncated_normal_pdf(t, mu, sigma, lo, hi)
    if impact.family == "uniform":
        t, _ = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(mu, dtype=float))
        out = np.where((t >= lo) & (t <= hi), 1.0 / (hi - lo), 0.0)
        return out[()] if out.ndim == 0 else out
    return log_normal_pdf(t, mu, sigma)


def _interval(a, b, mu, sigma, family, lo, hi):
    """F = impact mass on [a, b] and its derivatives in mu and log sigma."""
    if family == "truncated_normal":
        a = np.clip(a, lo, hi)
        b = np.clip(b, lo, hi)
        za, zb = _std(a, mu, sigma), _std(b, mu, sigma)
        zl, zh = _std(lo, mu, sigma), _std(hi, mu, sigma)
        num = normal_interval_mass(za, zb)
        den = normal_interval_mass(zl, zh)
        if np.any(den < 1e-300):
            raise DegenerateSupportError("impact truncation interval carries no mass")
        F = num / den
        dnum_mu = (std_normal_pdf(za) - std_normal_pdf(zb)) / sigma
        dden_mu = (std_normal_pdf(zl) - std_normal_pdf(zh)) / sigma
        dnum_ls = _phi_x(za) - _phi_x(zb)
        dden_ls = _phi_x(zl) - _phi_x(zh)
        dmu = dnum_mu / den - F * dden_mu / den
        dls = dnum_ls / den - F * dden_ls / den
        return F, dmu, dls
    if family == "uniform":
        F = (np.clip(b, lo, hi) - np.clip(a, lo, hi)) / (hi - lo) + 0.0 * mu
        return F, np.zeros_like(F), np.zeros_like(F)
    with np.errstate(divide="ignore"):
        la = np.log(np.maximum(a, 0.0))
        lb = np.log(np.maximum(b, 0.0))
    za, zb = _std(la, mu, sigma), _std(lb, mu, sigma)
    F = normal_interval_mass(za, zb)
    dmu = (np.where(np.isfinite(za), std_normal_pdf(za), 0.0)
           - np.where(np.isfinite(zb), std_normal_pdf(zb), 0.0)) / sigma
    dls = _phi_x(za) - _phi_x(zb)
    return F, dmu, dls


def _log_impact(t, mu, sigma, family, lo, hi):
    """ln f(t) with derivatives in mu and log sigma."""
    if family == "truncated_normal":
        z = (t - mu) / sigma
        zl, zh = _std(lo, mu, sigma), _std(hi, mu, sigma)
        den = normal_interval_mass(zl, zh)
        if np.any(den < 1e-300):
            raise DegenerateSupportError("impact truncation interval carries no mass")
        val = -0.5 * z * z - _LOG_SQRT_2PI - np.log(sigma) - np.log(den)
        dmu = z / sigma - (std_normal_pdf(zl) - std_normal_pdf(zh)) / (sigma * den)
        dls = z * z - 1.0 - (_phi_x(zl) - _phi_x(zh)) / den
        return val, dmu, dls
    if family == "uniform":
        val = np.full(np.broadcast(t, mu).shape, -np.log(hi - lo))
        return val, np.zeros_like(val), np.zeros_like(val)
    lt = np.log(t)
    z = (lt - mu) / sigma
    val = -0.5 * z * z - _LOG_SQRT_2PI - np.log(sigma) - lt
    return val, z / sigma, z * z - 1.0


# admissible pairs

@dataclass(frozen=True)
class EventPairs:
    """Admissible (target, source) dyads of a single-event graph.

    A dyad is admissible when it carries an event or when the source appears
    no earlier than the target. ``time`` is NaN for dyads without an event.
    """

    n: int
    target: np.ndarray
    source: np.ndarray
    event: np.ndarray
    time: np.ndarray
    appear: np.ndarray
    horizon: float

    @classmethod
    def from_graph(cls, g: Graph, exclude=None) -> "EventPairs":
        """``exclude`` lists (source, target) dyads, as in edge lists, to drop."""
        if not (g.directed and g.timed) or g.bipartite:
            raise DataError("single-event models need a directed, timed, unipartite graph")
        if np.any(g.weight != 1):
            raise DataError("single-event graphs carry one unweighted event per dyad")
        n = g.n_rows
        appear = default_appearance_times(g)
        tgt_e, src_e, t_e = g.dst, g.src, g.time
        early = t_e < appear[tgt_e]
        if np.any(early):
            k = int(np.argmax(early))
            raise DataError(f"event {k} at t={t_e[k]} precedes its target's appearance {appear[tgt_e[k]]}")
        tt, ss = np.nonzero((appear[None, :] >= appear[:, None]) & ~np.eye(n, dtype=bool))
        keys = np.union1d(tt * n + ss, tgt_e * n + src_e)
        if exclude is not None and len(exclude):
            ex = np.asarray(exclude, dtype=np.int64).reshape(-1, 2)
            drop = ex[:, 1] * n + ex[:, 0]
            keys = keys[~np.isin(keys, drop)]
            hit = np.isin(tgt_e * n + src_e, drop)
            tgt_e, src_e, t_e = tgt_e[~hit], src_e[~hit], t_e[~hit]
        target, source = keys // n, keys % n
        pos = np.searchsorted(keys, tgt_e * n + src_e)
        event = np.zeros(len(keys), dtype=bool)
        event[pos] = True
        time = np.full(len(keys), np.nan)
        time[pos] = t_e
        return cls(n, target, source, event, time, appear, float(g.horizon))


def _as_pairs(g) -> EventPairs:
    return g if isinstance(g, EventPairs) else EventPairs.from_graph(g)


def _multiplier(params, I, J):
    diff = params["Z"][I] - params["W"][J]
    d = np.sqrt(np.einsum("ij,ij->i", diff, diff))
    return params["alpha"][I] + params["beta"][J] - d, diff, d


def cumulative_intensity(i, j, t0, t1, params, impact: ImpactConfig, horizon: float):
    """Lambda_ij(t0, t1) = exp(alpha_i + beta_j - d) * F_i(t0, t1) for target i, source j."""
    t0 = np.asarray(t0, dtype=float)
    t1 = np.asarray(t1, dtype=float)
    if np.any(t0 > t1):
        raise ValueError("cumulative_intensity needs t0 <= t1")
    i, j = np.atleast_1d(i), np.atleast_1d(j)
    logm, _, _ = _multiplier(params, i, j)
    lo, hi = impact.bounds(horizon)
    F, _, _ = _interval(t0, t1, params["mu"][i], np.exp(params["log_sigma"][i]), impact.family, lo, hi)
    out = np.exp(logm) * F
    return out[0] if out.size == 1 and np.ndim(t0) == 0 else out


def disee_intensity(i, j, t, params, impact: ImpactConfig, horizon: float):
    """lambda_ij(t) = f_i(t) * exp(alpha_i + beta_j - ||z_i - w_j||)."""
    i, j = np.atleast_1d(i), np.atleast_1d(j)
    logm, _, _ = _multiplier(params, i, j)
    f = impact_pdf(t, params["mu"][i], np.exp(params["log_sigma"][i]), impact, horizon)
    out = f * np.exp(logm)
    return out[0] if out.size == 1 and np.ndim(t) == 0 else out


def _sigma_ref(impact: ImpactConfig, horizon: float) -> float:
    lo, hi = impact.bounds(horizon)
    return float(np.log(0.1 * (hi - lo))) if impact.family == "truncated_normal" else 0.0


def _sepp_terms(P: EventPairs, params, impact, idx, weights, rho, grad, sigma_prior=0.0):
    """Weighted sum over pair subset ``idx`` of ln(1 + Lambda) minus event log-rates.

    ``sigma_prior`` adds (k/2) * sum (log sigma_i - s0)^2; without it a target
    with a single event drives sigma_i to zero.
    """
    lo, hi = impact.bounds(P.horizon)
    n = P.n
    mu = params["mu"]
    sig = np.exp(params["log_sigma"])
    F, Fmu, Fls = _interval(P.appear, np.full(n, P.horizon), mu, sig, impact.family, lo, hi)
    if impact.family == "log_normal" and np.any(P.time[P.event] <= 0):
        raise DataError("log-normal impact needs event times > 0")
    I, J = P.target[idx], P.source[idx]
    logm, diff, d = _multiplier(params, I, J)
    Lam = np.exp(logm) * F[I]
    ev = P.event[idx]
    val = float(np.sum(weights * np.log1p(Lam)))
    lf, lf_mu, lf_ls = _log_impact(P.time[idx][ev], mu[I[ev]], sig[I[ev]], impact.family, lo, hi)
    val -= float(np.sum(lf + logm[ev]))
    keys = ("Z", "W", "alpha", "beta", "mu", "log_sigma")
    val += 0.5 * rho * sum(float(np.sum(params[k] ** 2)) for k in ("Z", "W", "alpha", "beta"))
    ls_dev = params["log_sigma"] - _sigma_ref(impact, P.horizon)
    val += 0.5 * sigma_prior * float(np.sum(ls_dev ** 2))
    if not grad:
        return val, None
    q = weights * Lam / (1.0 + Lam)  # d/d logm of the weighted ln(1 + Lambda)
    dlogm = q - ev
    qF = np.where(F[I] > 0, q / np.maximum(F[I], 1e-300), 0.0)  # d/dF per pair
    dalpha = np.bincount(I, dlogm, minlength=n)
    dbeta = np.bincount(J, dlogm, minlength=n)
    dF = np.bincount(I, qF, minlength=n)
    dmu = dF * Fmu - np.bincount(I[ev], lf_mu, minlength=n)
    dls = dF * Fls - np.bincount(I[ev], lf_ls, minlength=n)
    inv = np.where(d > _DIST_FLOOR, 1.0 / np.maximum(d, _DIST_FLOOR), 0.0)
    c = (-dlogm * inv)[:, None] * diff
    D = diff.shape[1]
    dZ = np.stack([np.bincount(I, c[:, k], minlength=n) for k in range(D)], axis=1)
    dW = -np.stack([np.bincount(J, c[:, k], minlength=n) for k in range(D)], axis=1)
    grads = dict(zip(keys, (dZ, dW, dalpha, dbeta, dmu, dls)))
    for k in ("Z", "W", "alpha", "beta"):
        grads[k] = grads[k] + rho * params[k]
    grads["log_sigma"] = grads["log_sigma"] + sigma_prior * ls_dev
    return val, grads


def sepp_loss(g, params, impact: ImpactConfig, rho: float = 0.0, grad: bool = True, sigma_prior: float = 0.0):
    """Exact SE-PP negative log-likelihood over all admissible dyads."""
    P = _as_pairs(g)
    idx = np.arange(len(P.target))
    return _sepp_terms(P, params, impact, idx, np.ones(len(idx)), rho, grad, sigma_prior)


def sepp_nll(g, params, impact: ImpactConfig) -> float:
    return sepp_loss(g, params, impact, grad=False)[0]


def _degrees(P: EventPairs):
    t, s = P.target[P.event], P.source[P.event]
    return np.bincount(t, minlength=P.n) + np.bincount(s, minlength=P.n)


def control_sample(P: EventPairs, multiplier: float, rng: np.random.Generator):
    """Per target i, draw n_i = min(N_i, max(1, ceil(c * degree_i))) of its N_i
    non-event dyads without replacement. Returns (pair index, weight N_i/n_i)."""
    deg = _degrees(P)
    non = np.flatnonzero(~P.event)
    order = np.argsort(P.target[non], kind="stable")
    non = non[order]
    counts = np.bincount(P.target[non], minlength=P.n)
    starts = np.concatenate([[0], np.cumsum(counts)])
    idx, w = [], []
    for i in np.flatnonzero(counts):
        Ni = int(counts[i])
        ni = min(Ni, max(1, int(np.ceil(multiplier * deg[i]))))
        pick = rng.choice(Ni, size=ni, replace=False) if ni < Ni else np.arange(Ni)
        idx.append(non[starts[i] + pick])
        w.append(np.full(ni, Ni / ni))
    if not idx:
        return np.zeros(0, dtype=np.int64), np.zeros(0)
    return np.concatenate(idx), np.concatenate(w)


def case_control_loss(g, params, impact: ImpactConfig, multiplier: float = 5.0, seed: int = 0,
                      rho: float = 0.0, grad: bool = True, sigma_prior: float = 0.0):
    """Exact event terms plus a per-target Horvitz-Thompson estimate of the
    non-event sum; unbiased for the full SE-PP NLL."""
    if multiplier < 1:
        raise ValueError("multiplier must be >= 1")
    P = _as_pairs(g)
    cidx, cw = control_sample(P, multiplier, np.random.default_rng(seed))
    eidx = np.flatnonzero(P.event)
    idx = np.concatenate([eidx, cidx])
    w = np.concatenate([np.ones(len(eidx)), cw])
    return _sepp_terms(P, params, impact, idx, w, rho, grad, sigma_prior)


def case_control_nll(g, params, impact: ImpactConfig, multiplier: float = 5.0, seed: int = 0) -> float:
    return case_control_loss(g, params, impact, multiplier, seed, grad=False)[0]


# impact function model (per-node fit on raw event times)

def ifm_fit(event_times, family: str = "truncated_normal", lo: float = 0.0, hi: Optional[float] = None):
    """Maximum-likelihood (mu, sigma) of one node's impact function."""
    t = np.asarray(event_times, dtype=float).ravel()
    if len(t) < 2:
        raise DegenerateFitError("an impact fit needs at least 2 events")
    if family == "uniform":
        raise ValueError("the uniform impact has no parameters to fit")
    if family == "log_normal":
        if np.any(t <= 0):
            raise DataError("log-normal impact needs positive event times")
        lt = np.log(t)
        s = float(lt.std())
        if s <= 0:
            raise DegenerateFitError("all event times coincide")
        return float(lt.mean()), s
    if family != "truncated_normal":
        raise ValueError(f"family must be one of {FAMILIES}")
    hi = float(t.max()) if hi is None else float(hi)
    if np.any(t < lo) or np.any(t > hi):
        raise DataError("event times outside the truncation bounds")
    s0 = float(t.std())
    if s0 <= 0:
        raise DegenerateFitError("all event times coincide")

    def f(x):
        mu, ls = x
        v, dmu, dls = _log_impact(t, mu, np.exp(ls), family, lo, hi)
        return -float(v.sum()), -np.array([dmu.sum(), dls.sum()])

    res = sp_minimize(f, np.array([t.mean(), np.log(s0)]), jac=True, method="L-BFGS-B")
    return float(res.x[0]), float(np.exp(res.x[1]))


# simulation and training

def init_disee_params(g: Graph, D: int, impact: ImpactConfig, seed: int) -> dict:
    """Embeddings ~ Normal(0, 0.1^2), effects 0; impact location and scale
    from each target's observed event times where available."""
    rng = np.random.default_rng(seed)
    n = g.n_rows
    lo, hi = impact.bounds(g.horizon)
    appear = default_appearance_times(g)
    mu = np.zeros(n)
    ls = np.zeros(n)
    if impact.family != "uniform":
        for i in range(n):
            t = g.time[g.dst == i]
            if impact.family == "log_normal":
                t = t[t > 0]
                base = np.log(t) if len(t) else np.array([np.log(max(0.5 * (appear[i] + hi), 1e-6))])
            else:
                base = t if len(t) else np.array([0.5 * (appear[i] + hi)])
            s = float(base.std()) if len(base) > 1 else 0.0
            mu[i] = float(base.mean())
            fallback = 0.25 * (hi - lo) if impact.family == "truncated_normal" else 0.5
            ls[i] = np.log(s if s > 1e-3 else fallback)
    return {"Z": 0.1 * rng.standard_normal((n, D)), "W": 0.1 * rng.standard_normal((n, D)),
            "alpha": np.zeros(n), "beta": np.zeros(n), "mu": mu, "log_sigma": ls}


SIGMA_PRIOR = 1.0


def disee_train(g: Graph, D: int, family: str, cfg: TrainConfig, init=None, impact: Optional[ImpactConfig] = None,
                exclude=None, sigma_prior: float = SIGMA_PRIOR):
    """Adam on the exact SE-PP NLL (sampler ``full``) or its case-control
    estimate (``case_control``, fresh controls each iteration), plus the
    log-scale prior of weight ``sigma_prior``."""
    impact = impact or ImpactConfig(family)
    if impact.family != family:
        raise ValueError("family disagrees with the impact config")
    P = EventPairs.from_graph(g, exclude)
    params = init if init is not None else init_disee_params(g, D, impact, cfg.seed)
    rho = cfg.rho(0.0)
    if cfg.sampler == "full":
        def loss(p, step):
            return sepp_loss(P, p, impact, rho, sigma_prior=sigma_prior)
    elif cfg.sampler == "case_control":
        def loss(p, step):
            return case_control_loss(P, p, impact, cfg.multiplier, step_seed(cfg.seed, step), rho,
                                     sigma_prior=sigma_prior)
    else:
        raise ValueError("DISEE supports the full and case_control samplers")
    return minimize(loss, params, cfg)


def _sample_impact_times(rng, a, mu, sigma, family, lo, hi):
    """Inverse-CDF draws from f restricted to [a, hi]."""
    u = rng.random(len(mu))
    if family == "truncated_normal":
        ca = std_normal_cdf((np.clip(a, lo, hi) - mu) / sigma)
        ch = std_normal_cdf((hi - mu) / sigma)
        t = mu + sigma * ndtri(ca + u * (ch - ca))
        return np.clip(t, a, hi)
    if family == "uniform":
        a = np.clip(a, lo, hi)
        return a + u * (hi - a)
    with np.errstate(divide="ignore"):
        ca = std_normal_cdf((np.log(np.maximum(a, 0.0)) - mu) / sigma)
    ch = std_normal_cdf((np.log(hi) - mu) / sigma)
    t = np.exp(mu + sigma * ndtri(ca + u * (ch - ca)))
    return np.clip(t, np.maximum(a, 1e-12), hi)


def simulate_single_event(N: int = 100, D: int = 2, family: str = "truncated_normal", horizon: float = 10.0,
                          seed: int = 0, alpha_mean: float = 2.0, embed_scale: float = 2.0):
    """Draw a single-event network from known DISEE parameters.

    Appearance times are sorted Uniform(0, T/2); impact peaks sit 0.1T to 0.3T
    after appearance with scales between 0.05T and 0.15T. Every admissible
    dyad fires with probability Lambda/(1 + Lambda) at a time drawn from the
    target's impact density on [t_i, T]. Returns (Graph, truth params).
    """
    if family not in FAMILIES:
        raise ValueError(f"family must be one of {FAMILIES}")
    rng = np.random.default_rng(seed)
    T = float(horizon)
    appear = np.sort(rng.uniform(0.0, 0.5 * T, N))
    appear[0] = 0.0
    peak = appear + rng.uniform(0.1 * T, 0.3 * T, N)
    scale = rng.uniform(0.05 * T, 0.15 * T, N)
    if family == "truncated_normal":
        mu, sigma = peak, scale
    elif family == "uniform":
        mu, sigma = np.zeros(N), np.ones(N)
    else:
        # log-normal mode exp(mu - sigma^2) placed at the peak
        sigma = np.full(N, 0.25)
        mu = np.log(peak) + sigma ** 2
    truth = {"Z": embed_scale * rng.standard_normal((N, D)), "W": embed_scale * rng.standard_normal((N, D)),
             "alpha": rng.normal(alpha_mean, 0.3, N), "beta": rng.normal(0.0, 0.3, N),
             "mu": mu, "log_sigma": np.log(sigma)}
    impact = ImpactConfig(family)
    lo, hi = impact.bounds(T)
    tt, ss = np.nonzero((appear[None, :] >= appear[:, None]) & ~np.eye(N, dtype=bool))
    logm, _, _ = _multiplier(truth, tt, ss)
    F, _, _ = _interval(appear, np.full(N, T), mu, sigma, family, lo, hi)
    Lam = np.exp(logm) * F[tt]
    fire = rng.random(len(tt)) < Lam / (1.0 + Lam)
    tt, ss = tt[fire], ss[fire]
    times = _sample_impact_times(rng, appear[tt], mu[tt], sigma[tt], family, lo, hi)
    order = np.lexsort((tt, ss))
    g = Graph(n_rows=N, n_cols=N, src=ss[order], dst=tt[order], weight=np.ones(len(tt), dtype=np.int64),
              directed=True, time=times[order], horizon=T, appearance_times=appear)
    truth["appearance_times"] = appear
    return g, truth


def impact_peak(params, family: str):
    """Location of each node's impact maximum (mode of f_i)."""
    mu = np.asarray(params["mu"])
    if family == "uniform":
        raise ValueError("the uniform impact has no peak")
    if family == "truncated_normal":
        return mu
    return np.exp(mu - np.exp(params["log_sigma"]) ** 2)


def impact_curves(params, impact: ImpactConfig, horizon: float, grid):
    """Rows of exp(alpha_i) * f_i(t) on ``grid`` (node mass over time)."""
    grid = np.asarray(grid, dtype=float)
    mu = np.asarray(params["mu"])[:, None]
    sig = np.exp(np.asarray(params["log_sigma"]))[:, None]
    f = impact_pdf(grid[None, :], mu, sig, impact, horizon)
    return np.exp(np.asarray(params["alpha"]))[:, None] * f


def write_impact_csv(params, impact: ImpactConfig, path, node_ids=None) -> None:
    n = len(params["mu"])
    ids = node_ids if node_ids is not None else [str(i) for i in range(n)]
    sig = np.exp(params["log_sigma"])
    with open(path, "w") as fh:
        fh.write("node_id,family,mu,sigma,alpha\n")
        for k in range(n):
            fh.write(f"{ids[k]},{impact.family},{float(params['mu'][k])!r},{float(sig[k])!r},"
                     f"{float(params['alpha'][k])!r}\n")


def read_impact_csv(path):
    rows = np.genfromtxt(path, delimiter=",", names=True, dtype=None, encoding="utf-8")
    rows = np.atleast_1d(rows)
    fam = str(rows["family"][0])
    return ([str(x) for x in rows["node_id"]], fam,
            {"mu": np.asarray(rows["mu"], dtype=float), "log_sigma": np.log(np.asarray(rows["sigma"], dtype=float)),
             "alpha": np.asarray(rows["alpha"], dtype=float)})
