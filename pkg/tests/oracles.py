"""Brute-force references for the test suite.

Everything here is written from the model formulas with plain Python loops
(plus mpmath where special functions are needed) and never calls into the
production package, so agreement is evidence and not tautology.
"""
import math
from collections import deque

import mpmath
import numpy as np


def _norm(u, v):
    return math.sqrt(sum((a - b) ** 2 for a, b in zip(u, v)))


def _softmax_row(row):
    m = max(row)
    e = [math.exp(x - m) for x in row]
    s = sum(e)
    return [x / s for x in e]


def _edge_table(src, dst, weight):
    return {(int(a), int(b)): float(w) for a, b, w in zip(src, dst, weight)}


# Poisson family

def poisson_nll(kind, n_rows, n_cols, src, dst, weight, params):
    """Poisson LDM NLL by explicit enumeration of dyads.

    kind: 'undirected' (i < j), 'directed' (i != j) or 'bipartite' (all i, j).
    """
    y = _edge_table(src, dst, weight)
    total = 0.0
    for i in range(n_rows):
        for j in range(n_cols):
            if kind == "undirected":
                if j <= i:
                    continue
                log_rate = params["gamma"][i] + params["gamma"][j] - _norm(params["Z"][i], params["Z"][j])
            else:
                if kind == "directed" and i == j:
                    continue
                log_rate = params["psi"][i] + params["omega"][j] - _norm(params["Z"][i], params["W"][j])
            k = y.get((i, j), 0.0)
            total += math.exp(log_rate) - k * log_rate + math.lgamma(k + 1.0)
    return total


def hm_ldm_nll(n, src, dst, weight, params, delta, p):
    Z = [_softmax_row(list(r)) for r in params["Zlogit"]]
    y = _edge_table(src, dst, weight)
    total = 0.0
    for i in range(n):
        for j in range(i + 1, n):
            log_rate = params["gamma"][i] + params["gamma"][j] - delta ** p * _norm(Z[i], Z[j]) ** p
            k = y.get((i, j), 0.0)
            total += math.exp(log_rate) - k * log_rate + math.lgamma(k + 1.0)
    return total


def _weighted_mean(points, weights):
    D = len(points[0])
    s = sum(weights)
    return [sum(w * pt[d] for pt, w in zip(points, weights)) / s for d in range(D)]


def hbdm_nll(n, src, dst, weight, Z, gamma, tree):
    """Hierarchical NLL read straight off the tree's levels.

    Links: exact. Within each final leaf: exact Poisson mass. Every cluster
    pair a level lists: exp(-||mu_a - mu_b||) * sum_a e^gamma * sum_b e^gamma,
    centroids being the weighted means with the level's per-node weights.
    """
    y = _edge_table(src, dst, weight)
    total = 0.0
    for (i, j), k in y.items():
        log_rate = gamma[i] + gamma[j] - _norm(Z[i], Z[j])
        total += -k * log_rate + math.lgamma(k + 1.0)
    last = tree.levels[-1].labels
    for i in range(n):
        for j in range(i + 1, n):
            if last[i] == last[j]:
                total += math.exp(gamma[i] + gamma[j] - _norm(Z[i], Z[j]))
    for level in tree.levels:
        for a, b in level.pairs:
            ma = [i for i in range(n) if level.labels[i] == a]
            mb = [i for i in range(n) if level.labels[i] == b]
            mu_a = _weighted_mean([Z[i] for i in ma], [level.weights[i] for i in ma])
            mu_b = _weighted_mean([Z[i] for i in mb], [level.weights[i] for i in mb])
            Sa = sum(math.exp(gamma[i]) for i in ma)
            Sb = sum(math.exp(gamma[i]) for i in mb)
            total += math.exp(-_norm(mu_a, mu_b)) * Sa * Sb
    return total


def hbdm_bipartite_nll(n1, n2, src, dst, weight, Z, W, psi, omega, tree):
    """Bipartite analogue over the stacked points [Z; W]; only cross-mode dyads count."""
    y = _edge_table(src, dst, weight)
    X = [list(r) for r in Z] + [list(r) for r in W]
    ea = [math.exp(v) for v in psi] + [0.0] * n2
    eb = [0.0] * n1 + [math.exp(v) for v in omega]
    total = 0.0
    for (i, j), k in y.items():
        log_rate = psi[i] + omega[j] - _norm(Z[i], W[j])
        total += -k * log_rate + math.lgamma(k + 1.0)
    last = tree.levels[-1].labels
    for i in range(n1):
        for j in range(n2):
            if last[i] == last[n1 + j]:
                total += math.exp(psi[i] + omega[j] - _norm(Z[i], W[j]))
    N = n1 + n2
    for level in tree.levels:
        for a, b in level.pairs:
            ma = [i for i in range(N) if level.labels[i] == a]
            mb = [i for i in range(N) if level.labels[i] == b]
            mu_a = _weighted_mean([X[i] for i in ma], [level.weights[i] for i in ma])
            mu_b = _weighted_mean([X[i] for i in mb], [level.weights[i] for i in mb])
            cross = (sum(ea[i] for i in ma) * sum(eb[i] for i in mb)
                     + sum(ea[i] for i in mb) * sum(eb[i] for i in ma))
            total += math.exp(-_norm(mu_a, mu_b)) * cross
    return total


# Skellam family

def skellam_pmf_convolution(y, lp, lm, kmax=200):
    """P(N1 - N2 = y) = sum_k Pois(k; lp) Pois(k - y; lm), in high precision."""
    y = int(y)
    lp, lm = mpmath.mpf(lp), mpmath.mpf(lm)
    total = mpmath.mpf(0)
    for k in range(max(0, y), kmax + 1):
        m = k - y
        total += mpmath.exp(-lp) * lp ** k / mpmath.factorial(k) * mpmath.exp(-lm) * lm ** m / mpmath.factorial(m)
    return float(total)


def skellam_log_pmf(y, lp, lm):
    """Reference closed form evaluated with mpmath's Bessel function."""
    lp, lm = mpmath.mpf(lp), mpmath.mpf(lm)
    val = -(lp + lm) + mpmath.mpf(y) / 2 * mpmath.log(lp / lm) + mpmath.log(mpmath.besseli(abs(int(y)), 2 * mpmath.sqrt(lp * lm)))
    return float(val)


def _sldm_rates(i, j, params, variant):
    if variant == "undirected":
        d = _norm(params["Z"][i], params["Z"][j])
        return (math.exp(params["gamma"][i] + params["gamma"][j] - d),
                math.exp(params["delta"][i] + params["delta"][j] + d))
    d = _norm(params["Z"][i], params["W"][j])
    lp = math.exp(params["beta"][i] + params["gamma"][j] - d)
    if variant == "directed":
        return lp, math.exp(params["delta"][i] + params["epsilon"][j] + d)
    du = _norm(params["U"][i], params["W"][j])
    return lp, math.exp(params["delta"][i] + params["epsilon"][j] - du)


def slim_archetypes(params):
    """A = R Zcat^T C with C_{m,d} = zcat_{m,d} sigmoid(G_{d,m}) / column sum."""
    blocks = [params["Zlogit"]] + [params[k] for k in ("Wlogit", "Ulogit") if k in params]
    Zcat = [_softmax_row(list(r)) for blk in blocks for r in blk]
    M, D = len(Zcat), len(Zcat[0])
    G = params["G"]
    gated = [[Zcat[m][d] / (1.0 + math.exp(-G[d][m])) for d in range(D)] for m in range(M)]
    col = [sum(gated[m][d] for m in range(M)) for d in range(D)]
    C = [[gated[m][d] / col[d] for d in range(D)] for m in range(M)]
    B = [[sum(Zcat[m][a] * C[m][b] for m in range(M)) for b in range(D)] for a in range(D)]
    R = params["R"]
    return [[sum(R[a][c] * B[c][b] for c in range(D)) for b in range(D)] for a in range(D)], Zcat


def _slim_rates_table(params, variant, n):
    A, Zcat = slim_archetypes(params)
    D = len(A)

    def place(z):
        return [sum(A[a][b] * z[b] for b in range(D)) for a in range(D)]

    pos = [place(z) for z in Zcat]
    Zp = pos[:n]
    Wp = pos[n:2 * n] if len(pos) >= 2 * n else None
    Up = pos[2 * n:] if len(pos) >= 3 * n else None

    def rates(i, j):
        if variant == "undirected":
            d = _norm(Zp[i], Zp[j])
            return (math.exp(params["gamma"][i] + params["gamma"][j] - d),
                    math.exp(params["delta"][i] + params["delta"][j] + d))
        d = _norm(Zp[i], Wp[j])
        lp = math.exp(params["beta"][i] + params["gamma"][j] - d)
        if variant == "directed":
            return lp, math.exp(params["delta"][i] + params["epsilon"][j] + d)
        return lp, math.exp(params["delta"][i] + params["epsilon"][j] - _norm(Up[i], Wp[j]))

    return rates, A


def skellam_nll(model, variant, n, src, dst, weight, params, rho, delta=None, p=None):
    """MAP loss: -sum over dyads of the Skellam log pmf plus the model's Gaussian prior."""
    y = _edge_table(src, dst, weight)
    if model == "sldm":
        rates = lambda i, j: _sldm_rates(i, j, params, variant)
        keys = ["Z", "gamma", "delta"] if variant == "undirected" else ["Z", "W", "beta", "gamma", "delta", "epsilon"]
        if variant == "extra_capacity":
            keys.append("U")
        prior = sum(float(np.sum(np.asarray(params[k]) ** 2)) for k in keys)
    elif model == "shm_ldm":
        Z = [_softmax_row(list(r)) for r in params["Zlogit"]]

        def rates(i, j):
            dist = delta ** p * _norm(Z[i], Z[j]) ** p
            return (math.exp(params["beta"][i] + params["beta"][j] - dist),
                    math.exp(params["psi"][i] + params["psi"][j] + dist))

        prior = sum(float(np.sum(np.asarray(params[k]) ** 2)) for k in ("beta", "psi"))
    else:
        rates, A = _slim_rates_table(params, variant, n)
        keys = ["gamma", "delta"] if variant == "undirected" else ["beta", "gamma", "delta", "epsilon"]
        prior = sum(float(np.sum(np.asarray(params[k]) ** 2)) for k in keys)
        prior += sum(v * v for row in A for v in row)
    total = 0.0
    for i in range(n):
        for j in range(n):
            if i == j or (variant == "undirected" and j < i):
                continue
            lp, lm = rates(i, j)
            total -= skellam_log_pmf(int(y.get((i, j), 0)), lp, lm)
    return total + 0.5 * rho * prior


# single-event process

def _Phi(x):
    if x == math.inf:
        return 1.0
    if x == -math.inf:
        return 0.0
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


def impact_cdf_mass(a, b, mu, sigma, family, lo, hi):
    if family == "uniform":
        return (min(max(b, lo), hi) - min(max(a, lo), hi)) / (hi - lo)
    if family == "truncated_normal":
        a, b = min(max(a, lo), hi), min(max(b, lo), hi)
        num = _Phi((b - mu) / sigma) - _Phi((a - mu) / sigma)
        return num / (_Phi((hi - mu) / sigma) - _Phi((lo - mu) / sigma))
    la = math.log(a) if a > 0 else -math.inf
    lb = math.log(b) if b > 0 else -math.inf
    return _Phi((lb - mu) / sigma) - _Phi((la - mu) / sigma)


def impact_density(t, mu, sigma, family, lo, hi):
    if family == "uniform":
        return 1.0 / (hi - lo) if lo <= t <= hi else 0.0
    if family == "truncated_normal":
        if t < lo or t > hi:
            return 0.0
        z = (t - mu) / sigma
        return math.exp(-0.5 * z * z) / (sigma * math.sqrt(2 * math.pi)) / (
            _Phi((hi - mu) / sigma) - _Phi((lo - mu) / sigma))
    if t <= 0:
        return 0.0
    z = (math.log(t) - mu) / sigma
    return math.exp(-0.5 * z * z) / (t * sigma * math.sqrt(2 * math.pi))


def impact_log_density(t, mu, sigma, family, lo, hi):
    """Log of impact_density written out analytically, so far tails do not underflow."""
    if family == "uniform":
        return -math.log(hi - lo) if lo <= t <= hi else -math.inf
    if family == "truncated_normal":
        if t < lo or t > hi:
            return -math.inf
        z = (t - mu) / sigma
        Z = _Phi((hi - mu) / sigma) - _Phi((lo - mu) / sigma)
        return -0.5 * z * z - math.log(sigma * math.sqrt(2 * math.pi)) - math.log(Z)
    if t <= 0:
        return -math.inf
    z = (math.log(t) - mu) / sigma
    return -0.5 * z * z - math.log(t * sigma * math.sqrt(2 * math.pi))


def sepp_nll(n, src, dst, times, appear, horizon, params, family, lo=0.0, hi=None):
    """Sum over (target i, source j), i != j, admissible when an event exists or
    appear[j] >= appear[i]: ln(1 + Lambda_ij) minus ln lambda_ij(t) for events.
    Edges run source -> target."""
    hi = horizon if hi is None else hi
    ev = {(int(t), int(s)): float(tm) for s, t, tm in zip(src, dst, times)}
    total = 0.0
    for i in range(n):
        mu, sig = params["mu"][i], math.exp(params["log_sigma"][i])
        F = impact_cdf_mass(appear[i], horizon, mu, sig, family, lo, hi)
        for j in range(n):
            if i == j:
                continue
            has = (i, j) in ev
            if not has and appear[j] < appear[i]:
                continue
            logm = params["alpha"][i] + params["beta"][j] - _norm(params["Z"][i], params["W"][j])
            total += math.log1p(math.exp(logm) * F)
            if has:
                total -= impact_log_density(ev[(i, j)], mu, sig, family, lo, hi) + logm
    return total


def bernoulli_nll(pairs_prob, events):
    """Static Bernoulli form: -sum [y ln p + (1 - y) ln(1 - p)]."""
    return -sum(math.log(p) if y else math.log1p(-p) for p, y in zip(pairs_prob, events))


# numerics

def adaptive_simpson(f, a, b, tol=1e-12, max_depth=50):
    def simpson(fa, fm, fb, a, b):
        return (b - a) / 6.0 * (fa + 4.0 * fm + fb)

    def rec(a, b, fa, fm, fb, whole, tol, depth):
        m = 0.5 * (a + b)
        lm, rm = 0.5 * (a + m), 0.5 * (m + b)
        flm, frm = f(lm), f(rm)
        left = simpson(fa, flm, fm, a, m)
        right = simpson(fm, frm, fb, m, b)
        if depth <= 0 or abs(left + right - whole) <= 15.0 * tol:
            return left + right + (left + right - whole) / 15.0
        return (rec(a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
                + rec(m, b, fm, frm, fb, right, tol / 2.0, depth - 1))

    fa, fb, fm = f(a), f(b), f(0.5 * (a + b))
    return rec(a, b, fa, fm, fb, simpson(fa, fm, fb, a, b), tol, max_depth)


def _subset_costs(P, eps=1e-4, iters=60):
    """Geometric-median cost of every nonempty subset (bitmask index).

    Damped Newton on the smoothed objective sum sqrt(|x - p|^2 + eps^2),
    vectorised across subsets; the result is also compared against using the
    best member point as the median, and the smaller true cost is kept.
    """
    n, D = P.shape
    masks = np.arange(1, 2 ** n)
    M = ((masks[:, None] >> np.arange(n)) & 1).astype(float)

    def F(m):
        diff = m[:, None, :] - P[None]
        d = np.sqrt((diff ** 2).sum(-1) + eps * eps)
        return (M * d).sum(1), diff, d

    m = (M @ P) / M.sum(1, keepdims=True)
    f, diff, d = F(m)
    for _ in range(iters):
        w = M / d
        g = (w[:, :, None] * diff).sum(1)
        u = diff / d[:, :, None]
        H = w.sum(1)[:, None, None] * np.eye(D) - np.einsum("sn,sni,snj->sij", w, u, u)
        H += 1e-12 * np.eye(D)
        step = np.linalg.solve(H, g[:, :, None])[:, :, 0]
        t = np.ones(len(m))
        for _ in range(8):
            fn = F(m - t[:, None] * step)[0]
            bad = fn > f + 1e-13
            if not bad.any():
                break
            t[bad] *= 0.5
        mn = m - t[:, None] * step
        fn = F(mn)[0]
        better = fn <= f
        m[better] = mn[better]
        f = np.where(better, fn, f)
        if np.abs(step).max() < 1e-10:
            break
        diff, d = F(m)[1:]
    true = (M * np.sqrt(((m[:, None, :] - P[None]) ** 2).sum(-1))).sum(1)
    pd = np.sqrt(((P[:, None, :] - P[None]) ** 2).sum(-1))
    member = np.where(M > 0, M @ pd, np.inf).min(1)
    out = np.zeros(2 ** n)
    out[1:] = np.minimum(true, member)
    return out


def exhaustive_two_median(P):
    """min over bipartitions {S, S^c} of sum_i ||p_i - median(part)||."""
    P = np.asarray(P, dtype=float)
    n = len(P)
    c = _subset_costs(P)
    full = 2 ** n - 1
    ms = np.arange(1, 2 ** (n - 1))
    return float((c[ms] + c[full ^ ms]).min())


def bfs_connected(n, edges):
    adj = [[] for _ in range(n)]
    for a, b in edges:
        adj[a].append(b)
        adj[b].append(a)
    seen = {0}
    q = deque([0])
    while q:
        v = q.popleft()
        for w in adj[v]:
            if w not in seen:
                seen.add(w)
                q.append(w)
    return len(seen) == n


def dirichlet_mean_max(alpha, D, n, seed):
    """Mean over draws of the largest coordinate, sampling via normalised gammas."""
    rng = np.random.default_rng(seed)
    g = rng.gamma(alpha, size=(n, D))
    ok = g.sum(1) > 0
    Z = g[ok] / g[ok].sum(1, keepdims=True)
    return float(Z.max(1).mean())
