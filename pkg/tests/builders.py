"""Small random graphs and parameter sets shared by the test modules."""
import numpy as np

from ldmkit.graph import Graph


def random_graph(n, rng, directed=False, bipartite=False, n_cols=None, p=0.3, signed=False, max_w=3):
    n_cols = n if n_cols is None else n_cols
    src, dst, w = [], [], []
    for i in range(n):
        for j in range(n_cols):
            if not bipartite and (i == j or (not directed and j < i)):
                continue
            if rng.random() < p:
                k = int(rng.integers(1, max_w + 1))
                if signed and rng.random() < 0.5:
                    k = -k
                src.append(i)
                dst.append(j)
                w.append(k)
    return Graph(n, n_cols, np.array(src, dtype=np.int64), np.array(dst, dtype=np.int64),
                 np.array(w, dtype=np.int64), directed=directed, bipartite=bipartite)


def planted(n_per, k, p_in, p_out, seed):
    """Undirected planted partition with k blocks of n_per nodes; returns (graph, labels)."""
    rng = np.random.default_rng(seed)
    n = n_per * k
    labels = np.repeat(np.arange(k), n_per)
    iu, ju = np.triu_indices(n, k=1)
    prob = np.where(labels[iu] == labels[ju], p_in, p_out)
    keep = rng.random(len(iu)) < prob
    m = int(keep.sum())
    return Graph(n, n, iu[keep], ju[keep], np.ones(m, dtype=np.int64)), labels


def planted_bipartite(n_per, k, p_in, p_out, seed):
    rng = np.random.default_rng(seed)
    n = n_per * k
    labels = np.repeat(np.arange(k), n_per)
    ii, jj = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    ii, jj = ii.ravel(), jj.ravel()
    prob = np.where(labels[ii] == labels[jj], p_in, p_out)
    keep = rng.random(len(ii)) < prob
    return Graph(n, n, ii[keep], jj[keep], np.ones(int(keep.sum()), dtype=np.int64), bipartite=True), labels


def jitter(params, rng, scale=0.3):
    return {k: np.asarray(v, dtype=float) + scale * rng.standard_normal(np.shape(v)) for k, v in params.items()}


def knn_purity(X, labels, k=10):
    d = np.linalg.norm(X[:, None] - X[None], axis=-1)
    np.fill_diagonal(d, np.inf)
    nn = np.argsort(d, axis=1)[:, :k]
    return float(np.mean(labels[nn] == labels[:, None]))


def single_event_toy(seed=0, n=5, n_events=3, horizon=10.0):
    """n nodes appearing in order over [0, T/2]; random admissible events source -> target."""
    rng = np.random.default_rng(seed)
    appear = np.linspace(0.0, horizon / 2, n)
    cand = [(j, i) for i in range(n) for j in range(n) if i != j and appear[j] >= appear[i]]
    pick = rng.choice(len(cand), n_events, replace=False)
    src = np.array([cand[k][0] for k in pick])
    dst = np.array([cand[k][1] for k in pick])
    t = appear[dst] + rng.uniform(0.1, 1.0, n_events) * (horizon - appear[dst])
    return Graph(n, n, src, dst, np.ones(n_events, dtype=int), directed=True, time=t, horizon=horizon,
                 appearance_times=appear)
