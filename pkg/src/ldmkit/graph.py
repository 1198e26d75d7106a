"""Graph container, edge-list IO and train/test splitting."""
import json
import math
import os
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np


class GraphFormatError(ValueError):
    """Malformed edge-list input or an invalid graph."""


class SplitError(ValueError):
    """Requested split cannot be produced without breaking connectivity."""


@dataclass(frozen=True)
class Graph:
    """Immutable edge-list graph.

    Undirected unipartite graphs store every edge with ``src < dst``. For
    bipartite graphs ``src`` indexes the first mode (``n_rows``) and ``dst``
    the second (``n_cols``); for unipartite graphs ``n_cols == n_rows``.
    """

    n_rows: int
    n_cols: int
    src: np.ndarray
    dst: np.ndarray
    weight: np.ndarray
    directed: bool = False
    bipartite: bool = False
    time: Optional[np.ndarray] = None
    horizon: Optional[float] = None
    appearance_times: Optional[np.ndarray] = None
    node_ids: Optional[Sequence[str]] = None
    col_ids: Optional[Sequence[str]] = None

    def __post_init__(self):
        for name in ("src", "dst"):
            arr = np.ascontiguousarray(getattr(self, name), dtype=np.int64)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        w = np.ascontiguousarray(self.weight, dtype=np.int64)
        w.setflags(write=False)
        object.__setattr__(self, "weight", w)
        if self.time is not None:
            t = np.ascontiguousarray(self.time, dtype=float)
            t.setflags(write=False)
            object.__setattr__(self, "time", t)
        if self.appearance_times is not None:
            a = np.ascontiguousarray(self.appearance_times, dtype=float)
            a.setflags(write=False)
            object.__setattr__(self, "appearance_times", a)
        if not self.bipartite and self.n_cols != self.n_rows:
            raise GraphFormatError("unipartite graphs need n_cols == n_rows")
        self._validate()

    def _validate(self):
        src, dst, w = self.src, self.dst, self.weight
        if not (len(src) == len(dst) == len(w)):
            raise GraphFormatError("edge arrays differ in length")
        if len(src):
            if src.min() < 0 or src.max() >= self.n_rows:
                raise GraphFormatError("source index out of range")
            if dst.min() < 0 or dst.max() >= self.n_cols:
                raise GraphFormatError("target index out of range")
        if np.any(w == 0):
            raise GraphFormatError("edge weights must be nonzero integers")
        if not self.bipartite:
            if np.any(src == dst):
                raise GraphFormatError("self-loops are not allowed")
            if not self.directed and np.any(src > dst):
                raise GraphFormatError("undirected edges must be stored with src < dst")
        keys = src * self.n_cols + dst
        if len(np.unique(keys)) != len(keys):
            raise GraphFormatError("duplicate dyad")
        if self.time is not None:
            if len(self.time) != len(src):
                raise GraphFormatError("time array differs in length from edges")
            if self.horizon is None or not self.horizon > 0:
                raise GraphFormatError("timed graphs need a positive horizon")
            if np.any(self.time < 0) or np.any(self.time > self.horizon):
                raise GraphFormatError("event times must lie in [0, horizon]")
        if self.appearance_times is not None and len(self.appearance_times) != self.n_nodes:
            raise GraphFormatError("appearance_times needs one value per node")

    @property
    def n_edges(self) -> int:
        return int(len(self.src))

    @property
    def n_nodes(self) -> int:
        return self.n_rows + self.n_cols if self.bipartite else self.n_rows

    @property
    def signed(self) -> bool:
        return bool(np.any(self.weight < 0))

    @property
    def timed(self) -> bool:
        return self.time is not None

    @property
    def n_pairs(self) -> int:
        """Number of dyads the likelihoods sum over."""
        if self.bipartite:
            return self.n_rows * self.n_cols
        if self.directed:
            return self.n_rows * (self.n_rows - 1)
        return self.n_rows * (self.n_rows - 1) // 2

    def edge_pairs(self) -> np.ndarray:
        return np.stack([self.src, self.dst], axis=1)

    def dense(self) -> np.ndarray:
        """Weighted adjacency (n_rows x n_cols); symmetric for undirected graphs."""
        a = np.zeros((self.n_rows, self.n_cols), dtype=np.int64)
        a[self.src, self.dst] = self.weight
        if not self.directed and not self.bipartite:
            a[self.dst, self.src] = self.weight
        return a


def default_appearance_times(g: Graph) -> np.ndarray:
    """First incoming or outgoing event time per node, 0 for nodes without events."""
    if g.appearance_times is not None:
        return np.asarray(g.appearance_times, dtype=float)
    out = np.full(g.n_nodes, np.inf)
    if g.time is not None and g.n_edges:
        col_offset = g.n_rows if g.bipartite else 0
        np.minimum.at(out, g.src, g.time)
        np.minimum.at(out, g.dst + col_offset, g.time)
    out[~np.isfinite(out)] = 0.0
    return out


def _parse_number(tok, kind, lineno):
    try:
        if kind == "int":
            val = float(tok)
            if not val.is_integer():
                raise ValueError
            return int(val)
        return float(tok)
    except ValueError:
        raise GraphFormatError(f"line {lineno}: cannot parse {kind} from {tok!r}") from None


def load_edge_list(path, directed=False, bipartite=False, weighted=None, timed=None,
                   horizon=None) -> Graph:
    """Read a whitespace-separated ``src dst [weight] [time]`` edge list.

    Node ids are arbitrary tokens, remapped to 0..n-1 in first-seen order
    (separately per mode for bipartite graphs). ``weighted``/``timed`` of
    ``None`` mean "use whatever columns are present". ``#`` starts a comment.
    Without an explicit ``horizon`` a timed graph takes its latest event time.
    """
    rows, cols = {}, ({} if bipartite else None)
    src, dst, wts, times = [], [], [], []
    seen = {}
    ncols_seen = None
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            toks = line.split()
            if len(toks) < 2 or len(toks) > 4:
                raise GraphFormatError(f"line {lineno}: expected 2-4 columns, got {len(toks)}")
            if ncols_seen is None:
                ncols_seen = len(toks)
            elif len(toks) != ncols_seen:
                raise GraphFormatError(
                    f"line {lineno}: {len(toks)} columns but earlier lines have {ncols_seen}"
                    " (weight/time columns must be present on every line)")
            a = rows.setdefault(toks[0], len(rows))
            table = cols if bipartite else rows
            b = table.setdefault(toks[1], len(table))
            if not bipartite and a == b:
                raise GraphFormatError(f"line {lineno}: self-loop on node {toks[0]!r}")
            if not directed and not bipartite and a > b:
                a, b = b, a
            if (a, b) in seen:
                raise GraphFormatError(
                    f"line {lineno}: duplicate dyad ({toks[0]}, {toks[1]}), first on line {seen[(a, b)]}")
            seen[(a, b)] = lineno
            w = _parse_number(toks[2], "int", lineno) if len(toks) >= 3 else 1
            if w == 0:
                raise GraphFormatError(f"line {lineno}: zero weight is not an edge")
            src.append(a)
            dst.append(b)
            wts.append(w)
            if len(toks) == 4:
                t = _parse_number(toks[3], "float", lineno)
                if not math.isfinite(t) or t < 0:
                    raise GraphFormatError(f"line {lineno}: event time must be finite and >= 0")
                times.append(t)
    has_time = ncols_seen == 4
    if timed is True and not has_time:
        raise GraphFormatError("timed=True but the file carries no time column")
    if weighted is False and ncols_seen is not None and ncols_seen >= 3 and any(w != 1 for w in wts):
        raise GraphFormatError("weighted=False but the file carries non-unit weights")
    time_arr = np.asarray(times, dtype=float) if has_time and timed is not False else None
    if time_arr is not None and horizon is None:
        horizon = float(time_arr.max()) if len(time_arr) and time_arr.max() > 0 else 1.0
    if time_arr is not None and len(time_arr) and time_arr.max() > horizon:
        bad = int(np.argmax(time_arr > horizon))
        raise GraphFormatError(f"edge {bad}: event time exceeds horizon {horizon}")
    n_rows = len(rows)
    n_cols = len(cols) if bipartite else n_rows
    return Graph(n_rows=n_rows, n_cols=n_cols, src=np.asarray(src, dtype=np.int64),
                 dst=np.asarray(dst, dtype=np.int64), weight=np.asarray(wts, dtype=np.int64),
                 directed=directed, bipartite=bipartite, time=time_arr,
                 horizon=float(horizon) if time_arr is not None else None,
                 node_ids=list(rows), col_ids=list(cols) if bipartite else None)


def _ids(g: Graph):
    rows = list(g.node_ids) if g.node_ids is not None else [str(i) for i in range(g.n_rows)]
    if g.bipartite:
        cols = list(g.col_ids) if g.col_ids is not None else [str(j) for j in range(g.n_cols)]
    else:
        cols = rows
    return rows, cols


def write_edge_list(g: Graph, path, always_weight=False) -> None:
    """Write ``g`` with its original node ids; floats use ``repr`` so they reload exactly."""
    rows, cols = _ids(g)
    weighted = always_weight or g.timed or bool(np.any(g.weight != 1))
    with open(path, "w", encoding="utf-8") as fh:
        for k in range(g.n_edges):
            parts = [rows[g.src[k]], cols[g.dst[k]]]
            if weighted:
                parts.append(str(int(g.weight[k])))
            if g.timed:
                parts.append(repr(float(g.time[k])))
            fh.write(" ".join(parts) + "\n")


def signed_partition(g: Graph):
    """Split edges by sign into (positive pairs, negative pairs), each of shape (m, 2)."""
    pairs = g.edge_pairs()
    pos = g.weight > 0
    return pairs[pos], pairs[~pos]


def _find(parent, x):
    root = x
    while parent[root] != root:
        root = parent[root]
    while parent[x] != root:
        parent[x], x = root, parent[x]
    return root


def spanning_tree_mask(g: Graph, rng: np.random.Generator) -> np.ndarray:
    """Kruskal on uniform random priorities over the undirected incidence graph.

    Returns a boolean mask over edges marking the spanning tree; raises if the
    underlying undirected graph is disconnected.
    """
    offset = g.n_rows if g.bipartite else 0
    n = g.n_nodes
    a = g.src
    b = g.dst + offset
    order = np.argsort(rng.random(g.n_edges), kind="stable")
    parent = list(range(n))
    mask = np.zeros(g.n_edges, dtype=bool)
    joined = 1
    for k in order:
        ra, rb = _find(parent, int(a[k])), _find(parent, int(b[k]))
        if ra != rb:
            parent[ra] = rb
            mask[k] = True
            joined += 1
    if joined != n:
        raise SplitError("graph is not connected; spanning tree does not exist")
    return mask


@dataclass(frozen=True)
class EdgeSplit:
    train: Graph
    test_links: np.ndarray
    test_weights: np.ndarray
    test_nonlinks: np.ndarray
    test_times: Optional[np.ndarray] = None
    seed: Optional[int] = None
    fraction: Optional[float] = None

    @property
    def nonlink_labels(self) -> np.ndarray:
        return np.zeros(len(self.test_nonlinks), dtype=np.int64)


_ENUMERATE_LIMIT = 4_000_000


def _candidate_ok(g: Graph, appear, i, j):
    if appear is None:
        return np.ones(np.shape(i), dtype=bool)
    # time-aware: the source (citing) side must not predate the target (cited)
    off = g.n_rows if g.bipartite else 0
    return appear[i] >= appear[j + off]


def sample_nonlinks(g: Graph, count: int, rng: np.random.Generator,
                    time_aware: Optional[bool] = None, strict: bool = True) -> np.ndarray:
    """Draw ``count`` distinct absent dyads uniformly at random.

    With ``strict=False`` fewer pairs are returned when fewer are eligible
    (e.g. a nearly complete graph); otherwise that case raises.

    For timed directed or bipartite graphs (or ``time_aware=True``) only pairs
    ``(src, dst)`` whose source appears no earlier than the target are
    eligible. Undirected pairs always admit one orientation, so the filter is
    a no-op there.
    """
    if time_aware is None:
        time_aware = g.timed
    time_aware = time_aware and (g.directed or g.bipartite)
    appear = default_appearance_times(g) if time_aware else None
    ncols = g.n_cols
    existing = set((g.src * ncols + g.dst).tolist())
    if count == 0:
        return np.zeros((0, 2), dtype=np.int64)
    if g.n_pairs <= _ENUMERATE_LIMIT:
        if g.bipartite:
            ii, jj = np.meshgrid(np.arange(g.n_rows), np.arange(ncols), indexing="ij")
            ii, jj = ii.ravel(), jj.ravel()
        elif g.directed:
            ii, jj = np.meshgrid(np.arange(g.n_rows), np.arange(ncols), indexing="ij")
            ii, jj = ii.ravel(), jj.ravel()
            keep = ii != jj
            ii, jj = ii[keep], jj[keep]
        else:
            ii, jj = np.triu_indices(g.n_rows, k=1)
        keys = ii * ncols + jj
        keep = ~np.isin(keys, np.fromiter(existing, dtype=np.int64, count=len(existing)))
        keep &= _candidate_ok(g, appear, ii, jj)
        ii, jj = ii[keep], jj[keep]
        if len(ii) < count and not strict:
            count = len(ii)
        if len(ii) < count:
            raise SplitError(f"only {len(ii)} eligible non-links, {count} requested")
        pick = rng.choice(len(ii), size=count, replace=False)
        pick.sort()
        return np.stack([ii[pick], jj[pick]], axis=1).astype(np.int64)
    chosen, out = set(), []
    attempts = 0
    while len(out) < count:
        attempts += 1
        if attempts > 200 * count + 10_000:
            raise SplitError("rejection sampling of non-links did not converge")
        i = int(rng.integers(g.n_rows))
        j = int(rng.integers(ncols))
        if not g.bipartite:
            if i == j:
                continue
            if not g.directed and i > j:
                i, j = j, i
        key = i * ncols + j
        if key in existing or key in chosen:
            continue
        if appear is not None and not _candidate_ok(g, appear, i, j):
            continue
        chosen.add(key)
        out.append((i, j))
    return np.asarray(out, dtype=np.int64)


def split_edges(g: Graph, fraction: float, rng_seed: int, time_aware: Optional[bool] = None) -> EdgeSplit:
    """Hold out ``round(fraction * |E|)`` edges while keeping the train graph connected.

    Edges of a random spanning tree (Kruskal under seeded uniform priorities)
    are never removed; the held-out set is a uniform sample of the rest. One
    non-link is drawn per held-out link, or every eligible non-link when the
    graph has fewer absent dyads than that.
    """
    if not 0 < fraction < 1:
        raise SplitError("fraction must lie in (0, 1)")
    rng = np.random.default_rng(rng_seed)
    tree = spanning_tree_mask(g, rng)
    k = int(math.floor(fraction * g.n_edges + 0.5))
    free = np.flatnonzero(~tree)
    if k > len(free):
        raise SplitError(
            f"removing {k} edges needs more than the {len(free)} edges outside the spanning tree")
    held = np.sort(rng.choice(free, size=k, replace=False)) if k else np.zeros(0, dtype=np.int64)
    keep = np.ones(g.n_edges, dtype=bool)
    keep[held] = False
    appear = g.appearance_times
    if g.timed and appear is None:
        # freeze appearance times from the full graph so held-out events stay admissible
        appear = default_appearance_times(g)
    train = replace(g, src=g.src[keep], dst=g.dst[keep], weight=g.weight[keep],
                    time=g.time[keep] if g.timed else None, appearance_times=appear)
    negatives = sample_nonlinks(replace(g, appearance_times=appear), k, rng, time_aware,
                                strict=False)
    return EdgeSplit(train=train,
                     test_links=np.stack([g.src[held], g.dst[held]], axis=1),
                     test_weights=g.weight[held].copy(),
                     test_nonlinks=negatives,
                     test_times=g.time[held].copy() if g.timed else None,
                     seed=int(rng_seed), fraction=float(fraction))


def is_connected(g: Graph) -> bool:
    """Breadth-first connectivity of the undirected incidence graph."""
    from collections import deque

    n = g.n_nodes
    if n == 0:
        return True
    offset = g.n_rows if g.bipartite else 0
    adj = [[] for _ in range(n)]
    for a, b in zip(g.src.tolist(), (g.dst + offset).tolist()):
        adj[a].append(b)
        adj[b].append(a)
    seen = [False] * n
    seen[0] = True
    queue = deque([0])
    while queue:
        u = queue.popleft()
        for v in adj[u]:
            if not seen[v]:
                seen[v] = True
                queue.append(v)
    return all(seen)


def write_split(split: EdgeSplit, directory) -> dict:
    """Write ``train.txt``, ``test.txt`` (weight 0 marks a non-link) and ``split.json``."""
    os.makedirs(directory, exist_ok=True)
    g = split.train
    write_edge_list(g, os.path.join(directory, "train.txt"), always_weight=True)
    rows, cols = _ids(g)
    with open(os.path.join(directory, "test.txt"), "w", encoding="utf-8") as fh:
        for k, (i, j) in enumerate(split.test_links.tolist()):
            parts = [rows[i], cols[j], str(int(split.test_weights[k]))]
            if split.test_times is not None:
                parts.append(repr(float(split.test_times[k])))
            fh.write(" ".join(parts) + "\n")
        for i, j in split.test_nonlinks.tolist():
            parts = [rows[i], cols[j], "0"]
            if split.test_times is not None:
                parts.append("nan")
            fh.write(" ".join(parts) + "\n")
    manifest = {"seed": split.seed, "fraction": split.fraction,
                "n_test_links": int(len(split.test_links)),
                "n_test_nonlinks": int(len(split.test_nonlinks))}
    if g.appearance_times is not None:
        appear = [float(x) for x in g.appearance_times]
        manifest["appearance_rows"] = dict(zip(rows, appear[:g.n_rows]))
        if g.bipartite:
            manifest["appearance_cols"] = dict(zip(cols, appear[g.n_rows:]))
    if g.horizon is not None:
        manifest["horizon"] = float(g.horizon)
    with open(os.path.join(directory, "split.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    return manifest


def read_test_pairs(path, g: Graph):
    """Parse a test-pairs file against the id tables of ``g``.

    Returns (pairs (m, 2), weights (m,), times or None); weight 0 rows are
    sampled non-links.
    """
    rows, cols = _ids(g)
    rmap = {tok: k for k, tok in enumerate(rows)}
    cmap = {tok: k for k, tok in enumerate(cols)}
    pairs, wts, times = [], [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            toks = line.split()
            if len(toks) < 3:
                raise GraphFormatError(f"line {lineno}: test pairs need src dst weight")
            if toks[0] not in rmap or toks[1] not in cmap:
                raise GraphFormatError(f"line {lineno}: node not present in the train graph")
            i, j = rmap[toks[0]], cmap[toks[1]]
            if not g.directed and not g.bipartite and i > j:
                i, j = j, i
            pairs.append((i, j))
            wts.append(_parse_number(toks[2], "int", lineno))
            if len(toks) == 4:
                times.append(float(toks[3]))
    return (np.asarray(pairs, dtype=np.int64).reshape(-1, 2), np.asarray(wts, dtype=np.int64),
            np.asarray(times, dtype=float) if times else None)


def read_split(directory, directed=False, bipartite=False) -> EdgeSplit:
    with open(os.path.join(directory, "split.json"), encoding="utf-8") as fh:
        manifest = json.load(fh)
    g = load_edge_list(os.path.join(directory, "train.txt"), directed=directed,
                       bipartite=bipartite, horizon=manifest.get("horizon"))
    if "appearance_rows" in manifest:
        rows, cols = _ids(g)
        appear = [manifest["appearance_rows"][tok] for tok in rows]
        if bipartite:
            appear += [manifest["appearance_cols"][tok] for tok in cols]
        g = replace(g, appearance_times=np.asarray(appear, dtype=float))
    pairs, wts, times = read_test_pairs(os.path.join(directory, "test.txt"), g)
    is_link = wts != 0
    return EdgeSplit(train=g, test_links=pairs[is_link], test_weights=wts[is_link],
                     test_nonlinks=pairs[~is_link],
                     test_times=times[is_link] if times is not None else None,
                     seed=manifest.get("seed"), fraction=manifest.get("fraction"))
