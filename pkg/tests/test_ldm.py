import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles as O
from builders import jitter, planted, random_graph
from ldmkit import ldm
from ldmkit.graph import Graph
from ldmkit.ldm import SimplexConfig
from ldmkit.optim import TrainConfig, check_gradients


def _pair(Z, gamma):
    return {"Z": np.asarray(Z, dtype=float), "gamma": np.asarray(gamma, dtype=float)}


def test_rate_examples():
    assert ldm.poisson_rate(0, 1, _pair([[1.0, 1.0], [1.0, 1.0]], [0, 0])) == pytest.approx(1.0)
    ln2 = math.log(2)
    assert ldm.poisson_rate(0, 1, _pair([[0.0, 0.0], [0.0, 0.0]], [ln2, ln2])) == pytest.approx(4.0)
    assert ldm.poisson_rate(0, 1, _pair([[0.0, 0.0], [3.0, 4.0]], [0, 0])) == pytest.approx(0.006737946999085467)


def test_nll_examples():
    p = _pair([[0.0, 0.0], [0.0, 0.0]], [0, 0])
    g = Graph(2, 2, [0], [1], [1])
    assert ldm.poisson_ldm_nll(g, p) == pytest.approx(1.0, abs=1e-15)
    e = np.zeros(0, dtype=int)
    p = _pair([[0.0, 0.0], [0.0, 1.0]], [0.2, 0.1])
    lam = math.exp(0.3 - 1.0)
    assert ldm.poisson_ldm_nll(Graph(2, 2, e, e, e), p) == pytest.approx(lam, rel=1e-14)


@pytest.mark.parametrize("kind", ["undirected", "directed", "bipartite"])
def test_nll_matches_oracle_four_nodes(kind):
    rng = np.random.default_rng(4)
    g = random_graph(4, rng, directed=kind == "directed", bipartite=kind == "bipartite", n_cols=3 if kind == "bipartite" else None,
                     p=0.6)
    p = jitter(ldm.init_ldm_params(g, 2, 0), rng)
    ref = O.poisson_nll(kind, g.n_rows, g.n_cols, g.src, g.dst, g.weight, p)
    assert ldm.poisson_ldm_nll(g, p) == pytest.approx(ref, rel=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 12), st.integers(1, 4), st.integers(0, 10 ** 6), st.sampled_from(["undirected", "directed", "bipartite"]))
def test_nll_matches_oracle_property(n, D, seed, kind):
    rng = np.random.default_rng(seed)
    g = random_graph(n, rng, directed=kind == "directed", bipartite=kind == "bipartite", p=0.4)
    p = jitter(ldm.init_ldm_params(g, D, seed), rng, 0.5)
    ref = O.poisson_nll(kind, g.n_rows, g.n_cols, g.src, g.dst, g.weight, p)
    assert ldm.poisson_ldm_nll(g, p) == pytest.approx(ref, rel=1e-12, abs=1e-12)


@pytest.mark.parametrize("directed", [False, True])
def test_gradients(directed):
    rng = np.random.default_rng(0)
    g = random_graph(6, rng, directed=directed, p=0.5)
    p = jitter(ldm.init_ldm_params(g, 2, 1), rng)
    assert check_gradients(lambda q: ldm.poisson_ldm_loss(g, q, 0.5), p) < 1e-5


def test_coincident_points_keep_finite_gradient():
    g = Graph(3, 3, [0, 1], [1, 2], [1, 2])
    p = _pair(np.zeros((3, 2)), np.zeros(3))
    v, gr = ldm.poisson_ldm_loss(g, p)
    assert np.isfinite(v) and all(np.isfinite(x).all() for x in gr.values())


def test_random_block_full_block_is_exact():
    rng = np.random.default_rng(1)
    g = random_graph(9, rng, p=0.4)
    p = jitter(ldm.init_ldm_params(g, 2, 0), rng)
    for S in (9, 20):
        assert ldm.random_block_nll(g, p, S, seed=3) == pytest.approx(ldm.poisson_ldm_nll(g, p), rel=1e-12)


def test_random_block_single_edge_link_term_present():
    g = Graph(2, 2, [0], [1], [3])
    p = _pair([[0.0, 0.0], [1.0, 0.0]], [0.4, 0.1])
    # S = 2 on two nodes always holds both endpoints; link term -y ln lambda + ln y! is present
    for seed in range(5):
        v = ldm.random_block_nll(g, p, 2, seed)
        assert v == pytest.approx(ldm.poisson_ldm_nll(g, p), rel=1e-12)
        assert v == pytest.approx(math.exp(-0.5) - 3 * (-0.5) + math.lgamma(4.0), rel=1e-12)


def test_random_block_mean_is_unbiased_small():
    rng = np.random.default_rng(2)
    g = random_graph(12, rng, p=0.3)
    p = jitter(ldm.init_ldm_params(g, 2, 0), rng)
    vals = np.array([ldm.random_block_nll(g, p, 5, s) for s in range(3000)])
    se = vals.std(ddof=1) / math.sqrt(len(vals))
    assert abs(vals.mean() - ldm.poisson_ldm_nll(g, p)) < 3 * se


def test_random_block_gradients():
    rng = np.random.default_rng(3)
    g = random_graph(8, rng, p=0.4)
    p = jitter(ldm.init_ldm_params(g, 2, 0), rng)
    assert check_gradients(lambda q: ldm.random_block_loss(g, q, 4, 11, 0.2), p) < 1e-5


def test_train_deterministic_and_monotone_tail():
    g, labels = planted(20, 2, 0.5, 0.03, 5)
    cfg = TrainConfig(learning_rate=0.05, iterations=400, seed=2)
    a, ra = ldm.ldm_train(g, 2, cfg)
    b, rb = ldm.ldm_train(g, 2, cfg)
    assert all(np.array_equal(a[k], b[k]) for k in a)
    tail = np.asarray(ra.trace[int(0.2 * len(ra.trace)):])
    assert np.all(np.diff(tail) <= 1e-9 * np.abs(tail[1:]))


def test_train_random_block_sampler_runs():
    g, _ = planted(15, 2, 0.5, 0.05, 1)
    cfg = TrainConfig(iterations=50, sampler="random_block", sample_size=10)
    p, rep = ldm.ldm_train(g, 2, cfg)
    assert len(rep.trace) == 50 and np.isfinite(rep.trace).all()
    with pytest.raises(ValueError):
        ldm.ldm_train(g, 2, TrainConfig(iterations=2, sampler="case_control"))


# hybrid memberships

def _hm(Z, gamma):
    # logits whose softmax is (approximately) Z
    Z = np.asarray(Z, dtype=float)
    return {"Zlogit": np.log(np.clip(Z, 1e-300, None)), "gamma": np.asarray(gamma, dtype=float)}


def test_hm_rate_examples():
    p = _hm([[0.2, 0.3, 0.5], [0.2, 0.3, 0.5]], [0.3, 0.4])
    assert ldm.hm_ldm_rate(0, 1, p, SimplexConfig(5.0, 2)) == pytest.approx(math.exp(0.7), rel=1e-12)
    p = _hm([[1.0, 0.0], [0.0, 1.0]], [0.0, 0.0])
    assert ldm.hm_ldm_rate(0, 1, p, SimplexConfig(1.0, 2)) == pytest.approx(math.exp(-2.0), rel=1e-12)
    # unit distance: p = 1 and p = 2 agree at delta = 1
    Z = [[1.0, 0.0, 0.0], [0.5, 0.5, 0.0]]
    d = np.linalg.norm(np.subtract(*Z))
    p = _hm(Z, [0.0, 0.0])
    s = 1.0 / d
    r1 = ldm.hm_ldm_rate(0, 1, p, SimplexConfig(s, 1))
    r2 = ldm.hm_ldm_rate(0, 1, p, SimplexConfig(s, 2))
    assert r1 == pytest.approx(r2, rel=1e-12) == pytest.approx(math.exp(-1.0), rel=1e-12)


def test_hm_simplex_config_validation():
    with pytest.raises(ValueError):
        SimplexConfig(0.0)
    with pytest.raises(ValueError):
        SimplexConfig(1.0, 3)


@pytest.mark.parametrize("p", [1, 2])
def test_hm_nll_oracle_and_gradients(p):
    rng = np.random.default_rng(p)
    g = random_graph(6, rng, p=0.5)
    params = jitter(ldm.init_hm_params(g, 2, 0), rng)
    s = SimplexConfig(1.7, p)
    ref = O.hm_ldm_nll(6, g.src, g.dst, g.weight, params, 1.7, p)
    assert ldm.hm_ldm_nll(g, params, s) == pytest.approx(ref, rel=1e-12)
    assert check_gradients(lambda q: ldm.hm_ldm_loss(g, q, s, 1.0), params) < 1e-5


def test_champion_fraction_cases():
    one_hot = np.eye(3)[[0, 1, 2, 0]]
    r = ldm.champion_fraction(one_hot)
    assert r.fraction == 1.0 and r.identifiable
    r = ldm.champion_fraction(np.full((5, 3), 1 / 3))
    assert r.fraction == 0.0 and not r.identifiable
    mixed = np.vstack([np.tile([1.0, 0, 0], (3, 1)), np.full((3, 3), 1 / 3)])
    r = ldm.champion_fraction(mixed)
    assert r.fraction == 0.5 and not r.identifiable
    assert r.counts.tolist() == [3, 0, 0]


def test_hm_train_warm_start_schedule():
    g, _ = planted(10, 3, 0.6, 0.05, 0)
    runs = ldm.hm_ldm_train(g, 2, TrainConfig(iterations=30), [1.0, 2.0])
    assert [d for d, _, _ in runs] == [1.0, 2.0]
    assert runs[1][2].trace[0] == pytest.approx(ldm.hm_ldm_loss(g, runs[0][1], SimplexConfig(2.0), 1.0)[0])


def test_svd_align_properties():
    rng = np.random.default_rng(0)
    Z = rng.standard_normal((50, 2)) * [3.0, 1.0]
    A, unique = ldm.svd_align(Z)
    assert unique
    dZ = np.linalg.norm(Z[:, None] - Z[None], axis=-1)
    dA = np.linalg.norm(A[:, None] - A[None], axis=-1)
    assert np.max(np.abs(dZ - dA)) < 1e-10
    th = 0.7
    R = np.array([[math.cos(th), -math.sin(th)], [math.sin(th), math.cos(th)]])
    B, _ = ldm.svd_align(Z @ R)
    assert np.allclose(A, B, atol=1e-10)
    # already centred and diagonal
    C = A.copy()
    D, _ = ldm.svd_align(C)
    assert np.allclose(np.abs(D), np.abs(C), atol=1e-10)


def test_svd_align_flags_repeated_singular_values():
    Z = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]])
    with pytest.warns(RuntimeWarning):
        _, unique = ldm.svd_align(Z)
    assert not unique


def test_tsv_roundtrips(tmp_path):
    rng = np.random.default_rng(0)
    M = rng.standard_normal((4, 3))
    ids = ["a", "b", "c", "d"]
    ldm.write_matrix_tsv(tmp_path / "m.tsv", ids, M)
    i2, M2 = ldm.read_matrix_tsv(tmp_path / "m.tsv")
    assert i2 == ids and np.array_equal(M, M2)
    eff = {"gamma": rng.standard_normal(4), "delta": rng.standard_normal(4)}
    ldm.write_effects_tsv(tmp_path / "e.tsv", ids, eff)
    i3, e3 = ldm.read_effects_tsv(tmp_path / "e.tsv")
    assert i3 == ids and all(np.array_equal(eff[k], e3[k]) for k in eff)
