"""The references themselves, checked only on cases whose answer is forced."""
import math

import numpy as np
import pytest

import oracles as O


def test_poisson_oracle_two_nodes_one_edge():
    p = {"Z": [[0.0, 0.0], [0.0, 0.0]], "gamma": [0.0, 0.0]}
    assert O.poisson_nll("undirected", 2, 2, [0], [1], [1], p) == pytest.approx(1.0, abs=1e-15)


def test_poisson_oracle_empty_graph_is_total_rate():
    lam = math.exp(-5.0)
    p = {"Z": [[0.0, 0.0], [3.0, 4.0]], "gamma": [0.0, 0.0]}
    assert O.poisson_nll("undirected", 2, 2, [], [], [], p) == pytest.approx(lam, rel=1e-15)


def test_convolution_oracle_forced_values():
    # lm = 0 degenerates to Poisson(lp) on y >= 0
    assert O.skellam_pmf_convolution(3, 2.0, 1e-300) == pytest.approx(math.exp(-2) * 8 / 6, rel=1e-12)
    # y = 0, lp = lm = 1: sum_k e^-2 / (k!)^2 = e^-2 I_0(2)
    assert O.skellam_pmf_convolution(0, 1.0, 1.0) == pytest.approx(math.exp(-2) * 2.2795853023360673, rel=1e-14)


def test_bessel_closed_form_against_convolution():
    for y in (-3, 0, 2):
        assert math.exp(O.skellam_log_pmf(y, 1.5, 0.7)) == pytest.approx(
            O.skellam_pmf_convolution(y, 1.5, 0.7), rel=1e-12)


def test_adaptive_simpson_polynomials_and_gaussian():
    assert O.adaptive_simpson(lambda x: x * x, 0.0, 1.0) == pytest.approx(1 / 3, abs=1e-14)
    assert O.adaptive_simpson(math.exp, 0.0, 1.0) == pytest.approx(math.e - 1, abs=1e-12)
    g = lambda x: math.exp(-0.5 * x * x) / math.sqrt(2 * math.pi)
    assert O.adaptive_simpson(g, -12.0, 12.0) == pytest.approx(1.0, abs=1e-11)


def test_impact_oracle_normalises():
    for fam, hi in (("truncated_normal", 10.0), ("log_normal", 1e4)):
        mu = 2.0 if fam == "log_normal" else 3.0
        cuts = [0.0, 1.0, 3.0, 10.0, 100.0, 1e4][:6 if fam == "log_normal" else 4]
        mass = sum(O.adaptive_simpson(lambda t: O.impact_density(t, mu, 0.6, fam, 0.0, hi), a, b, tol=1e-13)
                   for a, b in zip(cuts[:-1], cuts[1:]))
        assert mass == pytest.approx(1.0, abs=1e-7)
        assert O.impact_cdf_mass(0.0, hi, 1.0, 0.6, fam, 0.0, hi) == pytest.approx(1.0, abs=1e-12)


def test_two_median_oracle_collinear():
    # points on a line: best split is {0, 1} | {10, 11, 12} with cost 1 + 2
    P = np.array([[0.0], [1.0], [10.0], [11.0], [12.0]])
    assert O.exhaustive_two_median(P) == pytest.approx(3.0, abs=1e-6)


def test_two_median_oracle_unit_square():
    # one corner alone beats two pairs: the other three cost their Fermat
    # distance sqrt((a^2 + b^2 + c^2) / 2 + 2 sqrt(3) area) = sqrt(2 + sqrt(3))
    P = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    assert O.exhaustive_two_median(P) == pytest.approx(math.sqrt(2 + math.sqrt(3)), abs=1e-6)


def test_bfs_oracle():
    assert O.bfs_connected(3, [(0, 1), (1, 2)])
    assert not O.bfs_connected(4, [(0, 1), (2, 3)])


def test_bernoulli_oracle():
    assert O.bernoulli_nll([0.5, 0.5], [1, 0]) == pytest.approx(2 * math.log(2), rel=1e-15)


def test_dirichlet_oracle_limits():
    assert O.dirichlet_mean_max(1e-3, 4, 2000, 0) > 0.95
    assert O.dirichlet_mean_max(1e3, 4, 2000, 0) < 0.27
