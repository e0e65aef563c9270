import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy import stats

from patientstab import sim
from patientstab.delay import (
    DelayPolicy,
    as_delay_matrix,
    delay_blocks,
    delayed_system,
    embed_map,
    embed_matrix,
    expected_delayed_lipschitz,
)
from patientstab.linalg import spectral_radius
from patientstab.systems import (
    LipschitzSet,
    MapSpec,
    SwitchedSystem,
    evaluate,
    lipschitz_matrix,
    lipschitz_set,
)

from conftest import D_EQ, DH_A0, DH_A1, load_fixture

H = load_fixture("example2_H").maps[0]
finite = st.floats(-3, 3, allow_nan=False, width=64)


def mapspecs(n):
    mat = arrays(np.float64, (n, n), elements=finite)
    return st.builds(MapSpec, mat, mat, arrays(np.float64, (n,), elements=finite))


@st.composite
def map_and_delay(draw):
    n = draw(st.integers(1, 4))
    L = draw(st.integers(0, 4))
    f = draw(mapspecs(n))
    d = draw(arrays(np.int64, (n, n), elements=st.integers(0, L)))
    return f, d, L


@st.composite
def lipschitz_sets(draw, n=None):
    n = draw(st.integers(1, 3)) if n is None else n
    k = draw(st.integers(1, 3))
    mats = tuple(draw(arrays(np.float64, (n, n), elements=st.floats(0, 2, width=64))) for _ in range(k))
    raw = np.array(draw(st.lists(st.floats(0.01, 1.0), min_size=k, max_size=k)))
    return LipschitzSet(mats, raw / raw.sum())


@st.composite
def policies(draw, n, k, L):
    kind = draw(st.sampled_from(["none", "fixed", "iid_uniform_entries", "explicit"]))
    if kind == "fixed":
        return DelayPolicy.fixed(draw(arrays(np.int64, (n, n), elements=st.integers(0, L))))
    if kind == "explicit":
        choices = []
        for _ in range(k):
            m = draw(st.integers(1, 3))
            ds = [draw(arrays(np.int64, (n, n), elements=st.integers(0, L))) for _ in range(m)]
            p = np.array(draw(st.lists(st.floats(0.01, 1.0), min_size=m, max_size=m)))
            p = p / p.sum()
            p[-1] = 1.0 - p[:-1].sum()
            choices.append(list(zip(ds, p)))
        return DelayPolicy.explicit(choices)
    return DelayPolicy(kind)


# -- embedding --------------------------------------------------------------

def test_embed_h_matches_display():
    hd = embed_map(H, D_EQ, 1)
    assert hd.n == 6
    rng = np.random.default_rng(5)
    for _ in range(20):
        x = rng.normal(size=6)
        x10, x20, x30, x11, x21, x31 = x
        t = np.tanh
        expected = [
            0.25 * x10 - t(x10) + t(x21) - t(x31),
            0.25 * x20 - t(x10) + t(x20) - t(x31) - 0.5,
            0.25 * x30 + t(x10) - t(x30),
            x10, x20, x30,
        ]
        np.testing.assert_allclose(evaluate(hd, x), expected, rtol=1e-14, atol=1e-15)


def test_embed_trivial_delay():
    assert embed_map(H, np.zeros((3, 3), int), 0) == H
    np.testing.assert_array_equal(embed_matrix(lipschitz_matrix(H), np.zeros((3, 3), int), 0), lipschitz_matrix(H))


def test_embed_zero_delay_tracks_undelayed():
    sys = load_fixture("example2_H")
    dsys = delayed_system(sys, DelayPolicy.fixed(np.zeros((3, 3), int)), 1)
    x0 = np.array([0.3, -0.7, 1.1])
    a = sim.simulate(sys, x0, 50, 3, seed=2)
    b = sim.simulate(dsys, x0, 50, 3, seed=2)
    np.testing.assert_array_equal(b.states[:, :, :3], a.states)
    # filler coordinates hold the previous lag-0 state
    np.testing.assert_array_equal(b.states[:, 1:, 3:], a.states[:, :-1])


def test_embed_matrix_dh():
    ad = embed_matrix(lipschitz_matrix(H), D_EQ, 1)
    a0, a1 = delay_blocks(lipschitz_matrix(H), D_EQ, 1)
    np.testing.assert_array_equal(a0, DH_A0)
    np.testing.assert_array_equal(a1, DH_A1)
    np.testing.assert_array_equal(ad[:3, :3], DH_A0)
    np.testing.assert_array_equal(ad[:3, 3:], DH_A1)
    np.testing.assert_array_equal(ad[3:, :3], np.eye(3))
    assert spectral_radius(ad).radius == pytest.approx(2.0239, abs=5e-4)


@settings(max_examples=100, deadline=None)
@given(map_and_delay())
def test_blocks_partition(data):
    f, d, L = data
    a = lipschitz_matrix(f)
    np.testing.assert_array_equal(np.sum(delay_blocks(a, d, L), axis=0), a)


@settings(max_examples=200, deadline=None)
@given(map_and_delay())
def test_linearize_then_delay_commutes(data):
    f, d, L = data
    assert np.array_equal(lipschitz_matrix(embed_map(f, d, L)), embed_matrix(lipschitz_matrix(f), d, L))


@settings(max_examples=30, deadline=None)
@given(map_and_delay(), st.integers(0, 2**32 - 1))
def test_embedded_lipschitz_bound(data, seed):
    f, d, L = data
    g = embed_map(f, d, L)
    a = embed_matrix(lipschitz_matrix(f), d, L)
    rng = np.random.default_rng(seed)
    x = rng.uniform(-10, 10, size=(2000, g.n))
    y = rng.uniform(-10, 10, size=(2000, g.n))
    gx = x @ g.linear.T + np.tanh(x) @ g.gain.T
    gy = y @ g.linear.T + np.tanh(y) @ g.gain.T
    assert np.all(np.abs(gx - gy) <= np.abs(x - y) @ a.T + 1e-9)


def test_delay_validation():
    with pytest.raises(ValueError, match=r"\(0, 1\)"):
        as_delay_matrix([[0, 2], [0, 0]], 1)
    with pytest.raises(ValueError):
        as_delay_matrix([[0, -1], [0, 0]], 1)
    with pytest.raises(ValueError):
        embed_map(H, np.zeros((2, 2), int), 1)
    with pytest.raises(ValueError):
        as_delay_matrix([[0.5]], 1)


# -- delayed systems ----------------------------------------------------------

def test_pibar_marginals():
    sys = load_fixture("example4_pibar")
    np.testing.assert_allclose(sys.map_marginals(), [0.5, 0.5], rtol=0, atol=1e-15)
    probs = sorted(p for _, _, p in sys.support())
    np.testing.assert_allclose(probs, [0.05, 0.45, 0.5], atol=1e-15)


def test_policy_none_is_zero_embedding():
    mu2 = load_fixture("example1_mu2")
    dsys = delayed_system(mu2, DelayPolicy.none(), 2)
    maps, delays = dsys.sample(0, 100)
    assert not delays.any()
    a = sim.simulate(mu2, [0.6, -0.4], 40, 5, seed=9)
    b = sim.simulate(dsys, [0.6, -0.4], 40, 5, seed=9)
    np.testing.assert_array_equal(a.states, b.states[:, :, :2])


def test_iid_uniform_support_h():
    dsys = load_fixture("example2_H_iid")
    sup = dsys.support()
    assert len(sup) == 2 ** 9
    assert len({d.tobytes() for _, d, _ in sup}) == 2 ** 9
    np.testing.assert_allclose([p for _, _, p in sup], 1 / 512)


def test_support_limit():
    sys = SwitchedSystem((H,), np.ones(1))
    with pytest.raises(ValueError):
        delayed_system(sys, DelayPolicy.iid_uniform(), 2).support()


def test_explicit_policy_errors():
    mu2 = load_fixture("example1_mu2")
    with pytest.raises(ValueError):
        delayed_system(mu2, DelayPolicy.explicit([[(np.zeros((2, 2)), 1.0)]]), 1)
    with pytest.raises(ValueError):
        delayed_system(mu2, DelayPolicy.explicit([[(np.zeros((2, 2)), 1.0)], []]), 1)
    with pytest.raises(ValueError):
        DelayPolicy.explicit([[(np.zeros((2, 2)), 0.7)]])
    # a zero-weight map may have no delay choices
    mu1 = load_fixture("example1_mu1")
    delayed_system(mu1, DelayPolicy.explicit([[(np.zeros((2, 2)), 1.0)], []]), 1)


def test_marginality_chi_square():
    dsys = load_fixture("example4_pibar")
    maps, delays = dsys.sample(21, 100_000)
    counts = np.bincount(maps, minlength=2)
    assert stats.chisquare(counts, [50_000, 50_000]).pvalue > 1e-6
    g = maps == 1
    delayed = delays[g][:, 1, 0] == 1
    assert stats.binomtest(int(delayed.sum()), int(g.sum()), 0.9).pvalue > 1e-6


def test_iid_entries_uniform():
    dsys = load_fixture("example1_mu2_delayed")
    _, delays = dsys.sample(4, 50_000)
    flat = delays.reshape(len(delays), -1) @ (2 ** np.arange(4))
    counts = np.bincount(flat, minlength=16)
    assert stats.chisquare(counts).pvalue > 1e-6


# -- expected delayed Lipschitz matrix ------------------------------------------

def enumerate_expectation(ls, L):
    """Brute force over every delay matrix, each equally likely."""
    n = ls.n
    total = np.zeros((n * (L + 1), n * (L + 1)))
    for a, w in zip(ls.matrices, ls.weights):
        for flat in itertools.product(range(L + 1), repeat=n * n):
            total += w * embed_matrix(a, np.array(flat).reshape(n, n), L)
    return total / (L + 1) ** (n * n)


def test_iid_expectation_matches_enumeration():
    ls = lipschitz_set(load_fixture("example1_mu2"))
    comp = expected_delayed_lipschitz(ls, DelayPolicy.iid_uniform(), 1)
    np.testing.assert_allclose(comp, enumerate_expectation(ls, 1), rtol=0, atol=1e-15)
    for ell in range(2):
        np.testing.assert_allclose(comp[:2, 2 * ell : 2 * ell + 2], ls.expectation() / 2, atol=1e-15)


def test_none_policy_expectation():
    ls = lipschitz_set(load_fixture("example1_mu2"))
    comp = expected_delayed_lipschitz(ls, DelayPolicy.none(), 2)
    np.testing.assert_array_equal(comp[:2, :2], ls.expectation())
    assert not comp[:2, 2:].any()


def test_expectation_matches_monte_carlo():
    rng = np.random.default_rng(8)
    ls = LipschitzSet((rng.uniform(0, 1, (2, 2)), rng.uniform(0, 1, (2, 2))), np.array([0.35, 0.65]))
    L = 2
    dsys = delayed_system(SwitchedSystem(
        (MapSpec.build(2, linear=ls.matrices[0]), MapSpec.build(2, linear=ls.matrices[1])), ls.weights),
        DelayPolicy.iid_uniform(), L)
    maps, delays = dsys.sample(2, 100_000)
    acc = np.zeros((6, 6))
    for k in range(2):
        sel = maps == k
        # each delay entry picks one block position, so average the indicators
        for ell in range(L + 1):
            acc[:2, 2 * ell : 2 * ell + 2] += ls.matrices[k] * (delays[sel] == ell).sum(axis=0)
    acc[:2] /= len(maps)
    acc[2:] = expected_delayed_lipschitz(ls, DelayPolicy.iid_uniform(), L)[2:]
    np.testing.assert_allclose(acc, expected_delayed_lipschitz(ls, DelayPolicy.iid_uniform(), L), atol=5e-3)


@settings(max_examples=100, deadline=None)
@given(st.data())
def test_block_rows_sum_to_mean(data):
    ls = data.draw(lipschitz_sets())
    L = data.draw(st.integers(0, 4))
    policy = data.draw(policies(ls.n, len(ls.matrices), L))
    comp = expected_delayed_lipschitz(ls, policy, L)
    n = ls.n
    total = comp[:n].reshape(n, L + 1, n).sum(axis=1)
    np.testing.assert_allclose(total, ls.expectation(), rtol=0, atol=1e-13)
