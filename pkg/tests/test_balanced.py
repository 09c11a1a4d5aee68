import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cliquecycles import balanced, graphs
from cliquecycles.balanced import (BalancedFamily, check_balanced, check_balanced_distributed,
                                   family_size, learn_members, redistribute_input,
                                   sample_balanced, sample_family)
from cliquecycles.ccsim import Clique, SimConfig
from cliquecycles.detect import calibration, fc_grid, load_constants


def test_quota_formulas():
    assert family_size(1 / 16, 2) == 256
    assert family_size(0.5, 1, 3) == 6
    assert balanced.vertex_quota(256, 0.25, 0.5) == 1 * 4 * 8
    assert balanced.vertex_quota(256, 0.25, 2.0) == 4 * 4 * 8
    assert balanced.set_quota(100, 0.1) == 40


def test_sample_family_validation():
    with pytest.raises(ValueError):
        sample_family(16, 0.1, 1)       # p below n^-1/2
    with pytest.raises(ValueError):
        sample_family(16, 0.5, 2.5)
    with pytest.raises(ValueError):
        sample_family(16, 0.25, 2, 2)   # 32 sets on 16 machines
    fam = sample_family(64, 0.25, 1, seed=3)
    assert fam.s == 4 and fam.members.shape == (4, 64)


def test_check_balanced_tags():
    n = 16
    fam = BalancedFamily(n, 0.5, 1.0, np.zeros((2, n), dtype=bool))
    assert check_balanced(fam) == (True, None)
    full = BalancedFamily(64, 1 / 8, 0.0, np.ones((1, 64), dtype=bool))
    assert check_balanced(full) == (False, "cond4")
    many = BalancedFamily(n, 1.0, 2.0, np.ones((n, n), dtype=bool))
    assert check_balanced(many)[0]
    heavy = BalancedFamily(64, 1.0, 2.0, np.ones((64, 64), dtype=bool))
    assert check_balanced(heavy) == (False, "cond3")
    assert check_balanced(BalancedFamily(n, 0.5, 3.0, np.zeros((1, n), bool)))[1] == "cond1"
    assert check_balanced(BalancedFamily(n, 0.01, 1.0, np.zeros((1, n), bool)))[1] == "cond2"


@settings(max_examples=40, deadline=None)
@given(st.sampled_from([16, 32, 64]), st.floats(0.25, 1.0), st.floats(0.0, 1.0),
       st.floats(0.02, 1.0), st.integers(0, 2**31 - 1))
def test_distributed_check_agrees(n, p, a, density, seed):
    rng = np.random.default_rng(seed)
    s = min(n, family_size(p, a))
    fam = BalancedFamily(n, p, a, rng.random((s, n)) < density)
    cl = Clique(SimConfig(n))
    ok, tag = check_balanced_distributed(fam, cl)
    assert (ok, tag) == check_balanced(fam)
    assert cl.rounds <= 5
    assert cl.ledger.audit()


def test_sample_balanced_gives_up():
    with pytest.raises(balanced.UnbalancedFamilyError):
        # p = 1 puts every vertex in every set: vertex quota fails for large s
        sample_balanced(64, 1.0, 0.0, 64, np.random.default_rng(0))


def _grid_families(n, reps, seed):
    rng = np.random.default_rng(seed)
    for p, a in fc_grid(n, 3, load_constants("desk")):
        if family_size(p, a, 2) > n:
            continue
        for _ in range(reps):
            cl = Clique(SimConfig(n))
            try:
                fam = sample_balanced(n, p, a, 2, rng, cl)
            except balanced.UnbalancedFamilyError:
                continue
            yield fam, cl


@pytest.mark.parametrize("n", [16, 64, 256])
def test_learn_members_correct_and_bounded(n):
    C = calibration()["learn_members_C"]
    for fam, cl in _grid_families(n, 1, seed=n + 1000):
        ml = learn_members(fam, cl)
        assert ml.rounds <= C * math.log2(n)
        for v in range(0, n, max(1, n // 16)):
            for i in np.flatnonzero(fam.members[:, v]):
                assert np.array_equal(ml.lists[v][i], fam.subset(i))
            assert set(ml.lists[v]) == set(np.flatnonzero(fam.members[:, v]).tolist())
        assert cl.ledger.audit()


def test_learn_members_single_set():
    n = 64
    fam = BalancedFamily(n, 1.0, 0.0, np.ones((1, n), dtype=bool))
    ml = learn_members(fam, Clique(SimConfig(n)))
    assert all(np.array_equal(ml.lists[v][0], np.arange(n)) for v in range(n))
    assert ml.rounds <= calibration()["learn_members_C"] * math.log2(n)


@pytest.mark.parametrize("n", [16, 64, 256])
def test_redistribute_pieces_and_bound(n):
    C = calibration()["redistribute_C"]
    g = graphs.generate("erdos_renyi", {"n": n, "edge_prob": 0.3}, n)
    for fam, cl in _grid_families(n, 1, seed=n + 2000):
        red = redistribute_input(g.adj, fam, cl)
        assert red.rounds <= C * math.log2(n)
        for i in range(fam.s):
            us = fam.subset(i)
            assert np.array_equal(red.matrices[i, :us.size, :us.size], g.adj[np.ix_(us, us)])
            assert not red.matrices[i, us.size:].any()
        # the pieces of the last team partition its k x k matrix
        geo = red.geometry
        base = (fam.s - 1) * geo.team_size
        cover = np.zeros(red.matrices.shape[1:], dtype=int)
        for node in range(base, base + geo.team_size):
            team, mask = red.piece(node)
            assert team == fam.s - 1
            cover += mask
        assert (cover == 1).all()
        sent = cl.ledger.sent_bits.max() / cl.config.entry_bits
        assert sent <= C * n * math.log2(n)


def test_protocols_refuse_unbalanced():
    fam = BalancedFamily(64, 1.0, 2.0, np.ones((64, 64), dtype=bool))
    with pytest.raises(balanced.UnbalancedFamilyError):
        learn_members(fam, Clique(SimConfig(64)))
    with pytest.raises(balanced.UnbalancedFamilyError):
        redistribute_input(np.zeros((64, 64)), fam, Clique(SimConfig(64)))
