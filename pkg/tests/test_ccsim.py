import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cliquecycles import ccsim
from cliquecycles.ccsim import (BandwidthError, Clique, NodeProgram, RoundLedger, SimConfig,
                                SimTimeoutError, relay_plan)


def test_config_defaults():
    cfg = SimConfig(100)
    assert cfg.bandwidth_bits == 7 and cfg.entry_bits == 7
    assert SimConfig(100, c=2).bandwidth_bits == 14
    assert SimConfig(1).bandwidth_bits == 1
    with pytest.raises(ValueError):
        SimConfig(0)
    with pytest.raises(ValueError):
        SimConfig(4, bandwidth_bits=0)


def test_phase_cost_is_worst_pair():
    cl = Clique(SimConfig(8, bandwidth_bits=3))
    r = cl.exchange([0, 0, 1], [1, 1, 2], [2, 3, 1], entry_bits=2)
    assert r == math.ceil(10 / 3)
    assert cl.ledger.audit()
    assert cl.ledger.sent_bits[0] == 10 and cl.ledger.recv_bits[2] == 2


def test_ledger_rejects_short_phase():
    led = RoundLedger(SimConfig(4, bandwidth_bits=2))
    with pytest.raises(BandwidthError):
        led.add([0], [1], [5], "x", rounds=2)


def _demands(rng, n, skew):
    if skew == "uniform":
        src = rng.integers(0, n, 6 * n)
        dst = rng.integers(0, n, 6 * n)
    elif skew == "one_pair":
        src = np.zeros(3 * n, dtype=int)
        dst = np.ones(3 * n, dtype=int)
    elif skew == "hotspot":
        src = rng.integers(0, n, 4 * n)
        dst = np.where(rng.random(4 * n) < 0.5, 0, rng.integers(0, n, 4 * n))
    else:  # permutation blocks
        perm = rng.permutation(n)
        src = np.repeat(np.arange(n), n)
        dst = np.repeat(perm, n)
    return src, dst


@settings(max_examples=40, deadline=None)
@given(st.sampled_from([5, 8, 12, 16, 32]), st.integers(0, 10**6),
       st.sampled_from(["uniform", "one_pair", "hotspot", "blocks"]),
       st.sampled_from([None, 1, 3, 20]))
def test_route_bound_and_audit(n, seed, skew, eb):
    rng = np.random.default_rng(seed)
    src, dst = _demands(rng, n, skew)
    keep = src != dst
    src, dst = src[keep], dst[keep]
    cfg = SimConfig(n)
    cl = Clique(cfg)
    r = cl.route(src, dst, 1, entry_bits=eb)
    e = cfg.entry_bits if eb is None else eb
    load = max(np.bincount(src, minlength=n).max(), np.bincount(dst, minlength=n).max())
    assert r <= 2 * math.ceil(load / n) * math.ceil(e / cfg.bandwidth_bits)
    assert cl.ledger.audit()


@settings(max_examples=40, deadline=None)
@given(st.sampled_from([4, 6, 8, 16]), st.integers(0, 10**6), st.integers(1, 40))
def test_relay_plan_conserves_and_balances(n, seed, scale):
    rng = np.random.default_rng(seed)
    D = rng.integers(0, scale, (n, n)) * (rng.random((n, n)) < 0.5)
    D[0, 1] += scale * n  # skew one pair
    X, Y, m = relay_plan(D)
    assert np.array_equal(X.sum(axis=1), D.sum(axis=1))
    assert np.array_equal(Y.sum(axis=0), D.sum(axis=0))
    assert np.array_equal(X.sum(axis=0), Y.sum(axis=1))
    assert X.max() <= m and Y.max() <= m
    assert X.min() >= 0 and Y.min() >= 0


def test_lenzen_route_delivers_in_order():
    demands = [(0, 3, "a"), (1, 3, "b"), (0, 2, "c"), (0, 3, "d")]
    inbox, rounds = ccsim.lenzen_route(demands, SimConfig(4))
    assert inbox[3] == [(0, "a"), (1, "b"), (0, "d")]
    assert inbox[2] == [(0, "c")] and inbox[0] == []
    assert rounds >= 1
    with pytest.raises(ValueError):
        ccsim.lenzen_route([(0, 9, 1)], SimConfig(4))


def test_broadcast_large_payload_uses_two_phases():
    cfg = SimConfig(16)
    copies, r = ccsim.broadcast(3, list(range(160)), cfg)
    assert all(c == list(range(160)) for c in copies.values())
    assert r == 2 * math.ceil(10 * cfg.entry_bits / cfg.bandwidth_bits)
    cl = Clique(cfg)
    assert cl.broadcast(0, 1) == 1


def test_iter_rounds_and_csv(tmp_path):
    cl = Clique(SimConfig(4, bandwidth_bits=2))
    cl.exchange([0, 1], [1, 2], [3, 1], entry_bits=1)
    rows = list(cl.ledger.iter_rounds())
    assert rows == [(0, 0, 1, 2), (0, 1, 2, 1), (1, 0, 1, 1)]
    cl.ledger.to_csv(tmp_path / "r.csv")
    assert (tmp_path / "r.csv").read_text().splitlines()[0] == "round,sender,receiver,bits"
    cl.ledger.write_summary(tmp_path / "s.json")
    assert cl.ledger.summary()["rounds"] == 2


def test_node_rng_is_per_node_and_reproducible():
    a, b = Clique(SimConfig(4), seed=5), Clique(SimConfig(4), seed=5)
    assert a.node_rng(2).integers(1 << 30) == b.node_rng(2).integers(1 << 30)
    assert a.node_rng(1).integers(1 << 30) != a.node_rng(2).integers(1 << 30)


class _Ring(NodeProgram):
    """Pass a token around the ring; node 0 stops once it returns."""

    def step(self, rnd, inbox):
        if rnd == 0 and self.node == 0:
            return [(1, 1, "tok")]
        for src, payload, bits in inbox:
            if self.node == 0:
                self.output = rnd
                self.done = True
                return []
            self.done = True
            return [((self.node + 1) % self.n, bits, payload)]
        return []


def test_lockstep_ring():
    n = 6
    progs = [_Ring() for _ in range(n)]
    out, led = ccsim.run(SimConfig(n), progs)
    assert out[0] == n
    assert led.rounds == n


class _Flood(NodeProgram):
    def step(self, rnd, inbox):
        return [(1, 100, None)] if self.node == 0 else []


def test_lockstep_bandwidth_violation():
    with pytest.raises(BandwidthError):
        ccsim.run(SimConfig(4), [_Flood() for _ in range(4)])


class _Forever(NodeProgram):
    def step(self, rnd, inbox):
        return []


def test_lockstep_timeout():
    with pytest.raises(SimTimeoutError):
        ccsim.run(SimConfig(2), [_Forever(), _Forever()], max_rounds=5)
