import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cliquecycles import detect, graphs
from cliquecycles.detect import (AlgoConstants, Event, detect_h_cycle, dlp_baseline, fc,
                                 fc_doubling, fmm_baseline, fvic, fvic_doubling,
                                 interleave_events, load_constants)

DESK = load_constants("desk")


def _on_cycle(g, h, v):
    return v in graphs.cycle_participants(g, h)


# ------------------------------------------------------------ constants

def test_constants_profiles_and_overrides(tmp_path):
    assert load_constants("asymptotic") == AlgoConstants(profile="asymptotic")
    assert load_constants().profile == "desk"
    assert load_constants({"c_fc": 3}).c_fc == 3
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"c_fvic": 2.5}))
    assert load_constants(str(p)).c_fvic == 2.5
    with pytest.raises(ValueError):
        load_constants({"bogus": 1})
    with pytest.raises(ValueError):
        load_constants("no_such_profile")
    with pytest.raises(ValueError):
        AlgoConstants(c_g=0)
    assert AlgoConstants().fc_multiplier(3) == 8 * 12 ** 5
    assert DESK.fvic_repetitions(3, 256) >= DESK.fvic_min_reps
    assert set(detect.calibration()) >= {"redistribute_C", "learn_members_C"}


# ----------------------------------------------------------- interleave

def _brute_interleave(streams):
    """Round-robin clock: each global round advances every unfinished child by one round."""
    lengths = [s[-1][0] if s else 0 for s in streams]
    local = [0] * len(streams)
    pos = [0] * len(streams)
    clock = 0
    out = []
    while any(local[c] < lengths[c] for c in range(len(streams))):
        for c, s in enumerate(streams):
            if local[c] >= lengths[c]:
                continue
            local[c] += 1
            clock += 1
            while pos[c] < len(s) and s[pos[c]][0] == local[c]:
                out.append((clock, s[pos[c]][1], c))
                if s[pos[c]][1]:
                    return out
                pos[c] += 1
    return out


@st.composite
def event_streams(draw):
    k = draw(st.integers(1, 4))
    streams = []
    for _ in range(k):
        gaps = draw(st.lists(st.integers(1, 6), min_size=0, max_size=5))
        times = np.cumsum(gaps).tolist()
        hits = [draw(st.booleans()) and draw(st.booleans()) for _ in times]
        streams.append(list(zip(times, hits)))
    return streams


@settings(max_examples=200, deadline=None)
@given(event_streams())
def test_interleave_matches_round_robin_clock(streams):
    got = [(ev.time, ev.answer, ev.info["child"]) for ev in
           interleave_events([[Event(t, a) for t, a in s] for s in streams])]
    assert got == _brute_interleave(streams)


# ------------------------------------------------------------- single runs

def test_fvic_with_full_sample_finds_triangle():
    g = graphs.generate("complete", {"n": 16})
    colors = np.arange(16) % 3
    r = fvic(g, 3, 1.0, seed=0, coloring=colors, sample=np.flatnonzero(colors == 0),
             constants=DESK)
    assert r.answer and _on_cycle(g, 3, r.witness)
    assert r.rounds > 0


def test_fvic_aborts_on_oversized_sample():
    g = graphs.generate("complete", {"n": 16})
    r = fvic(g, 3, 1 / 16, seed=0, sample=range(16), constants=DESK)
    assert not r.answer and r.schedule[0]["aborted"]


def test_fc_flags():
    g = graphs.generate("complete", {"n": 16})
    r = fc(g, 3, 0.25, 2.0, seed=1, constants=load_constants({"c_fc": 8}))
    assert r.flags == ["s>n"] and not r.answer
    with pytest.raises(ValueError):
        fc(g, 3, 0.1, 0.0, seed=1)


def test_fc_positive_records_count_bound():
    g = graphs.generate("planted_clique", {"n": 32, "clique_size": 12}, seed=2)
    hits = [fc(g, 3, 0.5, 0.0, seed=s, constants=DESK) for s in range(10)]
    pos = [r for r in hits if r.answer]
    assert pos
    for r in pos:
        assert _on_cycle(g, 3, r.witness)
        assert 1 <= r.schedule[0]["count_lower_bound"] <= graphs.count_h_cycles(g, 3)


@pytest.mark.parametrize("algo", ["fvic", "fc"])
def test_local_engine_matches_simulator(algo):
    g = graphs.generate("planted_disjoint_cycles", {"n": 64, "count": 6, "h": 3}, seed=5)
    for s in range(12):
        if algo == "fvic":
            a = fvic(g, 3, 0.25, seed=s, constants=DESK)
            b = fvic(g, 3, 0.25, seed=s, constants=DESK, engine="local")
        else:
            a = fc(g, 3, 0.25, 0.5, seed=s, constants=DESK)
            b = fc(g, 3, 0.25, 0.5, seed=s, constants=DESK, engine="local")
        assert a.answer == b.answer
        assert b.rounds == 0


def test_engine_name_checked():
    g = graphs.generate("complete", {"n": 8})
    with pytest.raises(ValueError):
        fvic(g, 3, 1.0, seed=0, sample=[0], engine="gpu")


# -------------------------------------------------------- doubling / main

@pytest.mark.parametrize("seed", range(3))
def test_one_sided_on_cycle_free_inputs(seed):
    tree = graphs.generate("random_tree", {"n": 32}, seed)
    bip = graphs.generate("random_bipartite", {"n": 32, "edge_prob": 0.3}, seed)
    dag = graphs.generate("random_dag", {"n": 32, "edge_prob": 0.3}, seed)
    for g, h in ((tree, 3), (bip, 3), (tree, 4), (dag, 3), (dag, 4)):
        assert not detect_h_cycle(g, h, DESK, seed).answer
        assert not fmm_baseline(g, h, seed, DESK).answer
    assert not dlp_baseline(bip, seed).answer


def test_detect_finds_planted_triangles():
    g = graphs.generate("planted_disjoint_cycles", {"n": 64, "count": 8, "h": 3}, seed=1)
    r = detect_h_cycle(g, 3, DESK, seed=4)
    assert r.answer and _on_cycle(g, 3, r.witness)
    assert r.algorithm == "main"
    assert all("child" in e for e in r.schedule)


def test_detect_directed_four_cycle():
    g = graphs.generate("planted_disjoint_cycles",
                        {"n": 32, "count": 6, "h": 4, "directed": True}, seed=2)
    r = detect_h_cycle(g, 4, DESK, seed=3)
    assert r.answer and _on_cycle(g, 4, r.witness)


def test_doubling_wrappers_detect():
    g = graphs.generate("planted_clique", {"n": 64, "clique_size": 10}, seed=3)
    assert fvic_doubling(g, 3, DESK, seed=1).answer
    assert fc_doubling(g, 3, DESK, seed=1).answer


def test_time_budget_cuts_off():
    g = graphs.generate("random_tree", {"n": 32}, 0)
    r = detect_h_cycle(g, 3, DESK, seed=0, time_budget=5)
    assert not r.answer and r.rounds == 5 and r.flags == ["budget"]


def test_baselines_detect():
    g = graphs.generate("planted_disjoint_cycles", {"n": 64, "count": 10, "h": 3}, seed=7)
    r = fmm_baseline(g, 3, 0, DESK)
    assert r.answer and _on_cycle(g, 3, r.witness)
    r = dlp_baseline(g, 0)
    assert r.answer and _on_cycle(g, 3, r.witness)
    with pytest.raises(ValueError):
        dlp_baseline(g, 0, h=4)


def test_fmm_four_cycles_with_colorings():
    g = graphs.generate("planted_disjoint_cycles", {"n": 32, "count": 5, "h": 4}, seed=8)
    r = fmm_baseline(g, 4, 0, DESK)
    assert r.answer and _on_cycle(g, 4, r.witness)


def test_run_algorithm_dispatch():
    g = graphs.generate("complete", {"n": 16})
    for tag in ("main", "fvic", "fc", "fmm", "dlp"):
        res = detect.run_algorithm(tag, g, 3, DESK, 0)
        assert isinstance(res.answer, bool)
    with pytest.raises(ValueError):
        detect.run_algorithm("nope", g, 3, DESK, 0)
    out = detect.run_algorithm("main", g, 3, DESK, 0).to_json(n=16)
    assert out["n"] == 16 and out["answer"] is True
    json.dumps(out)


def test_h_range_checked():
    g = graphs.generate("complete", {"n": 16})
    with pytest.raises(ValueError):
        detect_h_cycle(g, 2, DESK, 0)
    with pytest.raises(ValueError):
        detect_h_cycle(g, 9, DESK, 0)
