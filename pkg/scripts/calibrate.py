"""Measure the implementation constants of the round bounds and pin them.

    python scripts/calibrate.py            # print the calibration block
    python scripts/calibrate.py --write    # also store it in data/constants.json

Each constant is the largest measured/formula ratio on its reference grid
times a 1.25 margin, rounded up to one decimal.  The test-suite checks the same bounds on
different seeds.
"""
import argparse
import json
import math
from importlib import resources

import numpy as np

from cliquecycles import balanced, graphs, matmul, quantum
from cliquecycles.ccsim import Clique, SimConfig
from cliquecycles.detect import fc, fc_grid, load_constants


def _up(v: float) -> float:
    return math.ceil(v * 1.25 * 10) / 10


def single_product_c():
    worst = 0.0
    for name in ("naive", "strassen"):
        sch = matmul.get_scheme(name)
        for team in (4, 16, 64):
            geo = matmul.team_geometry(team, 1, 1, sch)
            R0 = matmul.next_power_of_4(geo.R)
            for R in (R0, 4 * R0):
                for B in (1, 2, 4):
                    rng = np.random.default_rng(team * R * B)
                    S = rng.integers(0, 2, (R, R))
                    T = rng.integers(0, 2, (R, R))
                    res = matmul.single_product(team, S, T, name, B)
                    cfg = SimConfig(team * B)
                    f = (team ** sch.rho * (R / team) ** 2
                         * math.ceil(cfg.entry_bits / (B * cfg.bandwidth_bits)))
                    worst = max(worst, res.rounds / f)
    return _up(worst)


def balanced_c():
    worst_learn = worst_red = 0.0
    for n in (16, 64, 256):
        rng = np.random.default_rng(n)
        for p, a in fc_grid(n, 3, load_constants("desk")):
            if balanced.family_size(p, a, 2) > n:
                continue
            for _ in range(3):
                cl = Clique(SimConfig(n), record_pairs=False)
                try:
                    fam = balanced.sample_balanced(n, p, a, 2, rng, cl)
                except balanced.UnbalancedFamilyError:
                    continue
                adj = graphs.generate("erdos_renyi", {"n": n, "edge_prob": 0.3},
                                      int(rng.integers(1 << 30))).adj
                m = balanced.learn_members(fam, cl)
                r = balanced.redistribute_input(adj, fam, cl)
                worst_learn = max(worst_learn, m.rounds / math.log2(n))
                worst_red = max(worst_red, r.rounds / math.log2(n))
    return _up(worst_learn), _up(worst_red)


def fc_c():
    """Rounds of one fc run at p = 1/x over the fc formula n^rho x^-(2 + delta(rho-1))."""
    from cliquecycles.rhobound import predicted_rounds
    const = load_constants("desk")
    sigma = matmul.get_scheme(const.scheme).sigma
    worst = 0.0
    for n, count in ((64, 4), (128, 8), (256, 16), (256, 64)):
        g = graphs.generate("planted_disjoint_cycles", {"n": n, "count": count, "h": 3}, n)
        st = graphs.cycle_stats(g, 3)
        p = max(n ** -0.5, min(1.0, 1 / st.x))
        for seed in range(3):
            r = fc(g, 3, p, 0.0, seed, constants=const)
            f = predicted_rounds("fc", n, 3, x=st.x, delta=st.delta, sigma=sigma)
            worst = max(worst, r.rounds / f)
    return _up(worst)


def q_basic_c():
    const = load_constants("desk")
    rs = matmul.get_scheme(const.scheme).rho
    worst = 0.0
    for n in (64, 128, 256):
        g = graphs.generate("random_bipartite", {"n": n, "edge_prob": 0.2}, n)
        r = quantum.q_triangle_basic(g, n, const)
        worst = max(worst, r.rounds / (n ** (3 * rs / 4) * math.log2(n) ** 2))
    return _up(worst)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--write", action="store_true")
    args = ap.parse_args()
    learn, red = balanced_c()
    block = {"single_product_c": single_product_c(), "learn_members_C": learn,
             "redistribute_C": red, "fc_run_C": fc_c(), "q_basic_C": q_basic_c()}
    print(json.dumps(block, indent=2))
    if args.write:
        path = resources.files("cliquecycles").joinpath("data/constants.json")
        data = json.loads(path.read_text())
        data["calibration"] = block
        path.write_text(json.dumps(data, indent=2) + "\n")


if __name__ == "__main__":
    main()
