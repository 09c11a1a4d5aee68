"""Grover-search cost accounting and the two quantum triangle detectors.

Searches are emulated classically: the universe is scanned exhaustively and
the ledger is charged ceil(c_g * sqrt(|X|)) * r rounds, where r bounds the
rounds of one membership test.  Membership tests are real simulator
sub-runs; their round counts depend only on the subset size, so they are
measured once per size and cached.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from . import balanced
from .ccsim import Clique, RoundLedger, SimConfig
from .detect import ASYMPTOTIC, AlgoConstants, DetectionResult, _or_aggregate, _rng, detect_h_cycle
from .graphs import Graph
from .matmul import get_scheme, matrix_power_batch, team_geometry

PRECHECK_EXPONENT = 0.3992


class OracleCalibrationError(RuntimeError):
    pass


@dataclass(frozen=True)
class GroverBudget:
    universe_size: int
    oracle_rounds: int
    c_g: float = 2.0

    @property
    def charged_rounds(self) -> int:
        if self.universe_size <= 0:
            return 0
        return int(math.ceil(self.c_g * math.sqrt(self.universe_size))) * int(self.oracle_rounds)


def grover_emulate(universe: Sequence, predicate: Callable, oracle_rounds: int,
                   ledger: Optional[RoundLedger] = None, c_g: float = 2.0):
    """Return (first marked element or None, charged rounds).

    ``predicate(x)`` returns (marked, measured_rounds); a measurement above
    ``oracle_rounds`` means the declared oracle cost was wrong.
    """
    found = None
    for x in universe:
        marked, used = predicate(x)
        if used > oracle_rounds:
            raise OracleCalibrationError(
                f"membership test took {used} rounds, budget {oracle_rounds}")
        if marked and found is None:
            found = x
    charge = GroverBudget(len(universe), oracle_rounds, c_g).charged_rounds
    if ledger is not None:
        ledger.tick(charge, "grover")
    return found, charge


def _rho_sigma(constants: AlgoConstants) -> float:
    return get_scheme(constants.scheme).rho


def _has_triangle(sub: np.ndarray) -> bool:
    B = sub.astype(np.float64)
    return bool(np.trace(B @ B @ B) > 0)


class _TriangleOracle:
    """Triangle test on G[S] run by a team of ``team_n`` machines.

    ``gather`` routes the rows of G[S] from their owners into the team
    layout first (needed when S was not already redistributed).
    """

    def __init__(self, g: Graph, team_n: int, bandwidth: int, constants: AlgoConstants,
                 gather: bool):
        self.g = g
        self.team_n = team_n
        self.bandwidth = bandwidth
        self.constants = constants
        self.gather = gather
        self.cache: dict[int, int] = {}

    def measure(self, S: np.ndarray) -> tuple[bool, int]:
        k = int(S.size)
        sub = self.g.adj[np.ix_(S, S)]
        local = _has_triangle(sub) if k >= 3 else False
        if k not in self.cache:
            cl = Clique(SimConfig(self.team_n, bandwidth_bits=self.bandwidth), record_pairs=False)
            if k:
                if self.gather:
                    geo = team_geometry(self.team_n, 1, k, self.constants.scheme)
                    ri, rj = (a.ravel() for a in np.meshgrid(np.arange(k), np.arange(k),
                                                             indexing="ij"))
                    holders = S[ri] % self.team_n
                    cl.route(holders, geo.owner(0, ri, rj), 1, "oracle:gather", entry_bits=1)
                P = matrix_power_batch(sub.astype(np.int64), 3, cl, self.constants.scheme,
                                       self.constants.mode)
                if bool(np.trace(P.products[0]) > 0) != local:
                    raise AssertionError("simulated oracle disagrees with local triangle test")
                _or_aggregate(cl, "oracle:or")
            self.cache[k] = cl.rounds
        return local, self.cache[k]


def _sample_subsets(rng, n: int, rate: float, count: int, pool: Optional[np.ndarray] = None):
    base = np.arange(n) if pool is None else pool
    for _ in range(count):
        yield base[rng.random(base.size) < rate]


def q_triangle_basic(g: Graph, seed=None, constants: AlgoConstants = ASYMPTOTIC) -> DetectionResult:
    """Grover search over l = ceil(8 log n / p^3) induced subgraphs at rate p = n^(-rho/2)."""
    n = g.n
    rng = _rng(seed)
    rs = _rho_sigma(constants)
    p = n ** (-rs / 2)
    ell = int(math.ceil(8 * math.log2(max(n, 2)) / p ** 3))
    cap = math.ceil(4 * n * p)
    subsets = [S for S in _sample_subsets(rng, n, p, ell) if S.size <= cap]
    cfg = SimConfig(n)
    oracle = _TriangleOracle(g, n, cfg.bandwidth_bits, constants, gather=True)
    # the leader announces the sampled subsets' seed; one round
    ledger = RoundLedger(cfg, record_pairs=False)
    ledger.tick(1, "announce")
    measured = [oracle.measure(S) for S in subsets]
    r = max([1] + [m[1] for m in measured])
    marks = iter(measured)
    found, charged = grover_emulate(subsets, lambda S: next(marks), r, ledger, constants.c_g)
    witness = None
    if found is not None:
        witness = _triangle_vertex(g, found)
    info = {"algo": "q_basic", "p": p, "subsets": len(subsets), "oracle_rounds": r,
            "charged": charged}
    return DetectionResult(found is not None, ledger.rounds, "q_basic", witness, [info],
                           extra={"charged_quantum_rounds": ledger.rounds})


def _triangle_vertex(g: Graph, S: np.ndarray) -> int:
    sub = g.adj[np.ix_(S, S)].astype(np.float64)
    d = np.diagonal(sub @ sub @ sub)
    return int(S[np.flatnonzero(d > 0)[0]])


def precheck_budget(n: int) -> int:
    """Classical round budget for the high-t precheck, ceil(log2(n)^2)."""
    return int(math.ceil(math.log2(max(n, 2)) ** 2))


def q_triangle_fast(g: Graph, seed=None, constants: AlgoConstants = ASYMPTOTIC,
                    precheck: bool = True) -> DetectionResult:
    """Quantum many-subgraph detector with doubling over p.

    For p = 2/sqrt(n), 4/sqrt(n), ..., 1 the machines form s = ceil(4/p^2)
    teams, team i holding G[U_i] for a balanced family; each team searches
    l = ceil(8 log n / q^3) sub-samples of U_i at rate q = (n p^2)^(-rho/2).
    Teams search in parallel, so a level costs the largest team charge.
    """
    n = g.n
    ss = np.random.SeedSequence(seed if not isinstance(seed, np.random.Generator) else None)
    pre_seed, run_seed = ss.spawn(2)
    rng = np.random.default_rng(run_seed)
    rs = _rho_sigma(constants)
    total = 0
    schedule = []
    if precheck:
        budget = precheck_budget(n)
        pre = detect_h_cycle(g, 3, constants, pre_seed, time_budget=budget)
        total += pre.rounds
        schedule.append({"algo": "precheck", "budget": budget, "rounds": pre.rounds,
                         "answer": pre.answer})
        if pre.answer:
            return DetectionResult(True, total, "q_fast", pre.witness, schedule,
                                   extra={"charged_quantum_rounds": total})
    cfg = SimConfig(n)
    logn = math.log2(max(n, 2))
    p = min(1.0, 2 / math.sqrt(n))
    while True:
        s = balanced.family_size(p, 2.0, 4.0)
        if s > n:
            raise ValueError(f"{s} teams do not fit on {n} machines")
        cl = Clique(cfg, record_pairs=False)
        try:
            fam = balanced.sample_balanced(n, p, 2.0, 4.0, rng, cl)
        except balanced.UnbalancedFamilyError:
            total += cl.rounds
            schedule.append({"algo": "q_fast", "p": p, "s": s, "flags": ["unbalanced"]})
            if p >= 1.0:
                break
            p = min(1.0, 2 * p)
            continue
        balanced.learn_members(fam, cl)
        balanced.redistribute_input(g.adj, fam, cl, constants.scheme)
        team_n = max(1, n // fam.s)
        q = min(1.0, (n * p * p) ** (-rs / 2))
        ell = int(math.ceil(8 * logn / q ** 3))
        oracle = _TriangleOracle(g, team_n, cfg.bandwidth_bits, constants, gather=False)
        worst = 0
        hit = None
        for i in range(fam.s):
            U = fam.subset(i)
            subs = list(_sample_subsets(rng, n, q, ell, pool=U))
            measured = [oracle.measure(S) for S in subs]
            r = max([1] + [m[1] for m in measured])
            marks = iter(measured)
            found, charged = grover_emulate(subs, lambda S: next(marks), r, None, constants.c_g)
            worst = max(worst, charged)
            if found is not None and hit is None:
                hit = found
        cl.tick(worst, "grover")
        _or_aggregate(cl, "q_fast:or")
        total += cl.rounds
        schedule.append({"algo": "q_fast", "p": p, "s": fam.s, "q": q, "subsets": ell,
                         "rounds": cl.rounds, "answer": hit is not None})
        if hit is not None:
            return DetectionResult(True, total, "q_fast", _triangle_vertex(g, hit), schedule,
                                   extra={"charged_quantum_rounds": total})
        if p >= 1.0:
            break
        p = min(1.0, 2 * p)
    return DetectionResult(False, total, "q_fast", None, schedule,
                           extra={"charged_quantum_rounds": total})
