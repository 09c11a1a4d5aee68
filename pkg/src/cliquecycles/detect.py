"""h-cycle detectors on the simulated clique.

Two colour-coding detectors are implemented:

* ``fvic`` samples one colour class at rate p and multiplies the chain of
  coloured biadjacency blocks starting and ending at the sample;
* ``fc`` samples many induced subgraphs, each handled by its own team,
  which raises its coloured adjacency to the h-th power.

Both are one-sided: a positive diagonal entry of a colour-successor chain
is a closed walk through all h colours, hence a simple h-cycle.

The doubling wrappers are generators of ``Event`` records stamped with
their own elapsed rounds, so that ``interleave`` can run several of them
one round at a time and stop at the first success.
"""
from __future__ import annotations

import heapq
import json
import math
from dataclasses import asdict, dataclass, field, fields
from importlib import resources
from pathlib import Path
from typing import Iterable, Iterator, Optional

import numpy as np

from . import balanced
from .ccsim import Clique, SimConfig
from .colorcoding import successor_mask
from .graphs import Graph
from .matmul import matrix_power_batch, rect_chain_multiply, team_geometry


# ------------------------------------------------------------- constants

@dataclass(frozen=True)
class AlgoConstants:
    """Algorithm multipliers.  ``None`` means the asymptotic default."""

    c_fc: Optional[float] = None          # family multiplier, default 8 (4h)^(h+2)
    c_fvic: float = 80.0                  # runs per level: c_fvic h^h log n ...
    fvic_min_reps: int = 1                # ... but at least this many
    fvic_reps: Optional[int] = None       # absolute override of the above
    c_grid: int = 1                       # exponent grid step in units of 1/log n
    c_budget: float = 1.0                 # fc runs per grid cell: ceil(c log n)
    fmm_reps: Optional[int] = None        # colourings for h > 3, default ceil(h^h log n / h)
    scheme: str = "strassen"
    mode: str = "saturating"
    c_g: float = 2.0                      # Grover constant
    profile: str = "asymptotic"

    def __post_init__(self):
        for name in ("c_fc", "fvic_reps", "fmm_reps"):
            v = getattr(self, name)
            if v is not None and v <= 0:
                raise ValueError(f"{name} must be positive")
        if self.c_grid < 1 or self.c_budget <= 0 or self.c_g <= 0 or self.c_fvic <= 0:
            raise ValueError("grid, budget and Grover constants must be positive")

    def fc_multiplier(self, h: int) -> float:
        return float(8 * (4 * h) ** (h + 2)) if self.c_fc is None else float(self.c_fc)

    def fvic_repetitions(self, h: int, n: int) -> int:
        if self.fvic_reps is not None:
            return int(self.fvic_reps)
        return max(self.fvic_min_reps, int(math.ceil(self.c_fvic * h ** h * log2n(n))))

    def fmm_repetitions(self, h: int, n: int) -> int:
        if self.fmm_reps is not None:
            return int(self.fmm_reps)
        return int(math.ceil(h ** h * max(1.0, math.log(n)) / h))

    def cell_budget(self, n: int) -> int:
        return max(1, int(math.ceil(self.c_budget * log2n(n))))

    def to_dict(self) -> dict:
        return asdict(self)


def log2n(n: int) -> float:
    return math.log2(max(n, 2))


def _constants_file() -> dict:
    return json.loads(resources.files("cliquecycles").joinpath("data/constants.json").read_text())


def calibration() -> dict:
    return _constants_file()["calibration"]


def load_constants(source=None) -> AlgoConstants:
    """A profile name from the shipped file, a JSON path, or a dict of overrides."""
    if source is None:
        source = "desk"
    if isinstance(source, AlgoConstants):
        return source
    if isinstance(source, dict):
        data = dict(source)
    elif isinstance(source, str) and not source.endswith(".json") and not Path(source).exists():
        profiles = _constants_file()["profiles"]
        if source not in profiles:
            raise ValueError(f"unknown constants profile {source!r}; known: {sorted(profiles)}")
        data = dict(profiles[source], profile=source)
    else:
        data = json.loads(Path(source).read_text())
        if "profiles" in data:
            raise ValueError("pass a single profile, not the whole constants file")
    known = {f.name for f in fields(AlgoConstants)}
    unknown = set(data) - known
    if unknown:
        raise ValueError(f"unknown constants: {sorted(unknown)}")
    return AlgoConstants(**data)


ASYMPTOTIC = AlgoConstants()


# --------------------------------------------------------------- results

@dataclass
class DetectionResult:
    answer: bool
    rounds: int
    algorithm: str = ""
    witness: Optional[int] = None
    schedule: list = field(default_factory=list)
    flags: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    def to_json(self, **context) -> dict:
        out = {"algorithm": self.algorithm, "answer": bool(self.answer),
               "rounds": int(self.rounds), "witness": self.witness,
               "schedule": self.schedule, "flags": self.flags}
        out.update(self.extra)
        out.update(context)
        return out


@dataclass
class Event:
    time: int                 # elapsed rounds of the emitting process
    answer: bool
    witness: Optional[int] = None
    info: dict = field(default_factory=dict)


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def _child_seeds(seed, count: int) -> list:
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return ss.spawn(count)


def _new_clique(n: int, seed=0) -> Clique:
    s = seed if isinstance(seed, int) else 0
    return Clique(SimConfig(n), seed=s, record_pairs=False)


def _or_aggregate(cl: Clique, label: str) -> None:
    """Everyone reports a bit to the leader, the leader announces the OR."""
    n = cl.n
    if n > 1:
        cl.exchange(np.arange(1, n), np.zeros(n - 1, dtype=np.int64), 1, label + ":report", 1)
        cl.broadcast(0, 1, label + ":announce", 1)


def _colored_adjacency(g: Graph, colors: np.ndarray, h: int) -> np.ndarray:
    return (g.adj & successor_mask(colors, h)).astype(np.int64)


def _draw_coloring(rng, n: int, h: int, coloring) -> np.ndarray:
    if coloring is None:
        return rng.integers(0, h, n)
    colors = np.asarray(getattr(coloring, "colors", coloring), dtype=np.int64)
    if colors.shape != (n,) or colors.min(initial=0) < 0 or colors.max(initial=0) >= h:
        raise ValueError("injected coloring must give every vertex a colour in [0, h)")
    return colors


# ------------------------------------------------------------------ fvic

def fvic(g: Graph, h: int, p: float, seed=None, coloring=None, sample=None,
         constants: AlgoConstants = ASYMPTOTIC, engine: str = "sim") -> DetectionResult:
    """One run of the sampled-class chain detector.

    ``engine="local"`` draws the same randomness but evaluates the chain
    with local boolean products and reports no rounds; it exists for large
    Monte Carlo runs and is checked against the simulated engine in tests.
    """
    if not 0 < p <= 1:
        raise ValueError("p must lie in (0, 1]")
    _check_h(h)
    n = g.n
    rng = _rng(seed)
    colors = _draw_coloring(rng, n, h, coloring)
    draw = rng.random(n) < p
    if sample is None:
        U1 = np.flatnonzero(draw & (colors == 0))
    else:
        U1 = np.asarray(sorted(set(int(v) for v in sample)), dtype=np.int64)
    info = {"algo": "fvic", "p": p, "k": int(U1.size)}
    cl = _new_clique(n, seed if isinstance(seed, int) else 0) if engine == "sim" else None
    if U1.size > 4 * n * p:
        if cl is not None:
            cl.broadcast(0, 1, "fvic:abort", 1)
        return _fvic_result(False, cl, info | {"aborted": True})
    if U1.size == 0:
        if cl is not None:
            cl.broadcast(0, 1, "fvic:empty", 1)
        return _fvic_result(False, cl, info)
    A = g.adj
    in_class = [colors == i for i in range(h)]
    first = A[U1] & in_class[1 % h][None, :]
    middle = [A & in_class[i][:, None] & in_class[i + 1][None, :] for i in range(1, h - 1)]
    last = A[:, U1] & in_class[h - 1][:, None]
    if engine == "local":
        run = first.astype(np.float64)
        for M in middle:
            run = ((run @ M) > 0).astype(np.float64)
        diag = np.einsum("ij,ji->i", run, last.astype(np.float64)) > 0
        hit = np.flatnonzero(diag)
        return _fvic_result(bool(hit.size), None, info, int(U1[hit[0]]) if hit.size else None)
    if engine != "sim":
        raise ValueError(f"unknown engine {engine!r}")
    # the leader tells each vertex its colour and sample bit, then colours are exchanged
    cl.exchange(np.zeros(n - 1, dtype=np.int64), np.arange(1, n), 1, "fvic:notify")
    cl.exchange(np.repeat(np.arange(n), n), np.tile(np.arange(n), n), 1, "fvic:colors")
    res = rect_chain_multiply(cl, first.astype(np.int64), [M.astype(np.int64) for M in middle],
                              last.astype(np.int64), U1, constants.scheme, constants.mode)
    diag = np.diagonal(res.product) > 0
    _or_aggregate(cl, "fvic:or")
    hit = np.flatnonzero(diag)
    return _fvic_result(bool(hit.size), cl, info, int(U1[hit[0]]) if hit.size else None)


def _fvic_result(answer, cl, info, witness=None) -> DetectionResult:
    rounds = cl.rounds if cl is not None else 0
    info = dict(info, rounds=rounds, answer=answer)
    return DetectionResult(answer, rounds, "fvic", witness, [info])


def _check_h(h: int) -> None:
    if not 3 <= h <= 8:
        raise ValueError("h must lie in [3, 8]")


def fvic_events(g: Graph, h: int, constants: AlgoConstants = ASYMPTOTIC, seed=None,
                engine: str = "sim") -> Iterator[Event]:
    """Doubling over p = 2^i / n with a fixed number of runs per level."""
    n = g.n
    reps = constants.fvic_repetitions(h, n)
    levels = int(math.ceil(math.log2(n))) + 1
    seeds = iter(_child_seeds(seed, levels * reps))
    elapsed = 0
    for i in range(levels):
        p = min(1.0, 2 ** i / n)
        for _ in range(reps):
            r = fvic(g, h, p, _rng(next(seeds)), constants=constants, engine=engine)
            elapsed += r.rounds
            yield Event(elapsed, r.answer, r.witness, r.schedule[0])
            if r.answer:
                return
        if p >= 1.0:
            break


def fvic_doubling(g: Graph, h: int, constants: AlgoConstants = ASYMPTOTIC, seed=None,
                  engine: str = "sim") -> DetectionResult:
    return _drain(fvic_events(g, h, constants, seed, engine), "fvic_doubling")


# -------------------------------------------------------------------- fc

def fc(g: Graph, h: int, p: float, a: float, seed=None, coloring=None,
       constants: AlgoConstants = ASYMPTOTIC, engine: str = "sim") -> DetectionResult:
    """One run of the many-subgraph detector with family parameters (p, a)."""
    _check_h(h)
    n = g.n
    if not (n ** -0.5 - 1e-12 <= p <= 1):
        raise ValueError("p must lie in [n^-1/2, 1]")
    if not 0 <= a <= 2:
        raise ValueError("a must lie in [0, 2]")
    rng = _rng(seed)
    colors = _draw_coloring(rng, n, h, coloring)
    mult = constants.fc_multiplier(h)
    s = balanced.family_size(p, a, mult)
    info = {"algo": "fc", "p": p, "a": a, "s": s}
    cl = _new_clique(n, seed if isinstance(seed, int) else 0) if engine == "sim" else None
    if cl is not None:
        # every vertex announces its colour
        cl.exchange(np.repeat(np.arange(n), n), np.tile(np.arange(n), n), 1, "fc:colors")
    if s > n:
        return _fc_result(False, cl, info, flags=["s>n"])
    try:
        fam = balanced.sample_balanced(n, p, a, mult, rng, cl)
    except balanced.UnbalancedFamilyError:
        return _fc_result(False, cl, info, flags=["unbalanced"])
    Aphi = _colored_adjacency(g, colors, h)
    if engine == "local":
        for i in range(fam.s):
            us = fam.subset(i)
            if us.size >= h and _trace_positive_local(Aphi[np.ix_(us, us)], h):
                wit = _local_witness(Aphi[np.ix_(us, us)], h)
                return _fc_result(True, None, info, witness=int(us[wit]))
        return _fc_result(False, None, info)
    if engine != "sim":
        raise ValueError(f"unknown engine {engine!r}")
    balanced.learn_members(fam, cl)
    red = balanced.redistribute_input(Aphi, fam, cl, constants.scheme)
    power = matrix_power_batch(red.matrices, h, cl, constants.scheme, constants.mode)
    diag = np.diagonal(power.products, axis1=1, axis2=2) > 0
    _or_aggregate(cl, "fc:or")
    teams, idx = np.nonzero(diag)
    if teams.size:
        info["count_lower_bound"] = int(np.trace(power.products[teams[0]]) // h)
        return _fc_result(True, cl, info, witness=int(fam.subset(teams[0])[idx[0]]))
    return _fc_result(False, cl, info)


def _trace_positive_local(M: np.ndarray, h: int) -> bool:
    return bool(np.any(_local_diag(M, h)))


def _local_diag(M: np.ndarray, h: int) -> np.ndarray:
    B = M.astype(np.float64)
    P = B
    for _ in range(h - 1):
        P = ((P @ B) > 0).astype(np.float64)
    return np.diagonal(P) > 0


def _local_witness(M: np.ndarray, h: int) -> int:
    return int(np.flatnonzero(_local_diag(M, h))[0])


def _fc_result(answer, cl, info, witness=None, flags=None) -> DetectionResult:
    rounds = cl.rounds if cl is not None else 0
    info = dict(info, rounds=rounds, answer=answer)
    if flags:
        info["flags"] = list(flags)
    return DetectionResult(answer, rounds, "fc", witness, [info], list(flags or []))


def fc_grid(n: int, h: int, constants: AlgoConstants = ASYMPTOTIC) -> list[tuple[float, float]]:
    """(p, a) cells: p = 2^i / n no smaller than n^-1/2, a = j c_grid / log n up to 2."""
    L = log2n(n)
    ps = [min(1.0, 2 ** i / n) for i in range(int(math.ceil(L)) + 1)]
    ps = sorted({p for p in ps if p >= n ** -0.5 - 1e-12})
    js = range(0, int(math.floor(2 * L)) + 1, constants.c_grid)
    as_ = sorted({min(2.0, j / L) for j in js})
    return [(p, a) for p in ps for a in as_]


def _fc_cell(g, h, p, a, constants, seed, engine) -> Iterator[Event]:
    budget = constants.cell_budget(g.n)
    elapsed = 0
    for child in _child_seeds(seed, budget):
        r = fc(g, h, p, a, _rng(child), constants=constants, engine=engine)
        elapsed += r.rounds
        yield Event(elapsed, r.answer, r.witness, r.schedule[0])
        if r.answer:
            return


def fc_events(g: Graph, h: int, constants: AlgoConstants = ASYMPTOTIC, seed=None,
              engine: str = "sim") -> Iterator[Event]:
    mult = constants.fc_multiplier(h)
    cells = [(p, a) for p, a in fc_grid(g.n, h, constants)
             if balanced.family_size(p, a, mult) <= g.n]
    if not cells:
        yield Event(0, False, None, {"algo": "fc", "flags": ["no feasible cell"]})
        return
    seeds = _child_seeds(seed, len(cells))
    children = [_fc_cell(g, h, p, a, constants, s, engine) for (p, a), s in zip(cells, seeds)]
    yield from interleave_events(children)


def fc_doubling(g: Graph, h: int, constants: AlgoConstants = ASYMPTOTIC, seed=None,
                engine: str = "sim") -> DetectionResult:
    return _drain(fc_events(g, h, constants, seed, engine), "fc_doubling")


# ------------------------------------------------------------ interleave

def interleave_events(children: list[Iterable[Event]]) -> Iterator[Event]:
    """Run processes one round at a time in rotation.

    A child event at local time tau (its own elapsed rounds) happens at
    global time sum_{c' < c} min(tau, L_c') + sum_{c' > c} min(tau - 1, L_c')
    + tau, where L_c' is the total length of child c'.  Events are merged
    in global order; the stream stops after the first True.
    """
    its = [iter(c) for c in children]
    lengths: list[Optional[int]] = [None] * len(its)
    last = [0] * len(its)
    heap: list = []

    def pull(c):
        ev = next(its[c], None)
        if ev is None:
            lengths[c] = last[c]
            return
        last[c] = ev.time
        heapq.heappush(heap, (ev.time, c, id(ev), ev))

    for c in range(len(its)):
        pull(c)
    while heap:
        tau, c, _, ev = heapq.heappop(heap)
        g_time = tau
        for c2, L in enumerate(lengths):
            if c2 == c:
                continue
            cap = tau if c2 < c else max(tau - 1, 0)
            g_time += cap if L is None else min(cap, L)
        yield Event(g_time, ev.answer, ev.witness, dict(ev.info, child=c, local_time=tau))
        if ev.answer:
            return
        pull(c)


def interleave(children: list[Iterable[Event]], time_budget: Optional[int] = None,
               name: str = "interleave") -> DetectionResult:
    return _drain(interleave_events(children), name, time_budget)


def _drain(events: Iterable[Event], name: str, time_budget: Optional[int] = None) -> DetectionResult:
    schedule = []
    t = 0
    for ev in events:
        if time_budget is not None and ev.time > time_budget:
            return DetectionResult(False, time_budget, name, None, schedule, ["budget"])
        t = max(t, ev.time)
        schedule.append(dict(ev.info, time=ev.time))
        if ev.answer:
            return DetectionResult(True, ev.time, name, ev.witness, schedule)
    return DetectionResult(False, t, name, None, schedule)


def detect_h_cycle(g: Graph, h: int, constants: AlgoConstants = ASYMPTOTIC, seed=None,
                   engine: str = "sim", time_budget: Optional[int] = None) -> DetectionResult:
    """fvic doubling and fc doubling interleaved round by round."""
    _check_h(h)
    s1, s2 = _child_seeds(seed, 2)
    res = interleave([fvic_events(g, h, constants, s1, engine),
                      fc_events(g, h, constants, s2, engine)], time_budget, "main")
    return res


# ------------------------------------------------------------- baselines

def fmm_baseline(g: Graph, h: int, seed=None, constants: AlgoConstants = ASYMPTOTIC) -> DetectionResult:
    """Whole-graph matrix powers; colourings in parallel teams for h > 3."""
    _check_h(h)
    n = g.n
    cl = _new_clique(n, seed if isinstance(seed, int) else 0)
    rng = _rng(seed)
    schedule = []
    if h == 3:
        batches = [[g.adj.astype(np.int64)]]
        colorings = [None]
    else:
        reps = constants.fmm_repetitions(h, n)
        colorings = [rng.integers(0, h, n) for _ in range(reps)]
        per = min(reps, n)
        batches = [[_colored_adjacency(g, c, h) for c in colorings[i:i + per]]
                   for i in range(0, reps, per)]
    done = 0
    for batch in batches:
        mats = np.stack(batch)
        geo = team_geometry(n, len(batch), n, constants.scheme)
        # vertex u sends row u of every matrix to the owners in each team
        u, v = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
        src = np.tile(u.ravel(), len(batch))
        dst = np.concatenate([geo.owner(i, u.ravel(), v.ravel()) for i in range(len(batch))])
        cl.route(src, dst, 1, "fmm:input", entry_bits=1)
        power = matrix_power_batch(mats, h, cl, constants.scheme, constants.mode)
        diag = np.diagonal(power.products, axis1=1, axis2=2) > 0
        _or_aggregate(cl, "fmm:or")
        done += len(batch)
        schedule.append({"algo": "fmm", "colorings": done, "rounds": cl.rounds})
        teams, idx = np.nonzero(diag)
        if teams.size:
            return DetectionResult(True, cl.rounds, "fmm", int(idx[0]), schedule)
    return DetectionResult(False, cl.rounds, "fmm", None, schedule)


def dlp_baseline(g: Graph, seed=None, h: int = 3) -> DetectionResult:
    """Triangle detection from n sampled induced subgraphs per rate level.

    At rate r each machine i collects the edges of its sample S_i and tests
    it locally; samples larger than ceil(4 n r) are skipped.
    """
    if h != 3:
        raise ValueError("the sampling baseline detects triangles only")
    n = g.n
    cl = _new_clique(n, seed if isinstance(seed, int) else 0)
    rng = _rng(seed)
    A = g.adj
    schedule = []
    levels = int(math.ceil(math.log2(n))) + 1
    for j in range(levels):
        r = min(1.0, 2 ** j / n)
        members = rng.random((n, n)) < r            # members[i, v]: v in S_i
        sizes = members.sum(axis=1)
        cap = math.ceil(4 * n * r - 1e-12)
        usable = sizes <= cap
        ii, vv = np.nonzero(members & usable[:, None])
        if ii.size:
            cl.route(vv, ii, sizes[ii], "dlp:gather", entry_bits=1)
        hit = None
        for i in np.flatnonzero(usable & (sizes >= 3)):
            S = np.flatnonzero(members[i])
            sub = A[np.ix_(S, S)].astype(np.float64)
            d = np.diagonal(sub @ sub @ sub) > 0
            if d.any():
                hit = int(S[np.flatnonzero(d)[0]])
                break
        _or_aggregate(cl, "dlp:or")
        schedule.append({"algo": "dlp", "rate": r, "skipped": int((~usable).sum()),
                         "rounds": cl.rounds})
        if hit is not None:
            return DetectionResult(True, cl.rounds, "dlp", hit, schedule)
        if r >= 1.0:
            break
    return DetectionResult(False, cl.rounds, "dlp", None, schedule)


def run_algorithm(name: str, g: Graph, h: int, constants: AlgoConstants, seed,
                  p: Optional[float] = None, a: Optional[float] = None) -> DetectionResult:
    """Dispatch by CLI tag."""
    from . import quantum
    if name == "main":
        return detect_h_cycle(g, h, constants, seed)
    if name == "fvic":
        return fvic(g, h, 1.0 if p is None else p, seed, constants=constants)
    if name == "fvic_doubling":
        return fvic_doubling(g, h, constants, seed)
    if name == "fc":
        return fc(g, h, 1.0 if p is None else p, 0.0 if a is None else a, seed, constants=constants)
    if name == "fc_doubling":
        return fc_doubling(g, h, constants, seed)
    if name == "fmm":
        return fmm_baseline(g, h, seed, constants)
    if name == "dlp":
        return dlp_baseline(g, seed, h)
    if name == "q_basic":
        return quantum.q_triangle_basic(g, seed, constants)
    if name == "q_fast":
        return quantum.q_triangle_fast(g, seed, constants)
    raise ValueError(f"unknown algorithm {name!r}")


ALGORITHM_TAGS = ("main", "fvic", "fvic_doubling", "fc", "fc_doubling", "fmm", "dlp",
                  "q_basic", "q_fast")
