"""Round-synchronous Congested Clique simulator.

Two ways to drive it:

* ``run`` executes one ``NodeProgram`` per machine in lockstep and checks
  every ordered pair against the bandwidth limit each round.
* ``Clique`` charges whole communication phases at once (vectorised).  A
  phase in which pair (u, v) carries b bits costs ceil(b / bandwidth)
  rounds, and the phase length is the maximum over pairs.

Both write to a ``RoundLedger``.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Any, Optional, Sequence

import numpy as np

try:  # the Euler split kernel is much faster compiled
    from numba import njit
except ImportError:  # pragma: no cover
    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda f: f


class BandwidthError(RuntimeError):
    def __init__(self, rnd: int, sender: int, receiver: int, bits: int, limit: int):
        self.round, self.sender, self.receiver = rnd, sender, receiver
        self.bits, self.limit = bits, limit
        super().__init__(f"bandwidth exceeded in round {rnd}: {sender} -> {receiver} "
                         f"carries {bits} bits, limit {limit}")


class SimTimeoutError(RuntimeError):
    pass


def default_bandwidth(n: int, c: float = 1.0) -> int:
    return max(1, int(math.ceil(c * math.ceil(math.log2(max(n, 2))))))


@dataclass(frozen=True)
class SimConfig:
    n: int
    bandwidth_bits: Optional[int] = None
    entry_bits: Optional[int] = None
    c: float = 1.0

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be positive")
        bw = self.bandwidth_bits if self.bandwidth_bits is not None else default_bandwidth(self.n, self.c)
        if bw < 1:
            raise ValueError("bandwidth_bits must be >= 1")
        eb = self.entry_bits if self.entry_bits is not None else bw
        if eb < 1:
            raise ValueError("entry_bits must be >= 1")
        object.__setattr__(self, "bandwidth_bits", int(bw))
        object.__setattr__(self, "entry_bits", int(eb))

    def rounds_for(self, entries, entry_bits: Optional[int] = None):
        eb = self.entry_bits if entry_bits is None else entry_bits
        return -(-np.asarray(entries, dtype=np.int64) * eb // self.bandwidth_bits)


@dataclass
class Phase:
    start: int
    rounds: int
    label: str
    max_pair_bits: int
    src: Optional[np.ndarray] = None
    dst: Optional[np.ndarray] = None
    bits: Optional[np.ndarray] = None


class RoundLedger:
    """Cost record: phases of communication, per-pair loads and node totals."""

    def __init__(self, config: SimConfig, record_pairs: bool = True):
        self.config = config
        self.record_pairs = record_pairs
        self.phases: list[Phase] = []
        self.rounds = 0
        self.sent_bits = np.zeros(config.n, dtype=np.int64)
        self.recv_bits = np.zeros(config.n, dtype=np.int64)
        self.labels: dict[str, int] = {}

    def add(self, src, dst, bits, label: str, start: Optional[int] = None,
            rounds: Optional[int] = None) -> int:
        """Record one phase.  Pairs must already be aggregated and distinct."""
        bw = self.config.bandwidth_bits
        bits = np.asarray(bits, dtype=np.int64)
        if bits.size == 0 or not bits.any():
            return 0
        peak = int(bits.max())
        need = -(-peak // bw)
        if rounds is None:
            rounds = need
        elif rounds < need:
            raise BandwidthError(self.rounds, -1, -1, peak, bw * rounds)
        if start is None:
            start = self.rounds
        src = np.asarray(src, dtype=np.int64)
        dst = np.asarray(dst, dtype=np.int64)
        ph = Phase(start, int(rounds), label, peak)
        if self.record_pairs:
            ph.src, ph.dst, ph.bits = src.copy(), dst.copy(), bits.copy()
        self.phases.append(ph)
        n = self.config.n
        self.sent_bits += np.bincount(src, weights=bits, minlength=n).astype(np.int64)
        self.recv_bits += np.bincount(dst, weights=bits, minlength=n).astype(np.int64)
        self.rounds = max(self.rounds, start + int(rounds))
        self.labels[label] = self.labels.get(label, 0) + int(rounds)
        return int(rounds)

    def tick(self, rounds: int, label: str = "silent") -> int:
        """Advance the clock without traffic (e.g. waiting on a peer)."""
        if rounds > 0:
            self.rounds += rounds
            self.labels[label] = self.labels.get(label, 0) + rounds
        return rounds

    @property
    def max_pair_load(self) -> int:
        bw = self.config.bandwidth_bits
        return max((min(ph.max_pair_bits, bw) for ph in self.phases), default=0)

    def iter_rounds(self):
        """Yield (round, sender, receiver, bits) rows, one per active pair and round."""
        if not self.record_pairs:
            raise RuntimeError("ledger was created with record_pairs=False")
        bw = self.config.bandwidth_bits
        for ph in sorted(self.phases, key=lambda p: p.start):
            for k in range(ph.rounds):
                left = ph.bits - k * bw
                live = left > 0
                for s, d, b in zip(ph.src[live], ph.dst[live], np.minimum(left[live], bw)):
                    yield ph.start + k, int(s), int(d), int(b)

    def audit(self) -> bool:
        """Replay per-round loads and confirm none exceeds the bandwidth."""
        bw = self.config.bandwidth_bits
        per_round: dict[tuple[int, int, int], int] = {}
        for r, s, d, b in self.iter_rounds():
            key = (r, s, d)
            per_round[key] = per_round.get(key, 0) + b
            if per_round[key] > bw:
                return False
        return True

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["round", "sender", "receiver", "bits"])
            for row in self.iter_rounds():
                w.writerow(row)

    def summary(self) -> dict:
        return {
            "rounds": int(self.rounds),
            "max_pair_load": int(self.max_pair_load),
            "bandwidth_bits": int(self.config.bandwidth_bits),
            "per_node_sent_bits": self.sent_bits.tolist(),
            "per_node_received_bits": self.recv_bits.tolist(),
            "rounds_by_label": dict(self.labels),
        }

    def write_summary(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.summary(), fh, indent=2)


def _aggregate(n: int, src, dst, amount):
    src = np.asarray(src, dtype=np.int64).ravel()
    dst = np.asarray(dst, dtype=np.int64).ravel()
    amount = np.broadcast_to(np.asarray(amount, dtype=np.int64), src.shape).ravel()
    keep = (src != dst) & (amount > 0)
    if not keep.all():
        src, dst, amount = src[keep], dst[keep], amount[keep]
    if src.size == 0:
        return src, dst, amount
    key = src * n + dst
    if n * n <= 1 << 22:
        tot = np.bincount(key, weights=amount, minlength=n * n)
        uniq = np.flatnonzero(tot)
        return uniq // n, uniq % n, tot[uniq].astype(np.int64)
    uniq, inv = np.unique(key, return_inverse=True)
    tot = np.bincount(inv, weights=amount).astype(np.int64)
    return uniq // n, uniq % n, tot


# ------------------------------------------------------------ relay planning

@njit(cache=True)
def _trail_colors(us, vs, n):  # pragma: no cover - compiled
    """Two-colour the edges of a bipartite multigraph with even degrees so
    every vertex gets equally many edges of each colour.

    Edges are walked as closed trails; a closed trail in a bipartite graph
    has even length, so alternating colours along it balances every visit.
    """
    m = us.shape[0]
    deg = np.zeros(2 * n, np.int64)
    for e in range(m):
        deg[us[e]] += 1
        deg[n + vs[e]] += 1
    start = np.zeros(2 * n + 1, np.int64)
    for i in range(2 * n):
        start[i + 1] = start[i] + deg[i]
    fill = start[:-1].copy()
    inc = np.empty(2 * m, np.int64)
    for e in range(m):
        a = us[e]
        b = n + vs[e]
        inc[fill[a]] = e
        fill[a] += 1
        inc[fill[b]] = e
        fill[b] += 1
    ptr = start[:-1].copy()
    used = np.zeros(m, np.bool_)
    color = np.zeros(m, np.int8)
    for s in range(2 * n):
        while True:
            while ptr[s] < start[s + 1] and used[inc[ptr[s]]]:
                ptr[s] += 1
            if ptr[s] >= start[s + 1]:
                break
            cur = s
            c = 0
            while True:
                while ptr[cur] < start[cur + 1] and used[inc[ptr[cur]]]:
                    ptr[cur] += 1
                if ptr[cur] >= start[cur + 1]:
                    break
                e = inc[ptr[cur]]
                used[e] = True
                color[e] = c
                c = 1 - c
                if cur < n:
                    cur = n + vs[e]
                else:
                    cur = us[e]
    return color


def _regularise(D: np.ndarray, degree: int) -> np.ndarray:
    """Dummy matrix E with D + E having every row and column sum = degree."""
    n = D.shape[0]
    r = degree - D.sum(axis=1)
    c = degree - D.sum(axis=0)
    E = np.zeros_like(D)
    i = j = 0
    r = r.copy()
    c = c.copy()
    while i < n and j < n:
        take = min(r[i], c[j])
        E[i, j] += take
        r[i] -= take
        c[j] -= take
        if r[i] == 0:
            i += 1
        if j < n and c[j] == 0:
            j += 1
    return E


@njit(cache=True)
def _euler_split_plan(D, E):  # pragma: no cover - compiled
    """Depth-first halving of the regular multigraph D + E into n parts.

    Parts are weighted edge lists.  Each halving keeps floor(w / 2) of every
    weight on both sides and splits the odd remainders with
    ``_trail_colors``.  Only the real part D is reported.
    """
    n = D.shape[0]
    depth = 0
    while (1 << depth) < n:
        depth += 1
    cap = 0
    for u in range(n):
        for v in range(n):
            if D[u, v] or E[u, v]:
                cap += 1
    slots = depth + 2
    SU = np.empty((slots, cap), np.int64)
    SV = np.empty((slots, cap), np.int64)
    SD = np.empty((slots, cap), np.int64)
    SE = np.empty((slots, cap), np.int64)
    size = np.zeros(slots, np.int64)
    slo = np.zeros(slots, np.int64)
    scnt = np.zeros(slots, np.int64)
    k = 0
    for u in range(n):
        for v in range(n):
            if D[u, v] or E[u, v]:
                SU[0, k] = u
                SV[0, k] = v
                SD[0, k] = D[u, v]
                SE[0, k] = E[u, v]
                k += 1
    size[0] = k
    scnt[0] = n
    X = np.zeros((n, n), np.int64)
    Y = np.zeros((n, n), np.int64)
    us = np.empty(2 * cap, np.int64)
    vs = np.empty(2 * cap, np.int64)
    ref = np.empty(2 * cap, np.int64)      # edge index * 2 + (1 if dummy)
    bd = np.empty(cap, np.int64)
    be = np.empty(cap, np.int64)
    top = 1
    while top > 0:
        top -= 1
        lo = slo[top]
        cnt = scnt[top]
        m = size[top]
        if cnt == 1:
            for i in range(m):
                w = SD[top, i]
                if w:
                    X[SU[top, i], lo] += w
                    Y[lo, SV[top, i]] += w
            continue
        k = 0
        for i in range(m):
            if SD[top, i] & 1:
                us[k] = SU[top, i]
                vs[k] = SV[top, i]
                ref[k] = 2 * i
                k += 1
            if SE[top, i] & 1:
                us[k] = SU[top, i]
                vs[k] = SV[top, i]
                ref[k] = 2 * i + 1
                k += 1
        col = _trail_colors(us[:k], vs[:k], n)
        # part A goes to slot top + 1, part B replaces the parent in slot top
        for i in range(m):
            bd[i] = SD[top, i] >> 1
            be[i] = SE[top, i] >> 1
            SD[top + 1, i] = bd[i]
            SE[top + 1, i] = be[i]
        for j in range(k):
            i = ref[j] >> 1
            if ref[j] & 1:
                if col[j] == 0:
                    SE[top + 1, i] += 1
                else:
                    be[i] += 1
            else:
                if col[j] == 0:
                    SD[top + 1, i] += 1
                else:
                    bd[i] += 1
        a = 0
        b = 0
        for i in range(m):
            u = SU[top, i]
            v = SV[top, i]
            if SD[top + 1, i] or SE[top + 1, i]:
                SU[top + 1, a] = u
                SV[top + 1, a] = v
                SD[top + 1, a] = SD[top + 1, i]
                SE[top + 1, a] = SE[top + 1, i]
                a += 1
            if bd[i] or be[i]:
                SU[top, b] = u
                SV[top, b] = v
                SD[top, b] = bd[i]
                SE[top, b] = be[i]
                b += 1
        half = cnt // 2
        size[top] = b
        slo[top] = lo + half
        scnt[top] = half
        size[top + 1] = a
        slo[top + 1] = lo
        scnt[top + 1] = half
        top += 2
    return X, Y


def _relay_loads_euler(D: np.ndarray, m: int):
    n = D.shape[0]
    E = _regularise(D, n * m)
    return _euler_split_plan(np.ascontiguousarray(D, dtype=np.int64),
                             np.ascontiguousarray(E, dtype=np.int64))


def _relay_loads_flow(D: np.ndarray, m: int):
    from scipy.sparse import csr_matrix
    from scipy.sparse.csgraph import maximum_flow

    n = D.shape[0]
    M = D + _regularise(D, n * m)
    real = D.copy()
    X = np.zeros((n, n), dtype=np.int64)
    Y = np.zeros((n, n), dtype=np.int64)
    src_node, sink = 2 * n, 2 * n + 1
    for r in range(n):
        uu, vv = np.nonzero(M)
        rows = np.concatenate([np.full(n, src_node), uu, n + np.arange(n)])
        cols = np.concatenate([np.arange(n), n + vv, np.full(n, sink)])
        caps = np.concatenate([np.full(n, m), M[uu, vv], np.full(n, m)]).astype(np.int32)
        G = csr_matrix((caps, (rows, cols)), shape=(2 * n + 2, 2 * n + 2))
        res = maximum_flow(G, src_node, sink)
        if res.flow_value != n * m:
            raise RuntimeError("relay decomposition failed (flow deficit)")
        F = res.flow.toarray()[:n, n:2 * n].astype(np.int64)
        F = np.maximum(F, 0)
        take_real = np.minimum(F, real)
        X[:, r] = take_real.sum(axis=1)
        Y[r, :] = take_real.sum(axis=0)
        real -= take_real
        M -= F
    return X, Y


def _round_robin_loads(D: np.ndarray):
    """Sender u hands its j-th entry (sorted by destination) to relay u + j."""
    n = D.shape[0]
    out = D.sum(axis=1)
    r = np.arange(n)
    X = (out // n)[:, None] + (((r[None, :] - r[:, None]) % n) < (out % n)[:, None])
    off = np.cumsum(D, axis=1) - D
    uu, vv = np.nonzero(D)
    c = D[uu, vv]
    start = (uu + off[uu, vv]) % n
    rem = c % n
    Y = np.zeros((n, n), dtype=np.int64)
    Y += np.bincount(vv, weights=c // n, minlength=n).astype(np.int64)[None, :]
    diff = np.zeros((n + 1, n), dtype=np.int64)
    end = start + rem
    wrap = end > n
    np.add.at(diff, (start, vv), 1)
    np.add.at(diff, (np.where(wrap, n, end), vv), -1)
    np.add.at(diff, (np.zeros(int(wrap.sum()), dtype=np.int64), vv[wrap]), 1)
    np.add.at(diff, (end[wrap] - n, vv[wrap]), -1)
    Y += np.cumsum(diff, axis=0)[:n]
    return X.astype(np.int64), Y


def relay_plan(D: np.ndarray):
    """Split demand matrix D (entries from u to v) over n relays.

    Returns (X, Y, m) with X[u, r] entries u sends to relay r, Y[r, v]
    entries relay r forwards to v, and every row/column of X and Y bounded
    by m = ceil(max load / n).
    """
    D = np.asarray(D, dtype=np.int64)
    n = D.shape[0]
    L = int(max(D.sum(axis=1).max(initial=0), D.sum(axis=0).max(initial=0)))
    if L == 0:
        z = np.zeros((n, n), dtype=np.int64)
        return z, z.copy(), 0
    m = -(-L // n)
    X, Y = _round_robin_loads(D)
    if X.max() <= m and Y.max() <= m:
        return X, Y, m
    if n & (n - 1) == 0:
        X, Y = _relay_loads_euler(D, m)
    else:
        X, Y = _relay_loads_flow(D, m)
    return X, Y, m


# ------------------------------------------------------------------- Clique

class Clique:
    """Vectorised phase-level driver over one ledger."""

    def __init__(self, config: SimConfig, seed: int = 0, record_pairs: bool = True):
        self.config = config
        self.n = config.n
        self.seed = seed
        self.ledger = RoundLedger(config, record_pairs=record_pairs)

    @property
    def rounds(self) -> int:
        return self.ledger.rounds

    def node_rng(self, node: int) -> np.random.Generator:
        return np.random.default_rng(np.random.SeedSequence(self.seed, spawn_key=(int(node),)))

    def exchange(self, src, dst, entries, label: str = "exchange",
                 entry_bits: Optional[int] = None) -> int:
        """One phase of direct messages; ``entries`` per (src, dst) item."""
        eb = self.config.entry_bits if entry_bits is None else entry_bits
        s, d, tot = _aggregate(self.n, src, dst, entries)
        return self.ledger.add(s, d, tot * eb, label)

    def exchange_matrix(self, D, label: str = "exchange", entry_bits: Optional[int] = None) -> int:
        D = np.asarray(D, dtype=np.int64)
        s, d = np.nonzero(D)
        return self.exchange(s, d, D[s, d], label, entry_bits)

    def route(self, src, dst, entries, label: str = "route",
              entry_bits: Optional[int] = None) -> int:
        """Deliver arbitrary demands, directly or via the two-phase relay."""
        eb = self.config.entry_bits if entry_bits is None else entry_bits
        bw = self.config.bandwidth_bits
        s, d, tot = _aggregate(self.n, src, dst, entries)
        if s.size == 0:
            return 0
        D = np.zeros((self.n, self.n), dtype=np.int64)
        D[s, d] = tot
        direct = -(-int(tot.max()) * eb // bw)
        diag_free = D.copy()
        L = int(max(D.sum(axis=1).max(), D.sum(axis=0).max()))
        m = -(-L // self.n)
        relay_bound = 2 * (-(-m * eb // bw))
        if direct <= relay_bound:
            return self.ledger.add(s, d, tot * eb, label + ":direct")
        X, Y, m = relay_plan(diag_free)
        r1 = self.exchange_matrix(X, label + ":relay1", eb)
        r2 = self.exchange_matrix(Y, label + ":relay2", eb)
        return r1 + r2

    def broadcast(self, source: int, entries: int, label: str = "broadcast",
                  entry_bits: Optional[int] = None) -> int:
        eb = self.config.entry_bits if entry_bits is None else entry_bits
        bw = self.config.bandwidth_bits
        n = self.n
        if entries <= 0 or n == 1:
            return 0
        others = np.array([v for v in range(n) if v != source], dtype=np.int64)
        direct = -(-entries * eb // bw)
        chunk = -(-entries // n)
        two_phase = 2 * (-(-chunk * eb // bw))
        if direct <= two_phase:
            return self.exchange(np.full(others.size, source), others, entries, label, eb)
        # spread chunks over all nodes, then every node forwards its chunk
        sizes = np.full(n, entries // n, dtype=np.int64)
        sizes[: entries % n] += 1
        r = self.exchange(np.full(n, source), np.arange(n), sizes, label + ":spread", eb)
        src = np.repeat(np.arange(n), n)
        dst = np.tile(np.arange(n), n)
        r += self.exchange(src, dst, sizes[src], label + ":forward", eb)
        return r

    def gather(self, sources, target: int, entries, label: str = "gather",
               entry_bits: Optional[int] = None) -> int:
        sources = np.asarray(sources, dtype=np.int64)
        return self.route(sources, np.full(sources.size, target), entries, label, entry_bits)

    def tick(self, rounds: int, label: str = "silent") -> int:
        return self.ledger.tick(rounds, label)


def lenzen_route(demands: Sequence[tuple], config: SimConfig, entry_bits: Optional[int] = None,
                 clique: Optional[Clique] = None):
    """Deliver (source, destination, payload) demands.

    Returns (inboxes, rounds) where inboxes[v] lists (source, payload) in
    demand order.  Each payload counts as one entry.
    """
    cl = clique if clique is not None else Clique(config)
    inboxes: dict[int, list] = {v: [] for v in range(config.n)}
    if not demands:
        return inboxes, 0
    src = np.fromiter((d[0] for d in demands), dtype=np.int64, count=len(demands))
    dst = np.fromiter((d[1] for d in demands), dtype=np.int64, count=len(demands))
    if src.min() < 0 or dst.min() < 0 or max(src.max(), dst.max()) >= config.n:
        raise ValueError("demand endpoint out of range")
    rounds = cl.route(src, dst, 1, "lenzen_route", entry_bits)
    for s, d, payload in demands:
        inboxes[int(d)].append((int(s), payload))
    return inboxes, rounds


def broadcast(source: int, payload: Sequence, config: SimConfig,
              clique: Optional[Clique] = None):
    """Every node ends up holding ``payload``; returns (copies, rounds)."""
    cl = clique if clique is not None else Clique(config)
    rounds = cl.broadcast(source, len(payload))
    copies = {v: list(payload) for v in range(config.n)}
    return copies, rounds


# --------------------------------------------------------- lockstep engine

class NodeProgram:
    """Base class for per-machine programs run by ``run``.

    ``step`` receives the round index and the inbox (list of
    (sender, payload, bits)) and returns an outbox of (receiver, bits,
    payload).  Set ``self.done`` when finished and ``self.output`` for the
    result.  ``self.rng`` is this node's private stream.
    """

    def __init__(self):
        self.done = False
        self.output: Any = None
        self.node = -1
        self.n = 0
        self.rng: Optional[np.random.Generator] = None

    def setup(self, node: int, n: int, rng: np.random.Generator) -> None:
        self.node, self.n, self.rng = node, n, rng

    def step(self, rnd: int, inbox: list) -> list:  # pragma: no cover - interface
        raise NotImplementedError


def run(config: SimConfig, programs: Sequence[NodeProgram], max_rounds: int = 10_000,
        seed: int = 0, ledger: Optional[RoundLedger] = None):
    """Execute programs in lockstep.  Messages sent in round r arrive in r + 1."""
    n = config.n
    if len(programs) != n:
        raise ValueError(f"need {n} programs, got {len(programs)}")
    led = ledger if ledger is not None else RoundLedger(config)
    base = led.rounds
    for i, prog in enumerate(programs):
        prog.setup(i, n, np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(i,))))
    bw = config.bandwidth_bits
    pending: list[list] = [[] for _ in range(n)]
    rnd = 0
    last_send = -1
    while True:
        if all(p.done for p in programs) and not any(pending):
            break
        if rnd >= max_rounds:
            raise SimTimeoutError(f"no termination within {max_rounds} rounds")
        inboxes, pending = pending, [[] for _ in range(n)]
        load: dict[tuple[int, int], int] = {}
        for i, prog in enumerate(programs):
            if prog.done:
                continue
            out = prog.step(rnd, inboxes[i]) or []
            for dst, bits, payload in out:
                dst = int(dst)
                if not 0 <= dst < n:
                    raise ValueError(f"node {i} addressed missing node {dst}")
                if dst == i:
                    pending[i].append((i, payload, bits))
                    continue
                key = (i, dst)
                load[key] = load.get(key, 0) + int(bits)
                if load[key] > bw:
                    raise BandwidthError(rnd, i, dst, load[key], bw)
                pending[dst].append((i, payload, bits))
        if load:
            keys = np.array(list(load.keys()), dtype=np.int64)
            led.add(keys[:, 0], keys[:, 1], np.fromiter(load.values(), dtype=np.int64),
                    "run", start=base + rnd, rounds=1)
            last_send = rnd
        rnd += 1
    led.rounds = max(led.rounds, base + last_send + 1)
    return [p.output for p in programs], led
