"""Random subset families, the p-balanced predicate and team set-up.

A family is stored as a boolean membership matrix ``members[i, v]``.  Set i
is served by team i: machines i*n' .. (i+1)*n' - 1 with n' = n // s.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .ccsim import Clique, NodeProgram, SimConfig, run
from .matmul import TeamGeometry, get_scheme, team_geometry

MAX_ATTEMPTS = 3


class UnbalancedFamilyError(RuntimeError):
    pass


def family_size(p: float, a: float, multiplier: float = 1.0) -> int:
    # small tolerance so that exact powers like (1/16)^-2 do not round up
    return max(1, math.ceil(multiplier * p ** (-a) - 1e-9))


def vertex_quota(n: int, p: float, a: float) -> int:
    return math.ceil(p ** (1 - a) - 1e-12) * 4 * math.ceil(math.log2(max(n, 2)))


def set_quota(n: int, p: float) -> int:
    return math.ceil(4 * n * p - 1e-12)


@dataclass
class BalancedFamily:
    n: int
    p: float
    a: float
    members: np.ndarray          # (s, n) bool
    seed: Optional[int] = None
    notes: list = field(default_factory=list)

    @property
    def s(self) -> int:
        return self.members.shape[0]

    def subset(self, i: int) -> np.ndarray:
        return np.flatnonzero(self.members[i])

    def sizes(self) -> np.ndarray:
        return self.members.sum(axis=1)

    def memberships(self) -> np.ndarray:
        return self.members.sum(axis=0)


def _check_params(n: int, p: float, a: float):
    if not 0 <= a <= 2:
        raise ValueError(f"a={a} outside [0, 2]")
    if not (n ** -0.5 - 1e-12 <= p <= 1):
        raise ValueError(f"p={p} outside [n^-1/2, 1]")


def sample_family(n: int, p: float, a: float, count_multiplier: float = 1.0,
                  seed=None) -> BalancedFamily:
    """Each vertex joins each of s = ceil(mult * p^-a) sets with probability p."""
    _check_params(n, p, a)
    if count_multiplier <= 0:
        raise ValueError("count_multiplier must be positive")
    s = family_size(p, a, count_multiplier)
    if s > n:
        raise ValueError(f"family of {s} sets does not fit on {n} machines")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    members = rng.random((s, n)) < p
    fam = BalancedFamily(n, p, a, members, seed if isinstance(seed, int) else None)
    if count_multiplier != 1 and s > 1 and s > p ** -2:
        fam.notes.append("family exceeds p^-2 sets; checking vertex and set quotas with actual s")
    return fam


def check_balanced(fam: BalancedFamily) -> tuple[bool, Optional[str]]:
    """(ok, tag): tag names the first violated condition."""
    n, p, a = fam.n, fam.p, fam.a
    if not 0 <= a <= 2:
        return False, "cond1"
    if not (n ** -0.5 - 1e-12 <= p <= 1):
        return False, "cond2"
    if fam.s > n:
        return False, "s>n"
    if fam.s and fam.memberships().max(initial=0) > vertex_quota(n, p, a):
        return False, "cond3"
    if fam.s and fam.sizes().max(initial=0) > set_quota(n, p):
        return False, "cond4"
    return True, None


class _AckCheck(NodeProgram):
    """Round 0: members Ack to their set's machine and test their own quota.
    Round 1: any machine that saw a violation broadcasts a failure bit."""

    def __init__(self, my_sets, vquota, squota, is_set_owner):
        super().__init__()
        self.my_sets = my_sets
        self.vquota = vquota
        self.squota = squota
        self.is_set_owner = is_set_owner
        self.bad = False

    def step(self, rnd, inbox):
        if rnd == 0:
            self.bad = len(self.my_sets) > self.vquota
            return [(int(i), 1, "ack") for i in self.my_sets]
        if rnd == 1:
            acks = sum(1 for _, msg, _ in inbox if msg == "ack")
            if self.is_set_owner and acks > self.squota:
                self.bad = True
            out = []
            if self.bad:
                out = [(v, 1, "fail") for v in range(self.n) if v != self.node]
            return out
        self.output = self.bad or any(msg == "fail" for _, msg, _ in inbox)
        self.done = True
        return []


def check_balanced_distributed(fam: BalancedFamily, cl: Clique) -> tuple[bool, Optional[str]]:
    """Ack-count check in two communication rounds on the clique."""
    ok_local, tag = check_balanced(fam)
    if tag in ("cond1", "cond2", "s>n"):
        # parameter conditions are known to every machine without talking
        return ok_local, tag
    n = fam.n
    vq, sq = vertex_quota(n, fam.p, fam.a), set_quota(n, fam.p)
    sets_of = [np.flatnonzero(fam.members[:, v]) for v in range(n)]
    progs = [_AckCheck(sets_of[v], vq, sq, v < fam.s) for v in range(n)]
    outputs, _ = run(cl.config, progs, max_rounds=8, seed=cl.seed, ledger=cl.ledger)
    bad = any(outputs)
    if bad != (not ok_local):
        raise AssertionError("distributed balance check disagrees with local predicate")
    return (not bad), tag


def sample_balanced(n: int, p: float, a: float, count_multiplier: float = 1.0,
                    rng: Optional[np.random.Generator] = None, cl: Optional[Clique] = None,
                    attempts: int = MAX_ATTEMPTS) -> BalancedFamily:
    """Sample, test, and resample with fresh randomness up to ``attempts`` times."""
    rng = rng if rng is not None else np.random.default_rng()
    last = None
    for _ in range(attempts):
        fam = sample_family(n, p, a, count_multiplier, rng)
        ok, tag = check_balanced_distributed(fam, cl) if cl is not None else check_balanced(fam)
        if ok:
            return fam
        last = tag
    raise UnbalancedFamilyError(f"no balanced family after {attempts} attempts (last: {last})")


# ------------------------------------------------------ membership learning

@dataclass
class MemberLists:
    lists: list            # lists[v] = {set index: sorted member IDs}
    rounds: int


def _team_size(n: int, s: int) -> int:
    return max(1, n // max(s, 1))


def learn_members(fam: BalancedFamily, cl: Clique) -> MemberLists:
    """Every vertex learns the full member list of each set it belongs to."""
    ok, tag = check_balanced(fam)
    if not ok:
        raise UnbalancedFamilyError(f"family is not balanced ({tag})")
    n, s = fam.n, fam.s
    start = cl.rounds
    n1 = _team_size(n, s)
    # step 1: team labels follow from (n, s), announced by the leader
    cl.broadcast(0, 1, "members:labels")
    set_idx, verts = np.nonzero(fam.members)
    if verts.size:
        # step 2: each member sends its ID to one machine of its set's team
        holder = set_idx * n1 + verts % n1
        cl.route(verts, holder, 1, "members:ack")
        # steps 3-4: team machine j forwards its share S_i^j to all of U_i
        sizes = fam.sizes()
        share = np.zeros((s, n1), dtype=np.int64)
        np.add.at(share, (set_idx, verts % n1), 1)
        # pair every member v of U_i with every non-empty share of U_i
        src, dst, amt = [], [], []
        for i in range(s):
            if sizes[i] == 0:
                continue
            js = np.flatnonzero(share[i])
            us = fam.subset(i)
            src.append(np.repeat(i * n1 + js, us.size))
            dst.append(np.tile(us, js.size))
            amt.append(np.repeat(share[i, js], us.size))
        cl.route(np.concatenate(src), np.concatenate(dst), np.concatenate(amt),
                 "members:spread")
    lists: list = [dict() for _ in range(n)]
    for i in range(s):
        us = fam.subset(i)
        for v in us:
            lists[v][i] = us
    return MemberLists(lists, cl.rounds - start)


# ------------------------------------------------------ input redistribution

@dataclass
class Redistribution:
    matrices: np.ndarray     # (s, k, k) adjacency of G[U_i], rows/cols by ID order
    geometry: TeamGeometry
    rounds: int

    def piece(self, node: int) -> tuple[int, np.ndarray]:
        """(team, dense mask of held entries) for one machine."""
        geo = self.geometry
        team, local = divmod(node, geo.team_size)
        k = self.matrices.shape[1]
        rows = np.arange(k)
        owner = geo.owner(team, rows[:, None], rows[None, :])
        return team, owner == node


def redistribute_input(adj: np.ndarray, fam: BalancedFamily, cl: Clique,
                       scheme="strassen") -> Redistribution:
    """Move the rows of each G[U_i] into team i's (x, y) layout.

    ``adj`` is any n x n 0/1 matrix whose row u is known to vertex u (the
    adjacency of G or of a coloured G_phi).
    """
    ok, tag = check_balanced(fam)
    if not ok:
        raise UnbalancedFamilyError(f"family is not balanced ({tag})")
    adj = np.asarray(adj)
    n, s = fam.n, fam.s
    start = cl.rounds
    k = max(1, int(fam.sizes().max(initial=0)))
    geo = team_geometry(n, s, k, get_scheme(scheme))
    mats = np.zeros((s, k, k), dtype=np.int64)
    src, dst = [], []
    for i in range(s):
        us = fam.subset(i)
        if us.size == 0:
            continue
        mats[i, : us.size, : us.size] = adj[np.ix_(us, us)]
        ri, rj = np.meshgrid(np.arange(us.size), np.arange(us.size), indexing="ij")
        src.append(us[ri.ravel()])
        dst.append(geo.owner(i, ri.ravel(), rj.ravel()))
    if src:
        cl.route(np.concatenate(src), np.concatenate(dst), 1, "redistribute", entry_bits=1)
    return Redistribution(mats, geo, cl.rounds - start)
