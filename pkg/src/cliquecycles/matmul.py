"""Distributed matrix products on the clique.

Layout conventions
------------------
A team is a block of ``n'`` consecutive machines (``n'`` a power of 4) and
its members are labelled (x, y) with x, y < r = sqrt(n').  Matrix indices of
an R x R matrix are split as v = (I, x, a): I picks the top-level block of
the bilinear recursion, x is the team coordinate and a the remainder.  Node
(x, y) owns every entry whose row has middle digit x and whose column has
middle digit y; this is the S[*x*, *y*] piece.

The drivers below keep matrices as dense numpy arrays (the union of all
pieces) and charge communication per ordered machine pair exactly as the
pieces move.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .ccsim import Clique, RoundLedger, SimConfig

INT64_MAX = np.iinfo(np.int64).max


class ArithmeticOverflowError(OverflowError):
    pass


def is_power_of(v: int, base: int) -> bool:
    if v < 1:
        return False
    while v % base == 0:
        v //= base
    return v == 1


def next_power_of_4(v: int) -> int:
    p = 1
    while p < v:
        p *= 4
    return p


def largest_power_of_4_at_most(v: int) -> int:
    if v < 1:
        raise ValueError("need at least one machine per team")
    p = 1
    while p * 4 <= v:
        p *= 4
    return p


# ------------------------------------------------------------ index split

def index_split(v: int, dim: int, block_count: int, outer: int = 1) -> tuple[int, int, int]:
    """Split index v < dim into (v1, v2, v3) with v2 < block_count.

    v1 < outer is the most significant digit, v3 the least significant.
    """
    if not is_power_of(dim, 4):
        raise ValueError(f"dimension {dim} is not a power of 4")
    if not (is_power_of(block_count, 2) and is_power_of(outer, 2)):
        raise ValueError("block_count and outer must be powers of 2")
    if dim % (outer * block_count):
        raise ValueError("outer * block_count must divide dim")
    if not 0 <= v < dim:
        raise ValueError(f"index {v} out of range")
    inner = dim // (outer * block_count)
    return v // (block_count * inner), (v // inner) % block_count, v % inner


def index_join(v1: int, v2: int, v3: int, dim: int, block_count: int, outer: int = 1) -> int:
    inner = dim // (outer * block_count)
    return (v1 * block_count + v2) * inner + v3


def submatrix(M: np.ndarray, x: int, y: int, block_count: int, outer: int = 1) -> np.ndarray:
    """The M[*x*, *y*] piece as a 4-d array (v1, v3, u1, u3)."""
    R = M.shape[0]
    inner = R // (outer * block_count)
    v = M.reshape(outer, block_count, inner, outer, block_count, inner)
    return v[:, x, :, :, y, :]


# --------------------------------------------------------- bilinear schemes

@dataclass(frozen=True)
class BilinearScheme:
    """P[i, j] = sum_w lam[w, i, j] * (sum alpha[w] * S) * (sum beta[w] * T)."""

    name: str
    d: int
    m: int
    alpha: np.ndarray
    beta: np.ndarray
    lam: np.ndarray
    _powers: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def sigma(self) -> float:
        return math.log(self.m) / math.log(self.d)

    @property
    def rho(self) -> float:
        return 1.0 - 2.0 / self.sigma

    def depth_for(self, team_size: int) -> int:
        j = 0
        while self.m ** (j + 1) <= team_size:
            j += 1
        return j

    def power(self, j: int):
        """Coefficients of the j-fold recursive scheme (Kronecker powers)."""
        if j not in self._powers:
            a = np.ones((1, 1, 1), dtype=np.int64)
            b = a.copy()
            l = a.copy()
            for _ in range(j):
                a = _kron_step(a, self.alpha)
                b = _kron_step(b, self.beta)
                l = _kron_step(l, self.lam)
            self._powers[j] = (a, b, l)
        return self._powers[j]

    def apply_local(self, S: np.ndarray, T: np.ndarray) -> np.ndarray:
        """One level of the scheme on d x d integer matrices (for checks)."""
        Sh = np.einsum("wik,ik->w", self.alpha, S)
        Th = np.einsum("wkj,kj->w", self.beta, T)
        return np.einsum("wij,w->ij", self.lam, Sh * Th)

    def verify(self, trials: int = 20, seed: int = 0) -> bool:
        rng = np.random.default_rng(seed)
        for _ in range(trials):
            S = rng.integers(-9, 10, (self.d, self.d))
            T = rng.integers(-9, 10, (self.d, self.d))
            if not np.array_equal(self.apply_local(S, T), S @ T):
                return False
        return True


def _kron_step(acc: np.ndarray, base: np.ndarray) -> np.ndarray:
    w1, d1, _ = acc.shape
    w2, d2, _ = base.shape
    out = np.einsum("wik,vjl->wvijkl", acc, base)
    return out.reshape(w1 * w2, d1 * d2, d1 * d2)


def _naive() -> BilinearScheme:
    d = 2
    al, be, la = (np.zeros((8, 2, 2), dtype=np.int64) for _ in range(3))
    w = 0
    for i in range(d):
        for k in range(d):
            for j in range(d):
                al[w, i, k] = 1
                be[w, k, j] = 1
                la[w, i, j] = 1
                w += 1
    return BilinearScheme("naive", 2, 8, al, be, la)


def _strassen() -> BilinearScheme:
    E = lambda i, j: np.eye(2, dtype=np.int64)[i][:, None] * np.eye(2, dtype=np.int64)[j][None, :]
    A11, A12, A21, A22 = E(0, 0), E(0, 1), E(1, 0), E(1, 1)
    alpha = np.stack([A11 + A22, A21 + A22, A11, A22, A11 + A12, A21 - A11, A12 - A22])
    beta = np.stack([A11 + A22, A11, A12 - A22, A21 - A11, A22, A11 + A12, A21 + A22])
    lam = np.zeros((7, 2, 2), dtype=np.int64)
    # C11 = M1 + M4 - M5 + M7, C12 = M3 + M5, C21 = M2 + M4, C22 = M1 - M2 + M3 + M6
    lam[0] = [[1, 0], [0, 1]]
    lam[1] = [[0, 0], [1, -1]]
    lam[2] = [[0, 1], [0, 1]]
    lam[3] = [[1, 0], [1, 0]]
    lam[4] = [[-1, 1], [0, 0]]
    lam[5] = [[0, 0], [0, 1]]
    lam[6] = [[1, 0], [0, 0]]
    return BilinearScheme("strassen", 2, 7, alpha, beta, lam)


SCHEMES: dict[str, BilinearScheme] = {}


def register_scheme(scheme: BilinearScheme) -> BilinearScheme:
    if not scheme.verify():
        raise ValueError(f"scheme {scheme.name!r} does not reproduce the matrix product")
    SCHEMES[scheme.name] = scheme
    return scheme


register_scheme(_naive())
register_scheme(_strassen())


def get_scheme(scheme) -> BilinearScheme:
    if isinstance(scheme, BilinearScheme):
        return scheme
    try:
        return SCHEMES[scheme]
    except KeyError:
        raise ValueError(f"unknown scheme {scheme!r}; known: {sorted(SCHEMES)}") from None


# ------------------------------------------------------------ team geometry

@dataclass(frozen=True)
class TeamGeometry:
    teams: int       # s
    team_size: int   # n', a power of 4
    r: int           # sqrt(n')
    depth: int       # recursion depth j
    d: int           # d^j, top-level block count per side
    W: int           # m^j active multiplication nodes per team
    R: int           # padded matrix dimension (power of 2, multiple of d * r)

    @property
    def c(self) -> int:
        return self.R // (self.d * self.r)

    def owner(self, team, row, col):
        """Machine holding entry (row, col) of the team's matrix."""
        inner = self.c
        x = (np.asarray(row) // inner) % self.r
        y = (np.asarray(col) // inner) % self.r
        return np.asarray(team) * self.team_size + x * self.r + y


def team_geometry(n: int, s: int, k: int, scheme) -> TeamGeometry:
    sch = get_scheme(scheme)
    if s < 1 or s > n:
        raise ValueError(f"team count s={s} must lie in [1, n={n}]")
    n1 = largest_power_of_4_at_most(n // s)
    r = int(math.isqrt(n1))
    j = sch.depth_for(n1)
    d = sch.d ** j
    R = 1 << (max(k, d * r, 1) - 1).bit_length()
    return TeamGeometry(s, n1, r, j, d, sch.m ** j, R)


# ------------------------------------------------------------- arithmetic

def _product_bound(scheme: BilinearScheme, j: int, R: int) -> int:
    a, b, l = scheme.power(j)
    A1 = int(np.abs(a).reshape(a.shape[0], -1).sum(axis=1).max())
    B1 = int(np.abs(b).reshape(b.shape[0], -1).sum(axis=1).max())
    L1 = int(np.abs(l).sum(axis=0).max())
    inner = R // (scheme.d ** j)
    return A1 * B1 * L1 * inner


def _prepare_operands(S, T, scheme, j, R, mode):
    gain = _product_bound(scheme, j, R)
    if mode == "exact":
        ms = int(np.abs(S).max(initial=0))
        mt = int(np.abs(T).max(initial=0))
        if gain * ms * mt > INT64_MAX:
            raise ArithmeticOverflowError(
                f"product may overflow int64 (bound {gain * ms * mt})")
        return S, T
    if mode == "saturating":
        if (S < 0).any() or (T < 0).any():
            raise ValueError("saturating mode needs non-negative matrices")
        cap = max(1, math.isqrt((INT64_MAX >> 1) // gain))
        return np.minimum(S, cap), np.minimum(T, cap)
    raise ValueError(f"unknown arithmetic mode {mode!r}")


# ------------------------------------------------------ charged exchanges

def _team_phase(cl: Clique, geo: TeamGeometry, src_local, dst_local, entries, label,
                boost: int = 1, active: Optional[int] = None):
    """Charge the same intra-team pattern in every team, optionally relayed.

    With ``boost`` = B > 1 each message is cut into B chunks; chunk j from
    local a to local b travels through machine (team j, (a + b) mod n').
    Every relay pair then carries a single chunk in each of the two phases.
    """
    src_local = np.asarray(src_local, dtype=np.int64)
    dst_local = np.asarray(dst_local, dtype=np.int64)
    entries = np.broadcast_to(np.asarray(entries, dtype=np.int64), src_local.shape)
    keep = (src_local != dst_local) & (entries > 0)
    src_local, dst_local, entries = src_local[keep], dst_local[keep], entries[keep]
    if src_local.size == 0:
        return 0
    n1 = geo.team_size
    s = geo.teams if active is None else active
    base = np.arange(s, dtype=np.int64)[:, None] * n1
    eb, bw = cl.config.entry_bits, cl.config.bandwidth_bits
    direct = -(-int(entries.max()) * eb // bw)
    B = min(boost, geo.teams)
    if B > 1:
        chunk_max = -(-int(entries.max()) // B)
        relayed = 2 * (-(-chunk_max * eb // bw))
    if B <= 1 or relayed >= direct:
        src = (base + src_local[None, :]).ravel()
        dst = (base + dst_local[None, :]).ravel()
        return cl.exchange(src, dst, np.tile(entries, s), label)
    j = np.arange(B, dtype=np.int64)
    chunks = entries[:, None] // B + (j[None, :] < (entries[:, None] % B))   # (pairs, B)
    relay_local = (src_local + dst_local) % n1
    src = np.broadcast_to(base[:, :, None] + src_local[None, :, None], (s, src_local.size, B))
    relay = np.broadcast_to(j[None, None, :] * n1 + relay_local[None, :, None], (s, src_local.size, B))
    dst = np.broadcast_to(base[:, :, None] + dst_local[None, :, None], (s, src_local.size, B))
    amt = np.broadcast_to(chunks[None, :, :], (s, src_local.size, B))
    r1 = cl.exchange(src.ravel(), relay.ravel(), amt.ravel(), label + ":relay1")
    r2 = cl.exchange(relay.ravel(), dst.ravel(), amt.ravel(), label + ":relay2")
    return r1 + r2


def _multiply_core(cl: Clique, geo: TeamGeometry, S: np.ndarray, T: np.ndarray,
                   scheme: BilinearScheme, mode: str, boost: int) -> np.ndarray:
    """Five-step product on padded (s, R, R) operands already in team layout.

    S.shape[0] teams compute; geo.teams may be larger when idle teams relay.
    """
    s, R = S.shape[0], geo.R
    d, r, c, W = geo.d, geo.r, geo.c, geo.W
    S, T = _prepare_operands(S, T, scheme, geo.depth, R, mode)
    a, b, l = scheme.power(geo.depth)
    # step 1: each node forms its pieces of the W linear combinations
    S7 = S.reshape(s, d, r * c, d, r * c).transpose(0, 1, 3, 2, 4).reshape(s, d * d, (r * c) ** 2)
    T7 = T.reshape(s, d, r * c, d, r * c).transpose(0, 1, 3, 2, 4).reshape(s, d * d, (r * c) ** 2)
    Sh = np.matmul(a.reshape(W, d * d), S7).reshape(s, W, r * c, r * c)
    Th = np.matmul(b.reshape(W, d * d), T7).reshape(s, W, r * c, r * c)
    # step 2: node (x, y) ships its piece of S_w and T_w to node w
    xy = np.arange(geo.team_size)
    ws = np.arange(W)
    src = np.repeat(xy[xy < r * r], W)
    dst = np.tile(ws, r * r)
    _team_phase(cl, geo, src, dst, 2 * c * c, "single_product:step2", boost, s)
    # step 3: node w multiplies locally (through float BLAS when that is exact)
    Ph = _exact_matmul(Sh, Th)
    # step 4: node w returns P_w[*x*, *y*] to node (x, y)
    _team_phase(cl, geo, dst, src, c * c, "single_product:step4", boost, s)
    # step 5: local linear combination
    P = np.matmul(l.reshape(W, d * d).T, Ph.reshape(s, W, (r * c) ** 2))
    P = P.reshape(s, d, d, r * c, r * c).transpose(0, 1, 3, 2, 4).reshape(s, R, R)
    return P


FLOAT_EXACT = 2 ** 53


def _exact_matmul(X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    mx = int(np.abs(X).max(initial=0))
    my = int(np.abs(Y).max(initial=0))
    if mx * my * X.shape[-1] < FLOAT_EXACT:
        return np.rint(np.matmul(X.astype(np.float64), Y.astype(np.float64))).astype(np.int64)
    return np.matmul(X, Y)


def _pad(M: np.ndarray, R: int) -> np.ndarray:
    s, k1, k2 = M.shape
    if k1 == R and k2 == R:
        return np.ascontiguousarray(M, dtype=np.int64)
    out = np.zeros((s, R, R), dtype=np.int64)
    out[:, :k1, :k2] = M
    return out


# ------------------------------------------------------------- public ops

@dataclass
class MatrixBatch:
    S: np.ndarray   # (s, k, k)
    T: np.ndarray

    def __post_init__(self):
        self.S = np.asarray(self.S, dtype=np.int64)
        self.T = np.asarray(self.T, dtype=np.int64)
        if self.S.ndim == 2:
            self.S = self.S[None]
        if self.T.ndim == 2:
            self.T = self.T[None]
        if self.S.shape != self.T.shape or self.S.shape[1] != self.S.shape[2]:
            raise ValueError("batch needs matching square matrices")

    @property
    def s(self) -> int:
        return self.S.shape[0]

    @property
    def k(self) -> int:
        return self.S.shape[1]


@dataclass
class ProductResult:
    products: np.ndarray
    ledger: RoundLedger
    geometry: TeamGeometry
    products_used: int = 1

    @property
    def rounds(self) -> int:
        return self.ledger.rounds


def single_product(team_size: int, S, T, scheme="strassen", bandwidth_factor: int = 1,
                   config: Optional[SimConfig] = None, mode: str = "exact") -> ProductResult:
    """Multiply R x R matrices on a team of ``team_size`` machines.

    A bandwidth factor B > 1 is realised by B - 1 helper teams acting as
    relays, so the clique has B * team_size machines.
    """
    if not is_power_of(team_size, 4):
        raise ValueError(f"team size {team_size} is not a power of 4")
    sch = get_scheme(scheme)
    S = np.asarray(S, dtype=np.int64)
    T = np.asarray(T, dtype=np.int64)
    R = S.shape[0]
    if S.shape != (R, R) or T.shape != (R, R):
        raise ValueError("single_product needs square matrices of equal size")
    if not is_power_of(R, 4):
        raise ValueError(f"matrix dimension {R} is not a power of 4")
    B = int(bandwidth_factor)
    n = team_size * B
    cfg = config if config is not None else SimConfig(n)
    if cfg.n != n:
        raise ValueError(f"config must have n = team_size * bandwidth_factor = {n}")
    cl = Clique(cfg)
    geo = team_geometry(team_size, 1, R, sch)
    if geo.R != R:
        raise ValueError(f"R={R} must be a multiple of d^j * sqrt(n') = {geo.d * geo.r}")
    # helper teams only relay; the relay span covers all B teams
    relay_geo = TeamGeometry(B, team_size, geo.r, geo.depth, geo.d, geo.W, R)
    P = _multiply_core(cl, relay_geo, S[None], T[None], sch, mode, B)
    return ProductResult(P[0], cl.ledger, geo)


def product_batch(batch: MatrixBatch, config=None, scheme="strassen", mode: str = "exact",
                  n: Optional[int] = None, boost: bool = True) -> ProductResult:
    """Compute P_i = S_i T_i for all pairs, team i on machines i*n' .. (i+1)*n' - 1."""
    sch = get_scheme(scheme)
    if isinstance(config, Clique):
        cl = config
    else:
        if config is None and n is None:
            raise ValueError("need a SimConfig, a Clique or n")
        cl = Clique(config if config is not None else SimConfig(n))
    geo = team_geometry(cl.n, batch.s, batch.k, sch)
    S = _pad(batch.S, geo.R)
    T = _pad(batch.T, geo.R)
    P = _multiply_core(cl, geo, S, T, sch, mode, batch.s if boost else 1)
    return ProductResult(P[:, :batch.k, :batch.k], cl.ledger, geo)


def matrix_power_batch(A, h: int, config=None, scheme="strassen", mode: str = "saturating",
                       n: Optional[int] = None, boost: bool = True) -> ProductResult:
    """(A_i)^h for every matrix in the batch by repeated squaring."""
    if h < 1:
        raise ValueError("h must be >= 1")
    sch = get_scheme(scheme)
    A = np.asarray(A, dtype=np.int64)
    if A.ndim == 2:
        A = A[None]
    if isinstance(config, Clique):
        cl = config
    else:
        if config is None and n is None:
            raise ValueError("need a SimConfig, a Clique or n")
        cl = Clique(config if config is not None else SimConfig(n))
    s, k = A.shape[0], A.shape[1]
    geo = team_geometry(cl.n, s, k, sch)
    base = _pad(A, geo.R)
    B = s if boost else 1
    result = None
    products = 0
    bits = bin(h)[2:]
    for pos, bit in enumerate(bits):
        if result is not None:
            result = _multiply_core(cl, geo, result, result, sch, mode, B)
            products += 1
        if bit == "1":
            if result is None:
                result = base.copy()
            else:
                result = _multiply_core(cl, geo, result, base, sch, mode, B)
                products += 1
    return ProductResult(result[:, :k, :k], cl.ledger, geo, products)


# ------------------------------------------------------ rectangular chains

@dataclass
class ChainResult:
    product: np.ndarray
    ledger: RoundLedger
    k_pad: int
    q: int
    products_used: int


def _saturate_sum(parts: np.ndarray, axis: int, mode: str) -> np.ndarray:
    count = parts.shape[axis]
    if mode == "saturating":
        return np.minimum(parts, INT64_MAX // (2 * max(count, 1))).sum(axis=axis)
    bound = int(np.abs(parts).max(initial=0)) * count
    if bound > INT64_MAX:
        raise ArithmeticOverflowError("chain partial sums may overflow int64")
    return parts.sum(axis=axis)


def _chain_shape(n: int, k: int) -> tuple[int, int]:
    k_pad = next_power_of_4(max(k, math.isqrt(n - 1) + 1 if n > 1 else 1))
    q = -(-n // k_pad)
    while q * q > n:
        k_pad *= 4
        q = -(-n // k_pad)
    return k_pad, q


def rect_chain_multiply(cl: Clique, first: np.ndarray, middle: Sequence[np.ndarray],
                        last: np.ndarray, row_holders, scheme="strassen",
                        mode: str = "saturating", input_bits: int = 1) -> ChainResult:
    """Product first @ middle[0] @ ... @ last, a k x k matrix.

    ``first`` is k x n with row i held by machine ``row_holders[i]``; every
    n x n middle factor and the n x k ``last`` factor are held row-wise (row
    u by machine u).  Each middle product runs as q^2 teams, team (b, c)
    multiplying column block b of the running product with block (b, c) of
    the next factor; the final product runs as q teams.  Input entries are
    ``input_bits`` wide; intermediate entries use the configured width.
    """
    sch = get_scheme(scheme)
    n = cl.n
    first = np.asarray(first, dtype=np.int64)
    last = np.asarray(last, dtype=np.int64)
    k = first.shape[0]
    if first.shape != (k, n) or last.shape != (n, k):
        raise ValueError("chain needs a k x n first factor and an n x k last factor")
    for M in middle:
        if np.shape(M) != (n, n):
            raise ValueError("middle factors must be n x n")
    holders = np.asarray(row_holders, dtype=np.int64)
    if holders.shape != (k,):
        raise ValueError("need one holder per row of the first factor")
    k_pad, q = _chain_shape(n, k)
    N = q * k_pad
    geo_mid = team_geometry(n, q * q, k_pad, sch) if middle else None
    geo_last = team_geometry(n, q, k_pad, sch)

    def blocks_of(M, rows):
        out = np.zeros((rows, N), dtype=np.int64)
        out[: M.shape[0], : M.shape[1]] = M
        return out

    # initial routing of all factors into their team layouts (one pass)
    src_all, dst_all = [], []
    first_geo = geo_mid if middle else geo_last
    ii, cc = (a.ravel() for a in np.meshgrid(np.arange(k), np.arange(n), indexing="ij"))
    if middle:
        # entry (i, col) goes to every team whose left operand is block col // k_pad
        teams = (cc // k_pad)[None, :] * q + np.arange(q)[:, None]
        src_all.append(np.broadcast_to(holders[ii], teams.shape).ravel())
        dst_all.append(first_geo.owner(teams, ii[None, :], (cc % k_pad)[None, :]).ravel())
    else:
        src_all.append(holders[ii])
        dst_all.append(first_geo.owner(cc // k_pad, ii, cc % k_pad))
    if middle:
        uu, vv = (a.ravel() for a in np.meshgrid(np.arange(n), np.arange(n), indexing="ij"))
        mid_dst = geo_mid.owner((uu // k_pad) * q + vv // k_pad, uu % k_pad, vv % k_pad)
        for _ in middle:
            src_all.append(uu)
            dst_all.append(mid_dst)
    lu, li = (a.ravel() for a in np.meshgrid(np.arange(n), np.arange(k), indexing="ij"))
    src_all.append(lu)
    dst_all.append(geo_last.owner(lu // k_pad, lu % k_pad, li))
    src = np.concatenate(src_all)
    dst = np.concatenate(dst_all)
    cl.route(src, dst, 1, "chain:input", entry_bits=input_bits)

    running = blocks_of(first, k_pad)             # k_pad x N
    products = 0
    rows = np.arange(k, dtype=np.int64)
    rr, jj = (a.ravel() for a in np.meshgrid(rows, np.arange(k_pad), indexing="ij"))
    if middle:
        local_mid = geo_mid.owner(0, rr, jj)
        local_last = geo_last.owner(0, rr, jj)
        bq = np.arange(q)
    for step, M in enumerate(middle):
        Mp = blocks_of(np.asarray(M, dtype=np.int64), N)
        Rm = geo_mid.R
        S = np.zeros((q, q, Rm, Rm), dtype=np.int64)
        T = np.zeros((q, q, Rm, Rm), dtype=np.int64)
        S[:, :, :k_pad, :k_pad] = running.reshape(k_pad, q, k_pad).transpose(1, 0, 2)[:, None]
        T[:, :, :k_pad, :k_pad] = Mp.reshape(q, k_pad, q, k_pad).transpose(0, 2, 1, 3)
        P = _multiply_core(cl, geo_mid, S.reshape(q * q, Rm, Rm), T.reshape(q * q, Rm, Rm),
                           sch, mode, q * q)
        products += 1
        parts = P[:, :k_pad, :k_pad].reshape(q, q, k_pad, k_pad)
        running = _saturate_sum(parts, 0, mode).transpose(1, 0, 2).reshape(k_pad, N)
        # move partial products to the owners of the next left operand
        n1 = geo_mid.team_size
        if step == len(middle) - 1:
            src = ((bq[:, None] * q + bq[None, :]) * n1)[:, :, None] + local_mid
            dst = np.broadcast_to((bq * geo_last.team_size)[None, :, None] + local_last, src.shape)
        else:
            team_src = (bq[:, None, None] * q + bq[None, :, None]) * n1            # (b, c, 1)
            team_dst = (bq[None, :, None] * q + bq[None, None, :]) * n1            # (1, c, c2)
            src = np.broadcast_to(team_src[..., None] + local_mid, (q, q, q, local_mid.size))
            dst = np.broadcast_to(team_dst[..., None] + local_mid, src.shape)
        cl.route(src.ravel(), dst.ravel(), 1, "chain:partial")

    Rl = geo_last.R
    S = np.zeros((q, Rl, Rl), dtype=np.int64)
    T = np.zeros((q, Rl, Rl), dtype=np.int64)
    Lp = np.zeros((N, k), dtype=np.int64)
    Lp[:n] = last
    for b in range(q):
        S[b, :k_pad, :k_pad] = running[:, b * k_pad:(b + 1) * k_pad]
        T[b, :k_pad, :k] = Lp[b * k_pad:(b + 1) * k_pad]
    P = _multiply_core(cl, geo_last, S, T, sch, mode, q)
    products += 1
    # sum the q partial results into team 0
    rr, jj = np.meshgrid(rows, np.arange(k), indexing="ij")
    rr, jj = rr.ravel(), jj.ravel()
    src = np.concatenate([geo_last.owner(b, rr, jj) for b in range(q)])
    dst = np.tile(geo_last.owner(0, rr, jj), q)
    cl.route(src, dst, np.ones(src.size, dtype=np.int64), "chain:sum")
    out = _saturate_sum(P[:, :k, :k], 0, mode)
    return ChainResult(out, cl.ledger, k_pad, q, products)


# ---------------------------------------------------------------- text IO

def write_matrix(M, path) -> None:
    M = np.asarray(M, dtype=np.int64)
    if M.ndim != 2:
        raise ValueError("only 2-d matrices can be written")
    lines = [f"{M.shape[0]} {M.shape[1]}"]
    lines += [" ".join(str(int(v)) for v in row) for row in M]
    Path(path).write_text("\n".join(lines) + "\n")


def read_matrix(path) -> np.ndarray:
    lines = [ln for ln in Path(path).read_text().splitlines() if ln.strip()]
    if not lines:
        raise ValueError(f"{path}: empty matrix file")
    try:
        rows, cols = (int(t) for t in lines[0].split())
    except ValueError:
        raise ValueError(f"{path}: header must be 'rows cols'") from None
    body = lines[1:]
    if len(body) != rows:
        raise ValueError(f"{path}: expected {rows} rows, found {len(body)}")
    M = np.zeros((rows, cols), dtype=np.int64)
    for i, ln in enumerate(body):
        vals = ln.split()
        if len(vals) != cols:
            raise ValueError(f"{path}: row {i} has {len(vals)} entries, expected {cols}")
        M[i] = [int(v) for v in vals]
    return M
