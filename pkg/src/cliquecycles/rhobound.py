"""Rectangular matrix multiplication exponents and round predictors.

The table holds knots (gamma, omega(gamma)) of the sequential rectangular
exponent.  From them:

    y(gamma)    = 1 - (1 - gamma) / omega(gamma)
    step(gamma) = 1 - 2 / omega(gamma)

``step`` bounds the clique exponent rho(1 - y) for products with aspect
ratio y, and a straight line line(y) = B - A (1 - y) is laid over it.  The
line drives every sub-square round prediction below.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from importlib import resources
from typing import Optional

import numpy as np

TABLE_SHA256 = "9c92dc069626b8e6664169871817225363bd01fecdb2b5a491a064ef441caf25"
OMEGA = 2.371552
RHO = 1 - 2 / OMEGA
ALPHA0 = 0.321334
BETA0 = (1 + ALPHA0) / 2
DELTA_SPLIT = 1.82408


class TableCorruptionError(RuntimeError):
    pass


@dataclass(frozen=True)
class RhoTable:
    gamma: np.ndarray
    omega: np.ndarray
    y: np.ndarray
    step: np.ndarray
    line: np.ndarray

    def __len__(self):
        return self.gamma.size

    def recomputed_y(self) -> np.ndarray:
        return 1 - (1 - self.gamma) / self.omega

    def recomputed_step(self) -> np.ndarray:
        return 1 - 2 / self.omega

    def step_fn(self, y):
        """Step bound at y: on (y_i, y_{i+1}] the value of row i + 1."""
        y = np.asarray(y, dtype=float)
        if np.any(y < self.y[0] - 1e-12) or np.any(y > 1 + 1e-12):
            raise ValueError("y outside the table range")
        idx = np.searchsorted(self.y, y, side="left")
        return self.step[np.clip(idx, 0, len(self) - 1)]


@dataclass(frozen=True)
class LineBound:
    A: float
    B: float

    def __call__(self, y):
        return self.B - self.A * (1 - np.asarray(y, dtype=float))

    @property
    def root(self) -> float:
        """Aspect ratio where the line reaches zero."""
        return 1 - self.B / self.A


def load_table(text: Optional[str] = None) -> RhoTable:
    if text is None:
        text = resources.files("cliquecycles").joinpath("data/rho_table.txt").read_text()
        if hashlib.sha256(text.encode()).hexdigest() != TABLE_SHA256:
            raise TableCorruptionError("exponent table checksum mismatch")
    rows = [ln.split() for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    try:
        data = np.array([[float(v) for v in r] for r in rows])
    except ValueError as exc:
        raise TableCorruptionError(f"unparsable exponent table: {exc}") from None
    if data.ndim != 2 or data.shape[1] != 6:
        raise TableCorruptionError("exponent table must have 6 columns")
    if not np.array_equal(data[:, 0], np.arange(len(data))):
        raise TableCorruptionError("row indices out of order")
    tab = RhoTable(*(data[:, j].copy() for j in range(1, 6)))
    if np.any(np.diff(tab.gamma) <= 0):
        raise TableCorruptionError("gamma column is not ascending")
    return tab


def omega_interp(z, table: Optional[RhoTable] = None):
    tab = table if table is not None else load_table()
    z_arr = np.asarray(z, dtype=float)
    if np.any(z_arr < tab.gamma[0]) or np.any(z_arr > tab.gamma[-1]):
        raise ValueError(f"z outside [{tab.gamma[0]}, {tab.gamma[-1]}]")
    out = np.interp(z_arr, tab.gamma, tab.omega)
    return float(out) if out.ndim == 0 else out


def dominates(line: LineBound, table: RhoTable, tol: float = 0.0) -> bool:
    """line(y_i) >= step_{i+1} for every interval, plus line(1) >= step(1)."""
    ok = line(table.y[:-1]) >= table.step[1:] - tol
    return bool(ok.all() and line(1.0) >= table.step[-1] - tol)


def minimal_slope_line(table: RhoTable) -> LineBound:
    """Flattest line vanishing at y_0 that still dominates the step function."""
    y0 = table.y[0]
    gap = table.y[:-1] - y0
    need = np.where(gap > 0, table.step[1:] / np.where(gap > 0, gap, 1), 0.0)
    need = max(float(need.max()), table.step[-1] / (1 - y0))
    return LineBound(float(need), float(need * (1 - y0)))


def fit_line(table: Optional[RhoTable] = None) -> LineBound:
    """Line through the two pinned cells (y_1, line_1) and (1, line_62).

    Raises if it fails to dominate the step function.
    """
    tab = table if table is not None else load_table()
    A = (tab.line[-1] - tab.line[1]) / (1 - tab.y[1])
    line = LineBound(float(A), float(tab.line[-1]))
    if not dominates(line, tab):
        raise ValueError("fitted line does not dominate the step function")
    return line


_LINE: Optional[LineBound] = None


def default_line() -> LineBound:
    global _LINE
    if _LINE is None:
        _LINE = fit_line()
    return _LINE


def rm_cost(n: float, k: float, line: Optional[LineBound] = None) -> float:
    """Rounds bound n^B (k/n)^A for products with k x n blocks."""
    if not 1 <= k <= n:
        raise ValueError("need 1 <= k <= n")
    ln = line if line is not None else default_line()
    return float(n ** ln.B * (k / n) ** ln.A)


def sigma_to_rho(sigma: float) -> float:
    return 1 - 2 / sigma


def delta_crossover(rho: float = RHO, line: Optional[LineBound] = None) -> float:
    """delta where n^rho x^-(2 + delta (rho - 1)) meets n^B x^-A (taking B = rho)."""
    ln = line if line is not None else default_line()
    return (2 - ln.A) / (1 - rho)


def threshold_exponent(h: int = 3, line: Optional[LineBound] = None) -> float:
    """log_n t beyond which the main bound is n^o(1)."""
    ln = line if line is not None else default_line()
    return ln.B * (h - DELTA_SPLIT) / ln.A


def predicted_rounds(algorithm: str, n: float, h: int = 3, t: float = 1.0,
                     x: Optional[float] = None, delta: Optional[float] = None,
                     k: Optional[float] = None, s: float = 1.0,
                     sigma: Optional[float] = None, line: Optional[LineBound] = None) -> float:
    """Closed-form round predictions (constants and polylogs dropped).

    ``sigma`` swaps the theoretical rho for 1 - 2/sigma of a concrete scheme.
    """
    ln = line if line is not None else default_line()
    rho = RHO if sigma is None else sigma_to_rho(sigma)
    if algorithm == "mm_batch":
        if k is None:
            raise ValueError("mm_batch needs k")
        return n ** (rho - 2) * k ** 2 * s ** (1 - rho)
    if algorithm == "fmm":
        return n ** rho
    if algorithm == "fc":
        if x is None or delta is None:
            raise ValueError("fc needs x and delta")
        return n ** rho * x ** -(2 + delta * (rho - 1))
    if algorithm == "fvic":
        if x is None:
            raise ValueError("fvic needs x")
        return n ** ln.B * x ** -ln.A
    if algorithm in ("main",):
        return n ** ln.B / (t ** (ln.A / (h - DELTA_SPLIT)) + 1)
    if algorithm == "main_split":
        return n ** ln.B / (t ** (ln.A / (2 - DELTA_SPLIT)) + 1)
    if algorithm == "q_fast":
        return (n / (t ** 2 + 1)) ** (3 * rho / 4)
    if algorithm == "q_basic":
        return n ** (3 * rho / 4)
    if algorithm == "dlp":
        return max(1.0, n ** (1 / 3) / t ** (2 / 3))
    raise ValueError(f"unknown algorithm tag {algorithm!r}")


def exponent_curves(tau, rho: float = RHO, beta0: float = BETA0) -> dict:
    """Triangle round exponents as functions of tau = log_n t, floored at 0."""
    tau = np.asarray(tau, dtype=float)
    raw = {
        "dlp": 1 / 3 - 2 * tau / 3,
        "fmm": np.full_like(tau, rho),
        "fc_delta2": rho - tau * (2 + 2 * (rho - 1)),
        "fvic_delta0": rho - tau * rho / ((1 - beta0) * 3),
        "main": rho - tau * rho / ((1 - beta0) * (3 - DELTA_SPLIT)),
    }
    return {k: np.maximum(v, 0.0) for k, v in raw.items()}
