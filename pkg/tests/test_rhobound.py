import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cliquecycles import rhobound
from cliquecycles.rhobound import LineBound, TableCorruptionError


@pytest.fixture(scope="module")
def tab():
    return rhobound.load_table()


def test_table_shape_and_endpoints(tab):
    assert len(tab) == 63
    assert tab.gamma[-1] == pytest.approx(1.0)
    assert tab.omega[-1] == pytest.approx(rhobound.OMEGA)
    assert rhobound.ALPHA0 - 2e-5 <= tab.gamma[0] <= rhobound.ALPHA0


def test_recomputed_columns(tab):
    assert np.abs(tab.recomputed_y() - tab.y).max() < 1e-7
    assert np.abs(tab.recomputed_step() - tab.step).max() < 1e-7


def test_fitted_line_reproduces_last_column(tab):
    line = rhobound.fit_line(tab)
    assert np.abs(line(tab.y) - tab.line).max() < 1e-6
    assert line(1.0) == pytest.approx(0.15667514, abs=1e-12)
    assert line.A == pytest.approx((0.15667514 - 0.00000005) / (1 - 0.66066043), abs=1e-6)
    assert rhobound.dominates(line, tab)


def test_threshold_and_crossover(tab):
    line = rhobound.fit_line(tab)
    assert rhobound.threshold_exponent(3, line) == pytest.approx(0.3992, abs=5e-4)
    assert rhobound.delta_crossover(line=line) == pytest.approx(rhobound.DELTA_SPLIT, abs=1e-4)


def test_minimal_slope_line_is_tight(tab):
    flat = rhobound.minimal_slope_line(tab)
    assert isinstance(flat.B, float)
    assert rhobound.dominates(flat, tab, tol=1e-12)
    assert flat.root == pytest.approx(tab.y[0])
    steeper = LineBound(flat.A * (1 - 1e-6), flat.A * (1 - 1e-6) * (1 - tab.y[0]))
    assert not rhobound.dominates(steeper, tab)
    fit = rhobound.fit_line(tab)
    assert flat.A <= fit.A + 1e-12


def test_step_function_pieces(tab):
    assert rhobound.load_table().step_fn(tab.y[5]) == tab.step[5]
    mid = (tab.y[5] + tab.y[6]) / 2
    assert tab.step_fn(mid) == tab.step[6]
    with pytest.raises(ValueError):
        tab.step_fn(0.1)


@settings(max_examples=100, deadline=None)
@given(st.floats(0.321334, 1.0))
def test_omega_interp_monotone_and_bracketed(z):
    tab = rhobound.load_table()
    w = rhobound.omega_interp(z, tab)
    assert 2 - 1e-9 <= w <= rhobound.OMEGA + 1e-9
    i = np.searchsorted(tab.gamma, z)
    if 0 < i < len(tab):
        assert tab.omega[i - 1] - 1e-12 <= w <= tab.omega[i] + 1e-12


def test_omega_interp_range():
    with pytest.raises(ValueError):
        rhobound.omega_interp(0.2)


def test_corrupted_table_rejected(tab):
    text = (rhobound.resources.files("cliquecycles") / "data/rho_table.txt").read_text()
    lines = text.splitlines()
    swapped = "\n".join(lines[:5] + [lines[6], lines[5]] + lines[7:])
    with pytest.raises(TableCorruptionError):
        rhobound.load_table(swapped)
    with pytest.raises(TableCorruptionError):
        rhobound.load_table(text.replace("0.66066043", "0.66O66043"))
    bad = "\n".join(ln.rsplit(" ", 1)[0] if not ln.startswith("#") else ln for ln in lines)
    with pytest.raises(TableCorruptionError):
        rhobound.load_table(bad)


def test_fit_line_refuses_non_dominating_table(tab):
    text = (rhobound.resources.files("cliquecycles") / "data/rho_table.txt").read_text()
    rows = text.splitlines()
    # lift one interior step above the line
    parts = rows[31].split()
    parts[4] = "0.9"
    rows[31] = " ".join(parts)
    with pytest.raises(ValueError):
        rhobound.fit_line(rhobound.load_table("\n".join(rows)))


def test_rm_cost_interpolates():
    line = rhobound.default_line()
    assert rhobound.rm_cost(1e6, 1e6) == pytest.approx(1e6 ** line.B)
    assert rhobound.rm_cost(1e6, 1e3) < rhobound.rm_cost(1e6, 1e4)
    with pytest.raises(ValueError):
        rhobound.rm_cost(10, 20)


def test_predicted_rounds_tags():
    n = 2.0 ** 20
    rho = rhobound.RHO
    line = rhobound.default_line()
    assert rhobound.predicted_rounds("fmm", n) == pytest.approx(n ** rho)
    assert rhobound.predicted_rounds("mm_batch", n, k=n, s=1) == pytest.approx(n ** rho)
    assert rhobound.predicted_rounds("fc", n, x=n, delta=0) == pytest.approx(n ** (rho - 2))
    assert rhobound.predicted_rounds("fvic", n, x=1) == pytest.approx(n ** line.B)
    assert rhobound.predicted_rounds("dlp", n, t=n) == 1.0
    assert rhobound.predicted_rounds("q_basic", n) == pytest.approx(n ** (0.75 * rho))
    sigma = math.log2(7)
    assert rhobound.predicted_rounds("fmm", n, sigma=sigma) == pytest.approx(n ** (1 - 2 / sigma))
    m1 = rhobound.predicted_rounds("main", n, t=1)
    m2 = rhobound.predicted_rounds("main", n, t=2 ** 10)
    assert m2 < m1
    assert rhobound.predicted_rounds("main_split", n, t=5) < rhobound.predicted_rounds(
        "main", n, t=5)
    for tag, kw in (("fc", {}), ("fvic", {}), ("mm_batch", {}), ("nope", {})):
        with pytest.raises(ValueError):
            rhobound.predicted_rounds(tag, n, **kw)


def test_exponent_curves():
    tau = np.linspace(0, 1, 51)
    cur = rhobound.exponent_curves(tau)
    assert set(cur) == {"dlp", "fmm", "fc_delta2", "fvic_delta0", "main"}
    for v in cur.values():
        assert (v >= 0).all() and (np.diff(v) <= 1e-15).all()
    assert cur["main"][0] == pytest.approx(rhobound.RHO)
    assert (cur["main"] <= cur["fvic_delta0"] + 1e-15).all()
    zero = tau[np.argmax(cur["main"] == 0)]
    assert zero == pytest.approx((1 - rhobound.BETA0) * (3 - rhobound.DELTA_SPLIT), abs=0.02)
