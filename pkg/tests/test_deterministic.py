"""Riccati solver, phi functions, quadrature: frozen analytic oracles.

Oracle values used here were derived by hand before the implementation:
  * f=0, sigma_v=1, beta=0, s0=0        -> S(t) = t            (dS = dt)
  * f=0, sigma_v=0, beta=1, sz=1, s0=1  -> S(t) = 1/(1+t)      (dS = -S^2)
  * f=0, sv=sz=1, s0=1, beta=sqrt2/(1-t)-> S(t) = 1 - t
  * f+g = t on [0,1]                    -> phi2(1,0) = e^{1/2}
  * integral of t^2 on [0,1]            -> 1/3
"""

import math

import numpy as np
import pytest

from kyleback import coefficients as co
from kyleback import deterministic as det
from kyleback.errors import BlowUpError, LengthMismatch


def _grid(T=1.0, delta=1e-3, n=20000):
    return det.make_grid(T, delta, n)


# ----------------------------------------------------------------------
# TimeGrid / quadrature
# ----------------------------------------------------------------------

def test_grid_is_uniform_and_spans():
    g = _grid(1.0, 0.001, 1000)
    assert g.t[0] == 0.0
    assert g.t[-1] == pytest.approx(0.999, abs=1e-14)
    steps = np.diff(g.t)
    assert np.allclose(steps, steps[0], rtol=0, atol=1e-15)
    assert len(g.t) == 1001


def test_quadrature_constant_one():
    g = det.make_grid(1.0, 0.0, 1000)
    assert det.quadrature(np.ones_like(g.t), g) == pytest.approx(1.0, abs=1e-14)


def test_quadrature_affine_exact():
    g = det.make_grid(1.0, 0.0, 777)
    assert det.quadrature(g.t.copy(), g) == pytest.approx(0.5, abs=1e-13)


def test_quadrature_t_squared():
    g = det.make_grid(1.0, 0.0, 10000)
    assert det.quadrature(g.t ** 2, g) == pytest.approx(1.0 / 3.0, abs=1e-8)


def test_quadrature_length_mismatch():
    g = det.make_grid(1.0, 0.0, 100)
    with pytest.raises(LengthMismatch):
        det.quadrature(np.ones(5), g)


# ----------------------------------------------------------------------
# phi2
# ----------------------------------------------------------------------

def _coeffs(f=0.0, g=0.0, h=0.0, sv=1.0, sz=1.0, v0=0.0, s0=1.0, T=1.0):
    def fn(x):
        return x if isinstance(x, co.TimeFunction) else co.constant(x, t_max=T)
    return co.CoefficientSet(T=T, f=fn(f), g=fn(g), h=fn(h),
                             sigma_v=fn(sv), sigma_z=fn(sz), v0=v0, s0=s0)


def test_phi2_zero_sum_is_one():
    c = _coeffs(f=0.3, g=-0.3)
    assert det.phi2(c, 0.8, 0.1) == pytest.approx(1.0, abs=1e-12)


def test_phi2_constant_rate():
    c = _coeffs(f=1.0, g=0.0)
    assert det.phi2(c, 1.0, 0.0) == pytest.approx(math.e, rel=1e-10)


def test_phi2_polynomial_rate():
    # f + g = t -> phi2(1,0) = exp(1/2); trapezoid is exact for affine integrands
    c = _coeffs(f=co.polynomial([0.0, 1.0], t_max=1.0), g=0.0)
    assert det.phi2(c, 1.0, 0.0) == pytest.approx(math.exp(0.5), abs=1e-8)


def test_phi2_inverse_property():
    c = _coeffs(f=0.4, g=co.polynomial([0.1, -0.3], t_max=1.0))
    prod = det.phi2(c, 0.9, 0.2) * det.phi2(c, 0.2, 0.9)
    assert prod == pytest.approx(1.0, rel=1e-12)


# ----------------------------------------------------------------------
# Riccati: frozen trivial solutions
# ----------------------------------------------------------------------

def test_riccati_linear_growth():
    c = _coeffs(sv=1.0, s0=0.0)
    g = _grid()
    sol = det.solve_riccati(c, lambda t: np.zeros_like(np.asarray(t, dtype=float)), g)
    assert np.max(np.abs(sol.S - g.t)) <= 1e-12


def test_riccati_pure_decay():
    c = _coeffs(sv=0.0, s0=1.0)
    g = _grid()
    sol = det.solve_riccati(c, lambda t: np.ones_like(np.asarray(t, dtype=float)), g)
    assert np.max(np.abs(sol.S - 1.0 / (1.0 + g.t))) <= 1e-12


def test_riccati_closed_form_error_variance():
    # g=0, f=0, sv=sz=1, s0=1 with beta = sqrt(2)/(1-t): S = 1-t
    c = _coeffs()
    g = _grid(1.0, 1e-3, 20000)
    beta = lambda t: math.sqrt(2.0) / (1.0 - np.asarray(t, dtype=float))
    sol = det.solve_riccati(c, beta, g)
    assert np.max(np.abs(sol.S - (1.0 - g.t))) <= 1e-6
    # k = beta^2 S / sz^2 = 2/(1-t)
    assert np.max(np.abs(sol.k - 2.0 / (1.0 - g.t)) / (2.0 / (1.0 - g.t))) <= 1e-5
    # l = beta S / sz = sqrt(2) (1-t) / (1-t) * ... = sqrt2 * S/(1-t)
    assert np.max(np.abs(sol.l - math.sqrt(2.0) * sol.S / (1.0 - g.t))) <= 1e-12
    # phi1(t,0) = (1-t)^2
    assert np.max(np.abs(sol.phi1_t0 - (1.0 - g.t) ** 2)) <= 1e-5
    # phi3(T_eff, t) = (1-t)^2 - delta^2 for the truncated horizon
    delta = 1e-3
    assert np.max(np.abs(sol.phi3_Tt - ((1.0 - g.t) ** 2 - delta ** 2))) <= 1e-5


def test_riccati_initial_and_boundary_values():
    c = _coeffs()
    g = _grid(1.0, 0.01, 2000)
    sol = det.solve_riccati(c, lambda t: 1.0 + 0.0 * np.asarray(t, dtype=float), g)
    assert sol.S[0] == 1.0
    assert sol.phi1_t0[0] == 1.0
    assert sol.phi2_t0[0] == 1.0
    assert sol.phi3_Tt[-1] == 0.0


def test_riccati_grid_refinement_fourth_order():
    # oscillatory intensity so truncation error is well above round-off
    c = _coeffs(f=0.3)
    beta = lambda t: 2.0 + np.sin(4.0 * np.pi * np.asarray(t, dtype=float))
    ends = []
    for n in (100, 200, 400):
        g = _grid(1.0, 0.05, n)
        ends.append(det.solve_riccati(c, beta, g).S[-1])
    d1 = abs(ends[0] - ends[1])
    d2 = abs(ends[1] - ends[2])
    assert d2 < d1
    assert 8.0 <= d1 / d2 <= 40.0  # ~16 for a 4th-order scheme


def test_riccati_blowup_detection():
    c = _coeffs(sv=1.0, s0=1.0)
    g = det.make_grid(1.0, 0.1, 100)
    with pytest.raises(BlowUpError):
        det.solve_riccati(c, lambda t: 1e3 * np.ones_like(np.asarray(t, dtype=float)), g)


def test_riccati_accepts_strategy_object():
    cfg = co.load_scenario("g_feedback")
    g = _grid(1.0, cfg.delta, 2000)
    sol = det.solve_riccati(cfg.coefficients, cfg.strategy, g)
    assert np.all(sol.S > 0)


# ----------------------------------------------------------------------
# Module invariants on the presets
# ----------------------------------------------------------------------

def _preset_solution(name, delta=None, n=4000):
    from kyleback.equilibrium import strategy_beta_callable
    cfg = co.load_scenario(name)
    d = delta if delta is not None else cfg.delta
    g = det.make_grid(cfg.coefficients.T, d, n)
    beta = strategy_beta_callable(cfg.coefficients, cfg.strategy)
    return cfg, g, det.solve_riccati(cfg.coefficients, beta, g)


@pytest.mark.parametrize("name", co.PRESET_NAMES)
def test_positivity_and_bound(name):
    cfg, g, sol = _preset_solution(name)
    assert np.all(sol.S > 0)
    coeffs = cfg.coefficients
    tt = np.linspace(0, coeffs.T, 513)
    K = np.max(coeffs.sigma_v.eval(tt) ** 2) + 2 * np.max(np.abs(coeffs.f.eval(tt)))
    bound = math.exp(K * coeffs.T) * (coeffs.s0 + K * coeffs.T)
    assert np.max(sol.S) <= bound + 1e-12


@pytest.mark.parametrize("name", co.PRESET_NAMES)
def test_phi3_identity_residual(name):
    # phi3(T,t) = phi1(t,0)phi2(0,t) - phi1(T,0)phi2(0,T) - int_t^T g phi1 phi2
    cfg, g, sol = _preset_solution(name, n=20000)
    gr = cfg.coefficients.g.eval(g.t)
    phi2_0t = 1.0 / sol.phi2_t0
    inner = gr * sol.phi1_t0 * phi2_0t
    tail = det.cumtrapz_reversed(inner, g)
    rhs = sol.phi1_t0 * phi2_0t - sol.phi1_t0[-1] * phi2_0t[-1] - tail
    assert np.max(np.abs(sol.phi3_Tt - rhs)) <= 1e-6


@pytest.mark.parametrize("name", co.PRESET_NAMES)
def test_variance_ratio_relation(name):
    # S_t = s0 phi1(t,0) exp(int_0^t (f + sigma_v^2/S))   [s0 > 0 scenarios]
    cfg, g, sol = _preset_solution(name, delta=0.01, n=20000)
    coeffs = cfg.coefficients
    integrand = coeffs.f.eval(g.t) + coeffs.sigma_v.eval(g.t) ** 2 / sol.S
    rhs = coeffs.s0 * sol.phi1_t0 * np.exp(det.cumtrapz(integrand, g))
    rel = np.abs(sol.S - rhs) / np.abs(sol.S)
    assert np.max(rel) <= 1e-4


# ----------------------------------------------------------------------
# CSV export
# ----------------------------------------------------------------------

def test_riccati_csv_roundtrip(tmp_path):
    cfg, g, sol = _preset_solution("g0_general", n=500)
    path = tmp_path / "riccati.csv"
    det.export_riccati_csv(sol, str(path))
    rows = path.read_text().strip().split("\n")
    assert rows[0] == "t,S,k,l,phi1_t0,phi2_t0,phi3_Tt"
    assert len(rows) == len(g.t) + 1
    first = rows[1].split(",")
    # 17 significant digits round-trip float64 exactly
    assert float(first[1]) == sol.S[0]
    mid = rows[len(rows) // 2].split(",")
    idx = len(rows) // 2 - 1
    assert float(mid[1]) == sol.S[idx]
    assert float(mid[4]) == sol.phi1_t0[idx]
