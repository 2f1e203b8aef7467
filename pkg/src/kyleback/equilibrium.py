"""Optimal trading intensity, expected profit, and optimality diagnostics.

The closed-form route applies when the price feedback coefficient g vanishes.
Writing phi2(t,0) = exp(int_0^t f) for the signal growth factor and

    Iz(t) = int_0^t sigma_z^2 dr,
    Jv(t) = int_0^t phi2(0,r)^2 sigma_v(r)^2 dr,

the optimal intensity family is

    alpha0^2 / 4 = (s0 + Jv(T)) / Iz(T)
    S(t)    = phi2(t,0)^2 [ alpha0^2/4 (Iz(T) - Iz(t)) - (Jv(T) - Jv(t)) ]
    beta(t) = alpha0 phi2(t,0) sigma_z(t)^2 / (2 S(t))

with expected profit J = (alpha0/2) phi2(T,0) Iz(T) and a price impact
coefficient lambda = alpha0 / 2. When f, g vanish and the volatilities are
polynomial, all integrals are evaluated from antiderivatives, so the closed
forms come out at machine precision; otherwise a dense lattice is used.

The objective functional is evaluated on the truncated horizon [0, T - delta]
where the intensity stays finite:

    Jbar = int_0^{T_eff} beta S phi1(0,t) phi3(T_eff, t) dt,   J = phi2(T,0) Jbar.

Chopping the last delta of the horizon loses the near-singular final burst of
trading; the "corrected" figures add the exact tail term, which replaces
phi3(T_eff, t) by phi3(T_eff, t) + phi1(T_eff,0) phi2(0,T_eff) and recovers
the full-horizon value whenever phi1(T,0) ~ 0 (it does at any optimum, where
the price ends fully revealing).

Directional (Gateaux) derivatives of S, phi1, phi3 and Jbar along a
perturbation xi of the intensity are computed from their variational
representations; fd_directional provides the matching central finite
difference for cross-checks. foc_residual evaluates the pointwise first-order
optimality condition, normalized so that 0 means optimal and O(1) means
plainly suboptimal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import deterministic as det
from .coefficients import CoefficientSet, Strategy, TimeFunction, constant, polynomial
from .errors import DegenerateError, NotApplicable
from .deterministic import RiccatiSolution, TimeGrid

__all__ = [
    "EquilibriumSolution", "VariationalDerivatives", "FocReport",
    "strategy_beta_callable", "solve_optimal_g0", "price_map_g0",
    "objective_value", "directional_derivatives", "fd_directional",
    "foc_residual", "foc_report", "scaled_strategy", "xi_basis",
    "delta_sweep", "export_equilibrium_csv",
]

_DENSE_N = 32768
_P = np.polynomial.polynomial


# ======================================================================
# Closed-form engine (g == 0)
# ======================================================================

def _is_zero_fn(fn: TimeFunction, T: float) -> bool:
    p = fn.poly_coeffs()
    if p is not None:
        return bool(np.all(p == 0.0))
    return bool(np.max(np.abs(fn.eval(np.linspace(0.0, T, 1025)))) == 0.0)


class _ClosedForm:
    """Vectorized closed-form quantities for a g == 0 coefficient set."""

    def __init__(self, coeffs: CoefficientSet, alpha0: float | None = None):
        if not _is_zero_fn(coeffs.g, coeffs.T):
            sup = float(np.max(np.abs(coeffs.g.eval(np.linspace(0, coeffs.T, 1025)))))
            raise NotApplicable(
                f"g must vanish for the closed-form intensity (sup |g| = {sup:.3g})")
        self.coeffs = coeffs
        T = coeffs.T
        fg = coeffs.fg_sum_poly()
        pv = coeffs.sigma_v.poly_coeffs()
        pz = coeffs.sigma_z.poly_coeffs()
        self.exact = (fg is not None and np.all(fg == 0.0)
                      and pv is not None and pz is not None)

        if self.exact:
            # phi2 == 1; Iz, Jv are polynomial antiderivatives.
            self._Pz = _P.polyint(_P.polymul(pz, pz))
            self._Pv = _P.polyint(_P.polymul(pv, pv))
            Iz_T = float(_P.polyval(T, self._Pz))
            Jv_T = float(_P.polyval(T, self._Pv))
            self._log_phi2 = None
        else:
            uu = np.linspace(0.0, T, _DENSE_N + 1)
            du = T / _DENSE_N
            fg_vals = (np.asarray(coeffs.f.eval(uu), dtype=float)
                       + np.asarray(coeffs.g.eval(uu), dtype=float))
            L = np.concatenate(([0.0], np.cumsum(0.5 * du * (fg_vals[1:] + fg_vals[:-1]))))
            sv2 = np.asarray(coeffs.sigma_v.eval(uu), dtype=float) ** 2
            sz2 = np.asarray(coeffs.sigma_z.eval(uu), dtype=float) ** 2
            jv_int = np.exp(-2.0 * L) * sv2
            self._uu, self._L = uu, L
            self._Iz = np.concatenate(([0.0], np.cumsum(0.5 * du * (sz2[1:] + sz2[:-1]))))
            self._Jv = np.concatenate(([0.0], np.cumsum(0.5 * du * (jv_int[1:] + jv_int[:-1]))))
            Iz_T = float(self._Iz[-1])
            Jv_T = float(self._Jv[-1])

        num = coeffs.s0 + Jv_T
        if num <= 0.0:
            raise DegenerateError(
                "nothing to trade on: s0 = 0 and sigma_v vanishes, the signal "
                "carries no private information")
        self.Iz_T, self.Jv_T = Iz_T, Jv_T
        if alpha0 is None:
            self.r2 = num / Iz_T                 # alpha0^2 / 4, formed once
            self.alpha0 = 2.0 * math.sqrt(self.r2)
        else:
            self.alpha0 = float(alpha0)
            self.r2 = self.alpha0 ** 2 / 4.0
        self.lam = self.alpha0 / 2.0

        if self.exact:
            # S(t) / phi2^2 as one polynomial: r2 (Pz(T) - Pz) - (Pv(T) - Pv)
            n = max(len(self._Pz), len(self._Pv))
            c = np.zeros(n)
            c[: len(self._Pz)] -= self.r2 * self._Pz
            c[: len(self._Pv)] += self._Pv
            c[0] += self.r2 * Iz_T - Jv_T
            self._S_poly = c
            probe = np.linspace(0.0, T, 1025)[:-1]
            if np.min(_P.polyval(probe, c)) <= 0.0:
                raise DegenerateError(
                    "closed-form variance hits zero before the horizon; "
                    "alpha0 is too small for these volatilities")
        else:
            S_lat = np.exp(2.0 * self._L) * (self.r2 * (Iz_T - self._Iz) - (Jv_T - self._Jv))
            self._S_lat = S_lat
            if np.min(S_lat[:-1]) <= 0.0:
                raise DegenerateError(
                    "closed-form variance hits zero before the horizon; "
                    "alpha0 is too small for these volatilities")

    # -- pointwise quantities ------------------------------------------

    def log_phi2(self, t):
        t = np.asarray(t, dtype=float)
        if self.exact:
            return np.zeros_like(t)
        return np.interp(t, self._uu, self._L)

    def phi2_t0(self, t):
        return np.exp(self.log_phi2(t))

    def S(self, t):
        t = np.asarray(t, dtype=float)
        if self.exact:
            return _P.polyval(t, self._S_poly)
        return np.interp(t, self._uu, self._S_lat)

    def beta(self, t):
        t_arr = np.asarray(t, dtype=float)
        sz2 = np.asarray(self.coeffs.sigma_z.eval(t_arr), dtype=float) ** 2
        out = self.alpha0 * self.phi2_t0(t_arr) * sz2 / (2.0 * self.S(t_arr))
        return float(out) if np.isscalar(t) or t_arr.ndim == 0 else out

    def Iz(self, t):
        if self.exact:
            return _P.polyval(np.asarray(t, dtype=float), self._Pz)
        return np.interp(np.asarray(t, dtype=float), self._uu, self._Iz)

    def J_corrected(self, delta: float) -> float:
        """Tail-corrected expected profit for the delta-truncated intensity."""
        T = self.coeffs.T
        return float(self.lam * self.phi2_t0(T) * self.Iz(T - delta))


def _closed_form_for(coeffs: CoefficientSet, strategy: Strategy) -> _ClosedForm:
    T = coeffs.T
    if strategy.kind == "static_kyle":
        for name in ("f", "g", "h", "sigma_v"):
            if not _is_zero_fn(getattr(coeffs, name), T):
                raise NotApplicable(
                    f"static closed form needs f = g = h = sigma_v = 0; {name} is nonzero")
    elif strategy.kind == "back_pedersen":
        for name in ("f", "g", "h"):
            if not _is_zero_fn(getattr(coeffs, name), T):
                raise NotApplicable(
                    f"long-lived-information closed form needs f = g = h = 0; "
                    f"{name} is nonzero")
    return _ClosedForm(coeffs, alpha0=strategy.alpha0)


def strategy_beta_callable(coeffs: CoefficientSet, strategy):
    """Vectorized t -> beta(t) for a Strategy (any kind) or a plain callable."""
    if isinstance(strategy, TimeFunction):
        return strategy.eval
    if callable(strategy) and not isinstance(strategy, Strategy):
        return strategy
    if strategy.kind == "grid":
        return strategy.beta_fn.eval
    return _closed_form_for(coeffs, strategy).beta


# ======================================================================
# Optimal solution (g == 0)
# ======================================================================

@dataclass(frozen=True)
class EquilibriumSolution:
    alpha0: float
    lam: float
    beta: Strategy
    riccati: RiccatiSolution
    J: float
    Jbar: float


def solve_optimal_g0(coeffs: CoefficientSet, grid: TimeGrid) -> EquilibriumSolution:
    """Closed-form optimum on the truncated grid.

    Raises NotApplicable if g does not vanish and DegenerateError if there is
    no private information (s0 = 0 and sigma_v = 0). The returned Riccati
    solution is built from the closed-form variance, not an ODE solve.
    """
    cf = _ClosedForm(coeffs)
    delta = coeffs.T - grid.T_eff
    strat = Strategy(kind="closed_form_g0", alpha0=cf.alpha0,
                     delta=delta if delta > 0 else 1e-12)
    S_arr = np.asarray(cf.S(grid.t), dtype=float)
    beta_arr = np.asarray(cf.beta(grid.t), dtype=float)
    ric = det.solution_from_S(coeffs, grid, S_arr, beta_arr)
    J = cf.J_corrected(delta)
    phi2_T0 = float(cf.phi2_t0(coeffs.T))
    return EquilibriumSolution(alpha0=cf.alpha0, lam=cf.lam, beta=strat,
                               riccati=ric, J=J, Jbar=J / phi2_T0)


def price_map_g0(sol: EquilibriumSolution, coeffs: CoefficientSet,
                 y: float, t: float) -> float:
    """Equilibrium price as a function of cumulative order flow y at time t:

        P = phi2(t,0) [ v0 + int_0^t phi2(0,r) h(r) dr + (alpha0/2) y ].
    """
    p2 = det.phi2(coeffs, t, 0.0)
    if _is_zero_fn(coeffs.h, coeffs.T):
        drift = 0.0
    else:
        m = 4096
        rr = np.linspace(0.0, t, m + 1)
        fg = coeffs.fg_sum_poly()
        if fg is not None:
            anti = _P.polyint(fg)
            log_p2 = _P.polyval(rr, anti)
        else:
            fg_vals = (np.asarray(coeffs.f.eval(rr), dtype=float)
                       + np.asarray(coeffs.g.eval(rr), dtype=float))
            log_p2 = np.concatenate(
                ([0.0], np.cumsum(0.5 * (t / m) * (fg_vals[1:] + fg_vals[:-1]))))
        vals = np.asarray(coeffs.h.eval(rr), dtype=float) * np.exp(-log_p2)
        drift = float((t / m) / 3.0 * (vals[0] + vals[-1]
                                       + 4.0 * vals[1:-1:2].sum()
                                       + 2.0 * vals[2:-1:2].sum()))
    return float(p2 * (coeffs.v0 + drift + sol.lam * y))


# ======================================================================
# Objective
# ======================================================================

@dataclass(frozen=True)
class ObjectiveValue:
    Jbar: float
    J: float
    Jbar_corrected: float
    J_corrected: float
    phi2_T0: float


def objective_value(coeffs: CoefficientSet, strategy, grid: TimeGrid,
                    ric: RiccatiSolution | None = None) -> ObjectiveValue:
    """Truncated expected profit and its tail-corrected counterpart."""
    beta_fn = strategy_beta_callable(coeffs, strategy)
    if ric is None:
        ric = det.solve_riccati(coeffs, beta_fn, grid)
    b = np.asarray(beta_fn(grid.t), dtype=float)
    w = b * ric.S * ric.phi1_0t
    jbar = det.quadrature(w * ric.phi3_Tt, grid)
    tail = ric.phi1_t0[-1] / ric.phi2_t0[-1]      # phi1(T_eff,0) phi2(0,T_eff)
    jbar_corr = jbar + tail * det.quadrature(w, grid)
    phi2_T0 = det.phi2(coeffs, coeffs.T, 0.0)
    return ObjectiveValue(Jbar=jbar, J=phi2_T0 * jbar,
                          Jbar_corrected=jbar_corr, J_corrected=phi2_T0 * jbar_corr,
                          phi2_T0=phi2_T0)


# ======================================================================
# Variational derivatives
# ======================================================================

@dataclass(frozen=True)
class VariationalDerivatives:
    grid: TimeGrid
    dS: np.ndarray
    dphi1_t0: np.ndarray
    dphi1_0t: np.ndarray
    dphi3_Tt: np.ndarray
    dJbar: float


def _eval_direction(xi, t):
    if isinstance(xi, TimeFunction):
        return np.asarray(xi.eval(t), dtype=float)
    return np.asarray(xi(t), dtype=float)


def directional_derivatives(coeffs: CoefficientSet, strategy, xi,
                            grid: TimeGrid,
                            ric: RiccatiSolution | None = None) -> VariationalDerivatives:
    """Gateaux derivatives of S, phi1(t,0), phi1(0,t), phi3(T_eff,t) and the
    truncated Jbar along the intensity perturbation beta + y*xi at y = 0."""
    beta_fn = strategy_beta_callable(coeffs, strategy)
    if ric is None:
        ric = det.solve_riccati(coeffs, beta_fn, grid)
    t = grid.t
    b = np.asarray(beta_fn(t), dtype=float)
    xi_v = _eval_direction(xi, t)
    sz2 = np.asarray(coeffs.sigma_z.eval(t), dtype=float) ** 2
    alpha = 2.0 * b * ric.S / sz2
    rho = b ** 2 / sz2
    phi1_0t = ric.phi1_0t

    dS = -ric.phi1_t0 ** 2 * det.cumtrapz(xi_v * alpha * ric.S * phi1_0t ** 2, grid)
    m = xi_v * alpha + dS * rho
    M = det.cumtrapz(m, grid)
    dphi1_t0 = -ric.phi1_t0 * M
    dphi1_0t = phi1_0t * M
    phi2_0t = 1.0 / ric.phi2_t0
    dphi3 = det.cumtrapz_reversed(dphi1_t0 * phi2_0t * ric.k
                                  + ric.phi1_t0 * phi2_0t * m, grid)
    dJbar = det.quadrature(
        xi_v * ric.S * phi1_0t * ric.phi3_Tt
        + b * dS * phi1_0t * ric.phi3_Tt
        + b * ric.S * dphi1_0t * ric.phi3_Tt
        + b * ric.S * phi1_0t * dphi3, grid)
    return VariationalDerivatives(grid=grid, dS=dS, dphi1_t0=dphi1_t0,
                                  dphi1_0t=dphi1_0t, dphi3_Tt=dphi3, dJbar=dJbar)


def fd_directional(coeffs: CoefficientSet, strategy, xi, grid: TimeGrid,
                   y: float = 1e-4) -> VariationalDerivatives:
    """Central finite difference matching directional_derivatives."""
    beta_fn = strategy_beta_callable(coeffs, strategy)

    def bumped(sign):
        def fn(t):
            return (np.asarray(beta_fn(t), dtype=float)
                    + sign * y * _eval_direction(xi, t))
        ric = det.solve_riccati(coeffs, fn, grid)
        b = np.asarray(fn(grid.t), dtype=float)
        jbar = det.quadrature(b * ric.S * ric.phi1_0t * ric.phi3_Tt, grid)
        return ric, jbar

    rp, jp = bumped(+1.0)
    rm, jm = bumped(-1.0)
    inv = 0.5 / y
    return VariationalDerivatives(
        grid=grid,
        dS=(rp.S - rm.S) * inv,
        dphi1_t0=(rp.phi1_t0 - rm.phi1_t0) * inv,
        dphi1_0t=(rp.phi1_0t - rm.phi1_0t) * inv,
        dphi3_Tt=(rp.phi3_Tt - rm.phi3_Tt) * inv,
        dJbar=(jp - jm) * inv,
    )


def xi_basis(T: float):
    """The four standard perturbation directions: 1, t, t^2, sin(pi t / T)."""
    return (
        ("const", constant(1.0, t_max=T)),
        ("linear", polynomial([0.0, 1.0], t_max=T)),
        ("quadratic", polynomial([0.0, 0.0, 1.0], t_max=T)),
        ("sine", lambda t: np.sin(np.pi * np.asarray(t, dtype=float) / T)),
    )


# ======================================================================
# First-order condition
# ======================================================================

@dataclass(frozen=True)
class FocReport:
    residual: np.ndarray
    sup: float
    l2: float
    psi_phi_gap: np.ndarray
    reduced: bool


def foc_report(coeffs: CoefficientSet, strategy, grid: TimeGrid,
               ric: RiccatiSolution | None = None) -> FocReport:
    """Pointwise first-order condition on the truncated horizon.

    The raw condition equates a marginal-cost side

        phi1(t,0) sigma_z^2 phi3c(t) / (2 beta S) + Phi / S

    with a marginal-gain side

        int_t^{T_eff} [ beta phi1(r,0) phi3c(r) + beta^2 Phi_r / sigma_z(r)^2 ] dr,

    where phi3c is the tail-corrected phi3 and

        Phi_t = phi1(t,0)^2 [int_0^t beta S phi1(0,r) dr]
                           [int_t^{T_eff} g phi1(r,0) phi2(0,r) dr]

    (identically zero when g == 0). The residual reported here is
    alpha_t * (cost - gain) normalized by sup |phi1(t,0)^2 phi2(0,t)|, which
    makes it exactly phi12 - alpha int beta phi12 in the g == 0 case and O(1)
    for order-one deviations from optimality.
    """
    beta_fn = strategy_beta_callable(coeffs, strategy)
    if ric is None:
        ric = det.solve_riccati(coeffs, beta_fn, grid)
    t = grid.t
    b = np.asarray(beta_fn(t), dtype=float)
    sz2 = np.asarray(coeffs.sigma_z.eval(t), dtype=float) ** 2
    g_vals = np.asarray(coeffs.g.eval(t), dtype=float)
    phi2_0t = 1.0 / ric.phi2_t0
    phi1 = ric.phi1_t0
    alpha = 2.0 * b * ric.S / sz2

    tail_const = phi1[-1] * phi2_0t[-1]
    phi3c = ric.phi3_Tt + tail_const

    A = det.cumtrapz(b * ric.S * ric.phi1_0t, grid)
    G = det.cumtrapz_reversed(g_vals * phi1 * phi2_0t, grid)
    Phi = phi1 ** 2 * A * G

    cost = phi1 * sz2 * phi3c / (2.0 * b * ric.S) + np.divide(
        Phi, ric.S, out=np.zeros_like(Phi), where=ric.S != 0.0)
    gain = det.cumtrapz_reversed(b * phi1 * phi3c + b ** 2 * Phi / sz2, grid)

    phi12 = phi1 ** 2 * phi2_0t
    norm = float(np.max(np.abs(phi12)))
    residual = alpha * (cost - gain) / norm

    reduced = bool(np.all(G == 0.0))
    Psi = phi1 ** 2 * (phi1 * phi2_0t - ric.phi3_Tt) * A
    gap = Psi - Phi
    return FocReport(residual=residual,
                     sup=float(np.max(np.abs(residual))),
                     l2=float(math.sqrt(det.quadrature(residual ** 2, grid))),
                     psi_phi_gap=gap, reduced=reduced)


def foc_residual(coeffs: CoefficientSet, strategy, grid: TimeGrid,
                 ric: RiccatiSolution | None = None) -> np.ndarray:
    return foc_report(coeffs, strategy, grid, ric=ric).residual


def scaled_strategy(coeffs: CoefficientSet, eps: float, grid: TimeGrid | None = None):
    """(1 + eps) times the closed-form optimal intensity, as a callable."""
    cf = _ClosedForm(coeffs)
    return lambda t: (1.0 + eps) * cf.beta(t)


# ======================================================================
# Horizon sweep and export
# ======================================================================

def delta_sweep(coeffs: CoefficientSet, deltas, strategy: Strategy | None = None,
                n: int = 4096):
    """Terminal intensity/variance as the truncation shrinks: the blow-up
    exhibit beta(T - delta) -> inf, S(T - delta) -> 0."""
    rows = []
    if strategy is None or strategy.kind != "grid":
        cf = (_ClosedForm(coeffs) if strategy is None
              else _closed_form_for(coeffs, strategy))
        for d in deltas:
            te = coeffs.T - d
            rows.append({"delta": float(d),
                         "beta_end": float(cf.beta(te)),
                         "S_end": float(cf.S(te))})
    else:
        beta_fn = strategy_beta_callable(coeffs, strategy)
        for d in deltas:
            grid = det.make_grid(coeffs.T, d, n)
            ric = det.solve_riccati(coeffs, beta_fn, grid)
            rows.append({"delta": float(d),
                         "beta_end": float(np.asarray(beta_fn(grid.T_eff), dtype=float)),
                         "S_end": float(ric.S[-1])})
    return rows


def export_equilibrium_csv(coeffs: CoefficientSet, strategy, grid: TimeGrid,
                           path: str) -> None:
    """Write t,beta,S_closed,J_contrib,foc_residual rows at full precision.

    S_closed is the closed-form variance when the strategy has one, else the
    ODE solution; J_contrib is the tail-corrected profit integrand, so the
    trapezoid sum of the column reproduces Jbar_corrected.
    """
    beta_fn = strategy_beta_callable(coeffs, strategy)
    ric = det.solve_riccati(coeffs, beta_fn, grid)
    b = np.asarray(beta_fn(grid.t), dtype=float)
    if isinstance(strategy, Strategy) and strategy.kind != "grid":
        S_closed = np.asarray(_closed_form_for(coeffs, strategy).S(grid.t), dtype=float)
    else:
        S_closed = ric.S
    tail = ric.phi1_t0[-1] / ric.phi2_t0[-1]
    contrib = b * ric.S * ric.phi1_0t * (ric.phi3_Tt + tail)
    residual = foc_residual(coeffs, strategy, grid, ric=ric)
    with open(path, "w") as fh:
        fh.write("t,beta,S_closed,J_contrib,foc_residual\n")
        for row in zip(grid.t, b, S_closed, contrib, residual):
            fh.write(",".join(f"{x:.17g}" for x in row) + "\n")
