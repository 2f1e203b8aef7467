"""Deterministic layer: time grids, quadrature, and the filter-variance ODE.

Everything here is plain numpy on a uniform grid over [0, T - delta]. The
Riccati equation for the filter error variance

    dS/dt = sigma_v(t)^2 + 2 f(t) S - (beta(t) S / sigma_z(t))^2,   S(0) = s0

is integrated with a fixed-step classical Runge-Kutta scheme whose stage
points sit on a half-step lattice, so coefficient functions are sampled
exactly where the scheme needs them. Derived per-grid-point quantities:

    k = beta^2 S / sigma_z^2        (observation gain / information rate)
    l = beta S / sigma_z            (innovation loading)
    phi1_t0 = exp(int_0^t (f - k))  (signal-minus-price decay factor)
    phi2_t0 = exp(int_0^t (f + g))  (price growth factor)
    phi3_Tt = int_t^{T_eff} phi1(u,0) phi2(0,u) k(u) du   (tail response)

phi1 is carried in log space; tail integrals accumulate from the right so
that phi3_Tt[-1] is exactly zero and no catastrophic cancellation happens
near the horizon.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .coefficients import CoefficientSet, Strategy, TimeFunction
from .errors import BlowUpError, LengthMismatch, ValidationError

__all__ = [
    "TimeGrid", "make_grid", "quadrature", "cumtrapz", "cumtrapz_reversed",
    "phi2", "RiccatiSolution", "solve_riccati", "solution_from_S",
    "variance_bound", "export_riccati_csv",
]


# ======================================================================
# Time grid and quadrature
# ======================================================================

@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid t_0 = 0 < ... < t_n = T - delta."""

    t: np.ndarray
    dt: float
    T: float
    delta: float

    @property
    def T_eff(self) -> float:
        return self.T - self.delta

    @property
    def n(self) -> int:
        return len(self.t) - 1


def make_grid(T: float, delta: float, n: int) -> TimeGrid:
    """Uniform grid of n steps (n+1 points) on [0, T - delta]."""
    if not (T > 0):
        raise ValidationError(f"T must be > 0, got {T}")
    if not (0 <= delta < T):
        raise ValidationError(f"delta must satisfy 0 <= delta < T, got {delta}")
    if n < 1:
        raise ValidationError(f"need at least one step, got n = {n}")
    t = np.linspace(0.0, T - delta, n + 1)
    return TimeGrid(t=t, dt=(T - delta) / n, T=float(T), delta=float(delta))


def _check_length(values, grid: TimeGrid):
    values = np.asarray(values, dtype=float)
    if values.shape != grid.t.shape:
        raise LengthMismatch(
            f"values have shape {values.shape}, grid has {grid.t.shape}")
    return values


def quadrature(values, grid: TimeGrid) -> float:
    """Trapezoid rule for int_0^{T_eff} values dt on the grid."""
    v = _check_length(values, grid)
    return float(grid.dt * (v.sum() - 0.5 * (v[0] + v[-1])))


def cumtrapz(values, grid: TimeGrid) -> np.ndarray:
    """Running trapezoid integral int_0^{t_i} values dt; out[0] = 0."""
    v = _check_length(values, grid)
    inc = 0.5 * grid.dt * (v[1:] + v[:-1])
    out = np.empty_like(v)
    out[0] = 0.0
    np.cumsum(inc, out=out[1:])
    return out


def cumtrapz_reversed(values, grid: TimeGrid) -> np.ndarray:
    """Tail trapezoid integral int_{t_i}^{T_eff} values dt; out[-1] = 0.

    Accumulated from the right, so small tail values are sums of small
    increments rather than differences of O(1) totals.
    """
    v = _check_length(values, grid)
    inc = 0.5 * grid.dt * (v[1:] + v[:-1])
    out = np.empty_like(v)
    out[-1] = 0.0
    out[:-1] = np.cumsum(inc[::-1])[::-1]
    return out


# ======================================================================
# Price growth factor phi2
# ======================================================================

def phi2(coeffs: CoefficientSet, t: float, r: float, n: int = 4096) -> float:
    """phi2(t, r) = exp(int_r^t (f + g)).

    Exact (antiderivative) when f and g are both polynomial; composite
    trapezoid on an ordered lattice otherwise, so phi2(t,r) * phi2(r,t) == 1
    holds to round-off either way.
    """
    p = coeffs.fg_sum_poly()
    if p is not None:
        anti = np.polynomial.polynomial.polyint(p)
        val = np.polynomial.polynomial.polyval(t, anti) - \
            np.polynomial.polynomial.polyval(r, anti)
        return float(np.exp(val))
    lo, hi = (r, t) if r <= t else (t, r)
    uu = np.linspace(lo, hi, n + 1)
    vals = coeffs.f.eval(uu) + coeffs.g.eval(uu)
    integral = float(np.trapz(vals, uu))
    return float(np.exp(integral if r <= t else -integral))


def _phi2_t0_on_grid(coeffs: CoefficientSet, grid: TimeGrid) -> np.ndarray:
    """phi2(t_i, 0) for every grid point (exact when f+g is polynomial)."""
    p = coeffs.fg_sum_poly()
    if p is not None:
        anti = np.polynomial.polynomial.polyint(p)
        return np.exp(np.polynomial.polynomial.polyval(grid.t, anti))
    vals = coeffs.f.eval(grid.t) + coeffs.g.eval(grid.t)
    return np.exp(cumtrapz(vals, grid))


# ======================================================================
# Riccati solve
# ======================================================================

@dataclass(frozen=True)
class RiccatiSolution:
    """Filter variance and derived factors on a TimeGrid."""

    grid: TimeGrid
    S: np.ndarray
    k: np.ndarray
    l: np.ndarray
    phi1_t0: np.ndarray
    phi2_t0: np.ndarray
    phi3_Tt: np.ndarray
    log_phi1_t0: np.ndarray

    @property
    def phi1_0t(self) -> np.ndarray:
        """phi1(0, t) = 1 / phi1(t, 0), via the stored log."""
        return np.exp(-self.log_phi1_t0)

    @property
    def phi2_0t(self) -> np.ndarray:
        return 1.0 / self.phi2_t0


def _as_beta_callable(coeffs: CoefficientSet, beta):
    if isinstance(beta, Strategy):
        from .equilibrium import strategy_beta_callable
        return strategy_beta_callable(coeffs, beta)
    if isinstance(beta, TimeFunction):
        return beta.eval
    if callable(beta):
        return beta
    raise TypeError(f"beta must be a Strategy, TimeFunction or callable, got {type(beta)!r}")


def variance_bound(coeffs: CoefficientSet) -> float:
    """A-priori sup bound for the filter variance: e^{KT} (s0 + K T) with
    K = sup sigma_v^2 + 2 sup |f|."""
    tt = np.linspace(0.0, coeffs.T, 1025)
    K = float(np.max(coeffs.sigma_v.eval(tt) ** 2) + 2.0 * np.max(np.abs(coeffs.f.eval(tt))))
    return float(np.exp(K * coeffs.T) * (coeffs.s0 + K * coeffs.T))


def solve_riccati(coeffs: CoefficientSet, beta, grid: TimeGrid) -> RiccatiSolution:
    """Integrate the filter-variance ODE and assemble the derived factors.

    beta may be a Strategy, a TimeFunction, or a plain vectorized callable.
    Raises BlowUpError if S leaves (0 - , 10 x a-priori bound] or turns
    non-finite: a negative excursion means the intensity pushed the variance
    through zero, the usual horizon blow-up signature.
    """
    beta_fn = _as_beta_callable(coeffs, beta)
    n = grid.n
    th = np.linspace(0.0, grid.T_eff, 2 * n + 1)   # half-step lattice
    f_h = np.asarray(coeffs.f.eval(th), dtype=float)
    sv2_h = np.asarray(coeffs.sigma_v.eval(th), dtype=float) ** 2
    sz2_h = np.asarray(coeffs.sigma_z.eval(th), dtype=float) ** 2
    b_h = np.asarray(beta_fn(th), dtype=float)
    if b_h.shape != th.shape:
        raise LengthMismatch(f"beta callable returned shape {b_h.shape} for {th.shape}")
    q_h = b_h ** 2 / sz2_h                          # so dS/dt = sv2 + 2 f S - q S^2

    cap = 10.0 * variance_bound(coeffs)
    dt = grid.dt
    S = np.empty(n + 1)
    S[0] = coeffs.s0
    s, comp = coeffs.s0, 0.0                        # Kahan-compensated accumulation
    for i in range(n):
        a, m, b2 = 2 * i, 2 * i + 1, 2 * i + 2
        k1 = sv2_h[a] + 2.0 * f_h[a] * s - q_h[a] * s * s
        y = s + 0.5 * dt * k1
        k2 = sv2_h[m] + 2.0 * f_h[m] * y - q_h[m] * y * y
        y = s + 0.5 * dt * k2
        k3 = sv2_h[m] + 2.0 * f_h[m] * y - q_h[m] * y * y
        y = s + dt * k3
        k4 = sv2_h[b2] + 2.0 * f_h[b2] * y - q_h[b2] * y * y
        inc = dt * (k1 + 2.0 * (k2 + k3) + k4) / 6.0 - comp
        t_new = s + inc
        comp = (t_new - s) - inc
        s = t_new
        if not np.isfinite(s) or s < 0.0 or (cap > 0.0 and s > cap):
            raise BlowUpError(
                f"filter variance left (0, {cap:.6g}] near t = {grid.t[i + 1]:.6g}: S = {s!r}")
        S[i + 1] = s

    return solution_from_S(coeffs, grid, S, b_h[::2])


def solution_from_S(coeffs: CoefficientSet, grid: TimeGrid, S: np.ndarray,
                    beta_vals: np.ndarray) -> RiccatiSolution:
    """Assemble the derived factors for given variance/intensity grid arrays.

    Used both by solve_riccati and by the closed-form route, which supplies S
    from an antiderivative instead of an ODE integration.
    """
    S = _check_length(S, grid)
    beta_vals = _check_length(beta_vals, grid)
    sz = np.asarray(coeffs.sigma_z.eval(grid.t), dtype=float)
    k_arr = beta_vals ** 2 * S / sz ** 2
    l_arr = beta_vals * S / sz

    log_phi1 = cumtrapz(np.asarray(coeffs.f.eval(grid.t), dtype=float) - k_arr, grid)
    phi1_t0 = np.exp(log_phi1)
    phi2_t0 = _phi2_t0_on_grid(coeffs, grid)
    phi3_Tt = cumtrapz_reversed(phi1_t0 / phi2_t0 * k_arr, grid)

    return RiccatiSolution(grid=grid, S=S, k=k_arr, l=l_arr, phi1_t0=phi1_t0,
                           phi2_t0=phi2_t0, phi3_Tt=phi3_Tt, log_phi1_t0=log_phi1)


# ======================================================================
# Export
# ======================================================================

def export_riccati_csv(sol: RiccatiSolution, path: str) -> None:
    """Write t,S,k,l,phi1_t0,phi2_t0,phi3_Tt rows at full float64 precision."""
    cols = (sol.grid.t, sol.S, sol.k, sol.l, sol.phi1_t0, sol.phi2_t0, sol.phi3_Tt)
    with open(path, "w") as fh:
        fh.write("t,S,k,l,phi1_t0,phi2_t0,phi3_Tt\n")
        for row in zip(*cols):
            fh.write(",".join(f"{x:.17g}" for x in row) + "\n")
