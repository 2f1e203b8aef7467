"""Model data: deterministic time functions, coefficient sets, strategies, scenarios.

The market model is

    dV_t = [f_t V_t + g_t P_t + h_t] dt + sigma_v_t dB^1_t,   V_0 ~ N(v0, s0)
    dY_t = beta_t (V_t - P_t) dt + sigma_z_t dB^2_t,          P_t = E[V_t | F^Y_t]

with deterministic coefficient functions f, g, h, sigma_v, sigma_z on [0, T].
This module holds the plain-data side of the package: time-function
representations, validated coefficient sets, trading strategies, and scenario
configuration (JSON loading, built-in presets).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from importlib import resources

import numpy as np

from .errors import DomainError, ParseError, ValidationError

# Slack applied to domain checks so grid endpoints hit by float arithmetic
# (t = i * dt can overshoot T_eff by an ulp) do not trip DomainError.
_DOMAIN_EPS = 1e-9

PRESET_NAMES = ("static_kyle", "back_pedersen", "g0_general", "g_feedback")


# ======================================================================
# Time functions
# ======================================================================

@dataclass(frozen=True)
class TimeFunction:
    """Deterministic function of time on [0, t_max].

    kind is one of:
      "constant"    value
      "polynomial"  coeffs[0] + coeffs[1]*t + coeffs[2]*t^2 + ...
      "sampled"     linear interpolation through (t_nodes, values),
                    t_nodes strictly increasing and covering [0, t_max]
    """

    kind: str
    value: float = 0.0
    coeffs: tuple = ()
    t_nodes: tuple = ()
    values: tuple = ()
    t_max: float | None = None

    def eval(self, t):
        """Evaluate at scalar or array t; DomainError outside [0, t_max]."""
        t_arr = np.asarray(t, dtype=float)
        lo, hi = -_DOMAIN_EPS, np.inf if self.t_max is None else self.t_max + _DOMAIN_EPS
        if np.any(t_arr < lo) or np.any(t_arr > hi):
            bad = t_arr[(t_arr < lo) | (t_arr > hi)].flat[0]
            raise DomainError(f"time {bad!r} outside [0, {self.t_max}]")
        if self.kind == "constant":
            out = np.full_like(t_arr, self.value, dtype=float)
        elif self.kind == "polynomial":
            out = np.polynomial.polynomial.polyval(t_arr, np.asarray(self.coeffs, dtype=float))
        elif self.kind == "sampled":
            out = np.interp(t_arr, self.t_nodes, self.values)
        else:  # pragma: no cover - constructor enforces kind
            raise ValueError(f"unknown TimeFunction kind {self.kind!r}")
        return float(out) if np.isscalar(t) or t_arr.ndim == 0 else out

    __call__ = eval

    def poly_coeffs(self):
        """Polynomial coefficients (ascending) when the function is exactly a
        polynomial, else None. Used for exact antiderivatives downstream."""
        if self.kind == "constant":
            return np.array([self.value], dtype=float)
        if self.kind == "polynomial":
            return np.asarray(self.coeffs, dtype=float)
        return None

    def inf_on(self, t_max, n_check=4097):
        """Infimum on [0, t_max]. Exact for constant/sampled (nodes), dense
        lattice check for polynomials."""
        if self.kind == "constant":
            return float(self.value)
        if self.kind == "sampled":
            mask = np.asarray(self.t_nodes) <= t_max + _DOMAIN_EPS
            vals = list(np.asarray(self.values)[mask]) + [self.eval(t_max)]
            return float(min(vals))
        tt = np.linspace(0.0, t_max, n_check)
        return float(np.min(self.eval(tt)))


def constant(value, t_max=None):
    return TimeFunction(kind="constant", value=float(value), t_max=t_max)


def polynomial(coeffs, t_max=None):
    return TimeFunction(kind="polynomial", coeffs=tuple(float(c) for c in coeffs), t_max=t_max)


def sampled(t_nodes, values, t_max=None):
    t_nodes = tuple(float(t) for t in t_nodes)
    values = tuple(float(v) for v in values)
    if len(t_nodes) != len(values):
        raise ValidationError(f"sampled function: {len(t_nodes)} times vs {len(values)} values")
    if len(t_nodes) < 2:
        raise ValidationError("sampled function needs at least 2 nodes")
    if any(b <= a for a, b in zip(t_nodes, t_nodes[1:])):
        raise ValidationError("sampled function grid must be strictly increasing")
    if t_max is not None:
        if t_nodes[0] > _DOMAIN_EPS or t_nodes[-1] < t_max - _DOMAIN_EPS:
            raise ValidationError(
                f"sampled function grid [{t_nodes[0]}, {t_nodes[-1]}] does not cover [0, {t_max}]")
    return TimeFunction(kind="sampled", t_nodes=t_nodes, values=values, t_max=t_max)


def evaluate(fn: TimeFunction, t):
    """Module-level alias for TimeFunction.eval."""
    return fn.eval(t)


# ======================================================================
# Coefficient sets
# ======================================================================

@dataclass(frozen=True)
class CoefficientSet:
    """Validated model coefficients on [0, T]."""

    T: float
    f: TimeFunction
    g: TimeFunction
    h: TimeFunction
    sigma_v: TimeFunction
    sigma_z: TimeFunction
    v0: float
    s0: float

    def validate(self):
        """Check the standing assumptions; returns the achieved infima.

        sigma_z must be bounded away from 0 (hard error). sigma_v may touch 0
        (the static worked case has sigma_v = 0); it only must be nonnegative.
        Returns {"sigma_z_inf": ..., "sigma_v_inf": ...}.
        """
        if not (self.T > 0):
            raise ValidationError(f"T must be > 0, got {self.T}")
        if self.s0 < 0:
            raise ValidationError(f"s0 must be >= 0, got {self.s0}")
        sz_inf = self.sigma_z.inf_on(self.T)
        if sz_inf <= 0:
            raise ValidationError(f"sigma_z positivity violated: inf sigma_z = {sz_inf}")
        sv_inf = self.sigma_v.inf_on(self.T)
        if sv_inf < 0:
            raise ValidationError(f"sigma_v must be >= 0: inf sigma_v = {sv_inf}")
        for name in ("f", "g", "h", "sigma_v", "sigma_z"):
            fn = getattr(self, name)
            probe = fn.eval(np.linspace(0.0, self.T, 257))
            if not np.all(np.isfinite(probe)):
                raise ValidationError(f"{name} is not finite on [0, {self.T}]")
        return {"sigma_z_inf": sz_inf, "sigma_v_inf": sv_inf}

    def fg_sum_poly(self):
        """Ascending coefficients of f+g when both are polynomial-kind, else None."""
        pf, pg = self.f.poly_coeffs(), self.g.poly_coeffs()
        if pf is None or pg is None:
            return None
        n = max(len(pf), len(pg))
        out = np.zeros(n)
        out[: len(pf)] += pf
        out[: len(pg)] += pg
        return out


# ======================================================================
# Strategies
# ======================================================================

STRATEGY_KINDS = ("grid", "closed_form_g0", "static_kyle", "back_pedersen")


@dataclass(frozen=True)
class Strategy:
    """Trading intensity beta on [0, T - delta].

    kind "grid" carries an explicit TimeFunction (finite on its domain);
    the closed-form kinds ("closed_form_g0", "static_kyle", "back_pedersen")
    evaluate the optimal intensity from the coefficients and may diverge as
    t -> T. alpha0, when given for closed_form_g0, overrides the computed
    initial signal-to-noise level (otherwise it is solved from the data).
    """

    kind: str
    beta_fn: TimeFunction | None = None
    alpha0: float | None = None
    delta: float = 1e-3

    def __post_init__(self):
        if self.kind not in STRATEGY_KINDS:
            raise ValidationError(f"strategy kind {self.kind!r} not one of {STRATEGY_KINDS}")
        if self.kind == "grid" and self.beta_fn is None:
            raise ValidationError("grid strategy requires a beta time function")
        if not (self.delta > 0):
            raise ValidationError(f"delta must be > 0, got {self.delta}")


# ======================================================================
# Scenario configuration
# ======================================================================

@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    coefficients: CoefficientSet
    strategy: Strategy
    n_ode_steps: int = 20000
    n_sde_steps: int = 4096
    n_paths: int = 10000
    master_seed: int = 20260822
    delta: float = 1e-3
    output_dir: str | None = None

    def validate(self):
        c = self.coefficients.validate()
        if self.n_ode_steps < 100:
            raise ValidationError(f"n_ode_steps must be >= 100, got {self.n_ode_steps}")
        if self.n_sde_steps < 100:
            raise ValidationError(f"n_sde_steps must be >= 100, got {self.n_sde_steps}")
        if self.n_paths < 1:
            raise ValidationError(f"n_paths must be ≥ 1, got {self.n_paths}")
        if not (0 <= self.master_seed < 2 ** 64):
            raise ValidationError(f"master_seed must fit in 64 bits, got {self.master_seed}")
        if not (0 < self.delta < self.coefficients.T / 2):
            raise ValidationError(
                f"delta must satisfy 0 < delta < T/2, got {self.delta} (T={self.coefficients.T})")
        if self.strategy.kind == "grid":
            grid_check = np.linspace(0.0, self.coefficients.T - self.delta, 513)
            beta_vals = self.strategy.beta_fn.eval(grid_check)
            if np.any(~np.isfinite(beta_vals)):
                raise ValidationError("beta grid strategy not finite on [0, T - delta]")
            if np.min(beta_vals) <= 0:
                raise ValidationError(
                    f"beta must be > 0 on [0, T - delta]; achieved inf = {np.min(beta_vals)}")
        return c


# ======================================================================
# JSON parsing
# ======================================================================

_TOP_KEYS = {"T", "v0", "s0", "f", "g", "h", "sigma_v", "sigma_z", "strategy", "numerics"}
_NUMERICS_KEYS = {"n_ode_steps", "n_sde_steps", "n_paths", "master_seed", "delta"}


def _require_number(obj, key, where):
    if key not in obj:
        raise ParseError(f"{where}: missing required key {key!r}")
    v = obj[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ParseError(f"{where}: key {key!r} must be a number, got {type(v).__name__}")
    if not math.isfinite(v):
        raise ParseError(f"{where}: key {key!r} must be finite, got {v}")
    return float(v)


def _parse_time_function(obj, name, t_max):
    if not isinstance(obj, dict):
        raise ParseError(f"coefficient {name!r} must be an object, got {type(obj).__name__}")
    kind = obj.get("kind")
    if kind == "constant":
        extra = set(obj) - {"kind", "value"}
        if extra:
            raise ParseError(f"coefficient {name!r}: unknown keys {sorted(extra)}")
        return constant(_require_number(obj, "value", f"coefficient {name!r}"), t_max=t_max)
    if kind == "polynomial":
        extra = set(obj) - {"kind", "coeffs"}
        if extra:
            raise ParseError(f"coefficient {name!r}: unknown keys {sorted(extra)}")
        coeffs = obj.get("coeffs")
        if not isinstance(coeffs, list) or not coeffs:
            raise ParseError(f"coefficient {name!r}: 'coeffs' must be a non-empty list")
        return polynomial(coeffs, t_max=t_max)
    if kind == "sampled":
        extra = set(obj) - {"kind", "t", "values"}
        if extra:
            raise ParseError(f"coefficient {name!r}: unknown keys {sorted(extra)}")
        t_nodes, values = obj.get("t"), obj.get("values")
        if not isinstance(t_nodes, list) or not isinstance(values, list):
            raise ParseError(f"coefficient {name!r}: sampled needs 't' and 'values' lists")
        try:
            return sampled(t_nodes, values, t_max=t_max)
        except ValidationError as exc:
            raise ValidationError(f"{name}: {exc}") from exc
    raise ParseError(f"coefficient {name!r}: kind must be constant|polynomial|sampled, got {kind!r}")


def _parse_strategy(obj, T, delta):
    if not isinstance(obj, dict):
        raise ParseError(f"'strategy' must be an object, got {type(obj).__name__}")
    kind = obj.get("kind")
    if kind not in STRATEGY_KINDS:
        raise ParseError(f"strategy kind must be one of {STRATEGY_KINDS}, got {kind!r}")
    if kind == "grid":
        extra = set(obj) - {"kind", "beta"}
        if extra:
            raise ParseError(f"strategy: unknown keys {sorted(extra)}")
        if "beta" not in obj:
            raise ParseError("grid strategy requires a 'beta' time function")
        beta_fn = _parse_time_function(obj["beta"], "beta", t_max=T - delta)
        return Strategy(kind="grid", beta_fn=beta_fn, delta=delta)
    if kind == "closed_form_g0":
        extra = set(obj) - {"kind", "alpha0"}
        if extra:
            raise ParseError(f"strategy: unknown keys {sorted(extra)}")
        alpha0 = None
        if "alpha0" in obj:
            alpha0 = _require_number(obj, "alpha0", "strategy")
        return Strategy(kind="closed_form_g0", alpha0=alpha0, delta=delta)
    extra = set(obj) - {"kind"}
    if extra:
        raise ParseError(f"strategy: unknown keys {sorted(extra)}")
    return Strategy(kind=kind, delta=delta)


def parse_scenario(doc: dict, name: str = "scenario") -> ScenarioConfig:
    """Build a validated ScenarioConfig from a parsed JSON document."""
    if not isinstance(doc, dict):
        raise ParseError(f"scenario must be a JSON object, got {type(doc).__name__}")
    extra = set(doc) - _TOP_KEYS
    if extra:
        raise ParseError(f"unknown top-level keys {sorted(extra)}")
    for key in ("T", "v0", "s0", "f", "g", "h", "sigma_v", "sigma_z", "strategy"):
        if key not in doc:
            raise ParseError(f"missing required key {key!r}")
    T = _require_number(doc, "T", "scenario")
    if T <= 0:
        raise ValidationError(f"T must be > 0, got {T}")
    v0 = _require_number(doc, "v0", "scenario")
    s0 = _require_number(doc, "s0", "scenario")
    if s0 < 0:
        raise ValidationError(f"s0 must be >= 0, got {s0}")

    numerics = doc.get("numerics", {})
    if not isinstance(numerics, dict):
        raise ParseError(f"'numerics' must be an object, got {type(numerics).__name__}")
    extra = set(numerics) - _NUMERICS_KEYS
    if extra:
        raise ParseError(f"numerics: unknown keys {sorted(extra)}")
    delta = float(numerics.get("delta", 1e-3 * T))
    n_ode = int(numerics.get("n_ode_steps", 20000))
    n_sde = int(numerics.get("n_sde_steps", 4096))
    n_paths = int(numerics.get("n_paths", 10000))
    seed = int(numerics.get("master_seed", 20260822))

    coeffs = CoefficientSet(
        T=T,
        f=_parse_time_function(doc["f"], "f", T),
        g=_parse_time_function(doc["g"], "g", T),
        h=_parse_time_function(doc["h"], "h", T),
        sigma_v=_parse_time_function(doc["sigma_v"], "sigma_v", T),
        sigma_z=_parse_time_function(doc["sigma_z"], "sigma_z", T),
        v0=v0,
        s0=s0,
    )
    strategy = _parse_strategy(doc["strategy"], T, delta)
    cfg = ScenarioConfig(
        name=name, coefficients=coeffs, strategy=strategy,
        n_ode_steps=n_ode, n_sde_steps=n_sde, n_paths=n_paths,
        master_seed=seed, delta=delta,
    )
    cfg.validate()
    return cfg


def load_scenario(path_or_preset: str) -> ScenarioConfig:
    """Load a scenario from a JSON file path or a built-in preset name."""
    if path_or_preset in PRESET_NAMES:
        text = resources.files("kyleback.presets").joinpath(f"{path_or_preset}.json").read_text()
        return parse_scenario(_loads(text, path_or_preset), name=path_or_preset)
    try:
        with open(path_or_preset, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ParseError(f"cannot read scenario file {path_or_preset!r}: {exc}") from exc
    import os
    name = os.path.splitext(os.path.basename(path_or_preset))[0]
    return parse_scenario(_loads(text, path_or_preset), name=name)


def _loads(text, origin):
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{origin}: invalid JSON: {exc}") from exc


def with_overrides(cfg: ScenarioConfig, *, delta=None, n_paths=None, master_seed=None,
                   output_dir=None, n_sde_steps=None, n_ode_steps=None) -> ScenarioConfig:
    """Copy of cfg with CLI-level overrides applied and re-validated."""
    kw = {}
    if delta is not None:
        kw["delta"] = float(delta)
        kw["strategy"] = replace(cfg.strategy, delta=float(delta))
    if n_paths is not None:
        kw["n_paths"] = int(n_paths)
    if master_seed is not None:
        kw["master_seed"] = int(master_seed)
    if output_dir is not None:
        kw["output_dir"] = output_dir
    if n_sde_steps is not None:
        kw["n_sde_steps"] = int(n_sde_steps)
    if n_ode_steps is not None:
        kw["n_ode_steps"] = int(n_ode_steps)
    out = replace(cfg, **kw)
    out.validate()
    return out
