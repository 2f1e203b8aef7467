"""Scenario parsing, time-function evaluation, validation contracts."""

import json

import numpy as np
import pytest

from kyleback import coefficients as co
from kyleback.errors import DomainError, ParseError, ValidationError


# ----------------------------------------------------------------------
# TimeFunction evaluation
# ----------------------------------------------------------------------

def test_constant_eval():
    fn = co.constant(2.5, t_max=1.0)
    assert fn.eval(0.7) == 2.5
    assert np.all(fn.eval(np.array([0.0, 0.3, 1.0])) == 2.5)


def test_polynomial_eval():
    fn = co.polynomial([0.0, 1.0], t_max=1.0)  # f(t) = t
    assert fn.eval(0.25) == 0.25
    fn2 = co.polynomial([1.0, -2.0, 3.0], t_max=2.0)
    assert fn2.eval(0.5) == pytest.approx(1.0 - 1.0 + 0.75, abs=1e-15)


def test_sampled_linear_interpolation():
    fn = co.sampled([0.0, 1.0], [0.0, 2.0], t_max=1.0)
    assert fn.eval(0.5) == pytest.approx(1.0, abs=1e-15)


def test_eval_is_pure():
    fn = co.polynomial([0.3, 1.7, -0.2], t_max=1.0)
    t = np.linspace(0, 1, 101)
    a, b = fn.eval(t), fn.eval(t)
    assert np.array_equal(a, b)


def test_domain_error_outside_interval():
    fn = co.constant(1.0, t_max=1.0)
    with pytest.raises(DomainError):
        fn.eval(1.5)
    with pytest.raises(DomainError):
        fn.eval(-0.1)


def test_sampled_must_cover_domain_and_increase():
    with pytest.raises(ValidationError):
        co.sampled([0.0, 0.5], [1.0, 1.0], t_max=1.0)  # does not cover [0,1]
    with pytest.raises(ValidationError):
        co.sampled([0.0, 0.5, 0.5, 1.0], [1, 1, 1, 1], t_max=1.0)  # not strictly increasing


# ----------------------------------------------------------------------
# Scenario parsing / validation
# ----------------------------------------------------------------------

def _minimal_doc():
    return {
        "T": 1.0, "v0": 0.0, "s0": 1.0,
        "f": {"kind": "constant", "value": 0.0},
        "g": {"kind": "constant", "value": 0.0},
        "h": {"kind": "constant", "value": 0.0},
        "sigma_v": {"kind": "constant", "value": 0.0},
        "sigma_z": {"kind": "constant", "value": 1.0},
        "strategy": {"kind": "static_kyle"},
        "numerics": {"n_ode_steps": 200, "n_sde_steps": 128, "n_paths": 10,
                     "master_seed": 1, "delta": 0.001},
    }


def test_load_static_preset():
    cfg = co.load_scenario("static_kyle")
    assert cfg.coefficients.T == 1.0
    assert cfg.coefficients.s0 == 1.0
    assert cfg.coefficients.sigma_z.eval(0.3) == 1.0
    assert cfg.strategy.kind == "static_kyle"


def test_all_presets_validate():
    for name in co.PRESET_NAMES:
        cfg = co.load_scenario(name)
        report = cfg.validate()
        assert report["sigma_z_inf"] > 0


def test_negative_s0_rejected():
    doc = _minimal_doc()
    doc["s0"] = -1.0
    with pytest.raises(ValidationError, match="s0"):
        co.parse_scenario(doc)


def test_sigma_z_touching_zero_rejected():
    doc = _minimal_doc()
    doc["sigma_z"] = {"kind": "sampled", "t": [0.0, 0.5, 1.0], "values": [1.0, 0.0, 1.0]}
    with pytest.raises(ValidationError, match="sigma_z positivity"):
        co.parse_scenario(doc)


def test_unknown_top_level_key_is_parse_error():
    doc = _minimal_doc()
    doc["bogus"] = 1
    with pytest.raises(ParseError):
        co.parse_scenario(doc)


def test_unknown_strategy_key_is_parse_error():
    doc = _minimal_doc()
    doc["strategy"] = {"kind": "static_kyle", "extra": 2}
    with pytest.raises(ParseError):
        co.parse_scenario(doc)


def test_malformed_json_file(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    with pytest.raises(ParseError):
        co.load_scenario(str(p))


def test_missing_file_is_parse_error():
    with pytest.raises(ParseError):
        co.load_scenario("/nonexistent/path/scenario.json")


def test_n_paths_validation_message():
    doc = _minimal_doc()
    doc["numerics"]["n_paths"] = 0
    with pytest.raises(ValidationError, match="n_paths must be"):
        co.parse_scenario(doc)


def test_delta_range_enforced():
    doc = _minimal_doc()
    doc["numerics"]["delta"] = 0.6  # >= T/2
    with pytest.raises(ValidationError, match="delta"):
        co.parse_scenario(doc)


def test_grid_strategy_beta_positivity():
    doc = _minimal_doc()
    doc["strategy"] = {"kind": "grid", "beta": {"kind": "constant", "value": -1.0}}
    with pytest.raises(ValidationError, match="beta"):
        co.parse_scenario(doc)


def test_scenario_roundtrip_from_file(tmp_path):
    doc = _minimal_doc()
    doc["strategy"] = {"kind": "grid", "beta": {"kind": "polynomial", "coeffs": [1.0, 0.5]}}
    p = tmp_path / "scen.json"
    p.write_text(json.dumps(doc))
    cfg = co.load_scenario(str(p))
    assert cfg.name == "scen"
    assert cfg.strategy.kind == "grid"
    assert cfg.strategy.beta_fn.eval(0.5) == pytest.approx(1.25)
    assert cfg.n_sde_steps == 128


def test_overrides_revalidate():
    cfg = co.load_scenario("static_kyle")
    cfg2 = co.with_overrides(cfg, delta=0.01, n_paths=5)
    assert cfg2.delta == 0.01
    assert cfg2.strategy.delta == 0.01
    assert cfg2.n_paths == 5
    with pytest.raises(ValidationError):
        co.with_overrides(cfg, n_paths=0)
