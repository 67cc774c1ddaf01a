import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cascadecert import config as K
from cascadecert import systems as S
from cascadecert.errors import ConfigError

INLINE_PENDULUM = {
    "name": "inline-pendulum",
    "space": ["circle", "line"],
    "variables": ["phi", "phidot"],
    "field": ["phidot", "-(sin(phi)+phidot)"],
    "lyapunov": "1-cos(phi)+phidot^2/2",
}

INLINE_CASCADE = {
    "name": "inline-torus",
    "kind": "cascade",
    "outer": {"space": ["circle", "line"], "variables": ["theta", "thetadot"],
              "field": ["thetadot", "-(sin(theta)+thetadot)*cos(2*phi)"]},
    "inner": {"space": ["circle", "line"], "variables": ["phi", "phidot"],
              "field": ["phidot", "-(sin(phi)+phidot)"]},
    "inner_equilibrium": [0, 0],
    "lyapunov": "1-cos(theta)+thetadot^2/2",
}
INLINE_CERT = {"W": "1-cos(theta)+thetadot^2/2", "alpha": "4*(1-cos(2*phi))", "beta": "0", "c": 4}


def test_builtin_example_with_defaults():
    cfg = K.parse_config({"system": "paper-example"})
    assert cfg.system == "paper-example"
    assert cfg.simulate.from_ == [[1.618, 3.4072, 1.5977, 3.1428]]
    assert cfg.certify.params.depth == 6


@pytest.mark.parametrize("doc,path", [
    ({"system": "pendulum", "chainrec": {"epsilonn": 0.1}}, "$.chainrec.epsilonn"),
    ({"system": "pendulum", "bogus": 1}, "$.bogus"),
    ({"system": "nope"}, "$.system"),
    ({}, "$.system"),
    ({"system": "pendulum", "schema_version": 2}, "$.schema_version"),
    ({"system": "pendulum", "basin": {"n": "many"}}, "$.basin.n"),
    ({"system": "pendulum", "seed": -1}, "$.seed"),
])
def test_errors_name_the_offending_path(doc, path):
    with pytest.raises(ConfigError) as info:
        K.parse_config(doc)
    assert info.value.path == path


def test_invalid_json_text():
    with pytest.raises(ConfigError):
        K.parse_config("{not json")


def test_region_dimension_checked():
    with pytest.raises(ConfigError):
        K.parse_config({"system": "pendulum", "basin": {"region": [None]}})


def test_inline_pendulum_matches_builtin():
    cfg = K.parse_config({"system": INLINE_PENDULUM})
    sys = K.build_system(cfg)
    s = np.random.default_rng(0).uniform(-3, 3, (500, 2))
    np.testing.assert_array_equal(sys.field(s), S.pendulum().field(s))
    V = K.build_lyapunov(cfg)
    np.testing.assert_allclose(V(s), S.pendulum_energy()(s), rtol=1e-15, atol=1e-15)


def test_inline_cascade_matches_builtin():
    cfg = K.parse_config({"system": INLINE_CASCADE, "certificate": INLINE_CERT})
    cas = K.build_system(cfg)
    ref = S.torus_cascade()
    z = np.random.default_rng(1).uniform(-3, 3, (500, 4))
    np.testing.assert_allclose(cas.full.field(z), ref.full.field(z), rtol=1e-15, atol=1e-15)
    cert = K.build_certificate(cfg, cas)
    assert cert.alpha(np.array([math.pi / 2, 0.0])) == pytest.approx(8.0)
    assert cert.c == 4.0


def test_region_conversion():
    r = K.region(None, S.TS1)
    assert r.bounds == (None, K.DEFAULT_LINE_BOUNDS)
    r = K.region([None, [-2, 3]], S.TS1)
    assert r.bounds == (None, (-2.0, 3.0))


def test_block_keys_cover_flags():
    assert "epsilon" in K.block_keys(K.ChainrecBlock)
    assert "from" in K.block_keys(K.SimulateBlock)
    assert "n_x" in K.block_keys(K.CertifyBlock)


finite = st.floats(-5, 5, allow_nan=False, allow_infinity=False)
pos = st.floats(1e-6, 100, allow_nan=False, allow_infinity=False)


@st.composite
def configs(draw):
    system = draw(st.sampled_from(["pendulum", "paper-example", "gradient-circle", "inline"]))
    doc = {"seed": draw(st.integers(0, 2 ** 64 - 1)), "output": draw(st.text("abcxyz-_/", min_size=1))}
    if system == "inline":
        doc["system"] = INLINE_PENDULUM
        dim = 2
    else:
        doc["system"] = system
        dim = {"pendulum": 2, "paper-example": 4, "gradient-circle": 1}[system]
    if draw(st.booleans()):
        doc["simulate"] = {"t": draw(pos), "tol": draw(pos),
                           "from": draw(st.lists(st.lists(finite, min_size=dim, max_size=dim),
                                                 min_size=1, max_size=3))}
    if draw(st.booleans()):
        doc["chainrec"] = {"depth": draw(st.integers(3, 8)), "rounds": draw(st.integers(0, 3)),
                           "epsilon": draw(st.one_of(st.none(), pos)), "T": draw(st.one_of(st.none(), pos))}
    if draw(st.booleans()):
        doc["basin"] = {"n": draw(st.integers(1, 10 ** 5)), "threshold": draw(st.floats(0, 1)),
                        "horizon": draw(pos)}
    if draw(st.booleans()):
        doc["equilibria"] = {"grid_per_dim": draw(st.integers(2, 20)), "hyp_tol": draw(pos)}
    if system == "paper-example" and draw(st.booleans()):
        doc["certify"] = {"n_x": draw(st.integers(1, 2000)), "depth": draw(st.integers(2, 7)),
                          "cascade_threshold": draw(st.floats(0, 1))}
    return doc


@settings(max_examples=150, deadline=None)
@given(configs())
def test_round_trip(doc):
    cfg = K.parse_config(doc)
    text = K.serialize(cfg)
    again = K.parse_config(text)
    assert again == cfg
    assert K.serialize(again) == text
    json.loads(text)
