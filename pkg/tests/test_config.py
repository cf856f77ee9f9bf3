from pathlib import Path

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rspose.config import (
    ConfigError,
    RunConfig,
    load_config,
    load_motion,
    load_scene,
    motion_text,
    parse_config,
    parse_scene,
    serialize_config,
)
from rspose.geom import MotionVelocity

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

finite = st.floats(-1e3, 1e3, allow_nan=False)


def test_empty_text_gives_defaults():
    assert parse_config("# nothing\n\n") == RunConfig()


def test_shipped_simulation_config_is_the_default():
    assert load_config(CONFIGS / "simulation.cfg") == RunConfig()


def test_shipped_synthetic_config():
    cfg = load_config(CONFIGS / "synthetic_scene.cfg")
    assert cfg.fx == 1384.6
    assert np.linalg.norm(cfg.motion.d) == pytest.approx(0.3, rel=1e-5)
    assert np.rad2deg(np.linalg.norm(cfg.motion.w)) == pytest.approx(0.4, rel=1e-5)


def test_round_trip_defaults():
    cfg = RunConfig()
    assert parse_config(serialize_config(cfg)) == cfg


@given(finite, finite, st.floats(1e-3, 10), st.booleans(), st.integers(1, 4))
def test_round_trip_random(w1, d3, b, fill, frame):
    cfg = RunConfig(w1=w1, d3=d3, half_baseline=b, fill_holes=fill, frame=frame, grid_noise=(0.0, b))
    assert parse_config(serialize_config(cfg)) == cfg


def test_comments_and_spacing():
    cfg = parse_config("fx=700   # focal\n  seed =  4\n# d_max = 3\n")
    assert cfg.fx == 700.0 and cfg.seed == 4 and cfg.d_max == 128


def test_grid_parsing():
    assert parse_config("grid_baseline = 0.1, 0.5,1").grid_baseline == (0.1, 0.5, 1.0)


@pytest.mark.parametrize(
    "text,line,fragment",
    [
        ("fx = 810\nfoo = 3\n", 2, "unknown key 'foo'"),
        ("seed = 1\n\nseed = 2\n", 3, "duplicate key 'seed' (first set on line 1)"),
        ("fx = \n", 1, "missing value"),
        ("# header\nfx = abc\n", 2, "bad value for 'fx'"),
        ("fx = -1\n", 1, "fx must be positive"),
        ("readout_ratio = 1.5\n", 1, "(0, 1]"),
        ("frame = 5\n", 1, "1, 2, 3 or 4"),
        ("fill_holes = maybe\n", 1, "true/false"),
        ("fx = inf\n", 1, "finite"),
        ("just words\n", 1, "expected 'key = value'"),
        ("z_max = 3\n\nz_min = 5\n", 3, "z_max must be >= z_min"),
        ("p2 = 5\n", 1, "p2 must exceed p1"),
        ("noise_units = furlongs\n", 1, "normalized"),
        ("grid_baseline = 0.5, -1\n", 1, "positive"),
    ],
)
def test_errors_are_line_precise(text, line, fragment):
    with pytest.raises(ConfigError) as info:
        parse_config(text, "run.cfg")
    assert info.value.line == line
    assert str(info.value).startswith(f"run.cfg:{line}: ")
    assert fragment in str(info.value)


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "nope.cfg")


def test_derived_objects():
    cfg = RunConfig(fx=700, n_rows=480, width=640, cu=240, cv=320, half_baseline=0.2, readout_ratio=0.5)
    K, rig = cfg.intrinsics, cfg.rig
    assert (K.fx, K.n_rows, K.width) == (700, 480, 640)
    assert rig.n_rows == 480 and rig.row_rate == pytest.approx(0.5 / 480)
    assert cfg.sgm.d_max == 128


def test_sweep_spec_uses_config():
    cfg = parse_config("trials = 7\nseed = 3\ngrid_noise = 0, 1e-3\nfx = 700\n")
    spec = cfg.sweep("noise")
    assert spec.values == (0.0, 1e-3) and spec.trials == 7 and spec.seed == 3
    assert spec.intrinsics.fx == 700
    with pytest.raises(ConfigError):
        cfg.sweep("colour")


class TestMotionFile:
    def test_round_trip(self, tmp_path):
        m = MotionVelocity([1e-3, -2e-3, 3e-3], [0.1, 0.2, -0.3])
        p = tmp_path / "m.cfg"
        p.write_text(motion_text(m, "ground truth\nsecond line"))
        assert p.read_text().startswith("# ground truth\n# second line\n")
        back = load_motion(p)
        assert np.array_equal(back.w, m.w) and np.array_equal(back.d, m.d)

    def test_rejects_other_keys(self, tmp_path):
        p = tmp_path / "m.cfg"
        p.write_text("w1 = 0\nfx = 3\n")
        with pytest.raises(ConfigError, match=":2: unknown key 'fx'"):
            load_motion(p)

    def test_with_motion(self):
        m = MotionVelocity([1e-3, 0, 0], [0, 0, 0.3])
        back = RunConfig().with_motion(m).motion
        assert np.array_equal(back.w, m.w) and np.array_equal(back.d, m.d)


class TestScene:
    def test_shipped_scene_matches_default(self):
        from rspose.rectify import default_scene

        shipped, builtin = load_scene(CONFIGS / "scene.txt"), default_scene(0)
        assert shipped.background == builtin.background
        assert len(shipped.quads) == len(builtin.quads)
        for a, b in zip(shipped.quads, builtin.quads):
            assert np.allclose(a.origin, b.origin) and np.allclose(a.edge_s, b.edge_s)
            assert np.allclose(a.edge_t, b.edge_t) and a.texture == b.texture

    def test_parse(self):
        s = parse_scene("background = 12\nquad = 0 0 5 ; 1 0 0 ; 0 1 0 ; checker 0.2\nquad = 0 0 6 ; 1 0 0 ; 0 1 0 ; noise 0.1 3 10 20\n")
        assert s.background == 12.0 and len(s.quads) == 2
        assert s.quads[1].texture.seed == 3 and s.quads[1].texture.high == 20.0

    @pytest.mark.parametrize(
        "text,line",
        [
            ("quad = 0 0 5 ; 1 0 0 ; 0 1 0\n", 1),
            ("background = 3\nquad = 0 0 5 ; 1 0 0 ; 2 0 0 ; checker 0.2\n", 2),
            ("quad = 0 0 5 ; 1 0 0 ; 0 1 0 ; marble 0.2\n", 1),
            ("\nquad = 0 0 5 ; 1 0 0 ; 0 1 0 ; noise 0.2 1 5\n", 2),
            ("colour = 3\n", 1),
        ],
    )
    def test_errors(self, text, line):
        with pytest.raises(ConfigError) as info:
            parse_scene(text, "scene.txt")
        assert info.value.line == line

    def test_empty_scene(self):
        with pytest.raises(ConfigError, match="no quads"):
            parse_scene("background = 3\n")
