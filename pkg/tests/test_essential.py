import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rspose import poly
from rspose.essential import (
    RowPairCoefficients,
    epipolar_residual,
    essential_exact,
    essential_expanded,
    essential_poly,
    sampson_distance,
)
from rspose.geom import MotionVelocity, Side, StereoRigConfig, skew
from rspose.simgen import SceneConfig, generate_correspondences, generate_scene

from helpers import random_draw

# Monomials of x_b^T [T_ab]x R_ab x_a, expanded symbolically (computer algebra) with
# R_ab = I + a[w]x, T_ab = d(u_b) - R_ab d(u_a) and the baseline on axis 1.
RETAINED = {
    "d1", "d2", "d3", "w1", "w3",
    "d1w1", "d1w2", "d1w3", "d2w1", "d2w2", "d2w3", "d3w1", "d3w2", "d3w3",
    "w1w1", "w1w2", "w1w3", "w2w3", "w3w3",
}  # fmt: skip
THIRD_ORDER = {
    "d1w1w2", "d1w1w3", "d1w2w2", "d1w2w3", "d1w3w3",
    "d2w1w1", "d2w1w2", "d2w1w3", "d2w2w3", "d2w3w3",
    "d3w1w1", "d3w1w2", "d3w1w3", "d3w2w2", "d3w2w3",
}  # fmt: skip

# Same computer-algebra expansion evaluated at d = (0.1, -0.2, 0.25),
# w = (0.004, -0.003, 0.006), k_a = 0.2, a = 1.3, left side, b = 0.5.
FROZEN_E = np.array(
    [
        [-0.0035293284, -0.3238814592, -0.258218844],
        [0.3220082463, -0.0032114056, -0.135040867],
        [0.2609395074, 0.1317558112, -0.001709266],
    ]
)


@pytest.fixture
def frozen_case():
    rig = StereoRigConfig(0.5, 0.8, 900)
    m = MotionVelocity([0.004, -0.003, 0.006], [0.1, -0.2, 0.25])
    h = rig.row_rate
    return rig, m, 0.2 / h, 0.5 / h  # k_a = 0.2, k_b = 1.5


def test_row_pair_coefficients(frozen_case):
    rig, _, u_a, u_b = frozen_case
    c = RowPairCoefficients.for_rows(rig, u_a, u_b)
    assert c.k_a == pytest.approx(0.2) and c.a == pytest.approx(1.3)


def test_exact_matches_frozen_symbolic_value(frozen_case):
    rig, m, u_a, u_b = frozen_case
    assert np.allclose(essential_exact(rig, m, Side.LEFT, u_a, u_b).matrix, FROZEN_E, atol=1e-12)


def test_zero_motion_gives_zero(rig):
    for side in Side:
        assert np.array_equal(essential_exact(rig, MotionVelocity.zero(), side, 10, 500).matrix, np.zeros((3, 3)))


def test_pure_translation_is_scaled_skew(rig):
    m = MotionVelocity(np.zeros(3), [0.1, 0.2, -0.3])
    a = RowPairCoefficients.for_rows(rig, 100, 700).a
    for flag in (True, False):
        E = essential_expanded(rig, m, Side.RIGHT, 100, 700, include_s_terms=flag).matrix
        assert np.allclose(E, a * skew(m.d), atol=1e-15)
    assert np.allclose(essential_exact(rig, m, Side.RIGHT, 100, 700).matrix, a * skew(m.d), atol=1e-15)


def test_expanded_equals_exact_randomized(rig):
    rng = np.random.default_rng(0)
    for _ in range(1000):
        m, u_a, u_b = random_draw(rng, rig)
        side = Side.LEFT if rng.random() < 0.5 else Side.RIGHT
        E1 = essential_expanded(rig, m, side, u_a, u_b).matrix
        E2 = essential_exact(rig, m, side, u_a, u_b).matrix
        assert np.linalg.norm(E1 - E2) <= 1e-12


def test_expanded_batched_rows(rig, motion):
    u_a = np.array([0.0, 10.0, 800.0])
    u_b = np.array([5.0, 300.0, 899.0])
    E = essential_expanded(rig, motion, Side.LEFT, u_a, u_b).matrix
    assert E.shape == (3, 3, 3)
    for i in range(3):
        assert np.allclose(E[i], essential_expanded(rig, motion, Side.LEFT, u_a[i], u_b[i]).matrix, atol=1e-16)


def test_vanishing_baseline_makes_sides_coincide(motion):
    tiny = StereoRigConfig(1e-300, 0.8, 900)
    for flag in (True, False):
        El = essential_expanded(tiny, motion, Side.LEFT, 30, 600, flag).matrix
        Er = essential_expanded(tiny, motion, Side.RIGHT, 30, 600, flag).matrix
        assert np.allclose(El, Er, atol=1e-15)


def test_left_right_symmetry_under_baseline_sign(rig, motion):
    # the right pair equals the left pair of a rig whose baseline sign is flipped
    El = essential_expanded(rig, motion, Side.LEFT, 30, 600).matrix
    Er = essential_expanded(rig, motion, Side.RIGHT, 30, 600).matrix
    s = RowPairCoefficients.for_rows(rig, 30, 600)
    W = skew(motion.w)
    wb = skew(W @ rig.baseline)
    b_terms = -s.a * wb - s.a**2 * (wb @ W)
    assert np.allclose(El - Er, 2 * b_terms, atol=1e-15)


def test_translation_homogeneity(rig):
    m = MotionVelocity(np.zeros(3), [0.2, -0.1, 0.3])
    E1 = essential_exact(rig, m, Side.LEFT, 50, 400).matrix
    E3 = essential_exact(rig, m.scaled(3.0), Side.LEFT, 50, 400).matrix
    assert np.allclose(E3, 3 * E1, atol=1e-15)


class TestSymbolicExpansion:
    def test_monomial_sets_match_computer_algebra(self, rig):
        E = essential_poly(rig, Side.LEFT, 123.0, 456.0)
        x = (0.31, -0.27, 1.0)
        r = poly.bilinear((0.12, 0.44, 1.0), E, x)
        names = {poly.monomial_name(e) for e in r.monomials(1e-15)}
        assert {n for n in names if poly.degree(poly.monomial_from_name(n)) <= 2} == RETAINED
        assert {n for n in names if poly.degree(poly.monomial_from_name(n)) == 3} == THIRD_ORDER

    def test_polynomial_evaluates_to_exact(self, rig):
        rng = np.random.default_rng(5)
        for _ in range(50):
            m, u_a, u_b = random_draw(rng, rig)
            E = essential_poly(rig, Side.RIGHT, u_a, u_b)
            num = np.array([[E[i][j].evaluate(m.d, m.w) for j in range(3)] for i in range(3)])
            assert np.allclose(num, essential_exact(rig, m, Side.RIGHT, u_a, u_b).matrix, atol=1e-14)

    def test_truncation_drops_exactly_the_third_order_term(self, rig, motion):
        E = essential_poly(rig, Side.LEFT, 200.0, 650.0)
        trunc = np.array([[E[i][j].truncated(2).evaluate(motion.d, motion.w) for j in range(3)] for i in range(3)])
        ref = essential_expanded(rig, motion, Side.LEFT, 200.0, 650.0, include_s_terms=False).matrix
        assert np.allclose(trunc, ref, atol=1e-15)


class TestResiduals:
    def test_zero_matrix(self):
        assert epipolar_residual(np.zeros((3, 3)), [0.3, 0.1], [-0.2, 0.5]) == 0

    def test_model_generated_matches_vanish(self, K, rig, motion):
        pts = generate_scene(SceneConfig(seed=3, point_count=60), K)
        left, right = generate_correspondences(pts, rig, K, motion, "linearized")
        for c in (left, right):
            xa, xb = K.normalize(c.uv_a), K.normalize(c.uv_b)
            res = [
                epipolar_residual(essential_exact(rig, motion, c.side, ua, ub), a, b)
                for ua, ub, a, b in zip(c.uv_a[:, 0], c.uv_b[:, 0], xa, xb)
            ]
            assert np.max(np.abs(res)) <= 1e-10

    @given(st.floats(-1e-3, 1e-3), st.integers(0, 1))
    def test_bilinear_in_second_point(self, delta, coord):
        E = essential_exact(StereoRigConfig(0.5, 0.8, 900), MotionVelocity([0.01, 0.02, -0.01], [0.3, 0.1, 0.2]), Side.LEFT, 100, 300).matrix
        xa, xb = np.array([0.1, -0.2]), np.array([0.15, -0.1])
        moved = xb.copy()
        moved[coord] += delta
        expected = epipolar_residual(E, xa, xb) + (E @ np.append(xa, 1.0))[coord] * delta
        assert epipolar_residual(E, xa, moved) == pytest.approx(expected, abs=1e-15)

    def test_sampson_zero_on_exact_match(self, rig, motion):
        E = essential_exact(rig, motion, Side.LEFT, 0, 0).matrix
        # construct x_b on the epipolar line of x_a
        xa = np.array([0.1, 0.2, 1.0])
        line = E @ xa
        xb = np.array([0.05, -(line[0] * 0.05 + line[2]) / line[1], 1.0])
        assert sampson_distance(E, xa, xb) == pytest.approx(0, abs=1e-28)

    def test_sampson_degenerate_denominator(self):
        z = [0.0, 0.0]
        assert sampson_distance(skew([0, 0, 1]), z, z) == np.inf

    def test_sampson_zero_iff_residual_zero(self, rig, motion):
        rng = np.random.default_rng(9)
        E = essential_exact(rig, motion, Side.RIGHT, 100, 500).matrix
        xa = rng.uniform(-0.5, 0.5, (200, 2))
        xb = rng.uniform(-0.5, 0.5, (200, 2))
        r = epipolar_residual(E, xa, xb)
        s = sampson_distance(E, xa, xb)
        assert np.all((s == 0) == (r == 0))
        assert np.all(s > 0)
