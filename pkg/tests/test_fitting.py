import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from geocert.fitting import (LOWER, UPPER, LinearPiece, PiecewiseBound, SampleSet, fit_linear,
                             fit_pwl, linear_pair, sample_params, sampled_area, select_bounds,
                             split_index)
from geocert.transforms import ParamBox
from oracles import brute_force_beta

UNIT = ParamBox([-1.0], [1.0])
# LP optimality tolerance; the flattest-slope tie-break may spend up to 1e-11 of it
GAP_TOL = 1e-9


def vshape():
    return SampleSet(np.array([[-1.0], [0.0], [1.0]]), np.array([1.0, 0.0, 1.0]), UNIT)


def samples_of(fn, box, n=60, seed=0):
    k = sample_params(box, n, seed)
    return SampleSet(k, fn(k), box, seed)


def const(v, dim=1):
    return PiecewiseBound(LOWER, (LinearPiece(np.zeros(dim), v),), (None,))


# --- sampling ---------------------------------------------------------------

def test_corners_included():
    k = sample_params(ParamBox([0.0], [1.0]), 3, seed=4)
    assert {0.0, 1.0} <= set(k[:, 0].tolist())


def test_sampling_deterministic():
    box = ParamBox([-1.0, 0.9], [1.0, 1.1])
    assert np.array_equal(sample_params(box, 50, 9), sample_params(box, 50, 9))


def test_sample_range_covers_box():
    a = np.deg2rad(5.0)
    k = sample_params(ParamBox([-a], [a]), 100, 0)[:, 0]
    assert abs(k.min() + a) <= 0.02 * a and abs(k.max() - a) <= 0.02 * a
    assert np.all((k >= -a) & (k <= a))


def test_too_few_samples_rejected():
    with pytest.raises(ValueError):
        sample_params(ParamBox([0.0, 0.0], [1.0, 1.0]), 3)


# --- single linear bound ----------------------------------------------------

def test_collinear_samples_zero_gap():
    s = samples_of(lambda k: 0.5 * k[:, 0] - 0.2, UNIT, 20)
    for side in (LOWER, UPPER):
        p, gap = fit_linear(s, side)
        assert p.w[0] == pytest.approx(0.5) and p.b == pytest.approx(-0.2)
        assert gap == pytest.approx(0.0, abs=GAP_TOL)


def test_vshape_lower():
    p, gap = fit_linear(vshape(), LOWER)
    assert p.b == pytest.approx(0.0, abs=1e-12)
    assert gap == pytest.approx(2 / 3)
    # slope is free in [-1, 1]; the flattest piece is chosen
    assert p.w[0] == pytest.approx(0.0, abs=1e-9)


def test_vshape_upper_chord():
    p, gap = fit_linear(vshape(), UPPER)
    assert p.w[0] == pytest.approx(0.0, abs=1e-12)
    assert p.b == pytest.approx(1.0)
    assert gap == pytest.approx(1 / 3)


def test_degenerate_axis_pinned_to_zero():
    box = ParamBox([-1.0, 0.5], [1.0, 0.5])
    s = samples_of(lambda k: k[:, 0] ** 2 + k[:, 1], box, 30)
    for side in (LOWER, UPPER):
        p, _ = fit_linear(s, side)
        assert p.w[1] == 0.0


# --- splitting --------------------------------------------------------------

def test_split_at_vshape_kink():
    up, _ = fit_linear(vshape(), UPPER)
    assert split_index(vshape(), up, LOWER, 0) == 0.0


def test_split_tie_goes_to_midpoint():
    s = samples_of(lambda k: 2.0 * k[:, 0] + 1.0, ParamBox([0.0], [1.0]), 41, seed=2)
    up, _ = fit_linear(s, UPPER)
    got = split_index(s, up, LOWER, 0)
    coord = s.params[:, 0]
    inner = coord[(coord > 0) & (coord < 1)]
    assert got == inner[np.argmin(np.abs(inner - 0.5))]


def test_split_near_asymmetric_kink():
    box = ParamBox([0.0], [1.0])
    s = samples_of(lambda k: np.abs(k[:, 0] - 0.3), box, 200, seed=5)
    up, _ = fit_linear(s, UPPER)
    got = split_index(s, up, LOWER, 0)
    spacing = np.diff(np.sort(s.params[:, 0])).max()
    assert abs(got - 0.3) <= spacing


def test_pwl_vshape_exact():
    b = fit_pwl(vshape(), LOWER, 0.0, 0)
    assert b.q == 2
    assert b.pieces[0].w[0] == pytest.approx(-1.0) and b.pieces[0].b == pytest.approx(0.0, abs=1e-12)
    assert b.pieces[1].w[0] == pytest.approx(1.0) and b.pieces[1].b == pytest.approx(0.0, abs=1e-12)
    assert b.fit_gap == pytest.approx(0.0, abs=GAP_TOL)


def test_pwl_on_a_line_reproduces_it():
    s = samples_of(lambda k: -0.7 * k[:, 0] + 0.1, UNIT, 30)
    b = fit_pwl(s, UPPER, 0.2, 0)
    for p in b.pieces:
        assert p.w[0] == pytest.approx(-0.7) and p.b == pytest.approx(0.1)
    assert b.fit_gap == pytest.approx(0.0, abs=GAP_TOL)


def test_pwl_split_must_be_interior():
    with pytest.raises(ValueError):
        fit_pwl(vshape(), LOWER, 1.0, 0)


def test_pwl_improves_concave_upper():
    rng = np.random.default_rng(0)
    for _ in range(10):
        a = rng.uniform(0.5, 3.0)
        s = samples_of(lambda k: -a * k[:, 0] ** 2, UNIT, 40, int(rng.integers(1e6)))
        lo, _ = fit_linear(s, LOWER)
        _, single = fit_linear(s, UPPER)
        split = split_index(s, lo, UPPER, 0)
        assert fit_pwl(s, UPPER, split, 0).fit_gap <= single + 1e-12


# --- selection and area -----------------------------------------------------

def test_convex_selects_pwl_lower():
    s = samples_of(lambda k: k[:, 0] ** 2, UNIT, 50)
    pair = select_bounds(s, split_axes=[0])
    assert pair.lower.q == 2 and pair.upper.q == 1
    assert pair.candidate_areas["pwl_lower"] < pair.candidate_areas["pwl_upper"]


def test_concave_selects_pwl_upper():
    s = samples_of(lambda k: -k[:, 0] ** 2, UNIT, 50)
    pair = select_bounds(s, split_axes=[0])
    assert pair.upper.q == 2 and pair.lower.q == 1


def test_linear_values_tie_to_pwl_lower():
    s = samples_of(lambda k: 0.5 * k[:, 0] + 0.25, UNIT, 50)
    pair = select_bounds(s, split_axes=[0])
    assert pair.lower.q == 2 and pair.upper.q == 1
    assert pair.area == pytest.approx(0.0, abs=GAP_TOL)


def test_area_trivial_cases():
    box = ParamBox([0.0, 0.0], [1.0, 1.0])
    assert sampled_area(const(0.3, 2), const(0.3, 2), box) == 0.0
    assert sampled_area(const(0.0, 2), const(1.0, 2), box) == pytest.approx(1.0)


def test_vshape_relative_area_positive():
    s = samples_of(lambda k: np.abs(k[:, 0]), UNIT, 40)
    lin = linear_pair(s)
    pwl = select_bounds(s, split_axes=[0], linear=lin)
    assert 1.0 - pwl.area / lin.area > 0.0


# --- properties -------------------------------------------------------------

values_1d = st.lists(st.floats(-2, 2, allow_nan=False), min_size=6, max_size=25)


def sample_set_from(vals, seed):
    k = sample_params(UNIT, len(vals), seed)
    return SampleSet(k, np.array(vals), UNIT, seed)


@given(values_1d, st.integers(0, 1000))
def test_feasible_at_every_sample(vals, seed):
    s = sample_set_from(vals, seed)
    pair = select_bounds(s, split_axes=[0])
    assert np.all(pair.lower.unshifted(s.params) <= s.values + 1e-7)
    assert np.all(pair.upper.unshifted(s.params) >= s.values - 1e-7)


@given(values_1d, st.integers(0, 1000))
def test_pwl_never_looser_than_linear(vals, seed):
    s = sample_set_from(vals, seed)
    lin = linear_pair(s)
    pair = select_bounds(s, split_axes=[0], linear=lin)
    assert pair.area <= lin.area + 1e-12


def _split_candidates(s):
    k = np.unique(s.params[:, 0])
    return 0.5 * (k[:-1] + k[1:])


def test_heuristic_gap_not_below_joint_optimum():
    rng = np.random.default_rng(42)
    for _ in range(50):
        s = samples_of(lambda k: rng.normal(size=k.shape[0]), UNIT, 20, int(rng.integers(1e6)))
        beta_star = brute_force_beta(s.params[:, 0], s.values)
        up, _ = fit_linear(s, UPPER)
        split = split_index(s, up, LOWER, 0)
        assert fit_pwl(s, LOWER, split, 0).fit_gap >= beta_star - 1e-7


def test_joint_optimum_attained_for_convex_values():
    rng = np.random.default_rng(8)
    for _ in range(10):
        c = rng.uniform(-0.5, 0.5)
        s = samples_of(lambda k: (k[:, 0] - c) ** 2 + 0.1 * np.abs(k[:, 0]), UNIT, 16,
                       int(rng.integers(1e6)))
        beta_star = brute_force_beta(s.params[:, 0], s.values)
        best = min(fit_pwl(s, LOWER, t, 0).fit_gap for t in _split_candidates(s))
        assert best == pytest.approx(beta_star, abs=1e-7)


def test_selection_deterministic():
    box = ParamBox([-0.1, -0.5], [0.1, 0.5])
    f = lambda k: np.sin(3 * k[:, 0]) * np.cos(2 * k[:, 1])
    a = select_bounds(samples_of(f, box, 80, 3), split_axes=[0, 1])
    b = select_bounds(samples_of(f, box, 80, 3), split_axes=[0, 1])
    assert a.lower.to_dict() == b.lower.to_dict() and a.upper.to_dict() == b.upper.to_dict()
    assert a.area == b.area
