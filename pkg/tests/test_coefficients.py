import dataclasses

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rfde.coefficients import (
    FIELD_REGISTRY,
    constant_field,
    extend_by_zero,
    history_segments,
    lift_constant_delay,
    lift_controlled,
    lift_discrete_time,
    lift_variable_delay,
    lift_vector_field,
    linear_field,
    make_field,
    sin_field,
    tanh_field,
    truncate_after,
    validate_assumptions,
)
from rfde.core import ControlledPath, Grid, SampledPath, geometric_lift
from rfde.experiments import COEFFICIENT_CLASSES, build_case, random_controlled_path
from rfde.stochastic import DriverSpec, delayed_lift, simulate_driver, variable_delay_driver

H = 2.0**-5


def brownian_stack(delays=(), seed=0, dim=1):
    z = simulate_driver(DriverSpec("brownian", dim=dim, step=H, delays=tuple(delays), seed=seed))
    return delayed_lift(z, delays, H)


def random_state(rp, k, seed=0):
    return random_controlled_path(rp.path, k, np.random.default_rng(seed))


# ----------------------------------------------------------------- vector fields


@pytest.mark.parametrize("vf", [sin_field([[0.5, 1.0]], [0.3, -0.7], [[0.1, 0.2]]), tanh_field([[2.0]], [1.0, 1.0])])
def test_analytic_derivatives_match_finite_differences(vf):
    probes = np.random.default_rng(0).normal(size=(20, vf.in_dim))
    assert vf.check_derivative(probes) <= 1e-8


@pytest.mark.parametrize("vf", [sin_field([[0.5, 1.0]], [0.3, -0.7]), tanh_field([[2.0]], [1.0, 1.0])])
def test_declared_bounds_dominate_samples(vf):
    probes = np.random.default_rng(1).normal(0, 3, size=(500, vf.in_dim))
    assert vf.bounds_dominate(probes)


def test_registry_builds_each_field():
    assert set(FIELD_REGISTRY) == {"constant", "linear", "sin", "tanh-saturating"}
    assert make_field("constant", value=[[2.0]], in_dim=3).values(np.zeros((1, 3)))[0, 0, 0] == 2.0
    assert make_field("linear", matrix=[[[1.0, 2.0]]]).values(np.array([[1.0, 1.0]]))[0, 0, 0] == 3.0
    with pytest.raises(ValueError):
        make_field("nope")
    with pytest.raises(TypeError):
        make_field("sin", amplitud=1.0)


def test_extend_by_zero_places_block():
    vf = extend_by_zero(constant_field([[1.0], [2.0]], 1), 3, 1)
    out = vf.values(np.zeros((1, 1)))[0]
    assert out.tolist() == [[0.0, 1.0, 0.0], [0.0, 2.0, 0.0]]
    with pytest.raises(ValueError):
        extend_by_zero(constant_field([[1.0]], 1), 2, 2)


# ----------------------------------------------------------------- vector field lift


def test_constant_field_lift():
    rp = brownian_stack()
    y = random_state(rp, 2)
    fy = lift_vector_field(constant_field([[1.5], [-0.5]], 2)).evaluate(y)
    assert np.all(fy.y[:, :, 0] == [1.5, -0.5])
    assert np.all(fy.gubinelli == 0.0)


def test_linear_field_lift(rng):
    a = rng.normal(size=(2, 1, 2))
    rp = brownian_stack()
    y = random_state(rp, 2)
    fy = lift_vector_field(linear_field(a)).evaluate(y)
    np.testing.assert_allclose(fy.y, np.einsum("kde,le->lkd", a, y.y), atol=1e-14)
    np.testing.assert_allclose(fy.gubinelli, np.einsum("kde,lec->lkdc", a, y.gubinelli), atol=1e-14)


def test_sin_field_lift_on_time():
    t = np.linspace(0, 1, 11)
    x = SampledPath(Grid(t), t)
    y = ControlledPath(x, t, np.ones((11, 1, 1)))
    fy = lift_vector_field(sin_field()).evaluate(y)
    np.testing.assert_allclose(fy.y[:, 0, 0], np.sin(t), atol=1e-15)
    np.testing.assert_allclose(fy.gubinelli[:, 0, 0, 0], np.cos(t), atol=1e-15)


# ----------------------------------------------------------------- controlled lift


def test_controlled_lift_constant_alpha_is_frozen_slice(rng):
    rp = brownian_stack()
    n = len(rp)
    vf = sin_field(rng.normal(size=(2, 1)), rng.normal(size=(2, 1, 3)))
    alpha = ControlledPath.constant(rp.path, [0.7])
    y = random_state(rp, 2)
    a = lift_controlled(vf, alpha).evaluate(y)
    frozen = np.concatenate([np.full((n, 1), 0.7), y.y], axis=1)
    np.testing.assert_array_equal(a.y, vf.values(frozen))


def test_controlled_lift_field_ignoring_alpha_matches_plain_lift(rng):
    rp = brownian_stack()
    w = rng.normal(size=(2, 1, 2))
    vf_full = sin_field(np.ones((2, 1)), np.concatenate([np.zeros((2, 1, 1)), w], axis=2))
    vf = sin_field(np.ones((2, 1)), w)
    alpha = ControlledPath(rp.path, np.sin(rp.times)[:, None], np.ones((len(rp), 1, 1)))
    y = random_state(rp, 2)
    a = lift_controlled(vf_full, alpha).evaluate(y)
    b = lift_vector_field(vf).evaluate(y)
    np.testing.assert_allclose(a.y, b.y, atol=1e-15)
    np.testing.assert_allclose(a.gubinelli, b.gubinelli, atol=1e-15)


def test_controlled_lift_rejects_bad_dimensions():
    rp = brownian_stack()
    with pytest.raises(ValueError):
        lift_controlled(sin_field(), ControlledPath.constant(rp.path, [0.0]))


# ----------------------------------------------------------------- discrete time


def test_discrete_time_without_times_is_plain_lift(rng):
    rp = brownian_stack()
    vf = tanh_field(rng.normal(size=(2, 1)), rng.normal(size=(2, 1, 2)))
    y = random_state(rp, 2)
    a = lift_discrete_time(vf, [], rp.grid).evaluate(y)
    b = lift_vector_field(vf).evaluate(y)
    assert np.array_equal(a.y, b.y)
    assert np.array_equal(a.gubinelli, b.gubinelli)


def test_discrete_time_pointwise_formula(rng):
    rp = brownian_stack()
    vf = sin_field(rng.normal(size=(1, 1)), rng.normal(size=(1, 1, 3)))
    times = [0.25, 0.5]
    idx = [rp.grid.index_of(r) for r in times]
    y = random_state(rp, 1)
    fy = lift_discrete_time(vf, times, rp.grid).evaluate(y)
    for l in range(len(rp)):
        arg = np.concatenate([y.y[l], y.y[min(l, idx[0])], y.y[min(l, idx[1])]])
        assert np.array_equal(fy.y[l], vf.values(arg[None])[0])
        if l < idx[0]:
            assert np.array_equal(fy.y[l], vf.values(np.repeat(y.y[l], 3)[None])[0])


def test_discrete_time_rejects_off_grid_time():
    rp = brownian_stack()
    with pytest.raises(ValueError):
        lift_discrete_time(sin_field(weights=[1.0, 1.0]), [0.3], rp.grid)


# ----------------------------------------------------------------- constant delay


def test_constant_delay_before_first_lag_uses_history(rng):
    r = 0.25
    rp = brownian_stack([r])
    vf = sin_field(rng.normal(size=(1, 2)), rng.normal(size=(1, 2, 2)))
    segs = history_segments(np.array([0.3]), [r], rp.path)
    y = random_state(rp, 1)
    fy = lift_constant_delay(vf, [r], segs, H).evaluate(y)
    m = int(r / H)
    for l in range(m):
        assert np.array_equal(fy.y[l], vf.values(np.array([[y.y[l, 0], 0.3]]))[0])
    # the delayed block carries no derivative before the first lag
    xbarp = lift_constant_delay(vf, [r], segs, H).stack_derivs(y.gubinelli, 0, m - 1)
    assert np.all(xbarp[:, 1] == 0.0)


def test_constant_delay_reads_shifted_value():
    r = 0.25
    rp = brownian_stack([r])
    m = int(r / H)
    vf = linear_field(np.array([[[0.0, 1.0], [0.0, 0.0]]]))
    segs = history_segments(np.array([-1.0]), [r], rp.path)
    y = random_state(rp, 1)
    fy = lift_constant_delay(vf, [r], segs, H).evaluate(y)
    assert np.array_equal(fy.y[m:, 0, 0], y.y[:-m, 0])
    assert np.all(fy.y[:m, 0, 0] == -1.0)
    # Gubinelli derivative of the delayed argument lives in the delayed driver block
    assert np.array_equal(fy.gubinelli[m:, 0, 0, 1], y.gubinelli[:-m, 0, 0])


def test_constant_delay_randomized_index_oracle(rng):
    delays = (0.25, 0.5)
    rp = brownian_stack(delays, seed=3)
    vf = sin_field(rng.normal(size=(2, 3)), rng.normal(size=(2, 3, 6)))
    segs = history_segments(lambda s: np.array([np.cos(s), s]), delays, rp.path)
    y = random_state(rp, 2, seed=4)
    fy = lift_constant_delay(vf, delays, segs, H).evaluate(y)
    shifts = [int(r / H) for r in delays]
    for l in range(len(rp)):
        parts = [y.y[l]]
        for m, r in zip(shifts, delays):
            parts.append(y.y[l - m] if l >= m else np.array([np.cos(rp.times[l] - r), rp.times[l] - r]))
        np.testing.assert_allclose(fy.y[l], vf.values(np.concatenate(parts)[None])[0], atol=1e-15)


def test_constant_delay_rejects_misaligned_delay():
    rp = brownian_stack([0.25])
    with pytest.raises(ValueError):
        lift_constant_delay(sin_field(weights=[1.0, 1.0]), [0.3], history_segments([0.0], [0.3], rp.path), H)


def test_constant_delay_needs_stacked_driver():
    t = np.linspace(0, 1, 33)
    rp = geometric_lift(SampledPath(Grid(t), np.zeros((33, 2))))
    segs = history_segments([0.0], [0.25], rp.path)
    cf = lift_constant_delay(sin_field(np.ones((1, 2)), [1.0, 1.0]), [0.25], segs, H)
    with pytest.raises(ValueError):
        cf.check_driver(rp)


# ----------------------------------------------------------------- variable delay


def test_variable_delay_with_constant_eta_matches_constant_delay(rng):
    r = 0.25
    z = simulate_driver(DriverSpec("brownian", step=H, delays=(r,), seed=5))
    sd = delayed_lift(z, [r], H)
    vd = variable_delay_driver(z, lambda t: r, H)
    assert np.array_equal(sd.values, vd.values)
    vf = sin_field(rng.normal(size=(1, 2)), rng.normal(size=(1, 2, 2)))
    y = random_state(sd, 1)
    a = lift_constant_delay(vf, [r], history_segments([0.4], [r], sd.path), H).evaluate(y)
    b = lift_variable_delay(vf, lambda t: r, ControlledPath.constant(sd.path, [0.4]), H, eps=r).evaluate(y)
    assert np.array_equal(a.y, b.y)
    assert np.array_equal(a.gubinelli, b.gubinelli)


def test_variable_delay_half_index_shift():
    # t - eta(t) = t / 2 - H, so index l reads index floor(l / 2) - 1
    t = Grid.uniform(1.0, 32).times
    x = SampledPath(Grid(t), np.zeros((33, 2)))
    vf = linear_field(np.array([[[0.0, 1.0], [0.0, 0.0]]]))
    y = ControlledPath(x, t**2, np.zeros((33, 1, 2)))
    cf = lift_variable_delay(vf, lambda s: s / 2 + H, ControlledPath.constant(x, [-7.0]), H, eps=H)
    fy = cf.evaluate(y)
    for l in range(33):
        src = l // 2 - 1
        assert fy.y[l, 0, 0] == (y.y[src, 0] if src >= 0 else -7.0)


def test_variable_delay_rejects_small_eta():
    x = SampledPath(Grid.uniform(1.0, 32), np.zeros((33, 2)))
    with pytest.raises(ValueError):
        lift_variable_delay(sin_field(np.ones((1, 2)), [1.0, 1.0]), lambda s: 0.01, ControlledPath.constant(x, [0.0]), H, eps=0.1)


# ----------------------------------------------------------------- non-anticipativity


@pytest.mark.parametrize("cls", COEFFICIENT_CLASSES)
@given(seed=st.integers(0, 10_000), cut=st.floats(0.0, 1.0))
def test_truncation_does_not_change_the_past(cls, seed, cut):
    case = build_case(cls, "brownian", seed % 7, step=2.0**-5)
    y = random_state(case.rp, case.y.y.shape[1], seed)
    i = int(cut * (len(y) - 1))
    a = case.cf.evaluate(y)
    b = case.cf.evaluate(truncate_after(y, i))
    assert np.array_equal(a.y[: i + 1], b.y[: i + 1])
    assert np.array_equal(a.gubinelli[: i + 1], b.gubinelli[: i + 1])


def test_truncate_after_freezes_tail(rng):
    rp = brownian_stack()
    y = random_state(rp, 2)
    tr = truncate_after(y, 5)
    assert np.array_equal(tr.y[:6], y.y[:6])
    assert np.all(tr.y[6:] == y.y[5])
    assert np.all(tr.gubinelli[6:] == y.gubinelli[5])


# ----------------------------------------------------------------- assumption checks


def test_constant_field_has_zero_lipschitz_ratio():
    rp = brownian_stack()
    cf = lift_vector_field(constant_field([[0.5]], 1))
    samples = [random_state(rp, 1, s) for s in range(3)]
    rep = validate_assumptions(cf, rp, samples, k_bound=1e9)
    assert rep.lipschitz == [0.0, 0.0]
    assert rep.growth[0] == pytest.approx(0.5, rel=1e-15)
    assert rep.ok


def test_sin_field_assumptions_hold_on_samples():
    rp = brownian_stack()
    cf = lift_vector_field(sin_field(weights=[1.0]))
    samples = [random_state(rp, 1, s) for s in range(4)]
    rep = validate_assumptions(cf, rp, samples, k_bound=1e9)
    assert rep.ok, rep


def test_under_declared_bound_is_flagged():
    rp = brownian_stack()
    vf = dataclasses.replace(sin_field(weights=[1.0]), c1=1e-3, c2=1e-3, c3=1e-3)
    samples = [random_state(rp, 1, s) for s in range(3)]
    rep = validate_assumptions(lift_vector_field(vf), rp, samples, k_bound=1e9)
    assert not rep.ok
    assert 0 in rep.growth_violations
