import math

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st
from hypothesis.extra.numpy import arrays

from gyrolimit import BlobParams, SingularityError, WeightedMeasure, charge_field, coulomb_field
from gyrolimit import log_interaction_energy
from gyrolimit.fields import SHARP, field_at, self_field
from oracles import direct_field, gauss_field, radial_quadrature, ring_quadrature

coords = st.floats(-3, 3, allow_nan=False)


def random_measure(rng, n, spread=1.0):
    return WeightedMeasure(rng.normal(scale=spread, size=(n, 2)), rng.uniform(0.1, 1.0, n))


def test_blob_params_mode():
    assert BlobParams().mode == "sharp"
    assert BlobParams(0.05).mode == "blob"
    with pytest.raises(ValueError):
        BlobParams(-0.1)


def test_unit_mass_field_examples():
    rho = WeightedMeasure.dirac((0.0, 0.0))
    np.testing.assert_allclose(coulomb_field(rho, (1.0, 0.0)), [1.0, 0.0], rtol=0, atol=1e-15)
    np.testing.assert_allclose(coulomb_field(rho, (0.0, 2.0)), [0.0, 0.5], rtol=0, atol=1e-15)


def test_ring_matches_gauss_law():
    pts, w = ring_quadrature(256, 0.5)
    rho = WeightedMeasure(pts, w)
    np.testing.assert_allclose(coulomb_field(rho, (2.0, 0.0)), [0.5, 0.0], atol=1e-6)


def test_sharp_field_on_source_point_is_singular():
    rho = WeightedMeasure(np.array([[0.0, 0.0], [1.0, 0.0]]), np.array([1.0, 1.0]))
    with pytest.raises(SingularityError):
        coulomb_field(rho, (1.0, 0.0))
    np.testing.assert_allclose(coulomb_field(rho, (1.0, 0.0), exclude_index=1), [1.0, 0.0])
    # the blob kernel is finite there
    assert np.all(np.isfinite(coulomb_field(rho, (1.0, 0.0), BlobParams(0.1))))


def test_exclude_index_range():
    with pytest.raises(IndexError):
        coulomb_field(WeightedMeasure.dirac((0, 0)), (1, 0), exclude_index=3)


def test_field_matches_direct_loop():
    rng = np.random.default_rng(3)
    rho = random_measure(rng, 150)
    targets = rng.normal(size=(20, 2)) * 2
    for delta in (0.0, 0.07):
        got = field_at(rho, targets, BlobParams(delta))
        want = np.array([direct_field(rho.points, rho.weights, x, delta) for x in targets])
        np.testing.assert_allclose(got, want, rtol=1e-12, atol=1e-13)
    got = self_field(rho, BlobParams(0.07))
    want = np.array([direct_field(rho.points, rho.weights, x, 0.07, skip=i) for i, x in enumerate(rho.points)])
    np.testing.assert_allclose(got, want, rtol=1e-12, atol=1e-13)


def test_radial_oracle_improves_under_refinement():
    # uniform unit disk: E = m(|x|) x/|x|^2 with m(r) = min(r^2, 1)
    inside, outside = np.array([0.55, 0.2]), np.array([1.05, 0.2])
    err_in, err_out = [], []
    for rings in (10, 20, 40, 80):
        rho = WeightedMeasure(*radial_quadrature(rings, 1.0, lambda r: 1.0))
        # inside the support the blob length shrinks with the ring spacing
        blob = BlobParams(2.0 / rings)
        err_in.append(np.linalg.norm(coulomb_field(rho, inside, blob) - gauss_field(inside, inside @ inside)))
        err_out.append(np.linalg.norm(coulomb_field(rho, outside) - gauss_field(outside, 1.0)))
    assert all(a > b for a, b in zip(err_in, err_in[1:]))
    assert all(a > b for a, b in zip(err_out, err_out[1:]))
    assert err_in[-1] < 1e-3 and err_out[-1] < 1e-12


def test_charge_field_examples():
    np.testing.assert_allclose(charge_field((0, 1), (0, 0), 1.0), [0, 1])
    np.testing.assert_allclose(charge_field((3, 0), (1, 0), 2.0), [1, 0])
    assert np.linalg.norm(charge_field((1e-8, 0), (0, 0), 1.0)) == pytest.approx(1e8, rel=1e-12)
    tiny = charge_field((1e-150, 0.0), (0, 0), 1.0)
    assert np.all(np.isfinite(tiny)) and tiny[0] == pytest.approx(1e150)
    with pytest.raises(SingularityError):
        charge_field((0.5, 0.5), (0.5, 0.5), 1.0)


@given(coords, coords, st.floats(0.1, 5))
def test_charge_field_magnitude(a, b, gamma):
    x = np.array([a, b])
    if np.hypot(a, b - 0.25) == 0:
        return
    e = charge_field(x, (0, 0.25), gamma)
    assert np.hypot(*e) == pytest.approx(gamma / np.hypot(a, b - 0.25), rel=1e-12)


def test_log_energy_examples():
    pair = WeightedMeasure(np.array([[0.0, 0.0], [1.0, 0.0]]), np.ones(2))
    assert log_interaction_energy(pair, pair, SHARP, skip_diagonal=True) == 0.0
    pair_e = WeightedMeasure(np.array([[0.0, 0.0], [math.e, 0.0]]), np.ones(2))
    assert log_interaction_energy(pair_e, pair_e, SHARP, skip_diagonal=True) == pytest.approx(2.0, rel=1e-15)
    one = WeightedMeasure.dirac((0.4, 0.1))
    assert log_interaction_energy(one, one, SHARP, skip_diagonal=True) == 0.0
    with pytest.raises(SingularityError):
        log_interaction_energy(pair, pair, SHARP, skip_diagonal=False)


@given(st.integers(0, 2**32 - 1), st.integers(2, 60), st.sampled_from([0.0, 0.05, 0.3]))
def test_newton_cancellation(seed, n, delta):
    rho = random_measure(np.random.default_rng(seed), n)
    E = self_field(rho, BlobParams(delta))
    total = np.sum(rho.weights[:, None] * E, axis=0)
    scale = np.sum(rho.weights[:, None] * np.abs(E))
    assert np.linalg.norm(total) <= 1e-10 * max(scale, 1.0)


@given(st.integers(0, 2**32 - 1), st.integers(1, 30), st.integers(1, 30))
def test_field_linear_in_measure(seed, n, m):
    rng = np.random.default_rng(seed)
    a, b = random_measure(rng, n), random_measure(rng, m)
    x = rng.normal(size=(5, 2)) + 10.0
    blob = BlobParams(0.05)
    lhs = field_at(a.concat(b), x, blob)
    rhs = field_at(a, x, blob) + field_at(b, x, blob)
    np.testing.assert_allclose(lhs, rhs, rtol=1e-12, atol=1e-15)


@given(st.integers(0, 2**32 - 1), st.integers(1, 25), st.integers(1, 25), st.sampled_from([0.0, 0.1]))
def test_log_energy_symmetric(seed, n, m, delta):
    rng = np.random.default_rng(seed)
    a, b = random_measure(rng, n), random_measure(rng, m)
    blob = BlobParams(delta)
    assert log_interaction_energy(a, b, blob) == pytest.approx(log_interaction_energy(b, a, blob),
                                                               rel=1e-12, abs=1e-12)


@given(arrays(np.float64, (2,), elements=coords), arrays(np.float64, (2,), elements=coords),
       st.floats(0.0, 1.0))
def test_blob_kernel_antisymmetric(x, y, delta):
    d = x - y
    # pairs whose squared separation underflows are singular in float64
    assume(float(d @ d) + delta**2 > 0)
    kxy = coulomb_field(WeightedMeasure.dirac(y), x, BlobParams(delta))
    kyx = coulomb_field(WeightedMeasure.dirac(x), y, BlobParams(delta))
    np.testing.assert_allclose(kxy, -kyx, rtol=0, atol=0)


def test_sharp_underflowing_separation_is_singular():
    with pytest.raises(SingularityError):
        coulomb_field(WeightedMeasure.dirac((2e-202, 2e-202)), (0.0, 0.0), SHARP)
