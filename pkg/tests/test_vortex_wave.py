import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gyrolimit import BlobParams, InitialDataSpec, TestDictionary, WeightedMeasure, dual_norm_distance
from gyrolimit import sample_initial_data
from gyrolimit.vortex_wave import (
    VortexState,
    interaction_energy,
    project_initial_data,
    velocities,
    vorticity_centroid,
    vw_run,
    vw_step,
    vw_velocity,
)
from oracles import radial_quadrature, two_vortex


def annulus_state(gamma=1.0, delta=0.05, center=(0.0, 0.0)):
    pts, w = radial_quadrature(12, 1.0, lambda r: 1.0 if r > 0.2 else 0.0, mass=0.5, center=center)
    keep = w > 0
    return VortexState(WeightedMeasure(pts[keep], w[keep]), xi=center, gamma=gamma, blob=BlobParams(delta))


def test_state_validation():
    with pytest.raises(ValueError):
        VortexState(WeightedMeasure.empty(), xi=(0, 0), gamma=-1.0)
    with pytest.raises(ValueError):
        VortexState(WeightedMeasure.dirac((1, 1)), xi=(1, 1), gamma=1.0)
    # gamma = 0 (Euler) allows any position
    VortexState(WeightedMeasure.dirac((1, 1)), xi=(1, 1), gamma=0.0)


def test_velocity_of_lone_vortex_field():
    s = VortexState(WeightedMeasure.empty(), xi=(0, 0), gamma=1.0)
    np.testing.assert_allclose(vw_velocity(s, (1.0, 0.0)), [0.0, 1.0], atol=1e-15)


def test_charge_velocity_from_single_blob():
    w, d = 0.3, 2.0
    s = VortexState(WeightedMeasure.dirac((0, 0), w), xi=(d, 0.0), gamma=1.0)
    np.testing.assert_allclose(vw_velocity(s, (d, 0.0)), [0.0, w / d], atol=1e-15)
    np.testing.assert_allclose(velocities(s)[1], [0.0, w / d], atol=1e-15)


def test_radial_density_exerts_no_field_on_center():
    s = annulus_state()
    assert np.linalg.norm(vw_velocity(s, s.xi)) < 1e-13


def test_blob_velocity_excludes_itself():
    s = annulus_state()
    u, _ = velocities(s)
    for i in (0, 17, 100):
        np.testing.assert_allclose(vw_velocity(s, s.rho.points[i], exclude_index=i), u[i], rtol=1e-12, atol=1e-14)


def test_empty_density_keeps_charge_fixed():
    s = VortexState(WeightedMeasure.empty(), xi=(0.3, 0.4), gamma=2.0)
    out = vw_step(s, 0.1)
    assert np.array_equal(out.xi, s.xi) and out.t == pytest.approx(0.1)


@pytest.mark.parametrize("w,gamma,d", [(0.5, 1.0, 1.0), (0.2, 2.0, 0.7)])
def test_two_vortex_closed_form(w, gamma, d):
    s = VortexState(WeightedMeasure.dirac((d, 0.0), w), xi=(0.0, 0.0), gamma=gamma)
    dt = 1e-3
    traj = vw_run(s, 0.4, dt, checkpoints=[0.2], keep_states=True)
    for t in (0.2, 0.4):
        x, xi = two_vortex((d, 0.0), (0.0, 0.0), w, gamma, t)
        st_ = traj.state_at(t)
        assert np.linalg.norm(st_.rho.points[0] - x) < 1e-9
        assert np.linalg.norm(st_.xi - xi) < 1e-9


def test_two_vortex_period():
    w, gamma, d = 0.5, 1.0, 1.0
    s = VortexState(WeightedMeasure.dirac((d, 0.0), w), xi=(0.0, 0.0), gamma=gamma)
    out = vw_run(s, 2 * math.pi * d**2 / (gamma + w), 1e-3).final
    assert np.linalg.norm(out.rho.points[0] - [d, 0.0]) < 1e-4
    assert np.linalg.norm(out.xi) < 1e-4


def test_radial_steady_state_keeps_circles():
    s = annulus_state()
    r0 = np.hypot(*s.rho.points.T)
    errs = []
    for dt in (0.01, 0.005):
        out = vw_run(s, 0.5, dt).final
        errs.append(np.max(np.abs(np.hypot(*(out.rho.points - out.xi).T) - r0)))
        assert np.linalg.norm(out.xi - s.xi) < 1e-8
        assert dual_norm_distance(out.rho, s.rho, TestDictionary()) < 1e-3
    # rings of unequal node counts exert small non-azimuthal forces on each
    # other; the resulting radial wobble is a discretization effect, not a
    # time-stepping one
    assert max(errs) < 5e-5
    assert errs[1] == pytest.approx(errs[0], rel=1e-3)


@settings(max_examples=15)
@given(st.integers(0, 2**32 - 1), st.integers(2, 12))
def test_centroid_and_vorticity_conserved(seed, n):
    rng = np.random.default_rng(seed)
    pts = rng.uniform(-1, 1, (n, 2)) + [1.5, 0.0]
    s = VortexState(WeightedMeasure(pts, rng.uniform(0.05, 0.3, n)), xi=(0.0, 0.0), gamma=1.0,
                    blob=BlobParams(0.1))
    out = vw_run(s, 0.2, 0.002).final
    assert out.rho.total_mass == s.rho.total_mass
    assert np.array_equal(out.rho.weights, s.rho.weights)
    assert np.linalg.norm(vorticity_centroid(out) - vorticity_centroid(s)) < 1e-10


def test_euler_energy_conserved():
    rng = np.random.default_rng(11)
    s = VortexState(WeightedMeasure(rng.normal(scale=0.5, size=(60, 2)), np.full(60, 1 / 60)),
                    xi=(0.0, 0.0), gamma=0.0, blob=BlobParams(0.1))
    e0 = interaction_energy(s)
    drift = [abs(interaction_energy(vw_run(s, 0.5, dt).final) - e0) for dt in (0.02, 0.01)]
    assert drift[1] < 1e-6 * abs(e0) + 1e-9
    assert drift[1] < drift[0]


def test_projection_keeps_positions_and_charge():
    vp = sample_initial_data(InitialDataSpec(n_particles=40), 0.2, (0.1, 0.0), (0.5, 0.5),
                             gamma=1.5, blob=BlobParams(0.05))
    s = project_initial_data(vp)
    assert np.array_equal(s.rho.points, vp.x) and np.array_equal(s.rho.weights, vp.w)
    assert np.array_equal(s.xi, vp.charge.xi) and s.gamma == 1.5 and s.blob == vp.blob


def test_state_at_requires_stored_time():
    traj = vw_run(annulus_state(), 0.05, 0.01, keep_states=True)
    with pytest.raises(ValueError):
        traj.state_at(0.033)
    with pytest.raises(ValueError):
        vw_step(annulus_state(), 0.0)
