import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from gyrolimit import (
    BlobParams,
    BlowUpError,
    ChargeState,
    InitialDataSpec,
    NearCollisionError,
    VPState,
    run,
    sample_initial_data,
    step,
)
from gyrolimit.diagnostics import energy, momentum
from gyrolimit.vp_sim import COLLISION_FLOOR, max_time_step, rotate, rotate_substep

seeds = st.integers(0, 2**32 - 1)


def lone_particle(x, v, eps=0.1, xi=(50.0, 50.0), eta=(0.0, 0.0), gamma=1.0):
    return VPState(x=np.array([x], float), v=np.array([v], float), w=np.array([0.5]),
                   charge=ChargeState(xi, eta, gamma), eps=eps)


def small_state(eps=0.3, n=150, seed=1, eta=(0.0, 0.0)):
    return sample_initial_data(InitialDataSpec(n_particles=n, seed=seed), eps, (0, 0), eta,
                               gamma=1.0, blob=BlobParams(0.05))


# -- initial data -----------------------------------------------------------------


@given(st.integers(1, 3000), st.sampled_from(["stratified", "grid"]), st.sampled_from(["disk", "annulus"]))
def test_sampled_mass_is_exact(n, sampling, region):
    s = sample_initial_data(InitialDataSpec(n_particles=n, sampling=sampling, region=region), 0.2)
    assert math.fsum(s.w) == 0.9
    assert np.all(s.w > 0)


def test_annulus_respects_exclusion():
    spec = InitialDataSpec(n_particles=2000, region="annulus", r_inner=0.2, r_outer=1.0, exclusion=0.2)
    s = sample_initial_data(spec, 0.2, (0.0, 0.0))
    r = np.hypot(s.x[:, 0], s.x[:, 1])
    assert r.min() >= 0.2 and r.max() <= 1.0
    assert np.hypot(s.v[:, 0], s.v[:, 1]).max() <= spec.v_radius


def test_disk_offset_from_charge():
    spec = InitialDataSpec(n_particles=500)
    s = sample_initial_data(spec, 0.2, (0.5, -0.3))
    d = np.hypot(*(s.x - [0.5, -0.3]).T)
    assert d.min() >= spec.exclusion
    assert np.hypot(*(s.x - [1.5, -0.3]).T).max() <= spec.disk_radius


def test_height_rule():
    spec = InitialDataSpec(n_particles=100, height_coef=1.0, height_exp=1.0)
    got = [eps**2 * spec.height(eps) for eps in (0.4, 0.2, 0.1)]
    np.testing.assert_allclose(got, [0.4, 0.2, 0.1], rtol=1e-14)
    for eps in (0.4, 0.1):
        s = sample_initial_data(spec, eps)
        # weight per phase-space volume reproduces the prescribed height
        v_rad = s.meta["velocity_radius"]
        implied = spec.mass / (spec.spatial_area() * math.pi * v_rad**2)
        assert implied == pytest.approx(1 / eps, rel=1e-12)
        assert np.hypot(*s.v.T).max() <= v_rad
        assert s.meta["f0_height"] == pytest.approx(1 / eps)


@pytest.mark.parametrize("kwargs", [
    dict(region="annulus", r_inner=0.1, exclusion=0.2),
    dict(region="annulus", r_inner=1.0, r_outer=0.5),
    dict(region="disk", disk_offset=(0.5, 0.0), disk_radius=0.6),
])
def test_infeasible_geometry(kwargs):
    with pytest.raises(ValueError):
        sample_initial_data(InitialDataSpec(n_particles=10, **kwargs), 0.2)


@pytest.mark.parametrize("kwargs", [dict(mass=1.0), dict(mass=0.0), dict(n_particles=0), dict(exclusion=0.0)])
def test_invalid_spec(kwargs):
    with pytest.raises(ValueError):
        InitialDataSpec(**{"n_particles": 10, **kwargs})


def test_sampling_is_seeded():
    a = sample_initial_data(InitialDataSpec(n_particles=100, seed=3), 0.2)
    b = sample_initial_data(InitialDataSpec(n_particles=100, seed=3), 0.2)
    c = sample_initial_data(InitialDataSpec(n_particles=100, seed=4), 0.2)
    assert np.array_equal(a.x, b.x) and np.array_equal(a.v, b.v)
    assert not np.array_equal(a.x, c.x)


def test_state_accessors():
    s = small_state(n=10)
    p = s.particle(3)
    assert np.array_equal(p.x, s.x[3]) and p.w == s.w[3]
    assert len(s.particles) == 10 and s.density.total_mass == s.mass
    with pytest.raises(ValueError):
        ChargeState((0, 0), (0, 0), 0.0)


# -- stepping -----------------------------------------------------------------------


def test_free_gyration_quarter_turn():
    eps = 0.1
    s = lone_particle((0.0, 0.0), (1.0, 0.0), eps=eps)
    out = step(s, math.pi * eps**2 / 2, couple_charge=False)
    np.testing.assert_allclose(out.v[0], [0.0, 1.0], atol=1e-15)
    assert abs(np.hypot(*out.v[0]) - 1.0) <= 1e-14
    # exact drift over a quarter circle: x = eps (v0^perp - v^perp)
    np.testing.assert_allclose(out.x[0], eps * (np.array([0.0, 1.0]) - np.array([-1.0, 0.0])), atol=1e-15)


def test_resting_particle_does_not_move():
    s = lone_particle((3.0, -2.0), (0.0, 0.0))
    out = step(s, 1e-3, couple_charge=False)
    assert np.array_equal(out.x, s.x) and np.array_equal(out.v, s.v)


def test_charge_gyrates_at_gamma_rate():
    eps, gamma, dt = 0.2, 2.5, 0.013
    s = lone_particle((1.0, 0.0), (0.0, 0.0), eps=eps, xi=(0.0, 0.0), eta=(0.3, -0.4), gamma=gamma)
    out = step(s, dt, couple_charge=False)
    np.testing.assert_allclose(out.charge.eta, rotate(np.array([0.3, -0.4]), gamma * dt / eps**2), atol=1e-15)
    np.testing.assert_allclose(out.charge.guiding_center(eps), s.charge.guiding_center(eps), atol=1e-15)


def test_frozen_charge_orbit_converges_at_second_order():
    eps = 0.1
    s0 = lone_particle((1.0, 0.0), (0.0, 0.5), eps=eps, xi=(0.0, 0.0))
    period = 2 * math.pi * eps**2

    def final(n):
        s = s0
        for _ in range(n):
            s = step(s, period / n, freeze_charge=True)
        return s.x[0]

    x16, x32, x64, x128 = (final(n) for n in (16, 32, 64, 128))
    limit = x128 + (x128 - x64) / 3
    ratio = np.linalg.norm(x16 - limit) / np.linalg.norm(x32 - limit)
    assert 3.5 < ratio < 4.5


@given(seeds, st.floats(1e-4, 1.0), st.floats(0.05, 0.5))
def test_rotation_substep_isometry(seed, dt, eps):
    rng = np.random.default_rng(seed)
    n = 50
    s = VPState(x=rng.normal(size=(n, 2)), v=rng.normal(size=(n, 2)) * 3, w=rng.uniform(0.01, 1, n),
                charge=ChargeState(rng.normal(size=2) + 10, rng.normal(size=2), 1.3), eps=eps)
    out = rotate_substep(s, dt)
    k0 = np.sum(s.w * np.sum(s.v**2, axis=1))
    k1 = np.sum(out.w * np.sum(out.v**2, axis=1))
    assert abs(k1 - k0) <= 1e-13 * k0
    assert np.array_equal(out.w, s.w)


def test_near_collision_aborts():
    s = lone_particle((0.5 * COLLISION_FLOOR, 0.0), (0.0, 0.0), xi=(0.0, 0.0), gamma=1e-30)
    with pytest.raises(NearCollisionError):
        step(s, 1e-4)


def test_overflow_is_blow_up():
    # a half turn moves the particle by 2 eps |v|, beyond the float range
    s = lone_particle((1.0, 0.0), (1.5e308, 0.0), eps=1.0)
    with pytest.raises(BlowUpError), np.errstate(over="ignore", invalid="ignore"):
        step(s, math.pi, couple_charge=False)


def test_run_attaches_failure_time():
    s = lone_particle((1.0, 0.0), (1.5e308, 0.0), eps=1.0)
    with pytest.raises(BlowUpError) as info, np.errstate(over="ignore", invalid="ignore"):
        run(s, 10.0, math.pi, couple_charge=False, c_rot=None, checkpoints=[math.pi])
    assert info.value.t == pytest.approx(0.0)


def test_step_rejects_bad_dt():
    with pytest.raises(ValueError):
        step(small_state(n=5), 0.0)


# -- runs --------------------------------------------------------------------------------


def test_run_to_start_time_is_empty():
    s = small_state(n=20)
    traj = run(s, s.t, 0.001)
    assert traj.records == [] and traj.final is s


def test_run_matches_manual_steps_bitwise():
    s = small_state(eps=0.3, n=60)
    dt = 0.1 * 0.3**2
    manual = step(step(s, dt), dt)
    traj = run(s, 2 * dt, dt)
    assert np.array_equal(traj.final.x, manual.x) and np.array_equal(traj.final.v, manual.v)
    assert np.array_equal(traj.final.charge.xi, manual.charge.xi)
    assert np.array_equal(traj.final.charge.eta, manual.charge.eta)


def test_run_lands_on_checkpoints_and_respects_step_bound():
    s = small_state(eps=0.3, n=20)
    traj = run(s, 0.2, 0.009, stride=7, checkpoints=[0.05, 0.13])
    t = traj.times
    assert t[0] == 0.0 and t[-1] == 0.2 and 0.05 in t and 0.13 in t
    assert np.all(np.diff(t) > 0)
    with pytest.raises(ValueError):
        run(s, 1.0, 1.01 * max_time_step(0.3))


def test_mass_observer_constant():
    s = small_state(eps=0.3, n=80)
    traj = run(s, 0.1, 0.009, [lambda st: {"mass": st.mass, "w": st.w.copy()}])
    assert np.all(traj.channel("mass") == s.mass)
    assert all(np.array_equal(w, s.w) for w in traj.channel("w"))


def test_conservation_small():
    eps = 0.3
    s = small_state(eps=eps, n=150, eta=(0.2, 0.1))
    drifts = []
    for dt in (0.1 * eps**2, 0.05 * eps**2):
        traj = run(s, 0.3, dt, [lambda st: {"H": energy(st), "I": momentum(st)}], stride=5)
        H, I = traj.channel("H"), traj.channel("I")
        drifts.append((np.max(np.abs(H - H[0])) / max(1, abs(H[0])), np.max(np.abs(I - I[0])) / max(1, abs(I[0]))))
        assert traj.final.min_charge_distance() > 0
    assert drifts[0][0] < 1e-3
    assert math.log2(drifts[0][0] / drifts[1][0]) >= 1.9
    assert drifts[0][1] < 1e-12 and drifts[1][1] < 1e-12


def test_repulsion_keeps_particles_off_the_charge():
    spec = InitialDataSpec(n_particles=200, region="annulus", r_inner=0.2, r_outer=0.6, exclusion=0.2)
    s = sample_initial_data(spec, 0.3, (0, 0), (0, 0), gamma=1.0, blob=BlobParams(0.05))
    traj = run(s, 0.5, 0.009, [lambda st: {"d": st.min_charge_distance()}], stride=3)
    assert traj.channel("d").min() > 0.05
