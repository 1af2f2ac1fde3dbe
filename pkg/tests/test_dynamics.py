import math
import warnings

import numpy as np
import pytest

from stokesprop.bem import ResistanceSet
from stokesprop.dynamics import (BodyState, delta_sweep, integrate_periodic,
                                 integrate_translation_only, net_distance, rhs, trajectory)
from stokesprop.errors import ConvergenceError, ConvergenceWarning, NoPropulsionError, ValidationError
from stokesprop.oracles import linear_periodic_response
from stokesprop.propulsion import (BodyInertia, Forcing, offcenter_sphere_tensors, sphere_tensors,
                                   translation_only_velocity)

from conftest import offcenter_config, sphere_body


def test_rhs_at_rest():
    body, R, f = offcenter_config(0.1)
    d = rhs(BodyState.at_rest(f.b_hat), 0.0, body, R, f)
    F0 = f.force(0.0)
    assert np.allclose(d[0:3], F0 * f.b_hat / body.M)
    assert np.allclose(d[3:6], np.linalg.solve(body.I, F0 * np.cross(body.r, f.b_hat)))
    assert np.allclose(d[6:9], 0)


def test_rhs_unforced_drag_and_aligned_spin():
    R = sphere_tensors(1.0)
    body = sphere_body()
    f = Forcing(1.0, 0.0, 1.0, [1, 0, 0])
    g = np.array([0.1, -0.2, 0.3])
    d = rhs(np.concatenate([g, np.zeros(3), [1, 0, 0]]), 0.3, body, R, f)
    assert np.allclose(d[0:3], -6 * math.pi * g / body.M)
    b = np.array([0.0, 0.6, 0.8])
    d = rhs(np.concatenate([np.zeros(3), 2.5 * b, b]), 0.0, body, R, f)
    assert np.allclose(d[6:9], 0)


def test_rhs_batched_matches_single():
    body, R, f = offcenter_config(0.2)
    rng = np.random.default_rng(0)
    S = rng.normal(size=(4, 9))
    batch = rhs(S, 0.1, body, R, f)
    for i in range(4):
        assert np.allclose(batch[i], rhs(S[i], 0.1, body, R, f))


def test_zero_amplitude_gives_zero_orbit():
    body, R, f = offcenter_config(0.0)
    o = integrate_periodic(body, R, f)
    assert o.periods == 1
    assert np.abs(o.gamma).max() == 0 and np.abs(o.omega).max() == 0
    assert np.allclose(o.b, f.b_hat)


def test_sphere_matches_scalar_oracle():
    body = sphere_body()
    f = Forcing(1.0, 0.1, 1.0, [1, 0, 0], cos=(1.0,))
    o = integrate_periodic(body, sphere_tensors(1.0), f, steps_per_period=2048)
    y = linear_periodic_response(o.t, body.M, 6 * math.pi, 0.1, 1.0, 1.0, (1.0,))
    assert np.abs(o.gamma[:, 0] - y).max() < 1e-8
    assert np.abs(o.omega).max() == 0
    assert np.abs(o.b - [1, 0, 0]).max() == 0
    assert o.gamma_bar[0] == pytest.approx(0.1 / (6 * math.pi), rel=1e-8)


def test_orbit_bookkeeping():
    body, R, f = offcenter_config(0.1)
    o = integrate_periodic(body, R, f)
    assert o.periodicity_defect <= 1e-10
    assert len(o.t) == 1025 and o.t[-1] == 1.0
    assert np.allclose(o.net_displacement_per_period, o.period * o.gamma_bar)
    trap = (0.5 * (o.gamma[1:] + o.gamma[:-1]) * np.diff(o.t)[:, None]).sum(axis=0) / o.period
    assert np.allclose(o.gamma_bar, trap, rtol=1e-12)
    assert o.b_drift < 1e-9
    lines = o.to_csv().splitlines()
    assert lines[0].startswith("t,gamma_1") and len(lines) == 1026
    assert float(lines[1].split(",")[0]) == 0.0


def test_dt_must_divide_period():
    body, R, f = offcenter_config(0.1)
    with pytest.raises(ValidationError):
        integrate_periodic(body, R, f, dt=0.3)
    o = integrate_translation_only(body, R.K, f, dt=1.0 / 256)
    assert len(o.t) == 257


def test_nonconvergence_carries_history():
    body, R, f = offcenter_config(0.1)
    with pytest.raises(ConvergenceError) as info:
        integrate_periodic(body, R, f, max_periods=2, accelerate=False)
    assert len(info.value.history) == 2


def test_translation_only_sphere():
    body = sphere_body()
    b = np.array([0.0, 0.6, 0.8])
    f = Forcing(1.0, 1.0, 1.0, b)
    o = integrate_translation_only(body, sphere_tensors(1.0).K, f)
    assert np.allclose(o.gamma_bar, b / (6 * math.pi), rtol=1e-8, atol=1e-12)
    assert np.linalg.norm(o.gamma_bar) == pytest.approx(0.05305, abs=1e-5)


def test_translation_only_zero_mean_oscillates():
    body = sphere_body()
    f = Forcing(1.0, 0.5, 0.0, [1, 0, 0], cos=(1.0,))
    o = integrate_translation_only(body, sphere_tensors(1.0), f)
    assert np.abs(o.gamma_bar).max() < 1e-10
    assert np.abs(o.gamma).max() > 1e-3


def test_translation_only_anisotropic_matches_propulsion():
    K = np.array([[3.0, 0.5, 0.0], [0.5, 2.0, 0.2], [0.0, 0.2, 5.0]])
    R = ResistanceSet(K, np.zeros((3, 3)), np.zeros((3, 3)), np.eye(3), np.zeros(3), 1.0)
    body = BodyInertia(1.0, np.eye(3), np.zeros(3))
    b = np.array([1.0, 1.0, 1.0]) / math.sqrt(3)
    f = Forcing(1.0, 0.2, 1.0, b, sin=(0.4,))
    o = integrate_translation_only(body, R.K, f)
    expected = translation_only_velocity(R, f)
    assert np.abs(o.gamma_bar - expected).max() <= 10 * 1e-10
    assert np.linalg.norm(np.cross(o.gamma_bar, b)) > 1e-3


def test_b_unit_length_drift():
    body, R, f = offcenter_config(0.2)
    s0 = BodyState(np.array([0.05, 0.0, -0.02]), np.array([0.3, -0.4, 0.2]), f.b_hat)
    _, states, drift = trajectory(body, R, f, s0, periods=3, steps_per_period=1024)
    assert drift < 1e-9
    assert np.abs(np.linalg.norm(states[:, 6:9], axis=1) - 1).max() < 1e-14


def test_unforced_energy_strictly_decreasing():
    body, R, f = offcenter_config(0.0)
    rng = np.random.default_rng(7)
    for _ in range(3):
        s0 = BodyState(rng.normal(size=3), rng.normal(size=3), f.b_hat)
        _, states, _ = trajectory(body, R, f, s0, periods=1, steps_per_period=512)
        g, w = states[:, 0:3], states[:, 3:6]
        energy = 0.5 * (body.M * np.einsum("ij,ij->i", g, g) + np.einsum("ij,jk,ik->i", w, body.I, w))
        assert np.all(np.diff(energy) < 0)


def test_orbit_unique_from_random_starts():
    body, R, f = offcenter_config(0.05)
    ref = integrate_periodic(body, R, f)
    rng = np.random.default_rng(11)
    for _ in range(5):
        s0 = BodyState(0.05 * rng.normal(size=3), 0.05 * rng.normal(size=3), f.b_hat)
        o = integrate_periodic(body, R, f, initial_state=s0)
        diff = max(np.abs(o.gamma - ref.gamma).max(), np.abs(o.omega - ref.omega).max(),
                   np.abs(o.b - ref.b).max())
        assert diff < 1e-10


def test_net_distance():
    class Fake:
        period = 1.0
        gamma_bar = np.array([0.05305, 0.0, 0.0])
    assert net_distance(Fake, 10.0) == 189
    assert net_distance(Fake, 0.0) == 0
    Fake.gamma_bar = np.zeros(3)
    with pytest.raises(NoPropulsionError):
        net_distance(Fake, 1.0)


def test_sweep_linear_sphere_is_exact():
    body = sphere_body()
    f = Forcing(1.0, 0.1, 1.0, [0, 0, 1], cos=(0.5,))
    res = delta_sweep(body, sphere_tensors(1.0), f, [0.1, 0.01, 0.001])
    # an absolute orbit tolerance of 1e-10 bounds gamma_bar / delta to 1e-10 / delta
    for row in res.rows:
        assert row.residual <= 1e-10 / row.delta
    assert np.allclose(res.leading_coefficient, [0, 0, 1 / (6 * math.pi)])


def test_sweep_zero_mean_force():
    body = sphere_body()
    f = Forcing(1.0, 0.1, 0.0, [0, 1, 0], cos=(1.0,))
    res = delta_sweep(body, sphere_tensors(1.0), f, [0.1, 0.05])
    assert np.allclose(res.leading_coefficient, 0)
    assert max(res.residuals) < 1e-8


def test_sweep_validation_and_single_row():
    body, R, f = offcenter_config()
    with pytest.raises(ValidationError):
        delta_sweep(body, R, f, [0.05, 0.1])
    with pytest.raises(ValidationError):
        delta_sweep(body, R, f, [0.1, 0.0])
    res = delta_sweep(body, R, f, [0.1])
    assert len(res.rows) == 1 and res.orders == [] and res.ratios == []
    assert res.to_csv().count("\n") == 2


def test_sweep_warns_when_body_tumbles():
    R = offcenter_sphere_tensors(1.0, 0.5)
    body, _, _ = offcenter_config()
    f = Forcing(1.0, 0.1, 1.0, [0.0, 0.6, 0.8])
    with pytest.warns(ConvergenceWarning):
        try:
            delta_sweep(body, R, f, [0.1], max_periods=3)
        except ConvergenceError:
            pass


def test_sweep_workers_do_not_change_results():
    body = sphere_body(r=(0.1, 0.0, 0.0))
    f = Forcing(1.0, 0.1, 1.0, [1, 0, 0], sin=(0.3,))
    R = sphere_tensors(1.0)
    a = delta_sweep(body, R, f, [0.1, 0.05], steps_per_period=256)
    b = delta_sweep(body, R, f, [0.1, 0.05], steps_per_period=256, workers=2)
    assert a.to_csv() == b.to_csv()
