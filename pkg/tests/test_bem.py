import math
import warnings

import numpy as np
import pytest

from stokesprop.bem import (ResistanceSet, apply_single_layer, assemble, blob_sizes,
                            compute_resistance, convergence_study, cross_matrix,
                            regularized_stokeslet, resistance_tensors, richardson,
                            solve_rigid_modes, transport_tensors)
from stokesprop.errors import ResistanceDefectError, ValidationError
from stokesprop.mesh import ellipsoid, icosphere
from stokesprop.oracles import ellipsoid_resistance
from stokesprop.propulsion import sphere_tensors

from conftest import lumpy_body, random_rotation


def test_stokeslet_far_field_and_symmetry():
    rng = np.random.default_rng(1)
    r = rng.normal(size=(5, 3)) * 50
    G = regularized_stokeslet(r, 1e-3)
    rr = np.linalg.norm(r, axis=1)
    oseen = np.eye(3) / rr[:, None, None] + r[:, :, None] * r[:, None, :] / rr[:, None, None] ** 3
    assert np.allclose(G, oseen, rtol=1e-8)
    assert np.allclose(G, np.swapaxes(G, 1, 2))
    G0 = regularized_stokeslet(np.zeros((1, 3)), 0.5)
    assert np.allclose(G0[0], 2.0 / 0.5 * np.eye(3))


def test_assembled_matrix_matches_matrix_free():
    mesh = icosphere(1.0, 1)
    A = assemble(mesh, 1.3)
    rng = np.random.default_rng(0)
    q = rng.normal(size=(2, mesh.n_panels, 3))
    direct = (A @ q.reshape(2, -1).T).T.reshape(2, mesh.n_panels, 3)
    assert np.allclose(apply_single_layer(mesh, q, 1.3), direct, rtol=1e-12, atol=1e-14)


def test_blob_sizes_scale_with_panels():
    mesh = icosphere(1.0, 2)
    eps = blob_sizes(mesh, 0.35)
    assert np.allclose(eps, 0.35 * np.sqrt(mesh.areas))


def test_sphere_sub2_drag_and_decoupling():
    R = compute_resistance(icosphere(1.0, 2), 1.0)
    assert np.allclose(R.K, R.K[0, 0] * np.eye(3), atol=1e-10 * R.K[0, 0])
    assert abs(R.K[0, 0] / (6 * math.pi) - 1) < 0.03
    assert np.linalg.norm(R.C) < 1e-10
    assert R.panel_count == 320


def test_sphere_sub3_tolerances(sphere_sub3):
    R = sphere_sub3
    assert np.linalg.norm(R.K - 6 * math.pi * np.eye(3)) / np.linalg.norm(6 * math.pi * np.eye(3)) < 0.02
    assert np.linalg.norm(R.Theta - 8 * math.pi * np.eye(3)) / np.linalg.norm(8 * math.pi * np.eye(3)) < 0.03


def test_ellipsoid_against_oracle(ellipsoid_sub3):
    K, Theta = ellipsoid_resistance((2.0, 1.0, 1.0), 1.0)
    assert np.allclose(np.diag(ellipsoid_sub3.K), K, rtol=0.02)
    assert np.allclose(np.diag(ellipsoid_sub3.Theta), Theta, rtol=0.03)
    off = ellipsoid_sub3.K - np.diag(np.diag(ellipsoid_sub3.K))
    assert np.abs(off).max() < 1e-8 * K.max()


def test_viscosity_linearity():
    mesh = icosphere(1.0, 1)
    R1 = compute_resistance(mesh, 1.0)
    R2 = compute_resistance(mesh, 2.0)
    for a, b in ((R1.K, R2.K), (R1.C, R2.C), (R1.S, R2.S), (R1.Theta, R2.Theta)):
        assert np.allclose(b, 2 * a, rtol=1e-12, atol=1e-12 * np.abs(R1.K).max())


def test_translation_is_invariant_and_transport_is_exact(stl_body):
    R0 = compute_resistance(stl_body, 1.0, np.zeros(3))
    p = np.array([0.3, -0.2, 0.1])
    direct = compute_resistance(stl_body, 1.0, p)
    moved = transport_tensors(R0, p)
    scale = np.abs(R0.grand).max()
    assert np.abs(direct.grand - moved.grand).max() < 1e-9 * scale
    back = transport_tensors(moved, np.zeros(3))
    assert np.abs(back.grand - R0.grand).max() < 1e-12 * scale


def test_transport_of_sphere_closed_form():
    a, d = 1.0, 0.5
    R = transport_tensors(sphere_tensors(a, 1.0, center=(-d, 0, 0)), np.zeros(3))
    assert np.allclose(R.C, 6 * math.pi * a * d * np.array([[0, 0, 0], [0, 0, -1], [0, 1, 0]]),
                       atol=1e-12)
    assert np.allclose(np.diag(R.Theta), 2 * math.pi * a * np.array(
        [4 * a * a, 4 * a * a + 3 * d * d, 4 * a * a + 3 * d * d]), atol=1e-12)
    assert np.allclose(R.S, R.C.T, atol=1e-14)


def test_rotation_covariance_of_bem(stl_resistance, stl_body):
    Q = random_rotation(np.random.default_rng(5))
    R_rot = compute_resistance(stl_body.transformed(rotation=Q), 1.0, np.zeros(3))
    expected = stl_resistance.rotated(Q)
    rel = np.linalg.norm(R_rot.grand - expected.grand) / np.linalg.norm(expected.grand)
    assert rel < 1e-3


def test_structural_checks_on_lumpy_body(stl_resistance):
    d = stl_resistance.check()
    assert d["K_asymmetry"] < 1e-6 and d["Theta_asymmetry"] < 1e-6
    assert d["reciprocity_scaled"] < 1e-2
    assert d["min_grand_eigenvalue"] > 0
    assert np.linalg.norm(stl_resistance.C) > 1e-3 * np.linalg.norm(stl_resistance.K)


def test_check_rejects_non_pd():
    bad = ResistanceSet(-np.eye(3), np.zeros((3, 3)), np.zeros((3, 3)), np.eye(3), np.zeros(3), 1.0)
    with pytest.raises(ResistanceDefectError):
        bad.check()
    asym = ResistanceSet(np.array([[1, 0.1, 0], [0, 1, 0], [0, 0, 1.0]]), np.zeros((3, 3)),
                         np.zeros((3, 3)), np.eye(3), np.zeros(3), 1.0)
    with pytest.raises(ResistanceDefectError):
        asym.check()


def test_resistance_dict_roundtrip(sphere_sub3):
    d = sphere_sub3.to_dict()
    assert set(d) >= {"k", "c", "s", "theta", "reference_point", "viscosity", "mesh_hash", "panel_count"}
    back = ResistanceSet.from_dict(d)
    assert np.array_equal(back.grand, sphere_sub3.grand)
    with pytest.raises(ValidationError):
        ResistanceSet.from_dict(dict(d, k=[1.0] * 8))


def test_max_panels_cap():
    with pytest.raises(ValidationError):
        solve_rigid_modes(icosphere(1.0, 2), 1.0, max_panels=100)


def test_solution_residual_small():
    sol = solve_rigid_modes(icosphere(1.0, 2), 1.0)
    assert sol.residual < 1e-10
    assert 1 < sol.condition < 1e8
    R = resistance_tensors(sol)
    assert np.allclose(R.reference_point, 0, atol=1e-12)


def test_cross_matrix():
    c = np.array([1.0, -2.0, 0.5])
    v = np.array([0.3, 0.7, -1.1])
    assert np.allclose(cross_matrix(c) @ v, np.cross(c, v))


def test_richardson_recovers_limit():
    h = np.array([1.0, 0.5, 0.25])
    values = 3.0 + 0.7 * h ** 2 - 0.1 * h ** 3
    extrap, order = richardson(values)
    assert abs(extrap - 3.0) < abs(values[-1] - 3.0) / 5
    assert 1.8 < order < 2.3
    assert richardson([1.0, 1.5], order=1.0)[0] == pytest.approx(2.0)
    with pytest.raises(ValueError):
        richardson([1.0])


def test_convergence_study_monotone():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        study = convergence_study([1, 2, 3])
    assert study.monotone
    assert all(1.5 <= q <= 4.5 for q in study.error_ratios)
    assert abs(study.extrapolated_error) < abs(study.rows[-1].K_error)
