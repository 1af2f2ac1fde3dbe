import math

import numpy as np
import pytest

from stokesprop.bem import compute_resistance
from stokesprop.mesh import TriMesh, icosphere, ellipsoid, load_stl, mass_properties, write_stl
from stokesprop.propulsion import BodyInertia, Forcing, offcenter_sphere_tensors


def lumpy_body(subdivisions=2):
    """Star-shaped body with no symmetry plane: a radially deformed icosphere."""
    base = icosphere(1.0, subdivisions)
    v = base.vertices
    x, y, z = v.T
    radius = 1.0 + 0.25 * z + 0.15 * x * y + 0.1 * x ** 3
    v = v * radius[:, None] * np.array([1.3, 1.0, 0.8])
    return TriMesh(v, base.triangles)


def random_rotation(rng):
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


@pytest.fixture(scope="session")
def stl_body_path(tmp_path_factory):
    path = tmp_path_factory.mktemp("stl") / "lumpy.stl"
    write_stl(lumpy_body(2), path)
    return path


@pytest.fixture(scope="session")
def stl_body(stl_body_path):
    mesh = load_stl(stl_body_path)
    _, center, _ = mass_properties(mesh)
    return mesh.transformed(shift=-center)


@pytest.fixture(scope="session")
def stl_resistance(stl_body):
    return compute_resistance(stl_body, 1.0, np.zeros(3))


@pytest.fixture(scope="session")
def sphere_sub3():
    return compute_resistance(icosphere(1.0, 3), 1.0, np.zeros(3))


@pytest.fixture(scope="session")
def ellipsoid_sub3():
    return compute_resistance(ellipsoid((2.0, 1.0, 1.0), 3), 1.0, np.zeros(3))


# generic off-centre configuration used by the delta sweep checks
OFF_A, OFF_D = 1.0, 0.5
OFF_R = np.array([0.2, 0.15, -0.1])


def offcenter_config(delta=0.1):
    """Off-centre sphere, interior force point, mixed-harmonic forcing.

    The force direction runs from the geometric centre through the force
    point, which makes the mean rotation parallel to it so that a periodic
    orbit near that direction exists.
    """
    R = offcenter_sphere_tensors(OFF_A, OFF_D, 1.0)
    M = 4.0 * math.pi / 3.0
    inertia = 0.4 * M * np.eye(3) - M * OFF_D ** 2 * np.diag([0.0, 1.0, 1.0])
    body = BodyInertia(M, inertia, OFF_R)
    lever = OFF_R - np.array([-OFF_D, 0.0, 0.0])
    forcing = Forcing(1.0, delta, 1.0, lever / np.linalg.norm(lever), cos=(0.8,), sin=(0.0, 0.5))
    return body, R, forcing


def sphere_body(a=1.0, r=(0.0, 0.0, 0.0)):
    M = 4.0 * math.pi * a ** 3 / 3.0
    return BodyInertia(M, np.full(3, 0.4 * M * a * a), np.asarray(r, dtype=float))


ACCEPTANCE_LINES = []


def report(criterion, passed, detail):
    line = f"[criterion {criterion}] {'PASS' if passed else 'FAIL'}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
