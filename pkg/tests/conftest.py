import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from tanfem import geometry, shapes, surfaces  # noqa: E402


@pytest.fixture(scope="session")
def unit_sphere():
    return surfaces.sphere(1.0)


@pytest.fixture(scope="session")
def bench_ellipsoid():
    return surfaces.ellipsoid(1.0, 0.5, 1.5)


@pytest.fixture(scope="session")
def sphere_mesh_3(unit_sphere):
    return shapes.icosphere(3)


@pytest.fixture(scope="session")
def sphere_geometry_3(unit_sphere, sphere_mesh_3):
    return geometry.analytic_geometry(unit_sphere, sphere_mesh_3)


@pytest.fixture(scope="session")
def ellipsoid_mesh_3(bench_ellipsoid):
    return shapes.icosphere(3, surface=bench_ellipsoid)


@pytest.fixture(scope="session")
def ellipsoid_geometry_3(bench_ellipsoid, ellipsoid_mesh_3):
    return geometry.analytic_geometry(bench_ellipsoid, ellipsoid_mesh_3)


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
