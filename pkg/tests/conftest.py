"""Shared problem instances, built once per session.

The three sizes cover the test suite's needs: the desk-scale scan for
full-protocol runs, a 16x16 scan small enough for dense oracles, and a
32x32 scan for the transformed-coordinates checks.
"""

from types import SimpleNamespace

import numpy as np
import pytest

import supertomo as st


def _problem(geom, seed, mean_photons):
    projection = st.build_projection_matrix(geom)
    phantom = st.generate_phantom(st.default_head_ellipses(), geom)
    sino = st.simulate_data(projection, phantom, geom, mean_photons, seed=seed)
    return SimpleNamespace(
        geom=geom,
        projection=projection,
        phantom=phantom,
        mask=st.EllipseMask.centered(geom.grid_rows, geom.grid_cols, geom.pixel_size),
        b=sino.data,
        exact=st.matvec(projection, phantom.data),
        x0=st.Image.zeros(geom.grid_rows, geom.grid_cols),
        seed=seed,
        mean_photons=mean_photons,
    )


@pytest.fixture(scope="session")
def desk():
    return _problem(st.desk_geometry(), seed=1234, mean_photons=2e5)


@pytest.fixture(scope="session")
def small16():
    geom = st.ScanGeometry(
        n_angles=18, n_rays=23, ray_spacing=0.3,
        grid_rows=16, grid_cols=16, pixel_size=0.3,
    )
    return _problem(geom, seed=3, mean_photons=1e4)


@pytest.fixture(scope="session")
def mid32():
    geom = st.ScanGeometry(
        n_angles=30, n_rays=41, ray_spacing=0.3,
        grid_rows=32, grid_cols=32, pixel_size=0.3,
    )
    return _problem(geom, seed=5, mean_photons=2e5)
