"""Shared fixtures and small builders for the test suite."""

import numpy as np
import pytest

from lfpp import LatticeSpec, Params, build_weighted_grid, sample_torus_gff
from lfpp.gff import FieldKind, FieldSample, MollifiedField


def make_moll(spec: LatticeSpec, values: np.ndarray,
              epsilon: float = None) -> MollifiedField:
    """Wrap raw values as an already-smoothed field (test injection).

    Lets metric tests pin exact site costs without running a smoother.
    """
    eps = 2.0 * spec.spacing if epsilon is None else epsilon
    return MollifiedField(spec=spec, kind=FieldKind.TORUS_WHOLE_PLANE,
                          epsilon=eps, values=np.ascontiguousarray(values),
                          localized=False, z_epsilon=1.0, source_seed=0)


def zero_grid(n: int, spacing: float, xi: float = 0.3):
    """Unit-cost weighted grid (zero field) over the full lattice."""
    spec = LatticeSpec(n=n, spacing=spacing)
    return spec, build_weighted_grid(make_moll(spec, np.zeros((n, n))), xi)


def random_grid(rng: np.random.Generator, n: int, spacing: float,
                xi: float = 0.3, scale: float = 1.0):
    spec = LatticeSpec(n=n, spacing=spacing)
    vals = scale * rng.normal(size=(n, n))
    return spec, build_weighted_grid(make_moll(spec, vals), xi)


@pytest.fixture(scope="session")
def params02() -> Params:
    return Params(xi=0.2, gamma=1.0)


@pytest.fixture(scope="session")
def field64() -> FieldSample:
    return sample_torus_gff(LatticeSpec(n=64, spacing=1.0 / 16.0), seed=404)


@pytest.fixture(scope="session")
def field128() -> FieldSample:
    return sample_torus_gff(LatticeSpec(n=128, spacing=1.0 / 32.0), seed=505)
