"""Smoothing kernels: normalization, locality, retained-mass accounting."""

import math

import numpy as np
import pytest

import oracles
from lfpp import (
    InvalidArgument,
    LatticeSpec,
    MollificationTooFine,
    add_function,
    bump,
    mollify,
    mollify_localized,
    normalizer_Z,
    sample_torus_gff,
)

# Retained-mass values frozen from the 2-D Cartesian Simpson oracle in
# tests/oracles.py (z_quadrature); the implementation integrates radially.
Z_FROZEN = {
    0.2: 0.7594550414943796,
    0.1: 0.9402938815292928,
    0.05: 0.9896826374075587,
    0.01: 0.9999417590514119,
}


def torus_ball_mask(spec: LatticeSpec, site, radius: float) -> np.ndarray:
    """Sites within torus distance < radius of the given site."""
    n = spec.n
    idx = np.arange(n)
    di = np.minimum(np.abs(idx - site[0]), n - np.abs(idx - site[0]))
    dj = np.minimum(np.abs(idx - site[1]), n - np.abs(idx - site[1]))
    dist = np.hypot(di[:, None], dj[None, :]) * spec.spacing
    return dist < radius


class TestBump:
    def test_plateau_support_and_range(self):
        eps = 0.1
        rho = eps * math.log(1.0 / eps)
        assert bump(0.0, eps) == 1.0
        assert bump(0.49 * rho, eps) == 1.0
        assert bump(rho, eps) == 0.0
        assert bump(1.7 * rho, eps) == 0.0
        xs = np.linspace(0.0, 1.2 * rho, 400)
        vals = bump(xs, eps)
        assert np.all((vals >= 0.0) & (vals <= 1.0))
        mid = vals[(xs > 0.5 * rho) & (xs < rho)]
        assert np.all(np.diff(mid) <= 1e-12)   # non-increasing through the ramp

    def test_epsilon_domain(self):
        with pytest.raises(InvalidArgument):
            bump(0.1, 0.5)   # >= 1/e
        with pytest.raises(InvalidArgument):
            bump(0.1, 0.0)


class TestNormalizerZ:
    def test_matches_quadrature_oracle(self):
        for eps, frozen in Z_FROZEN.items():
            got = normalizer_Z(eps, 1.0 / 128.0)
            assert got == pytest.approx(frozen, abs=1e-12)

    def test_live_quadrature_at_one_scale(self):
        # one live run of the independent Cartesian Simpson oracle; the other
        # scales in Z_FROZEN were frozen from the same oracle
        assert normalizer_Z(0.1, 1.0 / 128.0) == pytest.approx(
            oracles.z_quadrature(0.1), abs=1e-12)

    def test_complement_bound(self):
        # 1 - Z is controlled by the Gaussian tail beyond the plateau
        for eps in Z_FROZEN:
            z = normalizer_Z(eps, 1.0 / 128.0)
            assert 0.0 < z <= 1.0
            assert 1.0 - z <= math.exp(-math.log(1.0 / eps) ** 2 / 4.0)

    def test_validation(self):
        with pytest.raises(InvalidArgument):
            normalizer_Z(0.5, 0.01)
        with pytest.raises(InvalidArgument):
            normalizer_Z(0.1, 0.0)


class TestPlainMollify:
    def test_constant_passthrough(self, field64):
        # smoothing is linear and the kernel has unit sum
        base = mollify(field64, 0.25)
        moll = mollify(add_function(field64, lambda x, y: 2.5), 0.25)
        assert np.allclose(moll.values - base.values, 2.5, rtol=0.0, atol=1e-12)

    def test_matches_direct_convolution(self):
        """FFT smoothing vs a direct O(n^4) torus convolution, n=16."""
        spec = LatticeSpec(n=16, spacing=1.0 / 4.0)
        f = sample_torus_gff(spec, 31)
        eps = 0.8
        d = np.minimum(np.arange(16), 16 - np.arange(16)) * spec.spacing
        kernel = np.exp(-(d[:, None] ** 2 + d[None, :] ** 2) / eps ** 2)
        kernel /= kernel.sum()
        idx = np.arange(16)
        direct = np.empty((16, 16))
        for i in range(16):
            for j in range(16):
                direct[i, j] = float(
                    (kernel * f.values[np.ix_((i - idx) % 16, (j - idx) % 16)]).sum())
        got = mollify(f, eps)
        assert np.allclose(got.values, direct, rtol=0.0, atol=1e-12)
        assert got.z_epsilon == 1.0 and not got.localized

    def test_floor(self, field64):
        with pytest.raises(MollificationTooFine):
            mollify(field64, 1.9 * field64.spec.spacing)


class TestLocalizedMollify:
    def test_constant_passthrough(self, field64):
        base = mollify_localized(field64, 0.25)
        shifted = mollify_localized(add_function(field64, lambda x, y: 1.25), 0.25)
        assert np.allclose(shifted.values - base.values, 1.25,
                           rtol=0.0, atol=1e-12)

    def test_exact_locality(self, field64):
        """Values outside the truncation ball never reach the output."""
        spec = field64.spec
        eps = 0.25
        rho = eps * math.log(1.0 / eps)
        base = mollify_localized(field64, eps)
        rng = np.random.default_rng(17)
        for _ in range(10):
            site = (int(rng.integers(spec.n)), int(rng.integers(spec.n)))
            keep = torus_ball_mask(spec, site, rho)
            clipped = field64.values.copy()
            clipped[~keep] = rng.normal(size=int((~keep).sum())) * 10.0
            hacked = type(field64)(spec=spec, kind=field64.kind, seed=field64.seed,
                                   values=np.ascontiguousarray(clipped),
                                   mean_removed=False, derived=True)
            out = mollify_localized(hacked, eps)
            assert out.values[site] == base.values[site]   # bitwise

    def test_z_epsilon_range_and_flags(self, field64):
        out = mollify_localized(field64, 0.25)
        assert out.localized and 0.0 < out.z_epsilon <= 1.0
        assert out.z_epsilon < 1.0   # the window genuinely truncates

    def test_gap_shrinks_along_ladder(self, field128):
        sups = []
        for eps in (0.25, 0.125, 0.0625):
            a = mollify(field128, eps)
            b = mollify_localized(field128, eps)
            sups.append(float(np.abs(a.values - b.values).max()))
        assert sups[2] < sups[0]

    def test_floors_and_window_cap(self, field64):
        with pytest.raises(MollificationTooFine):
            mollify_localized(field64, 1.9 * field64.spec.spacing)
        with pytest.raises(InvalidArgument):
            mollify_localized(field64, 0.4)   # >= 1/e
        # window wider than the torus: small n, large eps relative to side
        tiny = sample_torus_gff(LatticeSpec(n=8, spacing=0.01), 3)
        with pytest.raises(InvalidArgument):
            mollify_localized(tiny, 0.03)

    def test_determinism(self, field64):
        a = mollify_localized(field64, 0.25)
        b = mollify_localized(field64, 0.25)
        assert np.array_equal(a.values, b.values)
        assert a.z_epsilon == b.z_epsilon
