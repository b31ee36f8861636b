"""Gaussian free field sampling and smoothing on square lattices.

Two field kinds are supported: a mean-zero field on the n x n torus whose
spectral amplitude is proportional to 1/|k| (log-correlated increments), and
a zero-boundary field on the square synthesized in the sine eigenbasis with
per-mode variance equal to the inverse of the Dirichlet Laplacian eigenvalue.

Smoothing comes in two flavors.  `mollify` convolves with the heat kernel at
time eps^2/2 across the whole torus (spectral, exact circular convolution).
`mollify_localized` multiplies the same kernel by a compactly supported
radial cutoff so that the smoothed value at a site depends only on the field
within distance eps*log(1/eps) of it; the retained kernel mass is tracked by
the normalizer `normalizer_Z` and its lattice analogue `z_epsilon`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import IntEnum
from typing import Callable, Tuple

import numpy as np
from scipy import fft as sfft
from scipy import ndimage
from scipy.integrate import simpson

from .errors import (
    InvalidArgument,
    InvalidSpec,
    MollificationTooFine,
    OutOfDomain,
)

# Coupling at and above which estimates are flagged as outside the
# regime this package is calibrated for.
XI_CRIT_REF = 0.41


# ---------------------------------------------------------------------------
# parameter and lattice types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Params:
    """Model couplings shared across the metric and renormalization layers."""

    xi: float                      # metric coupling, > 0
    gamma: float | None = None     # area coupling in (0, 2), optional

    def __post_init__(self) -> None:
        if not (isinstance(self.xi, (int, float)) and math.isfinite(self.xi)):
            raise InvalidSpec("xi must be a finite number")
        if self.xi <= 0:
            raise InvalidSpec(f"xi must be > 0, got {self.xi}")
        if self.gamma is not None:
            if not (math.isfinite(self.gamma) and 0.0 < self.gamma < 2.0):
                raise InvalidSpec(f"gamma must lie in (0, 2), got {self.gamma}")

    @property
    def supercritical(self) -> bool:
        """True when xi sits at or above the reference threshold 0.41."""
        return self.xi >= XI_CRIT_REF


@dataclass(frozen=True)
class LatticeSpec:
    """Square lattice of n x n sites with fixed spacing.

    Grid index (i, j) maps to the plane point
    (origin_x + j*spacing, origin_y + i*spacing): rows run along y.
    """

    n: int                                   # sites per axis, power of two
    spacing: float                           # lattice step, > 0
    origin: Tuple[float, float] = (0.0, 0.0)

    def __post_init__(self) -> None:
        if not isinstance(self.n, int) or self.n < 2:
            raise InvalidSpec(f"n must be an integer >= 2, got {self.n!r}")
        if self.n & (self.n - 1) != 0:
            raise InvalidSpec(f"n must be a power of two, got {self.n}")
        if not (isinstance(self.spacing, (int, float))
                and math.isfinite(self.spacing) and self.spacing > 0):
            raise InvalidSpec(f"spacing must be finite and > 0, got {self.spacing!r}")
        ox, oy = self.origin
        if not (math.isfinite(ox) and math.isfinite(oy)):
            raise InvalidSpec("origin coordinates must be finite")

    @property
    def side(self) -> float:
        """Extent of one axis including the wrap cell: n * spacing."""
        return self.n * self.spacing

    def axis_coords(self) -> Tuple[np.ndarray, np.ndarray]:
        """(x of columns, y of rows) as 1-D arrays of length n."""
        ox, oy = self.origin
        idx = np.arange(self.n, dtype=np.float64)
        return ox + idx * self.spacing, oy + idx * self.spacing

    def point_of(self, i: int, j: int) -> Tuple[float, float]:
        ox, oy = self.origin
        return (ox + j * self.spacing, oy + i * self.spacing)

    def index_of(self, point: Tuple[float, float]) -> Tuple[int, int]:
        """Snap a plane point to the nearest site.

        Exact half-spacing ties go to the smaller index on each axis, so the
        snapped index is the lexicographically smallest among nearest sites.
        """
        ox, oy = self.origin
        x, y = point
        if not (math.isfinite(x) and math.isfinite(y)):
            raise InvalidArgument("point coordinates must be finite")
        j = math.ceil((x - ox) / self.spacing - 0.5)
        i = math.ceil((y - oy) / self.spacing - 0.5)
        if not (0 <= i < self.n and 0 <= j < self.n):
            raise OutOfDomain(f"point {point} snaps outside the lattice")
        return (i, j)


class FieldKind(IntEnum):
    # Values double as the kind byte in the binary field format.
    TORUS_WHOLE_PLANE = 1
    DIRICHLET_SQUARE = 2


def _check_values(spec: LatticeSpec, values: np.ndarray) -> None:
    if not isinstance(values, np.ndarray) or values.shape != (spec.n, spec.n):
        raise InvalidSpec(f"values must be an ndarray of shape ({spec.n}, {spec.n})")
    if values.dtype != np.float64:
        raise InvalidSpec(f"values must be float64, got {values.dtype}")
    if not np.all(np.isfinite(values)):
        raise InvalidSpec("field values must all be finite")


@dataclass(frozen=True, eq=False)
class FieldSample:
    """One realization of a lattice field."""

    spec: LatticeSpec
    kind: FieldKind
    seed: int
    values: np.ndarray      # (n, n) float64; row i <-> y, column j <-> x
    mean_removed: bool
    derived: bool = False   # True for shifted / rescaled descendants

    def __post_init__(self) -> None:
        _check_values(self.spec, self.values)
        if not isinstance(self.seed, int) or not (0 <= self.seed < 2 ** 64):
            raise InvalidSpec(f"seed must be an integer in [0, 2^64), got {self.seed!r}")


@dataclass(frozen=True, eq=False)
class MollifiedField:
    """A field smoothed at scale epsilon."""

    spec: LatticeSpec
    kind: FieldKind
    epsilon: float
    values: np.ndarray
    localized: bool         # True when the truncated-window smoother was used
    z_epsilon: float        # retained kernel mass in (0, 1]; 1.0 when not localized
    source_seed: int

    def __post_init__(self) -> None:
        _check_values(self.spec, self.values)
        if not (math.isfinite(self.epsilon) and self.epsilon >= 2.0 * self.spec.spacing):
            raise MollificationTooFine(
                f"epsilon must be >= 2*spacing = {2.0 * self.spec.spacing}, got {self.epsilon}")
        if not (0.0 < self.z_epsilon <= 1.0):
            raise InvalidSpec(f"z_epsilon must lie in (0, 1], got {self.z_epsilon}")


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------

def _folded_wavenumbers(n: int) -> np.ndarray:
    """|k| over the integer wavevector grid with frequencies folded to +-n/2."""
    k = np.fft.fftfreq(n, d=1.0 / n)  # 0, 1, ..., n/2-1, -n/2, ..., -1
    kx, ky = np.meshgrid(k, k, indexing="ij")
    return np.hypot(kx, ky)


def _remove_mean(values: np.ndarray) -> np.ndarray:
    # Two subtraction passes reach the floating-point fixpoint; the residual
    # mean is below one ulp of the field scale.
    values = values - values.mean()
    values -= values.mean()
    return values


def sample_torus_gff(spec: LatticeSpec, seed: int) -> FieldSample:
    """Sample the mean-zero log-correlated field on the n x n torus.

    Synthesis is spectral: white noise is transformed, each nonzero mode is
    scaled by 1/(2*pi*|k|) with |k| the integer torus wavevector magnitude,
    the zero mode is dropped, and the inverse transform is taken.  Conjugate
    symmetry holds by construction (the noise is real), so the output is real
    up to rounding.  Increments obey
    Var(h(x) - h(y)) ~ (2/(2*pi)) * log(|x - y| / spacing) + O(1).
    """
    if spec.n < 8:
        raise InvalidSpec(f"torus sampling needs n >= 8, got {spec.n}")
    if not isinstance(seed, int) or not (0 <= seed < 2 ** 64):
        raise InvalidArgument(f"seed must be an integer in [0, 2^64), got {seed!r}")
    n = spec.n
    rng = np.random.default_rng(seed)
    noise_hat = np.fft.fft2(rng.standard_normal((n, n)))
    kmag = _folded_wavenumbers(n)
    kmag[0, 0] = np.inf  # zero mode removed exactly
    amp = n / (2.0 * np.pi * kmag)
    values = np.fft.ifft2(noise_hat * amp).real
    values = _remove_mean(np.ascontiguousarray(values))
    return FieldSample(spec=spec, kind=FieldKind.TORUS_WHOLE_PLANE, seed=seed,
                       values=values, mean_removed=True)


def sample_dirichlet_gff(spec: LatticeSpec, seed: int) -> FieldSample:
    """Sample the zero-boundary field on the square of side (n-1)*spacing.

    Interior values are a sine series with independent Gaussian coefficients
    of variance 1/lambda_pq, where lambda_pq = (pi/S)^2 (p^2 + q^2) are the
    Dirichlet Laplacian eigenvalues of the square [0, S]^2.  All four boundary
    rows of sites are exactly zero.
    """
    if spec.n < 8:
        raise InvalidSpec(f"dirichlet sampling needs n >= 8, got {spec.n}")
    if not isinstance(seed, int) or not (0 <= seed < 2 ** 64):
        raise InvalidArgument(f"seed must be an integer in [0, 2^64), got {seed!r}")
    n = spec.n
    side = (n - 1) * spec.spacing
    modes = np.arange(1, n - 1, dtype=np.float64)
    lam = (np.pi / side) ** 2 * (modes[:, None] ** 2 + modes[None, :] ** 2)
    rng = np.random.default_rng(seed)
    coeff = rng.standard_normal((n - 2, n - 2)) / np.sqrt(lam)
    # DST-I applies a factor 2 per axis relative to the plain sine sum, and
    # the continuum-normalized eigenfunctions carry 2/side.
    interior = sfft.dstn(coeff, type=1) / (2.0 * side)
    values = np.zeros((n, n), dtype=np.float64)
    values[1:-1, 1:-1] = interior
    return FieldSample(spec=spec, kind=FieldKind.DIRICHLET_SQUARE, seed=seed,
                       values=values, mean_removed=False)


# ---------------------------------------------------------------------------
# pointwise evaluation helpers
# ---------------------------------------------------------------------------

def _bilinear(values: np.ndarray, col: np.ndarray, row: np.ndarray,
              wrap: bool) -> np.ndarray:
    """Bilinear interpolation at fractional (row, col) grid positions."""
    n = values.shape[0]
    c0 = np.floor(col).astype(np.int64)
    r0 = np.floor(row).astype(np.int64)
    tc = col - c0
    tr = row - r0
    if wrap:
        c0m, c1m = c0 % n, (c0 + 1) % n
        r0m, r1m = r0 % n, (r0 + 1) % n
    else:
        # Callers guarantee containment; the clamp only absorbs the exact
        # right/top edge where the fractional part is 0 or 1.
        c0m = np.clip(c0, 0, n - 2)
        r0m = np.clip(r0, 0, n - 2)
        tc = col - c0m
        tr = row - r0m
        c1m, r1m = c0m + 1, r0m + 1
    v00 = values[r0m, c0m]
    v01 = values[r0m, c1m]
    v10 = values[r1m, c0m]
    v11 = values[r1m, c1m]
    return ((1.0 - tr) * ((1.0 - tc) * v00 + tc * v01)
            + tr * ((1.0 - tc) * v10 + tc * v11))


def circle_average(field: FieldSample, z: Tuple[float, float], r: float) -> float:
    """Average of the field over the circle of radius r about z.

    The circle is sampled at m = max(64, ceil(2*pi*r/spacing)) equally spaced
    angles and each sample is bilinearly interpolated.  The circle must lie
    inside the lattice domain.
    """
    if not (math.isfinite(r) and r > 0):
        raise InvalidArgument(f"radius must be finite and > 0, got {r}")
    spec = field.spec
    ox, oy = spec.origin
    x, y = z
    extent = (spec.n - 1) * spec.spacing
    if (x - r < ox or x + r > ox + extent or y - r < oy or y + r > oy + extent):
        raise OutOfDomain(f"circle of radius {r} about {z} exits the lattice domain")
    m = max(64, math.ceil(2.0 * np.pi * r / spec.spacing))
    theta = 2.0 * np.pi * np.arange(m) / m
    px = (x + r * np.cos(theta) - ox) / spec.spacing
    py = (y + r * np.sin(theta) - oy) / spec.spacing
    return float(_bilinear(field.values, px, py, wrap=False).mean())


# ---------------------------------------------------------------------------
# kernels
# ---------------------------------------------------------------------------

def heat_kernel(r, t: float):
    """Radial planar heat kernel p_t(r) = exp(-r^2 / (2t)) / (2*pi*t)."""
    if not (math.isfinite(t) and t > 0):
        raise InvalidArgument(f"t must be finite and > 0, got {t}")
    rr = np.abs(np.asarray(r, dtype=np.float64))
    out = np.exp(-(rr * rr) / (2.0 * t)) / (2.0 * np.pi * t)
    return float(out) if np.isscalar(r) else out


_EPS_MAX = math.exp(-1.0)


def _bump_profile(t: np.ndarray) -> np.ndarray:
    """C-infinity cutoff profile: 1 on t <= 1/2, 0 on t >= 1."""
    out = np.ones_like(t)
    out[t >= 1.0] = 0.0
    mid = (t > 0.5) & (t < 1.0)
    if np.any(mid):
        tm = t[mid]

        def f(s: np.ndarray) -> np.ndarray:
            r = np.zeros_like(s)
            pos = s > 0
            r[pos] = np.exp(-1.0 / s[pos])
            return r

        a = f(2.0 - 2.0 * tm)
        b = f(2.0 * tm - 1.0)
        out[mid] = a / (a + b)
    return out


def bump(x, epsilon: float):
    """Radial cutoff for the truncation window at scale epsilon.

    With rho = epsilon * log(1/epsilon), returns 1 for |x| <= rho/2, exactly 0
    for |x| >= rho, and the smooth profile f(2-2t)/(f(2-2t)+f(2t-1)) with
    t = |x|/rho and f(s) = exp(-1/s) in between.  Requires 0 < epsilon < 1/e
    so that rho > 0 and grows as epsilon shrinks.
    """
    if not (0.0 < epsilon < _EPS_MAX):
        raise InvalidArgument(f"epsilon must lie in (0, 1/e), got {epsilon}")
    rho = epsilon * math.log(1.0 / epsilon)
    t = np.abs(np.asarray(x, dtype=np.float64)) / rho
    out = _bump_profile(t)
    return float(out) if np.isscalar(x) else out


def normalizer_Z(epsilon: float, spacing: float) -> float:
    """Heat-kernel mass retained by the truncation window, in (0, 1].

    Computes 1 - Z directly (the cutoff complement integrates over
    [rho/2, rho] plus an analytic Gaussian tail beyond rho), so the result
    stays accurate when the complement is many orders below 1.  The radial
    quadrature step never exceeds spacing/4.
    """
    if not (0.0 < epsilon < _EPS_MAX):
        raise InvalidArgument(f"epsilon must lie in (0, 1/e), got {epsilon}")
    if not (math.isfinite(spacing) and spacing > 0):
        raise InvalidArgument(f"spacing must be finite and > 0, got {spacing}")
    rho = epsilon * math.log(1.0 / epsilon)
    step = min(spacing / 4.0, rho / 8192.0)
    count = int(math.ceil((rho / 2.0) / step)) + 1
    if count % 2 == 0:
        count += 1  # odd point count for composite Simpson
    r = np.linspace(rho / 2.0, rho, count)
    psi = _bump_profile(r / rho)
    integrand = (1.0 - psi) * (2.0 * r / epsilon ** 2) * np.exp(-(r / epsilon) ** 2)
    complement = float(simpson(integrand, x=r)) + math.exp(-(rho / epsilon) ** 2)
    return 1.0 - complement


# ---------------------------------------------------------------------------
# smoothing
# ---------------------------------------------------------------------------

def _check_moll_scale(spec: LatticeSpec, epsilon: float) -> None:
    if not (isinstance(epsilon, (int, float)) and math.isfinite(epsilon)):
        raise InvalidArgument(f"epsilon must be finite, got {epsilon!r}")
    if epsilon < 2.0 * spec.spacing:
        raise MollificationTooFine(
            f"epsilon = {epsilon} is below 2*spacing = {2.0 * spec.spacing}")


def mollify(field: FieldSample, epsilon: float) -> MollifiedField:
    """Heat-kernel smoothing at time eps^2/2 by exact circular convolution.

    The kernel is sampled at torus offsets, normalized to unit lattice sum
    (so constants pass through up to rounding), and applied spectrally.
    """
    _check_moll_scale(field.spec, epsilon)
    n = field.spec.n
    d = np.minimum(np.arange(n), n - np.arange(n)) * field.spec.spacing
    r2 = d[:, None] ** 2 + d[None, :] ** 2
    kernel = np.exp(-r2 / epsilon ** 2)  # prefactor cancels in normalization
    kernel /= kernel.sum()
    values = np.fft.ifft2(np.fft.fft2(field.values) * np.fft.fft2(kernel)).real
    return MollifiedField(spec=field.spec, kind=field.kind, epsilon=float(epsilon),
                          values=np.ascontiguousarray(values), localized=False,
                          z_epsilon=1.0, source_seed=field.seed)


def mollify_localized(field: FieldSample, epsilon: float) -> MollifiedField:
    """Heat-kernel smoothing through the compact truncation window.

    The kernel exp(-r^2/eps^2) is multiplied by the radial cutoff `bump`,
    sampled on the (2m+1)^2 site stencil covering radius
    rho = eps*log(1/eps), and applied by direct summation.  The output at a
    site therefore depends on the field only within distance rho: entries
    beyond rho are exactly zero, and a fixed summation order makes the
    locality bitwise.  Division by the stencil sum preserves constants;
    `z_epsilon` records the stencil sum relative to the full-torus kernel
    sum.
    """
    _check_moll_scale(field.spec, epsilon)
    if not (0.0 < epsilon < _EPS_MAX):
        raise InvalidArgument(
            f"localized smoothing needs epsilon in (0, 1/e), got {epsilon}")
    spec = field.spec
    n, delta = spec.n, spec.spacing
    rho = epsilon * math.log(1.0 / epsilon)
    m = int(math.ceil(rho / delta))
    if 2 * m + 1 > n:
        raise InvalidArgument(
            f"truncation window radius {rho} exceeds the torus half-width")
    off = np.arange(-m, m + 1, dtype=np.float64) * delta
    radius = np.hypot(off[:, None], off[None, :])
    stencil = _bump_profile(radius / rho) * np.exp(-(radius / epsilon) ** 2)
    stencil_sum = stencil.sum()
    # Full-torus kernel sum for the retained-mass diagnostic.
    d = np.minimum(np.arange(n), n - np.arange(n)) * delta
    full_sum = np.exp(-(d[:, None] ** 2 + d[None, :] ** 2) / epsilon ** 2).sum()
    values = ndimage.correlate(field.values, stencil, mode="wrap") / stencil_sum
    return MollifiedField(spec=spec, kind=field.kind, epsilon=float(epsilon),
                          values=np.ascontiguousarray(values), localized=True,
                          z_epsilon=float(stencil_sum / full_sum),
                          source_seed=field.seed)


# ---------------------------------------------------------------------------
# field arithmetic
# ---------------------------------------------------------------------------

def add_function(field: FieldSample, f: Callable) -> FieldSample:
    """Add a deterministic function of the plane point to the field.

    `f` is called as f(x, y); array arguments are attempted first, with a
    scalar fallback.  The result must be finite on every site.  The output is
    marked derived and loses the mean-removed flag.
    """
    xs, ys = field.spec.axis_coords()
    gx, gy = np.meshgrid(xs, ys, indexing="xy")  # gx varies along columns
    try:
        shift = np.asarray(f(gx, gy), dtype=np.float64)
        if shift.shape != gx.shape:
            shift = np.broadcast_to(shift, gx.shape).astype(np.float64)
    except Exception:
        shift = np.vectorize(lambda a, b: float(f(a, b)))(gx, gy)
    if not np.all(np.isfinite(shift)):
        raise InvalidArgument("f must be finite on every lattice site")
    values = field.values + shift
    return FieldSample(spec=field.spec, kind=field.kind, seed=field.seed,
                       values=np.ascontiguousarray(values),
                       mean_removed=False, derived=True)


def _dyadic_exponent(a: float) -> int:
    if not (isinstance(a, (int, float)) and math.isfinite(a) and a > 0):
        raise InvalidArgument(f"scale factor must be finite and > 0, got {a!r}")
    k = math.log2(a)
    if abs(k - round(k)) > 1e-12:
        raise InvalidArgument(f"scale factor must be a power of two, got {a}")
    return int(round(k))


def rescale_field(field: FieldSample, a: float, b: Tuple[float, float],
                  q_hat: float) -> FieldSample:
    """Lattice realization of x -> h(a*x + b) + q_hat*log(a).

    `a` must be a power of two with |log2 a| <= log2(n) - 3 and `b` a lattice
    point.  For a >= 1 every a-th site of the window is kept (n/a sites per
    axis at the original spacing); for a < 1 the window is refined by
    bilinear interpolation (n sites per axis).  Torus fields wrap; square
    fields must keep the window inside the domain.
    """
    spec = field.spec
    n, delta = spec.n, spec.spacing
    k = _dyadic_exponent(a)
    if abs(k) > int(math.log2(n)) - 3:
        raise InvalidArgument(
            f"|log2(a)| = {abs(k)} exceeds log2(n) - 3 = {int(math.log2(n)) - 3}")
    if not math.isfinite(q_hat):
        raise InvalidArgument("q_hat must be finite")
    ox, oy = spec.origin
    bx_f = (b[0] - ox) / delta
    by_f = (b[1] - oy) / delta
    if abs(bx_f - round(bx_f)) > 1e-9 or abs(by_f - round(by_f)) > 1e-9:
        raise InvalidArgument(f"b = {b} is not a lattice point")
    bj, bi = int(round(bx_f)), int(round(by_f))
    wrap = field.kind == FieldKind.TORUS_WHOLE_PLANE

    if k >= 0:
        step = 1 << k
        n_out = n // step
        rows = step * np.arange(n_out) + bi
        cols = step * np.arange(n_out) + bj
        if wrap:
            rows, cols = rows % n, cols % n
        elif rows.min() < 0 or cols.min() < 0 or rows.max() > n - 1 or cols.max() > n - 1:
            raise OutOfDomain("rescaled window exits the square domain")
        values = field.values[np.ix_(rows, cols)].astype(np.float64)
    else:
        n_out = n
        pos_r = a * np.arange(n, dtype=np.float64) + bi
        pos_c = a * np.arange(n, dtype=np.float64) + bj
        if not wrap and (pos_r.min() < 0 or pos_c.min() < 0
                         or pos_r.max() > n - 1 or pos_c.max() > n - 1):
            raise OutOfDomain("refined window exits the square domain")
        rr, cc = np.meshgrid(pos_r, pos_c, indexing="ij")
        values = _bilinear(field.values, cc, rr, wrap=wrap)

    values = values + q_hat * math.log(a)
    out_spec = LatticeSpec(n=n_out, spacing=delta, origin=spec.origin)
    return FieldSample(spec=out_spec, kind=field.kind, seed=field.seed,
                       values=np.ascontiguousarray(values),
                       mean_removed=False, derived=True)
