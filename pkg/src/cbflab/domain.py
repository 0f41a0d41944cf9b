"""
Truncated periodic domain and spectral field machinery.

The computational box is ``[-L, L]^d`` with ``N`` collocation points per
axis, so every retained wavevector is an integer multiple of ``pi / L``.
Velocity fields live in Fourier space as complex coefficient arrays of
shape ``(d, N, ..., N)`` normalised so that

    u(x) = sum_k uhat(k) exp(i k . x).

With that convention the discrete quadrature of ``|u|^2`` over the box and
the coefficient sum ``(2L)^d sum_k |uhat|^2`` agree exactly (Parseval), and
the divergence-free constraint is the mode-wise condition ``k . uhat(k) = 0``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field as dc_field

import numpy as np

__all__ = [
    "ShapeMismatchError",
    "TorusDomain",
    "SpectralVelocityField",
    "NormReport",
    "make_domain",
    "transform_forward",
    "transform_inverse",
    "leray_project",
    "project_coeffs",
    "dealias_coeffs",
    "inner_h",
    "norms",
    "lebesgue_norm",
    "check_interpolation",
    "mean_mode",
    "zero_field",
    "constant_field",
    "single_mode_field",
    "random_field",
    "bump_field",
    "field_from_physical",
    "save_snapshot",
    "load_snapshot",
]

DIV_TOL = 1e-10


class ShapeMismatchError(ValueError):
    """Array shape does not match the domain layout."""


@dataclass(frozen=True, eq=False)
class TorusDomain:
    """
    Periodic box ``[-L, L]^d`` with ``N`` modes per axis.

    Wavevectors are ``(pi / L) * m`` for integer mode indices ``m`` in the
    standard FFT layout with ``|m| <= N/2``.  ``dealias_fraction`` sets the
    sharp per-axis truncation used after every pointwise product: modes with
    ``|m_i| > floor(dealias_fraction * N/2)`` on any axis are discarded.
    """

    d: int
    L: float
    N: int
    dealias_fraction: float = 2.0 / 3.0

    # derived tables, filled in __post_init__
    dx: float = dc_field(init=False, repr=False)
    measure: float = dc_field(init=False, repr=False)
    mode_cut: int = dc_field(init=False, repr=False)
    modes: np.ndarray = dc_field(init=False, repr=False)
    kvec: np.ndarray = dc_field(init=False, repr=False)
    k_sq: np.ndarray = dc_field(init=False, repr=False)
    dealias_mask: np.ndarray = dc_field(init=False, repr=False)
    x_axis: np.ndarray = dc_field(init=False, repr=False)
    coords: np.ndarray = dc_field(init=False, repr=False)

    def __post_init__(self):
        if self.d not in (2, 3):
            raise ValueError(f"invalid-dimension: d must be 2 or 3, got {self.d}")
        if self.N % 2 != 0 or self.N < 4:
            raise ValueError(f"invalid-resolution: N must be even and >= 4, got {self.N}")
        if not (self.L > 0):
            raise ValueError(f"invalid-resolution: L must be positive, got {self.L}")
        if not (0.0 < self.dealias_fraction <= 1.0):
            raise ValueError(
                f"invalid-resolution: dealias_fraction must lie in (0, 1], got {self.dealias_fraction}"
            )
        d, L, N = self.d, self.L, self.N
        set_attr = object.__setattr__
        set_attr(self, "dx", 2.0 * L / N)
        set_attr(self, "measure", (2.0 * L) ** d)
        modes1 = np.fft.fftfreq(N, 1.0 / N)  # integer mode indices as floats
        set_attr(self, "modes", modes1)
        k1 = (np.pi / L) * modes1
        grids = np.meshgrid(*([k1] * d), indexing="ij")
        kvec = np.stack(grids)
        set_attr(self, "kvec", kvec)
        set_attr(self, "k_sq", np.sum(kvec**2, axis=0))
        cut = math.floor(self.dealias_fraction * (N // 2))
        set_attr(self, "mode_cut", cut)
        mgrids = np.meshgrid(*([modes1] * d), indexing="ij")
        mask = np.ones_like(mgrids[0], dtype=bool)
        for mg in mgrids:
            mask &= np.abs(mg) <= cut
        set_attr(self, "dealias_mask", mask)
        x1 = -L + self.dx * np.arange(N)
        set_attr(self, "x_axis", x1)
        xg = np.meshgrid(*([x1] * d), indexing="ij")
        set_attr(self, "coords", np.stack(xg))
        # centering phase (-1)^(sum m_i): FFT index space samples at x = 0,
        # the box is centered, so true e^{i k . x} coefficients carry it
        parity = np.zeros(mgrids[0].shape, dtype=int)
        for mg in mgrids:
            parity += np.abs(mg).astype(int)
        set_attr(self, "phase", 1.0 - 2.0 * (parity % 2))

    def __eq__(self, other):
        if not isinstance(other, TorusDomain):
            return NotImplemented
        return (self.d, self.L, self.N, self.dealias_fraction) == (
            other.d, other.L, other.N, other.dealias_fraction
        )

    def __hash__(self):
        return hash((self.d, self.L, self.N, self.dealias_fraction))

    @property
    def spatial_axes(self):
        return tuple(range(1, self.d + 1))

    @property
    def shape(self):
        return (self.d,) + (self.N,) * self.d

    def radius_sq_grid(self):
        """Pointwise ``|x|^2`` on the collocation grid."""
        return np.sum(self.coords**2, axis=0)


def make_domain(d, L, N, dealias_fraction=2.0 / 3.0) -> "TorusDomain":
    """Build the periodic box together with its wavevector tables."""
    return TorusDomain(d=d, L=float(L), N=int(N), dealias_fraction=float(dealias_fraction))


@dataclass
class SpectralVelocityField:
    """
    Divergence-free velocity field stored as Fourier coefficients.

    Coefficients have shape ``(d, N, ..., N)``.  Construction enforces the
    discrete incompressibility constraint ``max_k |k . uhat| <= 1e-10 |uhat|``;
    arrays coming from raw data should go through :func:`leray_project` first.
    """

    domain: TorusDomain
    coeffs: np.ndarray

    def __post_init__(self):
        dom = self.domain
        arr = np.asarray(self.coeffs, dtype=np.complex128)
        if arr.shape != dom.shape:
            raise ShapeMismatchError(f"expected coeffs of shape {dom.shape}, got {arr.shape}")
        self.coeffs = arr
        scale = np.linalg.norm(arr)
        if scale > 0:
            div = np.abs(np.sum(dom.kvec * arr, axis=0)).max()
            if div > DIV_TOL * scale:
                raise ValueError(
                    f"field is not divergence-free: max |k.uhat| = {div:.3e} "
                    f"exceeds {DIV_TOL:.0e} * |uhat| = {DIV_TOL * scale:.3e}"
                )

    def copy(self) -> "SpectralVelocityField":
        return SpectralVelocityField(self.domain, self.coeffs.copy())


@dataclass(frozen=True)
class NormReport:
    """Squared energy norms of one field plus requested Lebesgue norms."""

    h_norm_sq: float
    grad_norm_sq: float
    v_norm_sq: float
    vprime_norm_sq: float
    lp_norm: dict


# ---------------------------------------------------------------------------
# transforms and projection


def transform_forward(domain, samples):
    """Physical samples ``(d, N, ..., N)`` -> Fourier coefficients."""
    samples = np.asarray(samples)
    if samples.shape != domain.shape:
        raise ShapeMismatchError(f"expected samples of shape {domain.shape}, got {samples.shape}")
    return domain.phase * np.fft.fftn(samples, axes=domain.spatial_axes) / domain.N**domain.d


def transform_inverse(domain, coeffs):
    """Fourier coefficients -> real physical samples on the grid."""
    coeffs = np.asarray(coeffs)
    if coeffs.shape != domain.shape:
        raise ShapeMismatchError(f"expected coeffs of shape {domain.shape}, got {coeffs.shape}")
    return np.real(np.fft.ifftn(domain.phase * coeffs, axes=domain.spatial_axes)) * domain.N**domain.d


def project_coeffs(domain, raw):
    """Mode-wise solenoidal projection ``uhat -> uhat - k (k.uhat)/|k|^2``."""
    raw = np.asarray(raw, dtype=np.complex128)
    if raw.shape != domain.shape:
        raise ShapeMismatchError(f"expected coeffs of shape {domain.shape}, got {raw.shape}")
    k_sq_safe = np.where(domain.k_sq == 0.0, 1.0, domain.k_sq)
    # second pass drops the roundoff divergence to eps * output scale, so the
    # constructed field passes its own relative divergence invariant even
    # when the projection annihilates the input
    out = raw
    for _ in range(2):
        k_dot_u = np.sum(domain.kvec * out, axis=0)
        out = out - domain.kvec * (k_dot_u / k_sq_safe)
    return out


def dealias_coeffs(domain, raw):
    return raw * domain.dealias_mask


def leray_project(domain, raw) -> SpectralVelocityField:
    """Project raw coefficients onto the divergence-free subspace."""
    return SpectralVelocityField(domain, project_coeffs(domain, raw))


# ---------------------------------------------------------------------------
# norms and inner products


def inner_h(a: SpectralVelocityField, b: SpectralVelocityField) -> float:
    """L^2 inner product of two fields over the box."""
    if a.domain is not b.domain and a.domain != b.domain:
        raise ShapeMismatchError("fields live on different domains")
    return a.domain.measure * float(np.real(np.sum(a.coeffs * np.conj(b.coeffs))))


def lebesgue_norm(field: SpectralVelocityField, p: float) -> float:
    """``(integral |u|^p dx)^(1/p)`` by collocation quadrature."""
    if not (1.0 <= p < np.inf):
        raise ValueError(f"invalid-exponent: p must lie in [1, inf), got {p}")
    dom = field.domain
    u = transform_inverse(dom, field.coeffs)
    speed = np.sqrt(np.sum(u**2, axis=0))
    return float((np.sum(speed**p) * dom.dx**dom.d) ** (1.0 / p))


def norms(field: SpectralVelocityField, p_list=()) -> NormReport:
    """Energy norms via Parseval; Lebesgue norms via grid quadrature."""
    dom = field.domain
    c2 = np.abs(field.coeffs) ** 2
    h = dom.measure * float(np.sum(c2))
    grad = dom.measure * float(np.sum(dom.k_sq * c2))
    vprime = dom.measure * float(np.sum(c2 / (1.0 + dom.k_sq)))
    lp = {float(p): lebesgue_norm(field, float(p)) for p in p_list}
    return NormReport(
        h_norm_sq=h,
        grad_norm_sq=grad,
        v_norm_sq=h + grad,
        vprime_norm_sq=vprime,
        lp_norm=lp,
    )


def check_interpolation(field, s1, s, s2):
    """
    Evaluate both sides of the Lebesgue interpolation inequality
    ``|u|_s <= |u|_{s1}^l |u|_{s2}^(1-l)`` with ``1/s = l/s1 + (1-l)/s2``.
    Returns ``(lhs, rhs)``.
    """
    if not (1.0 <= s1 <= s <= s2 < np.inf):
        raise ValueError(f"invalid-exponent ordering: need 1 <= s1 <= s <= s2 < inf, got {(s1, s, s2)}")
    if s1 == s2:
        ell = 1.0
    else:
        ell = (1.0 / s - 1.0 / s2) / (1.0 / s1 - 1.0 / s2)
    lhs = lebesgue_norm(field, s)
    rhs = lebesgue_norm(field, s1) ** ell * lebesgue_norm(field, s2) ** (1.0 - ell)
    return lhs, rhs


def mean_mode(field: SpectralVelocityField) -> np.ndarray:
    """The (unconstrained but reported) k = 0 coefficient, one entry per component."""
    idx = (slice(None),) + (0,) * field.domain.d
    return field.coeffs[idx].copy()


# ---------------------------------------------------------------------------
# field constructors


def zero_field(domain) -> SpectralVelocityField:
    return SpectralVelocityField(domain, np.zeros(domain.shape, dtype=np.complex128))


def constant_field(domain, vector) -> SpectralVelocityField:
    """Spatially constant velocity; only the k = 0 mode is populated."""
    vector = np.asarray(vector, dtype=float)
    if vector.shape != (domain.d,):
        raise ShapeMismatchError(f"expected a {domain.d}-vector, got shape {vector.shape}")
    coeffs = np.zeros(domain.shape, dtype=np.complex128)
    idx = (slice(None),) + (0,) * domain.d
    coeffs[idx] = vector
    return SpectralVelocityField(domain, coeffs)


def _unit_orthogonal(m):
    """A deterministic unit vector orthogonal to integer mode vector m."""
    m = np.asarray(m, dtype=float)
    if np.all(m == 0):
        e = np.zeros_like(m)
        e[0] = 1.0
        return e
    if m.size == 2:
        e = np.array([-m[1], m[0]])
    else:
        probe = np.zeros(3)
        probe[int(np.argmin(np.abs(m)))] = 1.0
        e = np.cross(m, probe)
    return e / np.linalg.norm(e)


def single_mode_field(domain, mode, amplitude=1.0) -> SpectralVelocityField:
    """
    Real divergence-free field ``amp * e * cos(k.x)`` for one integer mode.

    ``e`` is a deterministic unit vector orthogonal to the mode, so the field
    is solenoidal exactly.  ``mode = 0`` gives a constant field along x.
    """
    mode = np.asarray(mode, dtype=int)
    if mode.shape != (domain.d,):
        raise ShapeMismatchError(f"expected a {domain.d}-component mode index")
    if np.any(np.abs(mode) > domain.N // 2):
        raise ValueError(f"mode {mode} exceeds the resolved band |m| <= {domain.N // 2}")
    if np.all(mode == 0):
        vec = np.zeros(domain.d)
        vec[0] = amplitude
        return constant_field(domain, vec)
    e = _unit_orthogonal(mode)
    coeffs = np.zeros(domain.shape, dtype=np.complex128)
    pos = tuple(int(m) % domain.N for m in mode)
    neg = tuple(int(-m) % domain.N for m in mode)
    for comp in range(domain.d):
        coeffs[(comp,) + pos] = 0.5 * amplitude * e[comp]
        coeffs[(comp,) + neg] = 0.5 * amplitude * e[comp]
    return SpectralVelocityField(domain, coeffs)


def _conjugate_symmetrize(domain, raw):
    """Enforce uhat(-k) = conj(uhat(k)) by averaging with the reflected array."""
    axes = domain.spatial_axes
    flipped = np.conj(np.flip(raw, axis=axes))
    flipped = np.roll(flipped, shift=[1] * len(axes), axis=axes)
    return 0.5 * (raw + flipped)


def random_field(domain, seed, amplitude=1.0, max_mode=None, spectral_slope=2.0) -> SpectralVelocityField:
    """
    Smooth random divergence-free field, deterministic per seed.

    Coefficients are complex Gaussians shaped by ``(1 + |k|^2)^(-slope/2)``,
    conjugate-symmetrised, dealiased, projected, then rescaled so that the
    L^2 norm equals ``amplitude``.
    """
    rng = np.random.default_rng(seed)
    shape = domain.shape
    raw = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    raw *= (1.0 + domain.k_sq) ** (-spectral_slope / 2.0)
    if max_mode is not None:
        mgrids = np.meshgrid(*([domain.modes] * domain.d), indexing="ij")
        keep = np.ones_like(mgrids[0], dtype=bool)
        for mg in mgrids:
            keep &= np.abs(mg) <= max_mode
        raw *= keep
    raw = _conjugate_symmetrize(domain, raw)
    raw = dealias_coeffs(domain, raw)
    raw = project_coeffs(domain, raw)
    norm = math.sqrt(domain.measure) * np.linalg.norm(raw)
    if norm > 0:
        raw *= amplitude / norm
    return SpectralVelocityField(domain, raw)


def bump_field(domain, center=None, width=1.0, amplitude=1.0, support_radius=None) -> SpectralVelocityField:
    """
    Localised divergence-free eddy from a Gaussian stream function.

    2D: ``u = perp-grad psi``; 3D: ``u = curl (psi e_z)``.  When
    ``support_radius`` is given, psi is multiplied by a smooth cutoff that
    vanishes for ``|x - center| >= support_radius`` so the velocity is
    compactly supported before spectral truncation.
    """
    dom = domain
    if center is None:
        center = np.zeros(dom.d)
    center = np.asarray(center, dtype=float)
    rel = dom.coords - center.reshape((dom.d,) + (1,) * dom.d)
    r_sq = np.sum(rel**2, axis=0)
    psi = amplitude * np.exp(-r_sq / (2.0 * width**2))
    if support_radius is not None:
        inner_r = support_radius / math.sqrt(2.0)
        s = r_sq / inner_r**2
        psi = psi * (1.0 - _smoothstep(s))
    psi_hat = dom.phase * np.fft.fftn(psi) / dom.N**dom.d
    k = dom.kvec
    coeffs = np.zeros(dom.shape, dtype=np.complex128)
    if dom.d == 2:
        coeffs[0] = -1j * k[1] * psi_hat
        coeffs[1] = 1j * k[0] * psi_hat
    else:
        coeffs[0] = 1j * k[1] * psi_hat
        coeffs[1] = -1j * k[0] * psi_hat
    raw = dealias_coeffs(dom, coeffs)
    return leray_project(dom, raw)


def _smoothstep(s):
    """Quintic ramp: 0 for s <= 1, 1 for s >= 2, C^2 monotone in between."""
    x = np.clip((np.asarray(s, dtype=float) - 1.0), 0.0, 1.0)
    return x**3 * (10.0 - 15.0 * x + 6.0 * x**2)


def field_from_physical(domain, samples, project=True, dealias=True) -> SpectralVelocityField:
    """Build a field from grid samples, optionally dealiasing and projecting."""
    raw = transform_forward(domain, samples)
    if dealias:
        raw = dealias_coeffs(domain, raw)
    if project:
        raw = project_coeffs(domain, raw)
    return SpectralVelocityField(domain, raw)


# ---------------------------------------------------------------------------
# snapshot files


def save_snapshot(field: SpectralVelocityField, path, time=0.0):
    """
    Write one field to disk: a JSON header line followed by CSV rows
    ``kx, ky[, kz], re_u1, im_u1, ...``.  Floats are written with ``repr`` so
    the round trip is bit exact.
    """
    dom = field.domain
    header = {
        "d": dom.d,
        "L": dom.L,
        "N": dom.N,
        "dealias_fraction": dom.dealias_fraction,
        "time": float(time),
    }
    k_cols = ["kx", "ky", "kz"][: dom.d]
    u_cols = []
    for comp in range(dom.d):
        u_cols += [f"re_u{comp + 1}", f"im_u{comp + 1}"]
    with open(path, "w") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        fh.write(",".join(k_cols + u_cols) + "\n")
        k1 = (np.pi / dom.L) * dom.modes
        for idx in np.ndindex(*(dom.N,) * dom.d):
            row = [repr(float(k1[i])) for i in idx]
            for comp in range(dom.d):
                c = field.coeffs[(comp,) + idx]
                row += [repr(float(c.real)), repr(float(c.imag))]
            fh.write(",".join(row) + "\n")


def load_snapshot(path):
    """Read a snapshot file back; returns ``(field, time)``."""
    with open(path) as fh:
        header = json.loads(fh.readline())
        fh.readline()  # column names
        dom = make_domain(header["d"], header["L"], header["N"], header["dealias_fraction"])
        coeffs = np.zeros(dom.shape, dtype=np.complex128)
        k1 = (np.pi / dom.L) * dom.modes
        for idx in np.ndindex(*(dom.N,) * dom.d):
            parts = fh.readline().split(",")
            for i, axis_idx in enumerate(idx):
                if float(parts[i]) != float(k1[axis_idx]):
                    raise ValueError(f"snapshot row order mismatch at {idx}")
            for comp in range(dom.d):
                re = float(parts[dom.d + 2 * comp])
                im = float(parts[dom.d + 2 * comp + 1])
                coeffs[(comp,) + idx] = complex(re, im)
    return SpectralVelocityField(dom, coeffs), header["time"]
