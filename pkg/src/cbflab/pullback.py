"""
Pullback dynamics layer: solution cocycles, absorbing radii, attractor
sampling, semicontinuity sweeps, and the large-radius tail diagnostic.

The deterministic cocycle evolves an initial state from time ``tau`` for a
duration ``t``.  The stochastic cocycle wraps the initial state with the
conjugation factor of the shifted path, solves the pathwise system, and
unwraps at the endpoint:

    Phi(t, tau, omega, u0) = v(t + tau, tau, theta_{-tau} omega, z(tau) u0) / z(t + tau)

Attractor "samples" are endpoint clouds of tempered initial families pulled
back from increasingly distant starting times; convergence of those clouds
is diagnosed, never proved.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .domain import SpectralVelocityField, project_coeffs, dealias_coeffs, transform_inverse
from .integrators import SolverConfig, Trajectory, solve
from .operators import PhysicalParameters
from .stochastic import (
    ForcingProfile,
    WienerPath,
    shift_path,
    weighted_forcing_integral,
)

__all__ = [
    "EmptySetError",
    "TemperedFamily",
    "AbsorbingEstimate",
    "AttractorSample",
    "SemicontinuityRow",
    "cocycle_eval",
    "cocycle_trajectory",
    "absorbing_radius_det",
    "absorbing_radius_stoch",
    "measure_absorption",
    "sample_attractor",
    "hausdorff_semidistance",
    "semicontinuity_sweep",
    "cutoff_xi",
    "tail_mass",
]


class EmptySetError(ValueError):
    """Hausdorff semi-distance needs non-empty clouds."""


def _pmap(fn, items, workers=1):
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# tempered initial families


@dataclass(frozen=True)
class TemperedFamily:
    """
    Centered ball family in a fixed low-mode subspace.

    ``radius_fn`` maps pullback age ``t >= 0`` to the ball radius; growth must
    be sub-exponential, which is probed on the ladder ``{10, 20, 40, 80}`` at
    construction.  Samples are drawn uniformly in the ball (Gaussian
    direction on the low-mode divergence-free subspace, radius ``rho * U^(1/n)``)
    and are deterministic per ``(sampler_seed, age)``.  With
    ``include_boundary`` the family also contains one spatially constant
    state of full radius, the slowest-decaying direction.
    """

    radius_fn: Callable[[float], float]
    sample_count: int = 8
    sampler_seed: int = 0
    max_mode: int = 2
    include_boundary: bool = False

    def __post_init__(self):
        fn = self.radius_fn
        if not callable(fn):
            rho = float(fn)
            fn = lambda t: rho
            object.__setattr__(self, "radius_fn", fn)
        ladder = [10.0, 20.0, 40.0, 80.0]
        probe = [math.exp(-t) * fn(t) ** 2 for t in ladder]
        if any(b >= a for a, b in zip(probe, probe[1:])):
            raise ValueError("family is not tempered: e^{-t} rho(t)^2 fails to decrease on the test ladder")
        if self.sample_count < 1:
            raise ValueError("sample_count must be >= 1")

    def samples(self, domain, age) -> list:
        """Initial states for a pullback of the given age."""
        rho = float(self.radius_fn(age))
        age_bits = int(np.float64(age).view(np.uint64))
        rng = np.random.default_rng([self.sampler_seed, age_bits])
        mgrids = np.meshgrid(*([domain.modes] * domain.d), indexing="ij")
        keep = np.ones_like(mgrids[0], dtype=bool)
        for mg in mgrids:
            keep &= np.abs(mg) <= self.max_mode
        n_modes = int(keep.sum())
        n_dof = (domain.d - 1) * max(n_modes - 1, 0) + domain.d
        out = []
        n_random = self.sample_count - (1 if self.include_boundary else 0)
        for _ in range(max(n_random, 0)):
            raw = rng.standard_normal(domain.shape) + 1j * rng.standard_normal(domain.shape)
            raw *= keep
            axes = domain.spatial_axes
            flipped = np.conj(np.flip(raw, axis=axes))
            flipped = np.roll(flipped, shift=[1] * len(axes), axis=axes)
            raw = 0.5 * (raw + flipped)
            raw = project_coeffs(domain, dealias_coeffs(domain, raw))
            norm = math.sqrt(domain.measure) * np.linalg.norm(raw)
            radius = rho * rng.uniform() ** (1.0 / n_dof)
            if norm > 0:
                raw *= radius / norm
            out.append(SpectralVelocityField(domain, raw))
        if self.include_boundary:
            coeffs = np.zeros(domain.shape, dtype=np.complex128)
            idx = (0,) + (0,) * domain.d
            coeffs[idx] = rho / math.sqrt(domain.measure)
            out.append(SpectralVelocityField(domain, coeffs))
        return out


# ---------------------------------------------------------------------------
# cocycles


def cocycle_eval(kind, t, tau, omega: Optional[WienerPath], initial: SpectralVelocityField,
                 params: PhysicalParameters, profile: ForcingProfile,
                 config: SolverConfig) -> SpectralVelocityField:
    """
    Endpoint of the solution cocycle after time ``t`` starting at ``tau``.

    ``kind='det'`` integrates the deterministic system.  ``kind='stoch'``
    performs the conjugation wrap/unwrap around a pathwise solve driven by
    the shifted path; with ``params.epsilon = 0`` both kinds coincide
    bit for bit.
    """
    if t < 0:
        raise ValueError("cocycle time must be >= 0")
    if t == 0:
        return initial.copy()
    cfg = config.with_times(tau, tau + t)
    if kind == "det":
        traj = solve("deterministic", initial, cfg, params, profile)
        return traj.states[-1]
    if kind != "stoch":
        raise ValueError(f"unknown cocycle kind {kind!r}")
    if omega is None:
        raise ValueError("the stochastic cocycle needs a sampled path")
    shifted = shift_path(omega, -tau)
    z_start = math.exp(-params.epsilon * shifted.value(tau))
    wrapped = SpectralVelocityField(initial.domain, z_start * initial.coeffs)
    traj = solve("conjugated", wrapped, cfg, params, profile, path=shifted)
    z_end = math.exp(-params.epsilon * shifted.value(tau + t))
    return SpectralVelocityField(initial.domain, traj.states[-1].coeffs / z_end)


def cocycle_trajectory(kind, t, tau, omega, initial, params, profile, config) -> Trajectory:
    """Full trajectory behind :func:`cocycle_eval` (conjugated variables for 'stoch')."""
    cfg = config.with_times(tau, tau + t)
    if kind == "det":
        return solve("deterministic", initial, cfg, params, profile)
    shifted = shift_path(omega, -tau)
    z_start = math.exp(-params.epsilon * shifted.value(tau))
    wrapped = SpectralVelocityField(initial.domain, z_start * initial.coeffs)
    return solve("conjugated", wrapped, cfg, params, profile, path=shifted)


# ---------------------------------------------------------------------------
# absorbing radii


@dataclass(frozen=True)
class AbsorbingEstimate:
    """Absorbing-ball radius (squared) with its two-summand breakdown."""

    radius_sq: float
    constant_term: float
    integral_term: float
    tail_bound: float
    entry_time: Optional[float] = None
    companion_radius_sq: Optional[float] = None
    rung_max_norm_sq: Optional[tuple] = None
    horizons: Optional[tuple] = None


def absorbing_radius_det(tau, params: PhysicalParameters, profile: ForcingProfile,
                         rel_tol=1e-6) -> AbsorbingEstimate:
    """Deterministic radius ``1 + (1/min(mu, a)) int e^{a(s - tau)} |f|^2_{V'} ds``."""
    if profile.is_zero:
        return AbsorbingEstimate(1.0, 1.0, 0.0, 0.0)
    mn = min(params.mu, params.alpha)
    integ = weighted_forcing_integral(profile, tau, params.alpha, "vprime", rel_tol=rel_tol)
    term = math.exp(-params.alpha * tau) / mn * integ.value
    return AbsorbingEstimate(1.0 + term, 1.0, term, integ.tail_bound)


def absorbing_radius_stoch(tau, omega: WienerPath, epsilon, params: PhysicalParameters,
                           profile: ForcingProfile, rel_tol=1e-6) -> AbsorbingEstimate:
    """
    Pathwise radius

        M(tau, omega) = z(tau)^(-2) [ 1 + (1/min(mu, a)) int e^{a(s-tau)} z(s)^2 |f|^2 ds ]

    with z built on the shifted path, together with the epsilon-free
    companion bound using ``exp(2 |omega|)`` weights.  The companion
    dominates the radius for every noise intensity in (0, 1].
    """
    shifted = shift_path(omega, -tau)
    z_tau = math.exp(-epsilon * shifted.value(tau))
    mn = min(params.mu, params.alpha)
    if profile.is_zero:
        m_eps = z_tau**-2.0
        companion = math.exp(2.0 * abs(omega.value(-tau)))
        return AbsorbingEstimate(m_eps, z_tau**-2.0, 0.0, 0.0, companion_radius_sq=companion)
    integ = weighted_forcing_integral(
        profile, tau, params.alpha, "vprime", path=shifted, epsilon=epsilon, weight="z2",
        rel_tol=rel_tol,
    )
    term = z_tau**-2.0 * math.exp(-params.alpha * tau) / mn * integ.value
    m_eps = z_tau**-2.0 + term
    comp_int = weighted_forcing_integral(
        profile, tau, params.alpha, "vprime", path=omega, epsilon=epsilon, weight="exp_abs",
        rel_tol=rel_tol,
    )
    companion = (
        math.exp(2.0 * abs(omega.value(-tau)))
        + math.exp(-params.alpha * tau) / mn * comp_int.value
    )
    return AbsorbingEstimate(
        m_eps, z_tau**-2.0, term, integ.tail_bound, companion_radius_sq=companion
    )


# ---------------------------------------------------------------------------
# absorption measurement and attractor sampling


def _h_norm_sq(field: SpectralVelocityField) -> float:
    return field.domain.measure * float(np.sum(np.abs(field.coeffs) ** 2))


def measure_absorption(kind, tau, omega, epsilon, family: TemperedFamily,
                       params: PhysicalParameters, profile: ForcingProfile,
                       horizons: Sequence[float], config: SolverConfig,
                       domain=None, workers=1, slack=1e-6) -> AbsorbingEstimate:
    """
    Pull the family back from ``tau - t`` for each horizon ``t`` and record
    the first ladder rung after which every endpoint stays inside the
    absorbing ball.  ``entry_time`` is None when absorption is not observed
    within the ladder (reported, not fatal).
    """
    horizons = list(horizons)
    if any(b <= a for a, b in zip(horizons, horizons[1:])):
        raise ValueError("horizons must increase strictly")
    if kind == "det":
        est = absorbing_radius_det(tau, params, profile)
    else:
        est = absorbing_radius_stoch(tau, omega, epsilon, params, profile)
        params = PhysicalParameters(params.d, params.mu, params.alpha, params.beta,
                                    params.r, epsilon)
    if domain is None:
        raise ValueError("measure_absorption needs the spectral domain")

    def endpoint_max(t):
        starts = family.samples(domain, t)
        pulled = shift_path(omega, -t) if kind == "stoch" else None
        ends = _pmap(
            lambda s: cocycle_eval(kind, t, tau - t, pulled, s, params, profile, config),
            starts,
            workers,
        )
        return max(_h_norm_sq(e) for e in ends)

    max_norms = [endpoint_max(t) for t in horizons]
    threshold = est.radius_sq * (1.0 + slack)
    absorbed = [m <= threshold for m in max_norms]
    entry = None
    for i in range(len(horizons)):
        if all(absorbed[i:]):
            entry = horizons[i]
            break
    return AbsorbingEstimate(
        radius_sq=est.radius_sq,
        constant_term=est.constant_term,
        integral_term=est.integral_term,
        tail_bound=est.tail_bound,
        entry_time=entry,
        companion_radius_sq=est.companion_radius_sq,
        rung_max_norm_sq=tuple(max_norms),
        horizons=tuple(horizons),
    )


@dataclass(frozen=True)
class AttractorSample:
    tau: float
    epsilon: float
    points: list
    horizons: tuple
    convergence_diag: tuple
    diag_decreasing: bool


def _thin_cloud(points, cap=256):
    """Farthest-point thinning of a coefficient cloud to at most ``cap`` points."""
    if len(points) <= cap:
        return points
    flat = np.array([p.coeffs.ravel() for p in points])
    chosen = [0]
    d_min = np.linalg.norm(flat - flat[0], axis=1)
    while len(chosen) < cap:
        nxt = int(np.argmax(d_min))
        chosen.append(nxt)
        d_min = np.minimum(d_min, np.linalg.norm(flat - flat[nxt], axis=1))
    return [points[i] for i in chosen]


def sample_attractor(kind, tau, omega, epsilon, params: PhysicalParameters,
                     profile: ForcingProfile, horizons: Sequence[float],
                     family: TemperedFamily, config: SolverConfig,
                     domain=None, workers=1) -> AttractorSample:
    """
    Endpoint clouds of the family for increasing pullback horizons.  The
    Hausdorff distance between successive clouds is the convergence
    diagnostic; the final cloud is the attractor sample.
    """
    horizons = list(horizons)
    if any(b <= a for a, b in zip(horizons, horizons[1:])):
        raise ValueError("horizons must increase strictly")
    if domain is None:
        raise ValueError("sample_attractor needs the spectral domain")
    if kind == "stoch":
        params = PhysicalParameters(params.d, params.mu, params.alpha, params.beta,
                                    params.r, epsilon)

    clouds = []
    for t in horizons:
        starts = family.samples(domain, t)
        pulled = shift_path(omega, -t) if kind == "stoch" else None
        ends = _pmap(
            lambda s: cocycle_eval(kind, t, tau - t, pulled, s, params, profile, config),
            starts,
            workers,
        )
        clouds.append(_thin_cloud(ends))
    diag = tuple(
        hausdorff_semidistance(clouds[i + 1], clouds[i]) for i in range(len(clouds) - 1)
    )
    decreasing = all(b <= a + 1e-12 for a, b in zip(diag, diag[1:]))
    return AttractorSample(
        tau=tau,
        epsilon=epsilon,
        points=clouds[-1],
        horizons=tuple(horizons),
        convergence_diag=diag,
        diag_decreasing=decreasing,
    )


def hausdorff_semidistance(a, b) -> float:
    """
    ``sup_{x in a} inf_{y in b} d(x, y)``; asymmetric.  Accepts lists of
    spectral fields (L^2 metric) or plain point arrays (Euclidean metric).
    """
    if len(a) == 0 or len(b) == 0:
        raise EmptySetError("empty-set: both clouds must be non-empty")
    if isinstance(a[0], SpectralVelocityField):
        scale = math.sqrt(a[0].domain.measure)
        fa = np.array([p.coeffs.ravel() for p in a])
        fb = np.array([p.coeffs.ravel() for p in b])
    else:
        scale = 1.0
        fa = np.atleast_2d(np.asarray(a, dtype=float))
        fb = np.atleast_2d(np.asarray(b, dtype=float))
    worst = 0.0
    for row in fa:
        d = np.min(np.linalg.norm(fb - row, axis=1))
        worst = max(worst, float(d))
    return scale * worst


@dataclass(frozen=True)
class SemicontinuityRow:
    epsilon: float
    dist: float
    radius_sq: float


@dataclass(frozen=True)
class SemicontinuitySweep:
    rows: tuple
    base_radius_sq: float
    weakly_decreasing: bool
    final_is_min: bool


def semicontinuity_sweep(tau, omega: WienerPath, eps_ladder, params: PhysicalParameters,
                         profile: ForcingProfile, horizons, family: TemperedFamily,
                         config: SolverConfig, domain=None, workers=1) -> SemicontinuitySweep:
    """
    Distance from each noisy attractor sample to the noise-free sample along
    a decreasing intensity ladder, with the pathwise absorbing radius per
    intensity.  Reports the trend flags; certifying the actual limit is
    beyond any finite ladder.
    """
    eps_ladder = list(eps_ladder)
    if any(not (0.0 < e <= 1.0) for e in eps_ladder):
        raise ValueError("intensity ladder must lie in (0, 1]")
    if any(b >= a for a, b in zip(eps_ladder, eps_ladder[1:])):
        raise ValueError("intensity ladder must decrease strictly")
    base = sample_attractor("det", tau, None, 0.0, params, profile, horizons, family,
                            config, domain=domain, workers=workers)
    base_radius = absorbing_radius_det(tau, params, profile).radius_sq
    rows = []
    for eps in eps_ladder:
        samp = sample_attractor("stoch", tau, omega, eps, params, profile, horizons,
                                family, config, domain=domain, workers=workers)
        radius = absorbing_radius_stoch(tau, omega, eps, params, profile).radius_sq
        rows.append(SemicontinuityRow(
            epsilon=eps,
            dist=hausdorff_semidistance(samp.points, base.points),
            radius_sq=radius,
        ))
    dists = [r.dist for r in rows]
    weakly_dec = all(b <= a * (1.0 + 1e-9) + 1e-15 for a, b in zip(dists, dists[1:]))
    final_min = dists[-1] <= min(dists) * (1.0 + 1e-9)
    return SemicontinuitySweep(
        rows=tuple(rows),
        base_radius_sq=base_radius,
        weakly_decreasing=weakly_dec,
        final_is_min=final_min,
    )


# ---------------------------------------------------------------------------
# smooth cutoff and tail mass


def cutoff_xi(s):
    """
    Smooth radial cutoff: 0 on [0, 1], 1 on [2, inf), quintic ramp between
    with bounded derivative.
    """
    s = np.asarray(s, dtype=float)
    x = np.clip(s - 1.0, 0.0, 1.0)
    out = x**3 * (10.0 - 15.0 * x + 6.0 * x**2)
    return out if out.ndim else float(out)


def tail_mass(field: SpectralVelocityField, k) -> float:
    """
    Mass of the field outside radius ``k``: quadrature of
    ``xi(|x|^2 / k^2) |u(x)|^2``.  The cutoff annulus must fit inside the box.
    """
    dom = field.domain
    if k <= 0:
        raise ValueError(f"cutoff radius must be positive, got {k}")
    if k * math.sqrt(2.0) >= dom.L:
        raise ValueError(f"annulus-exceeds-box: need sqrt(2) k < L, got k={k}, L={dom.L}")
    u = transform_inverse(dom, field.coeffs)
    weight = cutoff_xi(dom.radius_sq_grid() / k**2)
    return float(np.sum(weight * np.sum(u**2, axis=0)) * dom.dx**dom.d)
