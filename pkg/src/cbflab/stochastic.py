"""
Driving noise and forcing machinery.

Two-sided Brownian paths are sampled on a uniform grid anchored at
``omega(0) = 0`` and evaluated by linear interpolation.  The time shift
``(theta_s omega)(t) = omega(t + s) - omega(s)`` is implemented as a view
onto the base samples, so the group law holds exactly and the shifted path
still vanishes at zero exactly.

The scalar conjugation process ``z(t) = exp(-eps * omega(t))`` turns the
noisy system into a pathwise deterministic one; it is positive by
construction and equals one when the noise intensity vanishes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from typing import Optional

import numpy as np

from .domain import SpectralVelocityField, norms as _norms

__all__ = [
    "OutOfWindowError",
    "DivergentIntegralError",
    "WienerPath",
    "ConjugationProcess",
    "Envelope",
    "ForcingProfile",
    "WeightedIntegral",
    "SublinearReport",
    "sample_path",
    "path_from_values",
    "shift_path",
    "export_path_csv",
    "z_eval",
    "verify_sublinear",
    "weighted_forcing_integral",
    "zero_forcing",
    "constant_forcing",
    "periodic_forcing",
    "decaying_forcing",
]


class OutOfWindowError(ValueError):
    """Evaluation time left the sampled window of the path."""


class DivergentIntegralError(ValueError):
    """The weighted forcing integral cannot be certified convergent."""


@dataclass
class WienerPath:
    """
    Scalar two-sided Brownian sample path on a uniform grid.

    ``values[j]`` holds the path at ``node_times[j] = (j - n_neg) * dt_grid``.
    ``shift`` and ``anchor`` implement accumulated time shifts: the path seen
    through this object is ``base(t + shift) - base(shift)``.
    """

    t_min: float
    t_max: float
    dt_grid: float
    values: np.ndarray
    n_neg: int
    seed: Optional[int] = None
    shift: float = 0.0
    anchor: float = dc_field(default=0.0)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        n = self.values.size
        self._node_times = (np.arange(n) - self.n_neg) * self.dt_grid

    def _interp_base(self, t):
        nodes = self._node_times
        if t < nodes[0] - 1e-12 or t > nodes[-1] + 1e-12:
            raise OutOfWindowError(
                f"time {t} outside sampled window [{nodes[0]}, {nodes[-1]}]"
            )
        return float(np.interp(t, nodes, self.values))

    def value(self, t) -> float:
        """Path value at time ``t`` (after accumulated shifts)."""
        return self._interp_base(t + self.shift) - self.anchor

    @property
    def window(self):
        """Evaluation window of this (possibly shifted) view."""
        nodes = self._node_times
        return nodes[0] - self.shift, nodes[-1] - self.shift


def sample_path(seed, t_min, t_max, dt_grid) -> WienerPath:
    """
    Draw one Brownian path on ``[t_min, t_max]`` by cumulative sums of
    independent Gaussian increments outward from zero.  Deterministic per seed.
    """
    if not (t_min < 0.0 < t_max):
        raise ValueError(f"invalid-range: need t_min < 0 < t_max, got ({t_min}, {t_max})")
    if dt_grid <= 0:
        raise ValueError(f"invalid-range: dt_grid must be positive, got {dt_grid}")
    n_pos = int(math.ceil(t_max / dt_grid))
    n_neg = int(math.ceil(-t_min / dt_grid))
    rng = np.random.default_rng(seed)
    scale = math.sqrt(dt_grid)
    inc_pos = scale * rng.standard_normal(n_pos)
    inc_neg = scale * rng.standard_normal(n_neg)
    values = np.empty(n_neg + n_pos + 1)
    values[n_neg] = 0.0
    values[n_neg + 1 :] = np.cumsum(inc_pos)
    values[:n_neg] = -np.cumsum(inc_neg)[::-1]
    return WienerPath(
        t_min=-n_neg * dt_grid,
        t_max=n_pos * dt_grid,
        dt_grid=dt_grid,
        values=values,
        n_neg=n_neg,
        seed=seed if isinstance(seed, int) else None,
    )


def path_from_values(values, dt_grid, n_neg) -> WienerPath:
    """Synthetic path from explicit node values (testing aid)."""
    values = np.asarray(values, dtype=float)
    if values[n_neg] != 0.0:
        raise ValueError("synthetic path must vanish at the zero node")
    return WienerPath(
        t_min=-n_neg * dt_grid,
        t_max=(values.size - 1 - n_neg) * dt_grid,
        dt_grid=dt_grid,
        values=values,
        n_neg=n_neg,
    )


def shift_path(path: WienerPath, s) -> WienerPath:
    """Time-shifted view sharing the base samples; re-anchored at zero."""
    new_shift = path.shift + s
    shifted = WienerPath(
        t_min=path.t_min,
        t_max=path.t_max,
        dt_grid=path.dt_grid,
        values=path.values,
        n_neg=path.n_neg,
        seed=path.seed,
        shift=new_shift,
    )
    shifted.anchor = shifted._interp_base(new_shift)
    return shifted


def export_path_csv(path: WienerPath, filename):
    """Write the (shifted) path as CSV rows ``t, omega(t)`` over its window."""
    nodes = path._node_times - path.shift
    with open(filename, "w") as fh:
        fh.write("t,omega\n")
        for t in nodes:
            fh.write(f"{float(t)!r},{path.value(float(t))!r}\n")


@dataclass(frozen=True)
class ConjugationProcess:
    """Positive scalar process ``z(t) = exp(-eps * omega(t))``."""

    path: WienerPath
    epsilon: float

    def value(self, t) -> float:
        return math.exp(-self.epsilon * self.path.value(t))


def z_eval(proc: ConjugationProcess, t) -> float:
    return proc.value(t)


@dataclass(frozen=True)
class SublinearReport:
    t0_ladder: tuple
    max_ratios: tuple
    is_sublinear: bool


def verify_sublinear(path: WienerPath, t0_ladder=None) -> SublinearReport:
    """
    Report ``max |omega(t) / t|`` over ``|t| >= T0`` for a ladder of T0.

    Brownian growth is sublinear, so the ratios should shrink along the
    ladder; a linear ramp keeps them constant and is flagged.
    """
    lo, hi = path.window
    span = min(-lo, hi)
    if span < 100.0:
        raise ValueError(f"window-too-short: need >= 100 on both sides, have {span}")
    if t0_ladder is None:
        t0_ladder = (span / 100.0, span / 10.0)
    nodes = path._node_times - path.shift
    vals = np.array([path.value(t) for t in nodes])
    ratios = []
    for t0 in t0_ladder:
        sel = np.abs(nodes) >= t0
        ratios.append(float(np.max(np.abs(vals[sel] / nodes[sel]))))
    decreasing = ratios[-1] < ratios[0] * (1.0 - 1e-9)
    return SublinearReport(
        t0_ladder=tuple(float(t) for t in t0_ladder),
        max_ratios=tuple(ratios),
        is_sublinear=bool(decreasing or ratios[0] == 0.0),
    )


# ---------------------------------------------------------------------------
# forcing profiles


@dataclass(frozen=True)
class Envelope:
    """Scalar time envelope: constant one, cosine with a period, or exp(gamma t)."""

    kind: str  # 'one' | 'cosine' | 'exp'
    period: float = 0.0
    gamma: float = 0.0

    def __call__(self, t):
        if self.kind == "one":
            return 1.0
        if self.kind == "cosine":
            return math.cos(2.0 * math.pi * t / self.period)
        if self.kind == "exp":
            return math.exp(self.gamma * t)
        raise ValueError(f"unknown envelope kind {self.kind!r}")

    def past_sup_sq(self, t0) -> float:
        """Upper bound on ``envelope(t)^2`` for all ``t <= t0``."""
        if self.kind in ("one", "cosine"):
            return 1.0
        return math.exp(2.0 * self.gamma * t0)

    def decay_rate(self) -> float:
        """Exponential decay rate of ``envelope^2`` toward minus infinity."""
        return 2.0 * self.gamma if self.kind == "exp" else 0.0


@dataclass(frozen=True)
class ForcingProfile:
    """
    Time-dependent forcing ``f(t) = envelope(t) * g`` with a fixed
    divergence-free spatial template ``g``.

    ``delta`` is the declared decay exponent in ``[0, alpha)`` under which
    the past-weighted square integral of the dual norm is finite; it is
    checked at construction for each envelope kind.
    """

    kind: str  # 'zero' | 'constant_field' | 'periodic' | 'decaying'
    template: Optional[SpectralVelocityField]
    envelope: Envelope
    delta: float = 0.0
    vprime_sq_template: float = 0.0
    h_sq_template: float = 0.0

    def __post_init__(self):
        if self.kind != "zero" and self.template is None:
            raise ValueError(f"forcing kind {self.kind!r} needs a spatial template")
        if self.delta < 0:
            raise ValueError(f"decay exponent delta must be >= 0, got {self.delta}")
        if self.kind == "periodic":
            if self.envelope.kind != "cosine" or self.envelope.period <= 0:
                raise ValueError("periodic forcing needs a cosine envelope with positive period")
            if self.delta <= 0:
                raise ValueError("periodic forcing needs delta > 0 for the past integral to converge")
            for t in (-7.3, 0.4, 11.0):
                if abs(self.envelope(t + self.envelope.period) - self.envelope(t)) > 1e-9:
                    raise ValueError("envelope is not periodic with the declared period")
        if self.kind == "constant_field" and self.delta <= 0:
            raise ValueError("constant forcing needs delta > 0 for the past integral to converge")
        if self.kind == "decaying" and self.delta + self.envelope.decay_rate() <= 0:
            raise ValueError("decaying forcing must satisfy delta + 2*gamma > 0")
        if self.template is not None:
            n = _norms(self.template)
            object.__setattr__(self, "vprime_sq_template", n.vprime_norm_sq)
            object.__setattr__(self, "h_sq_template", n.h_norm_sq)

    @property
    def is_zero(self) -> bool:
        return self.kind == "zero"

    @property
    def period(self) -> Optional[float]:
        return self.envelope.period if self.kind == "periodic" else None

    def value_hat(self, t):
        """Fourier coefficients of ``f(t)``; ``None`` for the zero profile."""
        if self.is_zero:
            return None
        return self.envelope(t) * self.template.coeffs

    def norm_sq(self, t, norm_kind="vprime") -> float:
        if self.is_zero:
            return 0.0
        base = self.vprime_sq_template if norm_kind == "vprime" else self.h_sq_template
        return self.envelope(t) ** 2 * base

    def pairing(self, t, field: SpectralVelocityField) -> float:
        """Duality pairing ``<f(t), u>`` realised as the L^2 inner product."""
        if self.is_zero:
            return 0.0
        dom = field.domain
        raw = dom.measure * float(np.real(np.sum(self.template.coeffs * np.conj(field.coeffs))))
        return self.envelope(t) * raw


def zero_forcing() -> ForcingProfile:
    return ForcingProfile("zero", None, Envelope("one"), delta=0.0)


def constant_forcing(template, delta=0.5) -> ForcingProfile:
    return ForcingProfile("constant_field", template, Envelope("one"), delta=delta)


def periodic_forcing(template, period, delta=0.5) -> ForcingProfile:
    return ForcingProfile("periodic", template, Envelope("cosine", period=period), delta=delta)


def decaying_forcing(template, gamma, delta=0.0) -> ForcingProfile:
    return ForcingProfile("decaying", template, Envelope("exp", gamma=gamma), delta=delta)


# ---------------------------------------------------------------------------
# weighted improper integrals of the forcing


@dataclass(frozen=True)
class WeightedIntegral:
    value: float
    tail_bound: float
    t_cut: float


def _simpson(fn, a, b, n):
    """Composite Simpson rule with n (even) intervals."""
    xs = np.linspace(a, b, n + 1)
    ys = np.array([fn(x) for x in xs])
    h = (b - a) / n
    return h / 3.0 * (ys[0] + ys[-1] + 4.0 * ys[1:-1:2].sum() + 2.0 * ys[2:-2:2].sum())


def weighted_forcing_integral(
    profile: ForcingProfile,
    tau,
    rate,
    norm_kind="vprime",
    path: Optional[WienerPath] = None,
    epsilon=0.0,
    weight="z2",
    rel_tol=1e-6,
    t_tail=None,
) -> WeightedIntegral:
    """
    Evaluate ``integral_{-inf}^{tau} exp(rate * xi) w(xi) |f(xi)|^2 dxi``.

    ``w`` is 1 without a path, ``z(xi)^2 = exp(-2 eps path(xi))`` for
    ``weight='z2'`` (the caller passes the appropriately shifted path), or
    ``exp(2 |path(xi - tau)|)`` for ``weight='exp_abs'``.  The improper
    integral is truncated with an explicit exponential tail bound; a
    :class:`DivergentIntegralError` is raised when the decay margin closes.
    """
    if profile.is_zero:
        return WeightedIntegral(0.0, 0.0, tau)
    g_sq = profile.vprime_sq_template if norm_kind == "vprime" else profile.h_sq_template
    env = profile.envelope
    margin_det = rate + env.decay_rate()
    if margin_det <= 0:
        raise DivergentIntegralError(
            f"weight rate {rate} plus envelope decay {env.decay_rate()} is not positive"
        )

    if path is None:
        weight_fn = lambda xi: 1.0
        window_lo = -np.inf
    else:
        if weight == "z2":
            weight_fn = lambda xi: math.exp(-2.0 * epsilon * path.value(xi))
        elif weight == "exp_abs":
            weight_fn = lambda xi: math.exp(2.0 * abs(path.value(xi - tau)))
        else:
            raise ValueError(f"unknown weight kind {weight!r}")
        lo, hi = path.window
        window_lo = lo + (tau if weight == "exp_abs" else 0.0)

    t_span = t_tail if t_tail is not None else 46.0 / margin_det
    t_cut = tau - t_span
    if path is not None:
        t_cut = max(t_cut, window_lo)

    def integrand(xi):
        return math.exp(rate * (xi - tau)) * weight_fn(xi) * env(xi) ** 2 * g_sq

    n = 2048
    value = _simpson(integrand, t_cut, tau, n)
    while n < 65536:
        refined = _simpson(integrand, t_cut, tau, 2 * n)
        if abs(refined - value) <= 0.1 * rel_tol * max(abs(refined), 1e-300):
            value = refined
            break
        value = refined
        n *= 2

    # extrapolate the unobserved tail: fit the asymptotic log-weight slope on
    # the outer quarter of the integration range and continue from t_cut
    slope = _tail_slope(path, epsilon, weight, tau, t_cut)
    margin_tail = margin_det - slope
    if margin_tail <= 0:
        raise DivergentIntegralError(
            f"decay margin {margin_tail:.3g} <= 0 at the truncation point; "
            "cannot certify the improper integral"
        )
    tail = g_sq * env.past_sup_sq(t_cut) * weight_fn(t_cut)
    tail *= math.exp(rate * (t_cut - tau)) / margin_tail
    # both value and tail carry the exp(rate * tau) normalisation at the end
    scale = math.exp(rate * tau)
    return WeightedIntegral(scale * value, scale * tail, t_cut)


def _tail_slope(path, epsilon, weight, tau, t_cut):
    """Asymptotic growth rate of log(weight) fitted on the far past nodes."""
    if path is None:
        return 0.0
    nodes = path._node_times - path.shift
    if weight == "exp_abs":
        nodes = nodes + tau
    span = tau - t_cut
    sel = (nodes <= t_cut + 0.25 * span) & (nodes >= t_cut)
    if not np.any(sel):
        return 0.0
    picked = nodes[sel]
    if weight == "z2":
        logs = np.array([-2.0 * epsilon * path.value(t) for t in picked])
    else:
        logs = np.array([2.0 * abs(path.value(t - tau)) for t in picked])
    ref = np.maximum(np.abs(picked - tau), 1.0)
    return max(float(np.max(logs / ref)), 0.0)
