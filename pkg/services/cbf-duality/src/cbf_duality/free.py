"""The free regular convolution semigroup mu^{boxplus t} of a flat complete Bernstein function.

mu = mu^{boxplus t} is characterised by its Voiculescu transform t f(-z): the
reciprocal Cauchy transform F = 1/G has right inverse w -> w + t f(-w). We
invert that map by Newton continuation (closed forms exist for three families),
recover densities by Stieltjes inversion and Laplace transforms either from
series, from closed-form measures or from a Cauchy contour integral.
"""

import cmath
import math
from collections.abc import Callable
from dataclasses import dataclass, field
from enum import StrEnum

import numpy as np
from loguru import logger
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy import integrate, optimize

from cbf_duality.cbf import (
    Family,
    FamilyKind,
    cbf_derivative,
    cbf_derivative_extended,
    cbf_extended,
    is_flat,
)
from cbf_duality.config import config
from cbf_duality.continuation import InversionState, invert_by_continuation
from cbf_duality.errors import DomainError, ExtrapolationError, UnsupportedFamilyError
from cbf_duality.integrate import quad
from cbf_duality.series import StableSeriesControl, log_abs_rgamma, log_rgamma_envelope, sum_alternating
from cbf_duality.special import lambert_w_minus1, regularized_lower_gamma

ANCHOR_HEIGHT = 1e6
STABILITY_FACTOR = 10.0
# a density this fraction of the threshold beyond the upper edge counts as zero
VANISHING_SHARE = 1e-3
ATOM_STABILITY = 1e-4
TABLE_POINTS = 600


class LaplaceMethod(StrEnum):
    SERIES = "series"
    CLOSED_FORM = "closed-form-quadrature"
    CONTOUR = "cauchy-contour"
    TABLE = "stieltjes-table"
    GAMMA_CLOSED_FORM = "gamma-closed-form"


class FreeLaw(BaseModel):
    """mu^{boxplus t}(f) for a flat family f and time t > 0."""

    model_config = ConfigDict(frozen=True)

    family: Family
    t: float = Field(gt=0, allow_inf_nan=False)
    control: StableSeriesControl = Field(default_factory=StableSeriesControl)

    @model_validator(mode="after")
    def validate_flat(self) -> "FreeLaw":
        """Free regular semigroups exist only for flat f."""
        if not is_flat(self.family):
            raise ValueError(f"{self.family.label} has linear drift; no free regular semigroup")
        return self

    @property
    def time(self) -> float:
        return self.t * self.family.scale


# -- the inverse map and its inversion -------------------------------------


def _h(law: FreeLaw, w: complex) -> complex:
    return w + law.t * cbf_extended(law.family, -w)


def _dh(law: FreeLaw, w: complex) -> complex:
    return 1.0 - law.t * cbf_derivative_extended(law.family, -w)


def f_inverse_map(law: FreeLaw, z: complex) -> complex:
    """z + t f(-z), the right inverse of F.

    Raises:
        DomainError: If -z lies on the cut, i.e. z is real and positive.
    """
    z = complex(z)
    if z.imag == 0 and z.real > 0:
        raise DomainError(f"f_inverse_map: z={z} puts -z on the cut")
    return _h(law, z)


def _slope_root(law: FreeLaw) -> float | None:
    """u > 0 with t f'(u) = 1, or None when t f'(0+) <= 1."""

    def excess(u: float) -> float:
        return law.t * cbf_derivative(law.family, u).real - 1.0

    lo = 1e-12
    if law.family.kind != FamilyKind.FREE_STABLE and excess(lo) <= 0:
        return None
    hi = 1.0
    while excess(hi) > 0:
        hi *= 2.0
    while excess(lo) <= 0:
        lo *= 1e-3
        if lo < 1e-300:
            return None
    return optimize.brentq(excess, lo, hi, xtol=1e-15, rtol=4e-16)


def support_left(law: FreeLaw) -> float:
    """Left end of the support of mu (an atom location when mu has one there).

    F maps (-inf, edge) increasingly onto (-inf, -u*) where t f'(u*) = 1; without
    such u* the edge is t f(0+).
    """
    u_star = _slope_root(law)
    if u_star is None:
        return law.t * cbf_extended(law.family, 0.0).real
    return -u_star + law.t * cbf_extended(law.family, u_star).real


def edge_atom(law: FreeLaw) -> tuple[float, float] | None:
    """Atom (t f(0+), 1 - t f'(0+)) at the left edge, if t f'(0+) < 1."""
    if law.family.kind == FamilyKind.FREE_STABLE:
        return None
    slope = law.t * cbf_derivative(law.family, 1e-300).real
    if slope >= 1.0:
        return None
    return law.t * cbf_extended(law.family, 0.0).real, 1.0 - slope


def _check_target(law: FreeLaw, z: complex) -> complex:
    z = complex(z)
    if not (math.isfinite(z.real) and math.isfinite(z.imag)):
        raise DomainError(f"z must be finite, got {z}")
    if z.imag < 0:
        raise DomainError(f"z={z} lies in the lower half-plane")
    if z.imag == 0 and z.real >= support_left(law):
        raise DomainError(f"real z={z.real} is not left of the support")
    return z


def f_transform_newton(law: FreeLaw, z: complex) -> InversionState:
    """Generic F(z) by Newton continuation from the far field."""
    z = _check_target(law, z)
    anchor = max(ANCHOR_HEIGHT * (1.0 + law.t), 10.0 * abs(z))
    return invert_by_continuation(lambda w: _h(law, w), lambda w: _dh(law, w), z, anchor)


def f_transform_closed_form(law: FreeLaw, z: complex) -> complex | None:
    """Closed-form F for poisson-exp, inverse-gaussian and (real z) gamma, else None."""
    tau = law.time
    match law.family.kind:
        case FamilyKind.POISSON_EXP:
            s = z + 1.0 - tau
            root = cmath.sqrt(s * s - 4.0 * z)
            candidates = ((s + root) / 2.0, (s - root) / 2.0)
            if z.imag > 0:
                return max(candidates, key=lambda w: w.imag)
            return complex(min(c.real for c in candidates), 0.0)
        case FamilyKind.INVERSE_GAUSSIAN:
            return z - tau * tau - tau * cmath.sqrt(1.0 + tau * tau - 2.0 * z)
        case FamilyKind.GAMMA if z.imag == 0:
            arg = -math.exp((z.real - 1.0) / tau) / tau
            if arg == 0.0:
                return None
            return complex(1.0 + tau * lambert_w_minus1(arg), 0.0)
    return None


def f_transform(law: FreeLaw, z: complex, generic: bool = False) -> complex:
    """F(z) for z in the upper half-plane or real z left of the support.

    Args:
        law: The free law.
        z: Target point.
        generic: Skip the closed-form fast paths.

    Raises:
        DomainError: If z is outside the domain.
        ContinuationError: If Newton continuation fails.
    """
    z = _check_target(law, z)
    if not generic:
        closed = f_transform_closed_form(law, z)
        if closed is not None:
            return closed
    return f_transform_newton(law, z).w_current


def cauchy_transform(law: FreeLaw, z: complex, generic: bool = False) -> complex:
    """G(z) = 1 / F(z)."""
    return 1.0 / f_transform(law, z, generic=generic)


# -- Stieltjes inversion ----------------------------------------------------


def _richardson(values: list[float], ladder: tuple[float, ...]) -> float:
    """Eliminate the O(y) and O(y^2) terms of a three-point ladder."""
    d1, d2, d3 = values
    r = ladder[0] / ladder[1]
    r1 = (r * d2 - d1) / (r - 1.0)
    r2 = (r * d3 - d2) / (r - 1.0)
    return (r * r * r2 - r1) / (r * r - 1.0)


def _ladder(ladder: tuple[float, ...] | None) -> tuple[float, ...]:
    ladder = tuple(config.stieltjes_ladder) if ladder is None else tuple(ladder)
    if len(ladder) != 3 or not all(a > b > 0 for a, b in zip(ladder, ladder[1:], strict=False)):
        raise DomainError(f"y_ladder must be three decreasing positive values, got {ladder}")
    return ladder


def stieltjes_density(
    law: FreeLaw,
    x: float,
    y_ladder: tuple[float, ...] | None = None,
    generic: bool = False,
) -> float:
    """Richardson limit of -(1/pi) Im G(x + iy) as y -> 0.

    Raises:
        ExtrapolationError: If the ladder values are unstable (atom or edge nearby).
    """
    ladder = _ladder(y_ladder)
    values = [-cauchy_transform(law, complex(x, y), generic=generic).imag / math.pi for y in ladder]
    estimate = _richardson(values, ladder)
    # ladder differences shrink with y unless an atom or an edge is within reach.
    # Not bounded by the estimate: at an atom the values grow like 1/y and the
    # Richardson estimate grows faster still.
    floor = STABILITY_FACTOR * config.density_threshold
    if abs(values[2] - values[1]) > max(abs(values[1] - values[0]), floor):
        raise ExtrapolationError(f"unstable Stieltjes ladder at x={x}: {values}")
    if estimate < 0:
        logger.debug(f"clamped negative extrapolated density {estimate:.3g} at x={x}")
        estimate = 0.0
    return estimate


def atom_mass_estimate(
    law: FreeLaw, location: float, y_ladder: tuple[float, ...] | None = None, generic: bool = False
) -> float:
    """lim y * (-Im G(p + iy)), the mass of an atom at p."""
    ladder = _ladder(y_ladder)
    values = [-y * cauchy_transform(law, complex(location, y), generic=generic).imag for y in ladder]
    estimate = _richardson(values, ladder)
    if abs(values[2] - estimate) > ATOM_STABILITY:
        raise ExtrapolationError(f"atom mass ladder at {location} did not stabilise: {values}")
    return estimate


# -- measure decomposition --------------------------------------------------


@dataclass
class MeasureDecomposition:
    """Atoms plus an absolutely continuous density on [lo, hi]."""

    atoms: list[tuple[float, float]]
    lo: float
    hi: float
    method: str
    density_fn: Callable[[float], float] | None = None
    grid: np.ndarray = field(default_factory=lambda: np.empty(0))
    values: np.ndarray = field(default_factory=lambda: np.empty(0))
    tail_mass: float = 0.0

    def density(self, x: float) -> float:
        if x <= self.lo or x >= self.hi:
            return 0.0
        if self.density_fn is not None:
            return self.density_fn(x)
        return float(np.interp(x, self.grid, self.values, left=0.0, right=0.0))

    def ac_mass(self) -> float:
        if self.density_fn is not None:
            return quad(self.density_fn, self.lo, self.hi, epsrel=1e-10, label="density mass")
        return float(integrate.simpson(self.values, x=self.grid)) + self.tail_mass

    def total_mass(self) -> float:
        return sum(m for _, m in self.atoms) + self.ac_mass()

    def header(self) -> dict:
        return {
            "atoms": [[loc, mass] for loc, mass in self.atoms],
            "support": [self.lo, self.hi],
            "method": self.method,
            "tail_mass": self.tail_mass,
        }


def marchenko_pastur_density(tau: float, x: float) -> float:
    """(1/(2 pi x)) sqrt(4 tau - (x - 1 - tau)^2) on its support."""
    disc = 4.0 * tau - (x - 1.0 - tau) ** 2
    return math.sqrt(disc) / (2.0 * math.pi * x) if disc > 0 and x > 0 else 0.0


def inverse_gaussian_free_density(tau: float, x: float) -> float:
    """tau sqrt(2x - 1 - tau^2) / (pi (x^2 - tau^2)) on x > (1 + tau^2)/2."""
    disc = 2.0 * x - 1.0 - tau * tau
    return tau * math.sqrt(disc) / (math.pi * (x * x - tau * tau)) if disc > 0 else 0.0


def _closed_form_measure(law: FreeLaw) -> MeasureDecomposition | None:
    tau = law.time
    match law.family.kind:
        case FamilyKind.POISSON_EXP:
            atoms = [(0.0, 1.0 - tau)] if tau < 1 else []
            return MeasureDecomposition(
                atoms=atoms,
                lo=(1.0 - math.sqrt(tau)) ** 2,
                hi=(1.0 + math.sqrt(tau)) ** 2,
                method="closed-form",
                density_fn=lambda x: marchenko_pastur_density(tau, x),
            )
        case FamilyKind.INVERSE_GAUSSIAN:
            # the killing rate shifts the core measure right by kappa t
            atoms = [(tau, 1.0 - tau)] if tau < 1 else []
            return MeasureDecomposition(
                atoms=atoms,
                lo=(1.0 + tau * tau) / 2.0,
                hi=math.inf,
                method="closed-form",
                density_fn=lambda x: inverse_gaussian_free_density(tau, x),
            )
    return None


def _safe_density(law: FreeLaw, x: float) -> float:
    try:
        return stieltjes_density(law, x)
    except ExtrapolationError:
        return -1.0


def _ac_lower_edge(law: FreeLaw, start: float, scale: float) -> float:
    """Bisection for the first x > start where the density exceeds the threshold."""
    threshold = config.density_threshold
    probe = start
    step = scale / 64.0
    for _ in range(4096):
        probe += step
        if _safe_density(law, probe) > threshold:
            break
    else:
        raise ExtrapolationError(f"no absolutely continuous mass found right of {start}")
    lo, hi = probe - step, probe
    for _ in range(50):
        mid = 0.5 * (lo + hi)
        if _safe_density(law, mid) > threshold:
            hi = mid
        else:
            lo = mid
    return lo


def _ac_upper_edge(law: FreeLaw, lo: float) -> tuple[float, bool]:
    """(x, bounded) with density below threshold beyond x; bounded if it vanishes there."""
    threshold = config.density_threshold
    x = lo + 1.0
    for _ in range(80):
        x = lo + 2.0 * (x - lo)
        if _safe_density(law, x) < threshold:
            break
    inner, outer = lo + 0.5 * (x - lo), x
    for _ in range(50):
        mid = 0.5 * (inner + outer)
        if _safe_density(law, mid) > threshold:
            inner = mid
        else:
            outer = mid
    far = _safe_density(law, 2.0 * outer - lo)
    return outer, far <= VANISHING_SHARE * threshold


def _power_tail(x1: float, p1: float, x2: float, p2: float) -> float:
    """Mass beyond x2 of the power law through (x1, p1), (x2, p2)."""
    if p1 <= 0 or p2 <= 0:
        return 0.0
    beta = -math.log(p2 / p1) / math.log(x2 / x1)
    if beta <= 1.0:
        logger.warning(f"tail exponent {beta:.3g} <= 1; tail mass not extrapolated")
        return 0.0
    return p2 * x2 / (beta - 1.0)


def tabulate_free_density(law: FreeLaw, n_points: int = TABLE_POINTS) -> MeasureDecomposition:
    """Stieltjes-inverted density on a grid geometric in the distance from the left edge."""
    edge = support_left(law)
    atom = edge_atom(law)
    atoms = [atom] if atom is not None else []
    lo = edge
    if atom is not None:
        lo = _ac_lower_edge(law, edge, max(1.0, law.time))
    hi, bounded = _ac_upper_edge(law, lo)
    span = hi - lo
    offsets = np.geomspace(1e-10 * max(1.0, span), span, n_points)
    grid = np.concatenate(([lo], lo + offsets))
    values = np.array([0.0] + [max(_safe_density(law, float(x)), 0.0) for x in grid[1:]])
    tail = 0.0
    if not bounded:
        tail = _power_tail(float(grid[-2]), float(values[-2]), float(grid[-1]), float(values[-1]))
    logger.info(
        f"tabulated {law.family.label} t={law.t}: support [{lo:.6g}, {hi:.6g}], "
        f"{len(atoms)} atom(s), tail mass {tail:.3g}"
    )
    return MeasureDecomposition(
        atoms=atoms,
        lo=lo,
        hi=hi if bounded else math.inf,
        method="stieltjes-table",
        grid=grid,
        values=values,
        tail_mass=tail,
    )


def free_measure(law: FreeLaw, tabulate: bool = False) -> MeasureDecomposition:
    """Atoms and density of mu^{boxplus t}; closed form where known, else tabulated."""
    closed = None if tabulate else _closed_form_measure(law)
    return closed if closed is not None else tabulate_free_density(law)


# -- Laplace transform ------------------------------------------------------


def free_stable_laplace_series(law: FreeLaw, w: float) -> float:
    """sum_n (-1)^n (t w^alpha)^n / (n! Gamma(2 + (alpha - 1) n))."""
    family = law.family
    if family.kind != FamilyKind.FREE_STABLE:
        raise UnsupportedFamilyError(f"no Laplace series for {family.kind}")
    assert family.alpha is not None
    a = family.stable_index

    def coefficient(n: int) -> tuple[float, float]:
        log_c, sign = log_abs_rgamma(2.0 - a * n)
        return log_c, sign * (-1) ** n

    result = sum_alternating(
        law.time * w**family.alpha,
        coefficient,
        lambda n: log_rgamma_envelope(2.0 - a * n),
        law.control,
        label="free stable laplace series",
    )
    return result.value


def contour_laplace(law: FreeLaw, w: float, generic: bool = True) -> float:
    """-(1/pi) Im of the integral of e^{-wz} G(z) dz along z = c + s e^{i pi/4}, c < 0."""
    c = -min(1.0, 1.0 / w)
    direction = cmath.exp(0.25j * math.pi)

    def integrand(s: float) -> float:
        z = c + s * direction
        if s == 0.0:
            g = cauchy_transform(law, complex(c, 0.0), generic=generic)
        else:
            g = cauchy_transform(law, z, generic=generic)
        return (cmath.exp(-w * z) * g * direction).imag

    return -quad(integrand, 0.0, math.inf, epsabs=1e-13, epsrel=1e-11, label="contour") / math.pi


def measure_laplace(decomposition: MeasureDecomposition, w: float) -> float:
    """Quadrature of e^{-wx} against a decomposition plus its atom terms."""
    value = sum(mass * math.exp(-w * loc) for loc, mass in decomposition.atoms)
    if decomposition.density_fn is not None:
        density = decomposition.density_fn
        lo, hi = decomposition.lo, decomposition.hi
        if math.isinf(hi):
            mid = lo + 1.0
            value += quad(lambda x: math.exp(-w * x) * density(x), lo, mid, label="laplace head")
            value += quad(lambda x: math.exp(-w * x) * density(x), mid, hi, label="laplace tail")
        else:
            value += quad(lambda x: math.exp(-w * x) * density(x), lo, hi, label="laplace")
        return value
    weights = np.exp(-w * decomposition.grid) * decomposition.values
    return value + float(integrate.simpson(weights, x=decomposition.grid))


def free_laplace(law: FreeLaw, w: float, method: LaplaceMethod | None = None) -> tuple[float, str]:
    """Laplace transform of mu^{boxplus t} at w > 0 and the method used.

    Default methods: series for free-stable, closed-form measure quadrature for
    poisson-exp and inverse-gaussian, Cauchy contour for gamma and custom.
    """
    if w <= 0 or not math.isfinite(w):
        raise DomainError(f"free_laplace needs w > 0, got {w}")
    kind = law.family.kind
    if method is None:
        if kind == FamilyKind.FREE_STABLE:
            method = LaplaceMethod.SERIES
        elif kind in (FamilyKind.POISSON_EXP, FamilyKind.INVERSE_GAUSSIAN):
            method = LaplaceMethod.CLOSED_FORM
        else:
            method = LaplaceMethod.CONTOUR

    match method:
        case LaplaceMethod.SERIES:
            value = free_stable_laplace_series(law, w)
        case LaplaceMethod.CLOSED_FORM:
            closed = _closed_form_measure(law)
            if closed is None:
                raise UnsupportedFamilyError(f"no closed-form measure for {kind}")
            value = measure_laplace(closed, w)
        case LaplaceMethod.CONTOUR:
            value = contour_laplace(law, w)
        case LaplaceMethod.TABLE:
            value = measure_laplace(tabulate_free_density(law), w)
        case LaplaceMethod.GAMMA_CLOSED_FORM:
            value = gamma_laplace_closed_form(law, w)
    return value, str(method)


def gamma_laplace_closed_form(law: FreeLaw, w: float) -> float:
    """Laplace transform of the free gamma law through incomplete gamma functions.

    With a = w t: (1 - t) P(a, w) + w^{a-1} e^{-w} / Gamma(a), P the regularized
    lower incomplete gamma function.
    """
    if law.family.kind != FamilyKind.GAMMA:
        raise UnsupportedFamilyError(f"gamma closed form requested for {law.family.kind}")
    tau = law.time
    a = w * tau
    boundary = math.exp((a - 1.0) * math.log(w) - w - math.lgamma(a))
    return (1.0 - tau) * regularized_lower_gamma(a, w) + boundary
