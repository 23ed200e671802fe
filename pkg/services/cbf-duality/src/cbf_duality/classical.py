"""The classical convolution semigroup nu^{*t} of a complete Bernstein function.

nu^{*t} is the law on [0, inf) with Laplace transform exp(-t f(z)). When
f(0+) = kappa > 0 the law is killed: its total mass is exp(-kappa t) and it is
exp(-kappa t) times the probability law of the subordinator with exponent
f - kappa. ClassicalLaw reports the killed law by default; ClassicalLaw.core()
gives the probability law used for sampling.
"""

import cmath
import math

import numpy as np
from loguru import logger
from pydantic import BaseModel, ConfigDict, Field
from scipy import special as sc

from cbf_duality.cbf import Family, FamilyKind, cbf_eval
from cbf_duality.errors import DomainError, SeriesDivergenceError, UnsupportedFamilyError
from cbf_duality.integrate import quad, quad_fourier
from cbf_duality.series import (
    StableSeriesControl,
    log_abs_rgamma,
    log_rgamma_envelope,
    sum_alternating,
)
from cbf_duality.special import bessel_i1e, erfc, regularized_lower_gamma

# Poisson weights further than this many standard deviations from the mean are dropped
_POISSON_WIDTH = 40.0
_FLOOR_BISECTIONS = 60
_BROMWICH_EPSABS = 1e-10


class ClassicalLaw(BaseModel):
    """nu^{*t}(f) for a family f and time t > 0."""

    model_config = ConfigDict(frozen=True)

    family: Family
    t: float = Field(gt=0, allow_inf_nan=False)
    killed: bool = True
    control: StableSeriesControl = Field(default_factory=StableSeriesControl)

    @property
    def time(self) -> float:
        """Effective time t * scale, so that nu^{*t}(c f) = nu^{*ct}(f)."""
        return self.t * self.family.scale

    @property
    def total_mass(self) -> float:
        if not self.killed:
            return 1.0
        return math.exp(-self.family.killing_rate * self.t)

    def core(self) -> "ClassicalLaw":
        """Probability law of the killing-free subordinator at time t."""
        return self.model_copy(update={"killed": False})


def atoms(law: ClassicalLaw) -> list[tuple[float, float]]:
    """Atoms (location, mass) of the law; only compound families have one."""
    family = law.family
    tau = law.time
    if family.kind == FamilyKind.POISSON_EXP:
        return [(0.0, math.exp(-tau))]
    if family.kind == FamilyKind.CUSTOM:
        assert family.spec is not None
        spec = family.spec
        mass = math.exp(-tau * (spec.a + sum(m * x for x, m in spec.atoms)))
        return [(tau * spec.b, mass / _core_factor(law))]
    return []


def _core_factor(law: ClassicalLaw) -> float:
    """Divide custom (natively killed) quantities by this for the requested law."""
    if law.killed:
        return 1.0
    return math.exp(-law.family.killing_rate * law.t)


def _check_y(y: float) -> float:
    y = float(y)
    if math.isnan(y):
        raise DomainError("y must not be NaN")
    if y < 0:
        raise DomainError(f"y must be nonnegative, got {y}")
    return y


# -- free-stable (classical positive stable) series ------------------------


def _stable_x(law: ClassicalLaw, y: float) -> float:
    return law.time * y ** (-law.family.stable_index)


def stable_cdf_series(law: ClassicalLaw, y: float) -> float:
    """sum_n (-1)^n x^n / (n! Gamma(1 - a n)), x = t y^{-a}, a the stable index."""
    a = law.family.stable_index

    def coefficient(n: int) -> tuple[float, float]:
        log_c, sign = log_abs_rgamma(1.0 - a * n)
        return log_c, sign * (-1) ** n

    result = sum_alternating(
        _stable_x(law, y),
        coefficient,
        lambda n: log_rgamma_envelope(1.0 - a * n),
        law.control,
        label="stable cdf series",
    )
    return result.value


def stable_pdf_series(law: ClassicalLaw, y: float) -> float:
    """(1/(pi y)) sum_{n>=1} (-1)^{n-1} x^n Gamma(1 + a n) sin(n a pi) / n!."""
    a = law.family.stable_index

    def coefficient(n: int) -> tuple[float, float]:
        s = math.sin(n * a * math.pi)
        if s == 0.0:
            return -math.inf, 0.0
        return math.lgamma(1.0 + a * n) + math.log(abs(s)), math.copysign(1.0, s) * (-1) ** (n - 1)

    result = sum_alternating(
        _stable_x(law, y),
        coefficient,
        lambda n: math.lgamma(1.0 + a * n),
        law.control,
        start=1,
        label="stable pdf series",
    )
    return result.value / (math.pi * y)


def stable_series_floor(law: ClassicalLaw, y_hi: float, which: str = "cdf") -> float:
    """Smallest y in [1e-12 y_hi, y_hi] where the stable series is still accepted.

    Acceptance is monotone in y because the series variable decreases in y.

    Raises:
        SeriesDivergenceError: If the series is rejected already at y_hi.
    """
    evaluate = stable_cdf_series if which == "cdf" else stable_pdf_series
    evaluate(law, y_hi)
    lo, hi = math.log(y_hi) - 12 * math.log(10.0), math.log(y_hi)
    try:
        evaluate(law, math.exp(lo))
        return math.exp(lo)
    except SeriesDivergenceError:
        pass
    for _ in range(_FLOOR_BISECTIONS):
        mid = 0.5 * (lo + hi)
        try:
            evaluate(law, math.exp(mid))
            hi = mid
        except SeriesDivergenceError:
            lo = mid
    return math.exp(hi)


# -- compound Poisson with exponential jumps -------------------------------


def _poisson_exp_cdf(tau: float, y: float) -> float:
    """sum_n Poisson(n; tau) P(n, y), P(n, y) the Erlang(n) CDF.

    Only n within _POISSON_WIDTH standard deviations of tau contribute; the
    weights are formed in log space so large tau does not underflow.
    """
    spread = _POISSON_WIDTH * (math.sqrt(tau) + 1.0)
    n_lo = max(0, math.floor(tau - spread))
    n_hi = math.ceil(tau + spread)
    log_tau = math.log(tau)
    erlang_cdf = 1.0 if n_lo == 0 else regularized_lower_gamma(float(n_lo), y)
    total = 0.0
    for n in range(n_lo, n_hi + 1):
        if erlang_cdf <= 0.0:
            break
        log_factorial = math.lgamma(n + 1.0)
        total += math.exp(n * log_tau - tau - log_factorial) * erlang_cdf
        # P(n+1, y) = P(n, y) - e^{-y} y^n / n!
        if y > 0:
            erlang_cdf -= math.exp(n * math.log(y) - y - log_factorial)
        elif n == 0:
            erlang_cdf = 0.0
    return total


def _poisson_exp_pdf(tau: float, y: float) -> float:
    x = 2.0 * math.sqrt(tau * y)
    return math.sqrt(tau / y) * math.exp(-((math.sqrt(tau) - math.sqrt(y)) ** 2)) * bessel_i1e(x)


# -- inverse Gaussian core (mean tau, shape tau^2) -------------------------


def _inverse_gaussian_cdf(tau: float, y: float) -> float:
    root = math.sqrt(y)
    lower = 0.5 * erfc(-(y - tau) / (root * math.sqrt(2.0)))
    b = (y + tau) / (root * math.sqrt(2.0))
    upper = 0.5 * math.exp(2.0 * tau - b * b) * float(sc.erfcx(b))
    return lower + upper


def _inverse_gaussian_pdf(tau: float, y: float) -> float:
    return tau / math.sqrt(2.0 * math.pi * y**3) * math.exp(-((y - tau) ** 2) / (2.0 * y))


# -- custom specs by Bromwich inversion -----------------------------------


def _custom_transform(law: ClassicalLaw, z: complex) -> complex:
    """Laplace transform of the drift-free part, minus its atom at zero."""
    assert law.family.spec is not None
    spec = law.family.spec
    f0 = complex(spec.a)
    for x, m in spec.atoms:
        f0 += m * (z * x - 1.0) / (z + x)
    atom_mass = math.exp(-law.time * (spec.a + sum(m * x for x, m in spec.atoms)))
    return cmath.exp(-law.time * f0) - atom_mass


def _bromwich(law: ClassicalLaw, y: float, divide_by_z: bool) -> float:
    c = 1.0 / y

    def transform(u: float) -> complex:
        z = complex(c, u)
        value = _custom_transform(law, z)
        return value / z if divide_by_z else value

    label = "bromwich cdf" if divide_by_z else "bromwich pdf"
    real_part = quad_fourier(
        lambda u: transform(u).real, 0.0, y, "cos", epsabs=_BROMWICH_EPSABS, label=label
    )
    imag_part = quad_fourier(
        lambda u: transform(u).imag, 0.0, y, "sin", epsabs=_BROMWICH_EPSABS, label=label
    )
    return math.exp(c * y) / math.pi * (real_part - imag_part)


def _custom_shift(law: ClassicalLaw) -> float:
    assert law.family.spec is not None
    return law.time * law.family.spec.b


def _custom_cdf(law: ClassicalLaw, y: float) -> float:
    y -= _custom_shift(law)
    if y < 0:
        return 0.0
    atom = atoms(law)[0][1] * _core_factor(law)
    if y == 0 or not law.family.spec or not law.family.spec.atoms:
        return atom
    return atom + _bromwich(law, y, divide_by_z=True)


def _custom_pdf(law: ClassicalLaw, y: float) -> float:
    y -= _custom_shift(law)
    if y <= 0 or not law.family.spec or not law.family.spec.atoms:
        return 0.0
    return _bromwich(law, y, divide_by_z=False)


# -- public operations ------------------------------------------------------


def classical_cdf(law: ClassicalLaw, y: float) -> float:
    """nu^{*t}[0, y], right-continuous, including any atom at 0.

    Args:
        law: The classical law.
        y: Nonnegative point.

    Returns:
        CDF value clamped to [0, total_mass].

    Raises:
        DomainError: If y < 0.
        SeriesDivergenceError: If the free-stable series fails its guard.
    """
    y = _check_y(y)
    family = law.family
    tau = law.time
    match family.kind:
        case FamilyKind.FREE_STABLE:
            value = 0.0 if y == 0 else stable_cdf_series(law, y)
        case FamilyKind.GAMMA:
            value = regularized_lower_gamma(tau, y)
        case FamilyKind.POISSON_EXP:
            value = _poisson_exp_cdf(tau, y)
        case FamilyKind.INVERSE_GAUSSIAN:
            value = 0.0 if y == 0 else _inverse_gaussian_cdf(tau, y) * law.total_mass
        case FamilyKind.CUSTOM:
            value = _custom_cdf(law, y) / _core_factor(law)
    return min(max(value, 0.0), law.total_mass)


def classical_pdf(law: ClassicalLaw, y: float) -> float:
    """Density of the absolutely continuous part at y > 0."""
    y = _check_y(y)
    if y == 0:
        raise DomainError("classical_pdf needs y > 0")
    family = law.family
    tau = law.time
    match family.kind:
        case FamilyKind.FREE_STABLE:
            value = stable_pdf_series(law, y)
        case FamilyKind.GAMMA:
            value = math.exp((tau - 1.0) * math.log(y) - y - math.lgamma(tau))
        case FamilyKind.POISSON_EXP:
            value = _poisson_exp_pdf(tau, y)
        case FamilyKind.INVERSE_GAUSSIAN:
            value = _inverse_gaussian_pdf(tau, y) * law.total_mass
        case FamilyKind.CUSTOM:
            value = _custom_pdf(law, y) / _core_factor(law)
    return max(value, 0.0)


def laplace_transform(law: ClassicalLaw, z: float) -> float:
    """Quadrature of e^{-zy} against the atoms and density of the law."""
    if z <= 0:
        raise DomainError(f"laplace_transform needs z > 0, got {z}")
    value = sum(mass * math.exp(-z * loc) for loc, mass in atoms(law))

    def integrand(y: float) -> float:
        return math.exp(-z * y) * classical_pdf(law, y)

    lo = 0.0
    if law.family.kind == FamilyKind.FREE_STABLE:
        lo = stable_series_floor(law, 1.0, which="pdf")
    elif law.family.kind == FamilyKind.CUSTOM:
        lo = _custom_shift(law)
    split = lo + 1.0
    value += quad(integrand, lo, split, epsrel=1e-11, label="laplace head")
    value += quad(integrand, split, math.inf, epsrel=1e-11, label="laplace tail")
    return value


def laplace_residual(law: ClassicalLaw, z: float) -> float:
    """|integral of e^{-zy} nu^{*t}(dy) - exp(-t f(z))|."""
    target = math.exp(-law.t * cbf_eval(law.family, z).real)
    if not law.killed:
        target /= math.exp(-law.family.killing_rate * law.t)
    residual = abs(laplace_transform(law, z) - target)
    logger.debug(f"{law.family.label} t={law.t}: Laplace residual {residual:.3g} at z={z}")
    return residual


def sample_increments(
    family: Family, dt: float, rng: np.random.Generator, size: int | None = None
) -> np.ndarray | float:
    """Exact draws of the killing-free increment Y_dt.

    Args:
        family: Built-in family.
        dt: Time increment, positive.
        rng: Caller-owned generator; never share one across threads.
        size: Number of draws, or None for a scalar.

    Raises:
        UnsupportedFamilyError: For custom specs.
    """
    if dt <= 0:
        raise DomainError(f"dt must be positive, got {dt}")
    tau = dt * family.scale
    match family.kind:
        case FamilyKind.GAMMA:
            return rng.gamma(tau, 1.0, size=size)
        case FamilyKind.POISSON_EXP:
            counts = rng.poisson(tau, size=size)
            draws = rng.gamma(np.maximum(counts, 1), 1.0, size=size)
            return np.where(counts > 0, draws, 0.0)
        case FamilyKind.INVERSE_GAUSSIAN:
            # numpy's wald is the Michael-Schucany-Haas transform with rejection
            return rng.wald(tau, tau * tau, size=size)
        case FamilyKind.FREE_STABLE:
            a = family.stable_index
            u = rng.uniform(0.0, math.pi, size=size)
            e = rng.exponential(1.0, size=size)
            kanter = (
                np.sin(a * u)
                / np.sin(u) ** (1.0 / a)
                * (np.sin((1.0 - a) * u) / e) ** ((1.0 - a) / a)
            )
            return tau ** (1.0 / a) * kanter
    raise UnsupportedFamilyError(f"no sampler for {family.kind}")


def sample_increment(family: Family, dt: float, rng: np.random.Generator) -> float:
    """One exact draw of Y_dt."""
    return float(sample_increments(family, dt, rng))
