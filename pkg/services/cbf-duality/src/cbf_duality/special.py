"""Special-function kernel.

Log-gamma, reciprocal gamma, lower incomplete gamma, modified Bessel I1,
the W_{-1} branch of Lambert W and erfc. Every function is pure, works on
Python floats and rejects NaN/inf arguments with DomainError.
"""

import math

from cbf_duality.errors import DomainError, NumericalError

_EPS = 1e-15
_TINY = 1e-300
_MAX_ITER = 1000
_LOG_MAX = 709.0

I1_CROSSOVER = 30.0


def _check_finite(name: str, x: float) -> float:
    x = float(x)
    if not math.isfinite(x):
        raise DomainError(f"{name}: argument must be finite, got {x}")
    return x


def _sin_pi(x: float) -> float:
    """sin(pi*x) with the argument reduced modulo 2 first."""
    r = math.fmod(x, 2.0)
    if r == 0.0 or r == 1.0 or r == -1.0:
        return 0.0
    return math.sin(math.pi * r)


def ln_gamma(x: float) -> float:
    """Natural logarithm of the gamma function for x > 0.

    Raises:
        DomainError: If x <= 0 or x is not finite.
    """
    x = _check_finite("ln_gamma", x)
    if x <= 0:
        raise DomainError(f"ln_gamma: x must be positive, got {x}")
    return math.lgamma(x)


def gamma_reciprocal(x: float) -> float:
    """1/Gamma(x), an entire function vanishing at 0, -1, -2, ...

    Negative arguments use the reflection 1/Gamma(x) = Gamma(1-x) sin(pi x) / pi.
    Returns +/-inf when the magnitude exceeds the float range.
    """
    x = _check_finite("gamma_reciprocal", x)
    if x <= 0 and x == math.floor(x):
        return 0.0
    if x > 0:
        return math.exp(-math.lgamma(x))

    s = _sin_pi(x)
    if s == 0.0:
        return 0.0
    log_mag = math.lgamma(1.0 - x) + math.log(abs(s)) - math.log(math.pi)
    if log_mag > _LOG_MAX:
        return math.copysign(math.inf, s)
    return math.copysign(math.exp(log_mag), s)


def _lower_gamma_series(a: float, x: float) -> float:
    """Sum of x^n / (a (a+1) ... (a+n)); multiply by x^a e^{-x} for gamma(a, x)."""
    term = 1.0 / a
    total = term
    ap = a
    for _ in range(_MAX_ITER):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * _EPS:
            return total
    raise NumericalError(f"incomplete gamma series did not converge (a={a}, x={x})")


def _upper_gamma_fraction(a: float, x: float) -> float:
    """Modified Lentz continued fraction; multiply by x^a e^{-x} for Gamma(a, x)."""
    b = x + 1.0 - a
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, _MAX_ITER):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _TINY:
            d = _TINY
        c = b + an / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            return h
    raise NumericalError(f"incomplete gamma continued fraction did not converge (a={a}, x={x})")


def _check_gamma_args(name: str, a: float, x: float) -> tuple[float, float]:
    a = _check_finite(name, a)
    x = float(x)
    if math.isnan(x):
        raise DomainError(f"{name}: x must not be NaN")
    if a <= 0:
        raise DomainError(f"{name}: a must be positive, got {a}")
    if x < 0:
        raise DomainError(f"{name}: x must be nonnegative, got {x}")
    return a, x


def regularized_lower_gamma(a: float, x: float) -> float:
    """P(a, x) = gamma(a, x) / Gamma(a), evaluated without forming Gamma(a).

    Ascending series for x < a + 1, continued fraction for the complement otherwise.
    """
    a, x = _check_gamma_args("regularized_lower_gamma", a, x)
    if x == 0:
        return 0.0
    if math.isinf(x):
        return 1.0
    log_prefactor = a * math.log(x) - x - math.lgamma(a)
    if x < a + 1.0:
        return min(1.0, math.exp(log_prefactor) * _lower_gamma_series(a, x))
    return max(0.0, 1.0 - math.exp(log_prefactor) * _upper_gamma_fraction(a, x))


def lower_incomplete_gamma(a: float, x: float) -> float:
    """gamma(a, x) = integral of u^{a-1} e^{-u} over [0, x].

    Args:
        a: Shape, strictly positive.
        x: Upper limit, nonnegative; +inf gives Gamma(a).

    Raises:
        DomainError: If a <= 0 or x < 0.
    """
    a, x = _check_gamma_args("lower_incomplete_gamma", a, x)
    if x == 0:
        return 0.0
    if math.isinf(x):
        return math.gamma(a)
    log_prefactor = a * math.log(x) - x
    if x < a + 1.0:
        return math.exp(log_prefactor) * _lower_gamma_series(a, x)
    return math.gamma(a) - math.exp(log_prefactor) * _upper_gamma_fraction(a, x)


def bessel_i1_series(x: float) -> float:
    """Ascending series sum over k of (x/2)^{2k+1} / (k! (k+1)!)."""
    half = 0.5 * x
    q = half * half
    term = half
    total = term
    for k in range(_MAX_ITER):
        term *= q / ((k + 1) * (k + 2))
        total += term
        if term < total * _EPS * 0.1:
            break
    return total


def bessel_i1e_asymptotic(x: float) -> float:
    """Large-x expansion of e^{-x} I1(x).

    Terms are summed while they keep shrinking; the expansion is divergent.
    """
    mu = 4.0
    term = 1.0
    total = 1.0
    for k in range(1, 200):
        nxt = -term * (mu - (2 * k - 1) ** 2) / (k * 8.0 * x)
        if abs(nxt) >= abs(term):
            break
        term = nxt
        total += term
        if abs(term) < abs(total) * _EPS * 0.1:
            break
    return total / math.sqrt(2.0 * math.pi * x)


def bessel_i1_asymptotic(x: float) -> float:
    """Large-x expansion of I1(x)."""
    if x > _LOG_MAX:
        return math.inf
    return math.exp(x) * bessel_i1e_asymptotic(x)


def bessel_i1(x: float) -> float:
    """Modified Bessel function of the first kind, order one, for x >= 0.

    Series below I1_CROSSOVER, asymptotic expansion above.
    """
    x = _check_finite("bessel_i1", x)
    if x < 0:
        raise DomainError(f"bessel_i1: x must be nonnegative, got {x}")
    if x <= I1_CROSSOVER:
        return bessel_i1_series(x)
    return bessel_i1_asymptotic(x)


def bessel_i1e(x: float) -> float:
    """Exponentially scaled e^{-x} I1(x); finite for every x >= 0."""
    x = _check_finite("bessel_i1e", x)
    if x < 0:
        raise DomainError(f"bessel_i1e: x must be nonnegative, got {x}")
    if x <= I1_CROSSOVER:
        return math.exp(-x) * bessel_i1_series(x)
    return bessel_i1e_asymptotic(x)


def _w_minus1_initial(x: float) -> float:
    if x < -0.25:
        # branch point expansion in p = -sqrt(2 (1 + e x))
        p = -math.sqrt(max(0.0, 2.0 * (1.0 + math.e * x)))
        return -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p**3
    l1 = math.log(-x)
    l2 = math.log(-l1)
    return l1 - l2 + l2 / l1


def lambert_w_minus1(x: float) -> float:
    """Lower real branch W_{-1}(x) for x in [-1/e, 0), value <= -1.

    Halley iteration from a branch-point or logarithmic initializer.

    Raises:
        DomainError: If x lies outside [-1/e, 0).
    """
    x = _check_finite("lambert_w_minus1", x)
    branch = -math.exp(-1.0)
    if x >= 0 or x < branch * (1.0 + 4 * _EPS):
        raise DomainError(f"lambert_w_minus1: x must lie in [-1/e, 0), got {x}")
    if x <= branch:
        return -1.0

    w = _w_minus1_initial(x)
    for _ in range(50):
        ew = math.exp(w)
        f = w * ew - x
        wp1 = w + 1.0
        if abs(wp1) < 1e-12:
            break
        denom = ew * wp1 - (w + 2.0) * f / (2.0 * wp1)
        step = f / denom
        w_new = min(w - step, -1.0)
        if abs(w_new - w) <= _EPS * abs(w_new):
            return w_new
        w = w_new
    return w


def erfc(x: float) -> float:
    """Complementary error function."""
    x = _check_finite("erfc", x)
    return math.erfc(x)
