"""Guarded summation of the alternating power series of stable laws.

All three stable-law series have the shape

    sum over n >= start of  sign(n) * x^n / n! * c(n)

with c(n) built from reciprocal gamma values. The sum is accepted only when a
term envelope shows geometric decay, the remaining tail is negligible and the
terms never grew large enough to wipe out the float64 digits of the result.
"""

import math
from collections.abc import Callable
from dataclasses import dataclass

from loguru import logger
from pydantic import BaseModel, Field

from cbf_duality.config import config
from cbf_duality.errors import SeriesDivergenceError
from cbf_duality.special import gamma_reciprocal

ENVELOPE_RATIO = 0.9
# max of 1/Gamma on the positive axis
_RGAMMA_POSITIVE_MAX = 1.1293

Coefficient = Callable[[int], tuple[float, float]]


class StableSeriesControl(BaseModel):
    """Truncation policy for the stable-law series."""

    max_terms: int = Field(default=config.series_max_terms, gt=0, le=400)
    tail_tol: float = Field(default=config.series_tail_tol, ge=1e-15)
    asymptotic_switch: float = Field(default=50.0, gt=0)
    max_cancellation: float = Field(default=config.series_max_cancellation, gt=1)

    model_config = {"frozen": True}


@dataclass
class SeriesResult:
    """Accepted partial sum with its diagnostics."""

    value: float
    n_terms: int
    tail_bound: float
    max_term: float


def log_abs_rgamma(z: float) -> tuple[float, float]:
    """(log |1/Gamma(z)|, sign of 1/Gamma(z)); log is -inf at the poles."""
    if z <= 0 and z == math.floor(z):
        return -math.inf, 0.0
    if z > 0:
        return -math.lgamma(z), 1.0
    value = gamma_reciprocal(z)
    if value == 0.0:
        return -math.inf, 0.0
    if math.isinf(value):
        s = math.sin(math.pi * math.fmod(z, 2.0))
        return math.lgamma(1.0 - z) + math.log(abs(s)) - math.log(math.pi), math.copysign(1.0, s)
    return math.log(abs(value)), math.copysign(1.0, value)


def log_rgamma_envelope(z: float) -> float:
    """log of an upper bound for |1/Gamma(z)| that is smooth in z.

    Uses |1/Gamma(z)| <= Gamma(1 - z) / pi for z < 1 and the global maximum of 1/Gamma
    on the positive axis otherwise.
    """
    if z < 0:
        return math.lgamma(1.0 - z) - math.log(math.pi)
    return math.log(_RGAMMA_POSITIVE_MAX)


def sum_alternating(
    x: float,
    coefficient: Coefficient,
    envelope: Callable[[int], float],
    control: StableSeriesControl,
    start: int = 0,
    label: str = "stable series",
) -> SeriesResult:
    """Sum sign(n) x^n / n! c(n) under the envelope guard.

    Args:
        x: Nonnegative series variable.
        coefficient: Maps n to (log |c(n)|, sign of c(n)); alternating signs are
            folded into c(n).
        envelope: Maps n to log of an upper bound for |c(n)|.
        control: Truncation policy.
        start: First summation index.
        label: Name used in diagnostics.

    Returns:
        SeriesResult with the accepted value.

    Raises:
        SeriesDivergenceError: If the guard rejects the sum.
    """
    if x < 0 or not math.isfinite(x):
        raise SeriesDivergenceError(f"{label}: series variable must be finite and >= 0, got {x}")
    if x > control.asymptotic_switch:
        raise SeriesDivergenceError(
            f"{label}: x={x:.6g} beyond asymptotic switch {control.asymptotic_switch}"
        )
    if x == 0.0:
        value = 0.0
        if start == 0:
            log_c, sign = coefficient(0)
            value = sign * math.exp(log_c) if log_c > -math.inf else 0.0
        return SeriesResult(value=value, n_terms=1, tail_bound=0.0, max_term=abs(value))

    log_x = math.log(x)
    total = 0.0
    max_term = 0.0
    for n in range(start, start + control.max_terms):
        log_base = n * log_x - math.lgamma(n + 1)
        log_c, sign = coefficient(n)
        if log_c > -math.inf:
            term = sign * math.exp(log_base + log_c)
            total += term
            max_term = max(max_term, abs(term))

        log_env_next = (n + 1) * log_x - math.lgamma(n + 2) + envelope(n + 1)
        log_env = log_base + envelope(n)
        ratio = math.exp(log_env_next - log_env)
        if ratio < ENVELOPE_RATIO:
            tail = math.exp(log_env_next) / (1.0 - ratio)
            if tail <= control.tail_tol * max(1.0, abs(total)):
                if max_term > control.max_cancellation * max(1.0, abs(total)):
                    raise SeriesDivergenceError(
                        f"{label}: cancellation too severe at x={x:.6g} "
                        f"(max term {max_term:.3g}, sum {total:.3g})"
                    )
                logger.debug(f"{label}: x={x:.6g} accepted after {n - start + 1} terms")
                return SeriesResult(
                    value=total, n_terms=n - start + 1, tail_bound=tail, max_term=max_term
                )

    raise SeriesDivergenceError(
        f"{label}: envelope ratio did not settle below {ENVELOPE_RATIO} "
        f"within {control.max_terms} terms at x={x:.6g}"
    )
