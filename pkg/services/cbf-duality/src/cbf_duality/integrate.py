"""Adaptive quadrature wrappers around scipy.integrate.quad."""

import math
from collections.abc import Callable, Sequence

from loguru import logger
from scipy import integrate

from cbf_duality.config import config
from cbf_duality.errors import QuadratureError

# quad may flag roundoff while still meeting the target; only a reported
# error this many times above the target is fatal
_SLACK = 10.0


def quad(
    func: Callable[[float], float],
    a: float,
    b: float,
    *,
    epsabs: float | None = None,
    epsrel: float | None = None,
    limit: int | None = None,
    points: Sequence[float] | None = None,
    label: str = "quad",
) -> float:
    """Integrate func over [a, b] (b may be +inf) or raise QuadratureError.

    Args:
        func: Real integrand.
        a: Lower limit.
        b: Upper limit.
        epsabs: Absolute target, defaults to config.quad_epsabs.
        epsrel: Relative target, defaults to config.quad_epsrel.
        limit: Subinterval limit, defaults to config.quad_limit.
        points: Interior break points (finite intervals only).
        label: Name used in error messages.

    Returns:
        The integral value.
    """
    epsabs = config.quad_epsabs if epsabs is None else epsabs
    epsrel = config.quad_epsrel if epsrel is None else epsrel
    limit = config.quad_limit if limit is None else limit
    if a == b:
        return 0.0

    kwargs: dict = {"epsabs": epsabs, "epsrel": epsrel, "limit": limit, "full_output": 1}
    if points is not None and math.isfinite(b):
        inner = sorted(p for p in points if a < p < b)
        if inner:
            kwargs["points"] = inner

    result = integrate.quad(func, a, b, **kwargs)
    value, abserr = float(result[0]), float(result[1])
    if not math.isfinite(value):
        raise QuadratureError(f"{label}: non-finite integral over [{a}, {b}]")
    if len(result) > 3:
        target = max(epsabs, epsrel * abs(value))
        if abserr > _SLACK * target:
            raise QuadratureError(
                f"{label}: error estimate {abserr:.3g} above target {target:.3g} "
                f"over [{a}, {b}] ({result[3]})"
            )
        logger.debug(f"{label}: quad warning tolerated, abserr={abserr:.3g}")
    return value


def quad_fourier(
    func: Callable[[float], float],
    a: float,
    omega: float,
    kind: str,
    *,
    epsabs: float | None = None,
    label: str = "quad_fourier",
) -> float:
    """Integrate func(u) * cos(omega u) or sin(omega u) over [a, inf).

    Args:
        func: Slowly decaying real amplitude.
        a: Lower limit.
        omega: Angular frequency, nonzero.
        kind: "cos" or "sin".
        epsabs: Absolute target, defaults to config.quad_epsabs.
        label: Name used in error messages.

    Returns:
        The oscillatory integral value.
    """
    epsabs = config.quad_epsabs if epsabs is None else epsabs
    result = integrate.quad(
        func, a, math.inf, weight=kind, wvar=omega, epsabs=epsabs, limlst=200, full_output=1
    )
    value, abserr = float(result[0]), float(result[1])
    if not math.isfinite(value):
        raise QuadratureError(f"{label}: non-finite oscillatory integral")
    if len(result) > 3 and abserr > _SLACK * epsabs:
        raise QuadratureError(f"{label}: error estimate {abserr:.3g} above target {epsabs:.3g}")
    return value
