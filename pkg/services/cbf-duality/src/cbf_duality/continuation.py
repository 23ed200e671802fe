"""Newton continuation for right inverses of analytic maps of the upper half-plane.

To solve h(w) = z we start far up the imaginary axis, where the solution is
w ~ z, and walk a path of intermediate targets down to z, solving each by
damped Newton from the previous solution. The path is geometric in Im and
linear in Re, so the correct branch is carried down to the real axis.
"""

import math
from collections.abc import Callable
from dataclasses import dataclass, field

from loguru import logger

from cbf_duality.config import config
from cbf_duality.errors import ContinuationError

ComplexMap = Callable[[complex], complex]

_MAX_HALVINGS = 40
# Im of the last waypoint before a real target, relative to 1 + |Re z|
_REAL_APPROACH = 1e-6


@dataclass
class InversionState:
    """Scratch state of one inversion; never shared between calls."""

    z: complex
    w_current: complex
    path: list[complex] = field(default_factory=list)
    newton_steps: int = 0


def waypoint_path(target: complex, anchor_im: float, n_waypoints: int) -> list[complex]:
    """Targets from i*anchor_im down to target, geometric in Im and linear in Re."""
    end_im = target.imag
    if end_im <= 0:
        end_im = _REAL_APPROACH * (1.0 + abs(target.real))
    ratio = end_im / anchor_im
    path = [
        complex(target.real * k / n_waypoints, anchor_im * ratio ** (k / n_waypoints))
        for k in range(n_waypoints + 1)
    ]
    if target.imag <= 0:
        path.append(target)
    return path


def newton_solve(
    h: ComplexMap,
    dh: ComplexMap,
    target: complex,
    w0: complex,
    tol: float,
    max_iter: int,
) -> tuple[complex, int]:
    """Damped Newton for h(w) = target that never leaves the closed upper half-plane.

    Returns:
        (solution, number of Newton steps).

    Raises:
        ContinuationError: If the residual stalls or max_iter is exhausted.
    """
    w = w0
    r = h(w) - target
    limit = tol * (1.0 + abs(target))
    for step_count in range(max_iter):
        if abs(r) <= limit:
            return w, step_count
        derivative = dh(w)
        if derivative == 0 or not math.isfinite(abs(derivative)):
            raise ContinuationError(f"singular Jacobian at w={w} for target {target}")
        step = r / derivative
        lam = 1.0
        for _ in range(_MAX_HALVINGS):
            candidate = w - lam * step
            if candidate.imag >= 0:
                r_new = h(candidate) - target
                if math.isfinite(abs(r_new)) and abs(r_new) < abs(r):
                    break
            lam *= 0.5
        else:
            if abs(r) <= 100.0 * limit:
                return w, step_count
            raise ContinuationError(
                f"Newton stalled at w={w} (residual {abs(r):.3g}) for target {target}"
            )
        w, r = candidate, r_new
    if abs(r) <= limit:
        return w, max_iter
    raise ContinuationError(
        f"Newton did not converge in {max_iter} steps for target {target} "
        f"(residual {abs(r):.3g})"
    )


def invert_by_continuation(
    h: ComplexMap,
    dh: ComplexMap,
    z: complex,
    anchor_im: float,
    waypoints: int | None = None,
    refinements: int | None = None,
    tol: float | None = None,
    max_iter: int | None = None,
) -> InversionState:
    """Solve h(w) = z for z in the closed upper half-plane by continuation.

    Real targets are approached from above and finished with one Newton solve on
    the axis itself; a numerically real answer is returned with zero imaginary part.

    Raises:
        ContinuationError: If every refinement of the path fails.
    """
    waypoints = config.continuation_waypoints if waypoints is None else waypoints
    refinements = config.continuation_refinements if refinements is None else refinements
    tol = config.newton_tol if tol is None else tol
    max_iter = config.newton_max_iter if max_iter is None else max_iter

    last_error: ContinuationError | None = None
    n = waypoints
    for attempt in range(refinements + 1):
        state = InversionState(z=z, w_current=complex(0.0, anchor_im))
        state.path = waypoint_path(z, anchor_im, n)
        try:
            for target in state.path:
                state.w_current, steps = newton_solve(
                    h, dh, target, state.w_current, tol, max_iter
                )
                state.newton_steps += steps
        except ContinuationError as exc:
            last_error = exc
            logger.debug(f"continuation to {z} failed with {n} waypoints: {exc}")
            n *= 2
            continue
        if attempt:
            logger.warning(f"continuation to {z} needed {n} waypoints")
        w = state.w_current
        if z.imag == 0 and abs(w.imag) <= 1e-10 * (1.0 + abs(w)):
            state.w_current = complex(w.real, 0.0)
        return state
    raise ContinuationError(
        f"continuation to {z} failed after {refinements} refinements: {last_error}"
    )
