"""CSV and JSON serialization of reports and tabulations."""

import json
import math
import sys
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd
from loguru import logger

from cbf_duality.classical import ClassicalLaw, atoms, classical_cdf, classical_pdf
from cbf_duality.errors import DomainError
from cbf_duality.free import FreeLaw, free_measure

FLOAT_FORMAT = "%.17g"


def _clean(value: Any) -> Any:
    """Make a payload JSON-safe: non-finite floats become null, numpy scalars become Python."""
    if isinstance(value, dict):
        return {str(k): _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def to_json(payload: dict[str, Any]) -> str:
    """Sorted-key JSON; floats use the shortest repr that round-trips exactly."""
    return json.dumps(_clean(payload), sort_keys=True, indent=2) + "\n"


def to_csv(rows: list[dict[str, Any]]) -> str:
    """CSV with a header row, RFC-4180 minimal quoting and 17 significant digits."""
    frame = pd.DataFrame(rows)
    return frame.to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator="\n")


def write_output(text: str, output: str | Path | None) -> None:
    """Write text to output, or to stdout when output is None or '-'."""
    if output is None or str(output) == "-":
        sys.stdout.write(text)
        return
    path = Path(output)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    logger.info(f"wrote {path}")


def render(payload: dict[str, Any], rows: list[dict[str, Any]], fmt: str) -> str:
    """JSON of the whole payload, or CSV of its rows."""
    if fmt == "json":
        return to_json(payload)
    if fmt == "csv":
        return to_csv(rows)
    raise DomainError(f"unknown format {fmt}")


def parse_range(text: str) -> tuple[float, float, int]:
    """Parse 'lo:hi:n' into (lo, hi, n)."""
    parts = text.split(":")
    if len(parts) != 3:
        raise DomainError(f"expected lo:hi:n, got {text!r}")
    try:
        lo, hi, n = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError as exc:
        raise DomainError(f"expected lo:hi:n, got {text!r}") from exc
    if not (math.isfinite(lo) and math.isfinite(hi)) or hi <= lo or n < 2:
        raise DomainError(f"range {text!r} needs finite lo < hi and n >= 2")
    return lo, hi, n


def tabulate_free(law: FreeLaw, x_grid: np.ndarray) -> tuple[dict[str, Any], list[dict[str, Any]]]:
    """(header, rows) for the density of mu^{boxplus t} on x_grid; rows are family, t, x, density."""
    decomposition = free_measure(law)
    header = {
        "family": law.family.label,
        "t": law.t,
        **decomposition.header(),
        "total_mass": decomposition.total_mass(),
    }
    rows = [
        {
            "family": law.family.label,
            "t": law.t,
            "x": float(x),
            "density": decomposition.density(float(x)),
        }
        for x in x_grid
    ]
    return header, rows


def tabulate_classical(
    law: ClassicalLaw, y_grid: np.ndarray
) -> tuple[dict[str, Any], list[dict[str, Any]]]:
    """(header, rows) with CDF and density of nu^{*t} on y_grid; rows are family, t, y, cdf, pdf."""
    header = {
        "family": law.family.label,
        "t": law.t,
        "atoms": [[loc, mass] for loc, mass in atoms(law)],
        "total_mass": law.total_mass,
    }
    rows = []
    for y in y_grid:
        y = float(y)
        rows.append(
            {
                "family": law.family.label,
                "t": law.t,
                "y": y,
                "cdf": classical_cdf(law, y),
                "pdf": classical_pdf(law, y) if y > 0 else math.nan,
            }
        )
    return header, rows
