"""cbf-duality command-line entry point."""

import argparse
import sys
from pathlib import Path
from typing import Any, Literal

import numpy as np
from loguru import logger
from pydantic import BaseModel, Field, ValidationError, field_validator

from cbf_duality.cbf import BUILT_IN_KINDS, CbfSpec, Family, FamilyKind
from cbf_duality.classical import ClassicalLaw
from cbf_duality.config import DEFAULT_SEED, config, load_grid_presets
from cbf_duality.duality import GridSpec, VerificationReport, verify_corollary_grid, verify_theorem
from cbf_duality.errors import CbfDualityError, NumericalError
from cbf_duality.free import FreeLaw, free_laplace, support_left
from cbf_duality.kendall import kendall_cells, renewal_density_formula, renewal_mc
from cbf_duality.reports import parse_range, render, tabulate_classical, tabulate_free, write_output

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_USAGE = 2
EXIT_NUMERICAL = 3

COMMANDS = (
    "verify-theorem",
    "verify-corollary",
    "verify-kendall",
    "tabulate-free",
    "tabulate-classical",
    "families",
)
DEFAULT_ALPHA = 0.5
RENEWAL_TIMES = (0.5, 1.0, 2.0)
KENDALL_FAMILIES = (FamilyKind.GAMMA, FamilyKind.POISSON_EXP)


class CliConfig(BaseModel):
    """Validated command line; invalid ranges are rejected before any computation."""

    command: Literal[
        "verify-theorem",
        "verify-corollary",
        "verify-kendall",
        "tabulate-free",
        "tabulate-classical",
        "families",
    ]
    family: FamilyKind | None = None
    alpha: float | None = Field(default=None, gt=0, lt=1)
    spec: Path | None = None
    t: list[float] | None = None
    w: list[float] | None = None
    w_log: str | None = None
    x_grid: str | None = None
    y_grid: str | None = None
    preset: str | None = None
    seed: int = Field(default=DEFAULT_SEED, ge=0, lt=2**64)
    n_paths: int = Field(default=100_000, ge=0)
    output: str | None = None
    format: Literal["csv", "json"] = "csv"
    tolerance: float | None = Field(default=None, gt=0)
    threads: int | None = Field(default=None, gt=0)
    log_level: str = "INFO"

    @field_validator("t", "w")
    @classmethod
    def validate_positive(cls, v: list[float] | None) -> list[float] | None:
        if v is not None and any(x <= 0 for x in v):
            raise ValueError(f"values must be positive, got {v}")
        return v

    @field_validator("w_log", "x_grid", "y_grid")
    @classmethod
    def validate_range(cls, v: str | None) -> str | None:
        if v is not None:
            parse_range(v)
        return v

    def canonical(self) -> str:
        """Canonical serialized form; CliConfig.model_validate_json inverts it."""
        return self.model_dump_json()


def _float_list(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cbf-duality",
        description="Classical and free convolution semigroups of complete Bernstein functions.",
    )
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--family", choices=[str(k) for k in FamilyKind])
    parser.add_argument("--alpha", type=float, help="free-stable index in (0, 1)")
    parser.add_argument("--spec", type=Path, help="JSON Pick representation for --family custom")
    parser.add_argument("--t", type=_float_list, help="comma-separated times")
    parser.add_argument("--w", type=_float_list, help="comma-separated Laplace variables")
    parser.add_argument("--w-log", help="log-spaced w grid lo:hi:n")
    parser.add_argument("--x-grid", help="linear x grid lo:hi:n for tabulate-free")
    parser.add_argument("--y-grid", help="linear y grid lo:hi:n for tabulate-classical")
    parser.add_argument("--preset", help="named grid from grids.yaml")
    parser.add_argument("--seed", type=int, default=config.seed)
    parser.add_argument("--n-paths", type=int, default=config.n_paths)
    parser.add_argument("--output", help="output path, default stdout")
    parser.add_argument("--format", choices=["csv", "json"], default="csv")
    parser.add_argument("--tolerance", type=float)
    parser.add_argument("--threads", type=int, default=config.threads)
    parser.add_argument("--log-level", default=config.log_level)
    return parser


def parse_config(argv: list[str]) -> CliConfig:
    """argv -> CliConfig; argparse exits with status 2 on grammar errors."""
    args = build_parser().parse_args(argv)
    return CliConfig(**vars(args))


def build_family(cli: CliConfig, kind: FamilyKind | None = None) -> Family:
    kind = kind or cli.family
    match kind:
        case FamilyKind.FREE_STABLE:
            return Family.free_stable(DEFAULT_ALPHA if cli.alpha is None else cli.alpha)
        case FamilyKind.CUSTOM:
            if cli.spec is None:
                raise CbfDualityError("--family custom needs --spec path.json")
            return Family.custom(CbfSpec.from_file(cli.spec))
        case None:
            raise CbfDualityError(f"{cli.command} needs --family")
    return Family(kind=kind)


def _families(cli: CliConfig, default: tuple[FamilyKind, ...]) -> list[Family]:
    if cli.family is not None:
        return [build_family(cli)]
    return [build_family(cli, kind) for kind in default]


def _preset(cli: CliConfig, default: str) -> dict[str, Any]:
    presets = load_grid_presets()
    name = cli.preset or default
    if name not in presets:
        raise CbfDualityError(f"unknown preset {name!r}; known: {sorted(presets)}")
    return presets[name]


def _w_values(cli: CliConfig, preset: dict[str, Any]) -> list[float]:
    if cli.w is not None:
        return cli.w
    w_log = cli.w_log or preset.get("w_log")
    if w_log is not None:
        lo, hi, n = parse_range(w_log)
        return np.geomspace(lo, hi, n).tolist()
    return list(preset["w"])


def _report_exit(report: VerificationReport) -> int:
    if any(r.error for r in report.rows):
        return EXIT_NUMERICAL
    return EXIT_OK if report.passed else EXIT_FAILED


def cmd_families(cli: CliConfig) -> int:
    lines = [
        "free-stable(alpha)  f(z) = z^(1-alpha), alpha in (0, 1)",
        "gamma               f(z) = log(1 + z)",
        "poisson-exp         f(z) = z / (z + 1)",
        "inverse-gaussian    f(z) = sqrt(1 + 2z)",
        'custom(json)        {"a": a, "b": b, "atoms": [[x, m], ...]}',
    ]
    write_output("\n".join(lines) + "\n", cli.output)
    return EXIT_OK


def cmd_verify_theorem(cli: CliConfig) -> int:
    preset = _preset(cli, "acceptance")
    grid = GridSpec(t_values=cli.t or preset["t"], w_values=_w_values(cli, preset))
    report = verify_theorem(grid, _families(cli, BUILT_IN_KINDS), cli.threads, cli.tolerance)
    report.seed = cli.seed
    rows = [r.to_dict() for r in report.rows]
    write_output(render(report.to_dict(), rows, cli.format), cli.output)
    logger.info(f"max residual {report.max_residual:.3g}")
    return _report_exit(report)


def cmd_verify_corollary(cli: CliConfig) -> int:
    preset = _preset(cli, "corollary")
    report = verify_corollary_grid(
        _families(cli, BUILT_IN_KINDS),
        cli.t or preset["t"],
        _w_values(cli, preset),
        cli.threads,
        cli.tolerance,
    )
    report.seed = cli.seed
    rows = [r.to_dict() for r in report.rows]
    write_output(render(report.to_dict(), rows, cli.format), cli.output)
    logger.info(f"max residual {report.max_residual:.3g}")
    return _report_exit(report)


def cmd_verify_kendall(cli: CliConfig) -> int:
    cell_presets = _preset(cli, "kendall_cells")
    payloads, rows, passed = [], [], True
    for family in _families(cli, KENDALL_FAMILIES):
        cells = [(tuple(c["s"]), tuple(c["y"])) for c in cell_presets.get(str(family.kind), [])]
        if not cells:
            raise CbfDualityError(f"no kendall cells configured for {family.kind}")
        reports = kendall_cells(
            family, cells, cli.n_paths, cli.seed, threads=cli.threads, strict=False
        )
        renewal = renewal_mc(family, list(RENEWAL_TIMES), cli.n_paths, seed=cli.seed, threads=cli.threads)
        renewal.u_formula = [renewal_density_formula(family, s) for s in renewal.s_grid]
        free_values = [free_laplace(FreeLaw(family=family, t=1.0), s)[0] for s in renewal.s_grid]
        for u, se, formula, free in zip(
            renewal.u_hat, renewal.std_err, renewal.u_formula, free_values, strict=True
        ):
            tolerance = cli.tolerance or config.tolerance_closed_form
            passed &= abs(u - formula) <= 3.0 * se and abs(formula - free) <= tolerance
        passed &= all(c.passed for c in reports)
        payloads.append(
            {
                "family": family.label,
                "seed": cli.seed,
                "n_paths": cli.n_paths,
                "cells": [c.to_dict() for c in reports],
                "u": renewal.rows(),
            }
        )
        rows.extend(c.to_dict() for c in reports)
    payload = payloads[0] if len(payloads) == 1 else {"seed": cli.seed, "reports": payloads}
    write_output(render(payload, rows, cli.format), cli.output)
    return EXIT_OK if passed else EXIT_FAILED


def _linear_grid(text: str | None, lo: float, hi: float, n: int = 201) -> np.ndarray:
    if text is not None:
        lo, hi, n = parse_range(text)
    return np.linspace(lo, hi, n)


def cmd_tabulate_free(cli: CliConfig) -> int:
    law = FreeLaw(family=build_family(cli), t=(cli.t or [1.0])[0])
    edge = support_left(law)
    header, rows = tabulate_free(law, _linear_grid(cli.x_grid, edge, edge + 10.0))
    write_output(render({**header, "rows": rows}, rows, cli.format), cli.output)
    return EXIT_OK


def cmd_tabulate_classical(cli: CliConfig) -> int:
    law = ClassicalLaw(family=build_family(cli), t=(cli.t or [1.0])[0])
    header, rows = tabulate_classical(law, _linear_grid(cli.y_grid, 0.0, 10.0))
    write_output(render({**header, "rows": rows}, rows, cli.format), cli.output)
    return EXIT_OK


HANDLERS = {
    "verify-theorem": cmd_verify_theorem,
    "verify-corollary": cmd_verify_corollary,
    "verify-kendall": cmd_verify_kendall,
    "tabulate-free": cmd_tabulate_free,
    "tabulate-classical": cmd_tabulate_classical,
    "families": cmd_families,
}


def run(argv: list[str]) -> int:
    """Execute one command and return its exit status."""
    try:
        cli = parse_config(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    except ValidationError as exc:
        logger.error(f"invalid arguments: {exc}")
        return EXIT_USAGE

    logger.remove()
    logger.add(
        sys.stderr,
        format="<green>{time:YYYY-MM-DD HH:mm:ss}</green> | <level>{level: <8}</level> | <cyan>{name}</cyan>:<cyan>{function}</cyan>:<cyan>{line}</cyan> - <level>{message}</level>",
        level=cli.log_level,
    )
    logger.info(f"cbf-duality {cli.command}, seed {cli.seed}")
    try:
        return HANDLERS[cli.command](cli)
    except NumericalError as exc:
        logger.error(f"numerical failure: {exc}")
        return EXIT_NUMERICAL
    except (ValidationError, CbfDualityError, FileNotFoundError, KeyError) as exc:
        logger.error(f"{type(exc).__name__}: {exc}")
        return EXIT_USAGE


def main() -> None:
    """Console-script entry point."""
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
