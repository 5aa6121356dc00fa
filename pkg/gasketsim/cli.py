"""Command-line interface: ``gasketsim <command> [options]``.

Exit codes: 0 on success, 2 on a configuration or usage error, 3 on a
runtime error. Logs go to stderr; without ``--out`` the primary result
(graph JSON, summary JSON or SVG) is printed to stdout.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path
from typing import Any, Optional, Sequence

from pydantic import ValidationError

from gasketsim import __version__
from gasketsim.config_loader import load_defaults, load_law, load_run_config, merged, model_defaults
from gasketsim.core import EXPERIMENT_COMMANDS, SimulationPipeline
from gasketsim.errors import ConfigError, GasketSimError
from gasketsim.harness import EXPERIMENTS, TrialTable
from gasketsim.lattice import LatticeCoord
from gasketsim.render import FIGURES
from gasketsim.types import (
    ExperimentKind,
    ExperimentSpec,
    Half,
    HeightLaw,
    MassLaw,
    OverlayKind,
    Policy,
    RenderOptions,
    RotorLaw,
    RunConfig,
    StartVertex,
)

logger = logging.getLogger("gasketsim")

WORKERS_ENV = "GASKETSIM_WORKERS"

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3

_ROTOR_COMMANDS = {"rotor-run", "reflecting-stats", "lemma9-check", "return-times"}
_HEIGHT_COMMANDS = {"sandpile-stabilize", "explosion", "clt-check"}

# ExperimentSpec field that --cap sets, per command
_CAP_FIELD = {
    "lemma9-check": "step_cap",
    "return-times": "step_cap",
    "green-ratio": "step_cap",
    "explosion": "topple_cap",
    "explosion-div": "sweep_cap",
}

_HELP = {
    "build-graph": "Emit the vertex and edge lists of a prefractal as JSON",
    "rotor-run": "Run a rotor walk from the origin for a number of steps",
    "reflecting-stats": "Frequency of reflecting cut sets under i.i.d. rotors",
    "lemma9-check": "Check that walks inside a reflecting cut set return before exiting",
    "return-times": "Return times of rotor walks on the infinite gasket",
    "sandpile-stabilize": "Stabilize an i.i.d. sandpile on one prefractal and audit it",
    "explosion": "Abelian sandpile explosion experiment",
    "explosion-div": "Divisible sandpile explosion experiment",
    "green-ratio": "Compare simple and uniform rotor walk Green functions",
    "clt-check": "Standardized total chip count N_n against the standard normal",
    "render": "Render a prefractal with an optional overlay as SVG",
}


def _levels(text: str) -> list[int]:
    """Parse ``"1,2,5"`` or ``"1-4"`` (or a mix) into a level list."""
    levels: list[int] = []
    for part in text.split(","):
        part = part.strip()
        if "-" in part:
            lo, hi = part.split("-", 1)
            levels.extend(range(int(lo), int(hi) + 1))
        elif part:
            levels.append(int(part))
    if not levels:
        raise argparse.ArgumentTypeError("no levels given")
    return levels


def _coord(text: str) -> tuple[int, int]:
    try:
        return tuple(LatticeCoord.parse(text))
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected a,b: {text!r}") from e


def _default_workers() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        logger.warning("ignoring %s=%r", WORKERS_ENV, raw)
        return 1


def _epilog(command: str) -> Optional[str]:
    kind = EXPERIMENT_COMMANDS.get(command)
    if kind is not None:
        names = ("master_seed",) + TrialTable.KEYS + EXPERIMENTS[kind].columns
        return "records.csv columns: " + ", ".join(names)
    if command == "rotor-run":
        return "trace.csv columns: t, a, b"
    if command == "sandpile-stabilize":
        return "vertices.csv columns: a, b, sigma, final, topples"
    return None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, help="Master seed (default 0)")
    common.add_argument("--out", type=Path, help="Output directory (default: print to stdout)")
    common.add_argument("--config", type=Path, help="RunConfig file (JSON or YAML); flags override it")
    common.add_argument(
        "--workers", type=int, help=f"Worker processes (default ${WORKERS_ENV} or 1)"
    )
    verbosity = common.add_mutually_exclusive_group()
    verbosity.add_argument("-v", "--verbose", action="store_true", help="Debug logging")
    verbosity.add_argument("-q", "--quiet", action="store_true", help="Warnings and errors only")

    parser = argparse.ArgumentParser(
        prog="gasketsim",
        description="Rotor walks and sandpiles on Sierpinski gasket prefractals.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="command", required=True)

    def add(name: str) -> argparse.ArgumentParser:
        return sub.add_parser(
            name,
            parents=[common],
            help=_HELP[name],
            description=_HELP[name],
            epilog=_epilog(name),
        )

    def level(p: argparse.ArgumentParser, levels: bool = False) -> None:
        p.add_argument("--level", type=int, help="Prefractal level n")
        if levels:
            p.add_argument("--levels", type=_levels, help="Levels, e.g. 1,2,3 or 1-4")

    def half(p: argparse.ArgumentParser) -> None:
        p.add_argument("--half", choices=[h.value for h in Half], help="plus, minus or both")

    def trials(p: argparse.ArgumentParser) -> None:
        p.add_argument("--trials", type=int, help="Trials per level")

    def law(p: argparse.ArgumentParser, what: str) -> None:
        p.add_argument("--law", help=f"{what} law as inline JSON or @file (JSON/YAML)")

    def cap(p: argparse.ArgumentParser, what: str) -> None:
        p.add_argument("--cap", type=int, help=what)

    def policy(p: argparse.ArgumentParser) -> None:
        p.add_argument("--policy", choices=[x.value for x in Policy], help="Toppling order")

    p = add("build-graph")
    level(p)
    half(p)

    p = add("rotor-run")
    level(p)
    p.add_argument("--steps", type=int, help="Number of steps")
    p.add_argument("--max-level", type=int, help="Largest level the walk may grow to")
    law(p, "Rotor")

    p = add("reflecting-stats")
    level(p, levels=True)
    trials(p)
    law(p, "Rotor")

    p = add("lemma9-check")
    level(p, levels=True)
    trials(p)
    law(p, "Rotor")
    cap(p, "Step cap per walk")
    p.add_argument("--start", choices=[s.value for s in StartVertex], help="Walk start vertex")

    p = add("return-times")
    level(p)
    trials(p)
    law(p, "Rotor")
    cap(p, "Step cap per walk")
    p.add_argument("--max-level", type=int, help="Largest level a walk may grow to")

    p = add("sandpile-stabilize")
    level(p)
    half(p)
    law(p, "Height")
    policy(p)
    cap(p, "Topple cap")

    p = add("explosion")
    level(p, levels=True)
    trials(p)
    law(p, "Height")
    policy(p)
    cap(p, "Topple cap per trial")

    p = add("explosion-div")
    level(p, levels=True)
    trials(p)
    law(p, "Mass")
    cap(p, "Sweep cap per trial")
    p.add_argument("--epsilon", type=float, help="Stability tolerance")

    p = add("green-ratio")
    level(p)
    trials(p)
    cap(p, "Step cap per walk")
    p.add_argument("--source", type=_coord, help="Start vertex a,b")
    p.add_argument("--target", type=_coord, help="Target vertex a,b")

    p = add("clt-check")
    level(p)
    trials(p)
    law(p, "Height")

    p = add("render")
    level(p)
    half(p)
    p.add_argument("--overlay", choices=[o.value for o in OverlayKind], help="Per-vertex overlay")
    p.add_argument("--figure", choices=FIGURES, help="Named preset; ignores level and overlay")
    law(p, "Rotor (rotors overlay) or height (heights/odometer)")
    policy(p)
    cap(p, "Topple cap")

    return parser


def _configure_logging(verbose: bool, quiet: bool) -> None:
    level = logging.DEBUG if verbose else logging.WARNING if quiet else logging.INFO
    logging.basicConfig(stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    logging.getLogger().setLevel(level)


def _law_model(command: str, overlay: Optional[str]) -> Optional[type]:
    if command in _ROTOR_COMMANDS:
        return RotorLaw
    if command in _HEIGHT_COMMANDS:
        return HeightLaw
    if command == "explosion-div":
        return MassLaw
    if command == "render":
        return RotorLaw if overlay == OverlayKind.ROTORS.value else HeightLaw
    return None


def _opt(args: argparse.Namespace, name: str) -> Any:
    return getattr(args, name, None)


def resolve_config(args: argparse.Namespace, defaults: dict[str, Any]) -> RunConfig:
    """Merge packaged defaults, an optional config file and explicit flags.

    Raises:
        ConfigError: On inconsistent settings.
        pydantic.ValidationError: If the merged values are invalid.
    """
    command = args.command
    base: dict[str, Any] = {}
    if args.config is not None:
        base = load_run_config(args.config).model_dump(mode="json", exclude_none=True)
        if base["command"] != command:
            raise ConfigError(f"{args.config} is a {base['command']} config, not {command}")

    overlay = _opt(args, "overlay") or base.get("overlay")
    law = None
    law_text = _opt(args, "law")
    model = _law_model(command, overlay)
    if law_text is not None:
        if model is None:
            raise ConfigError(f"{command} takes no law")
        law = load_law(law_text, model).model_dump(mode="json")

    seed = args.seed if args.seed is not None else base.get("seed", 0)
    data = merged(
        {"cap": defaults.get("stabilize", {}).get("topple_cap")},
        base,
        {
            "command": command,
            "level": _opt(args, "level"),
            "half": _opt(args, "half"),
            "seed": seed,
            "steps": _opt(args, "steps"),
            "overlay": overlay,
            "figure": _opt(args, "figure"),
        },
    )
    data["render"] = merged(
        model_defaults(RenderOptions, defaults.get("render", {})), base.get("render")
    )

    kind = EXPERIMENT_COMMANDS.get(command)
    if kind is None:
        data = merged(data, {"policy": _opt(args, "policy"), "cap": _opt(args, "cap")})
        if command == "rotor-run":
            data = merged(data, {"max_level": _opt(args, "max_level")})
        if law is not None:
            data["rotor_law" if model is RotorLaw else "height_law"] = law
    else:
        data["experiment"] = _experiment(args, kind, base.get("experiment"), defaults, seed, law)

    data["out"] = args.out
    data["workers"] = args.workers if args.workers is not None else _default_workers()
    return RunConfig.model_validate(data)


def _experiment(
    args: argparse.Namespace,
    kind: ExperimentKind,
    base: Optional[dict[str, Any]],
    defaults: dict[str, Any],
    seed: int,
    law: Optional[dict[str, Any]],
) -> dict[str, Any]:
    levels = _opt(args, "levels")
    if levels is None and _opt(args, "level") is not None:
        levels = [args.level]
    if levels is None and not (base and base.get("levels")):
        raise ConfigError(f"{args.command} needs --level or --levels")

    law_field = {
        ExperimentKind.DIVISIBLE_EXPLOSION: "mass_law",
        ExperimentKind.ABELIAN_EXPLOSION: "height_law",
        ExperimentKind.CLT: "height_law",
    }.get(kind, "rotor_law")
    flags = {
        "kind": kind.value,
        "levels": levels,
        "trials": _opt(args, "trials"),
        "master_seed": seed,
        "epsilon": _opt(args, "epsilon"),
        "max_level": _opt(args, "max_level"),
        "start": _opt(args, "start"),
        "policy": _opt(args, "policy"),
        "source": _opt(args, "source"),
        "target": _opt(args, "target"),
        law_field: law,
    }
    cap_field = _CAP_FIELD.get(args.command)
    if cap_field is not None:
        flags[cap_field] = _opt(args, "cap")
    return merged(model_defaults(ExperimentSpec, defaults.get("experiment", {})), base, flags)


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Entry point for the ``gasketsim`` console script."""
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    if not argv:
        parser.print_usage(sys.stderr)
        return EXIT_CONFIG
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        # --help and --version exit 0, usage errors exit 2
        return int(e.code or 0)

    _configure_logging(args.verbose, args.quiet)

    try:
        config = resolve_config(args, load_defaults())
    except (ConfigError, ValidationError, FileNotFoundError) as e:
        logger.error("configuration error: %s", e)
        return EXIT_CONFIG

    try:
        result = SimulationPipeline(config.workers).process(config)
        if config.out is None:
            sys.stdout.write(result.primary_text)
        else:
            result.write(config.out)
    except ConfigError as e:
        logger.error("configuration error: %s", e)
        return EXIT_CONFIG
    except (GasketSimError, OSError) as e:
        logger.error("%s failed: %s", args.command, e)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
