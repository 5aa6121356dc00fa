"""SimulationPipeline: orchestrates config -> simulate -> audit -> result files."""

from __future__ import annotations

import contextlib
import csv
import io
import json
import logging
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

from gasketsim import harness
from gasketsim.audit import ResultAuditor
from gasketsim.errors import ConfigError
from gasketsim.graph import build
from gasketsim.lattice import ORIGIN
from gasketsim.rotor import LazyWalk, sample_config, trace_to_csv
from gasketsim.sandpile import DEFAULT_TOPPLE_CAP, Domain, sample_iid, stabilize
from gasketsim.types import ExperimentKind, OverlayKind, Policy, RunConfig

logger = logging.getLogger(__name__)

CONFIG_FILE = "config.json"

EXPERIMENT_COMMANDS: dict[str, ExperimentKind] = {
    "reflecting-stats": ExperimentKind.REFLECTING_FREQUENCY,
    "lemma9-check": ExperimentKind.LEMMA_NINE,
    "return-times": ExperimentKind.RETURN_TIMES,
    "explosion": ExperimentKind.ABELIAN_EXPLOSION,
    "explosion-div": ExperimentKind.DIVISIBLE_EXPLOSION,
    "green-ratio": ExperimentKind.GREEN_RATIO,
    "clt-check": ExperimentKind.CLT,
}


def write_atomic(path: Path, text: str) -> None:
    """Write ``text`` to ``path`` through a temporary file in the same directory."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(OSError):
            os.unlink(tmp)
        raise


def _dump_json(data: object) -> str:
    return json.dumps(data, indent=2) + "\n"


@dataclass
class PipelineResult:
    """Result files of one run, held in memory until written."""

    config: RunConfig
    files: dict[str, str] = field(default_factory=dict)
    # File echoed to stdout when there is no output directory
    primary: str = ""

    @property
    def primary_text(self) -> str:
        return self.files[self.primary]

    def write(self, out_dir: Path) -> list[Path]:
        """Write the resolved config and every result file under ``out_dir``."""
        out_dir = Path(out_dir)
        written = []
        for name, text in [(CONFIG_FILE, self.config.echo_json()), *self.files.items()]:
            path = out_dir / name
            write_atomic(path, text)
            written.append(path)
        logger.info("wrote %d files to %s", len(written), out_dir)
        return written


class SimulationPipeline:
    """Runs one resolved :class:`RunConfig`.

    Steps:
    1. Build the graph or experiment the command names
    2. Simulate (seeded from ``config.seed``)
    3. Audit stabilization results
    4. Return the result files; writing them is left to the caller
    """

    def __init__(self, workers: int = 1) -> None:
        self.workers = workers
        self._handlers: dict[str, Callable[[RunConfig], PipelineResult]] = {
            "build-graph": self.build_graph,
            "rotor-run": self.rotor_run,
            "sandpile-stabilize": self.sandpile_stabilize,
            "render": self.render,
            **{name: self.run_experiment for name in EXPERIMENT_COMMANDS},
        }

    @property
    def commands(self) -> list[str]:
        return list(self._handlers)

    def process(self, config: RunConfig) -> PipelineResult:
        """Run the command in ``config``.

        Raises:
            ConfigError: If the command is unknown or lacks a required setting.
        """
        handler = self._handlers.get(config.command)
        if handler is None:
            raise ConfigError(f"unknown command {config.command!r}")
        return handler(config)

    # ── Commands ─────────────────────────────────────────────────────

    def build_graph(self, config: RunConfig) -> PipelineResult:
        graph = build(_require_level(config), config.half)
        return PipelineResult(config, {"graph.json": graph.to_json()}, "graph.json")

    def rotor_run(self, config: RunConfig) -> PipelineResult:
        level = _require_level(config)
        rng = harness.trial_rng(harness.derive_seed(config.seed, level, 0))
        walk = LazyWalk(
            config.rotor_law, rng, start_level=level, max_level=max(config.max_level, level)
        )
        trace = walk.run_steps(config.steps or 0)
        summary = {
            "master_seed": config.seed,
            "start_level": level,
            "steps": walk.state.time,
            "final_level": walk.graph.level,
            "final_position": list(walk.state.coord),
            "origin_visits": walk.state.visit_count(ORIGIN),
        }
        files = {
            "trace.csv": trace_to_csv(trace),
            "rotors.json": _dump_json(walk.initial.to_json_dict()),
            "summary.json": _dump_json(summary),
        }
        return PipelineResult(config, files, "summary.json")

    def sandpile_stabilize(self, config: RunConfig) -> PipelineResult:
        level = _require_level(config)
        if config.height_law is None:
            raise ConfigError("sandpile-stabilize needs a height law (--law)")
        graph = build(level, config.half)
        domain = Domain.whole(graph)
        rng = harness.trial_rng(harness.derive_seed(config.seed, level, 0))
        sigma = sample_iid(config.height_law, domain, rng)
        result = stabilize(
            domain,
            sigma,
            config.policy,
            topple_cap=config.cap or DEFAULT_TOPPLE_CAP,
            rng=rng if config.policy is Policy.RANDOM else None,
        )
        audit = ResultAuditor().audit_topple(sigma, result)
        if not audit.valid:
            logger.warning("audit found %d errors", len(audit.errors))

        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["a", "b", "sigma", "final", "topples"])
        for (a, b), s, h, t in zip(
            graph.coords.tolist(), sigma.tolist(), result.final.tolist(), result.topples.tolist()
        ):
            writer.writerow([a, b, s, h, t])

        summary = {
            "master_seed": config.seed,
            "level": level,
            "half": config.half.value,
            "policy": config.policy.value,
            "vertices": len(domain),
            "sigma_total": int(sigma.sum()),
            "final_total": int(result.final.sum()),
            "sink_mass": result.sink_mass,
            "total_topples": result.total_topples,
            "odometer_origin": result.odometer_at(ORIGIN),
        }
        files = {
            "vertices.csv": buf.getvalue(),
            "summary.json": _dump_json(summary),
            "audit.json": _dump_json(audit.to_json_dict()),
        }
        return PipelineResult(config, files, "summary.json")

    def run_experiment(self, config: RunConfig) -> PipelineResult:
        if config.experiment is None:
            raise ConfigError(f"{config.command} needs an experiment specification")
        result = harness.run(config.experiment, self.workers)
        files = {"records.csv": result.records_csv(), "summary.json": result.summary_json()}
        return PipelineResult(config, files, "summary.json")

    def render(self, config: RunConfig) -> PipelineResult:
        # render imports write_atomic from this module
        from gasketsim.render import Overlay, SvgBuilder, figure_preset

        if config.figure is not None:
            graph, overlay = figure_preset(config.figure)
        else:
            level = _require_level(config)
            graph = build(level, config.half)
            rng = harness.trial_rng(harness.derive_seed(config.seed, level, 0))
            if config.overlay is OverlayKind.ROTORS:
                overlay = Overlay.rotors(sample_config(config.rotor_law, graph, rng))
            elif config.overlay in (OverlayKind.HEIGHTS, OverlayKind.ODOMETER):
                if config.height_law is None:
                    raise ConfigError(f"{config.overlay.value} overlay needs a height law (--law)")
                domain = Domain.whole(graph)
                result = stabilize(
                    domain,
                    sample_iid(config.height_law, domain, rng),
                    config.policy,
                    topple_cap=config.cap or DEFAULT_TOPPLE_CAP,
                    rng=rng if config.policy is Policy.RANDOM else None,
                )
                overlay = (
                    Overlay.heights(result.final)
                    if config.overlay is OverlayKind.HEIGHTS
                    else Overlay.odometer(result.odometer)
                )
            else:
                overlay = Overlay.none()
        svg = SvgBuilder(config.render).build(graph, overlay)
        return PipelineResult(config, {"render.svg": svg}, "render.svg")


def _require_level(config: RunConfig) -> int:
    if config.level is None:
        raise ConfigError(f"{config.command} needs --level")
    return config.level
