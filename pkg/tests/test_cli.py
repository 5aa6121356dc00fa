"""Tests for the gasketsim command-line interface."""

import json

import pytest

from gasketsim.cli import WORKERS_ENV, build_parser, main, resolve_config
from gasketsim.config_loader import load_defaults
from gasketsim.errors import ConfigError

SUPERCRITICAL = "[[2, 0.5], [5, 0.5]]"


def _resolve(*argv):
    return resolve_config(build_parser().parse_args(list(argv)), load_defaults())


class TestExitCodes:
    """Usage, configuration and runtime failures."""

    def test_no_arguments(self, capsys):
        assert main([]) == 2
        assert "usage" in capsys.readouterr().err

    def test_version(self, capsys):
        assert main(["--version"]) == 0
        assert "gasketsim" in capsys.readouterr().out

    def test_unknown_flag(self):
        assert main(["build-graph", "--law", "[]"]) == 2

    def test_missing_level(self):
        assert main(["build-graph"]) == 2

    def test_bad_law_json(self):
        assert main(["sandpile-stabilize", "--level", "1", "--law", "[[2, 0.5],"]) == 2

    def test_invalid_law(self):
        assert main(["sandpile-stabilize", "--level", "1", "--law", "[[2, 0.5], [5, 0.1]]"]) == 2

    def test_missing_height_law(self):
        assert main(["sandpile-stabilize", "--level", "1"]) == 2

    def test_config_for_another_command(self, tmp_path):
        path = tmp_path / "config.json"
        path.write_text(json.dumps({"command": "rotor-run", "level": 1}), encoding="utf-8")
        assert main(["build-graph", "--config", str(path)]) == 2

    def test_subcritical_explosion_is_a_config_error(self):
        assert main(["explosion", "--levels", "1", "--trials", "1", "--law", "[[1, 1.0]]"]) == 2


class TestCommands:
    """Each command's output files."""

    def test_build_graph_to_stdout(self, capsys):
        assert main(["build-graph", "--level", "2", "--half", "plus", "-q"]) == 0
        data = json.loads(capsys.readouterr().out)
        assert len(data["vertices"]) == 15
        assert len(data["edges"]) == 27

    def test_config_echo_reproduces_run(self, tmp_path):
        first = tmp_path / "first"
        second = tmp_path / "second"
        argv = ["reflecting-stats", "--levels", "1-2", "--trials", "50", "--seed", "9", "-q"]
        assert main(argv + ["--out", str(first)]) == 0
        config = first / "config.json"
        assert main(["reflecting-stats", "--config", str(config), "--out", str(second), "-q"]) == 0
        for name in ("config.json", "records.csv", "summary.json"):
            assert (first / name).read_bytes() == (second / name).read_bytes()

    def test_records_csv_layout(self, tmp_path):
        argv = ["reflecting-stats", "--levels", "1,3", "--trials", "20", "--out", str(tmp_path), "-q"]
        assert main(argv) == 0
        lines = (tmp_path / "records.csv").read_text(encoding="utf-8").splitlines()
        assert lines[0] == "master_seed,level,trial,seed,status,reflecting"
        assert len(lines) == 41
        assert all(line.startswith("0,") for line in lines[1:])

    def test_sandpile_stabilize_writes_audit(self, tmp_path):
        argv = ["sandpile-stabilize", "--level", "2", "--law", SUPERCRITICAL, "--out", str(tmp_path), "-q"]
        assert main(argv) == 0
        audit = json.loads((tmp_path / "audit.json").read_text(encoding="utf-8"))
        assert audit["valid"] is True
        summary = json.loads((tmp_path / "summary.json").read_text(encoding="utf-8"))
        assert summary["sigma_total"] == summary["final_total"] + summary["sink_mass"]
        header = (tmp_path / "vertices.csv").read_text(encoding="utf-8").splitlines()[0]
        assert header == "a,b,sigma,final,topples"

    def test_policies_give_identical_vertices(self, tmp_path):
        outputs = []
        for policy in ("fifo", "bulk"):
            out = tmp_path / policy
            argv = ["sandpile-stabilize", "--level", "3", "--law", SUPERCRITICAL, "--policy", policy]
            assert main(argv + ["--out", str(out), "-q"]) == 0
            outputs.append((out / "vertices.csv").read_text(encoding="utf-8"))
        assert outputs[0] == outputs[1]

    def test_rotor_run_is_seeded(self, tmp_path):
        traces = []
        for name in ("a", "b"):
            argv = ["rotor-run", "--level", "1", "--steps", "40", "--seed", "3", "--out", str(tmp_path / name)]
            assert main(argv + ["-q"]) == 0
            traces.append((tmp_path / name / "trace.csv").read_text(encoding="utf-8"))
        assert traces[0] == traces[1]
        assert traces[0].splitlines()[:2] == ["t,a,b", "0,0,0"]
        assert len(traces[0].splitlines()) == 42

    def test_render_figure(self, tmp_path):
        assert main(["render", "--figure", "reflecting-s2", "--out", str(tmp_path), "-q"]) == 0
        svg = (tmp_path / "render.svg").read_text(encoding="utf-8")
        assert svg.startswith("<?xml")

    def test_render_heights_to_stdout(self, capsys):
        argv = ["render", "--level", "2", "--overlay", "heights", "--law", SUPERCRITICAL, "-q"]
        assert main(argv) == 0
        assert capsys.readouterr().out.rstrip().endswith("</svg>")


class TestResolveConfig:
    """Layering of defaults, config files and flags."""

    def test_levels_ranges(self):
        config = _resolve("explosion", "--levels", "1-3,5", "--trials", "2", "--law", SUPERCRITICAL)
        assert config.experiment.levels == [1, 2, 3, 5]

    def test_cap_targets_the_right_field(self):
        mass_law = "[[0.5, 0.5], [1.5, 0.5]]"
        config = _resolve("explosion-div", "--level", "2", "--trials", "1", "--law", mass_law, "--cap", "7")
        assert config.experiment.sweep_cap == 7
        config = _resolve("lemma9-check", "--level", "2", "--trials", "1", "--cap", "9")
        assert config.experiment.step_cap == 9

    def test_defaults_fill_experiment(self):
        config = _resolve("return-times", "--level", "1", "--trials", "3")
        assert config.experiment.step_cap == 10_000_000
        assert config.experiment.max_level == 10

    def test_seed_is_the_master_seed(self):
        config = _resolve("clt-check", "--level", "2", "--trials", "3", "--law", SUPERCRITICAL, "--seed", "12")
        assert config.seed == 12
        assert config.experiment.master_seed == 12

    def test_workers_from_environment(self, monkeypatch):
        monkeypatch.setenv(WORKERS_ENV, "3")
        assert _resolve("build-graph", "--level", "1").workers == 3
        assert _resolve("build-graph", "--level", "1", "--workers", "2").workers == 2

    def test_bad_workers_environment(self, monkeypatch):
        monkeypatch.setenv(WORKERS_ENV, "many")
        assert _resolve("build-graph", "--level", "1").workers == 1

    def test_echo_leaves_out_run_location(self, tmp_path):
        config = _resolve("build-graph", "--level", "1", "--out", str(tmp_path))
        data = json.loads(config.echo_json())
        assert "out" not in data
        assert "workers" not in data

    def test_flags_override_config_file(self, tmp_path):
        path = tmp_path / "config.yaml"
        path.write_text("command: build-graph\nlevel: 1\nhalf: plus\n", encoding="utf-8")
        config = _resolve("build-graph", "--config", str(path), "--level", "3")
        assert config.level == 3
        assert config.half.value == "plus"

    @pytest.mark.parametrize("command", ["reflecting-stats", "explosion", "green-ratio"])
    def test_experiment_needs_levels(self, command):
        with pytest.raises(ConfigError):
            _resolve(command, "--trials", "1")
