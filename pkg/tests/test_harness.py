"""Problems, configs, the experiment runner and the CLI."""

import math
import os

import numpy as np
import pytest

from varopt.harness import (
    ConfigError,
    build_experiment,
    component_rng,
    generate_problem,
    load_config,
    parse_config_text,
    run_experiment,
    sweep,
)
from varopt.harness.cli import EXIT_CONFIG, EXIT_NUMERICAL, EXIT_OK, main
from varopt.harness.runner import compare

BASE_CONFIG = """
# quadratic mini-batch SGD on a scaling schedule
problem.kind = quadratic
problem.d = 3
problem.N = 50
map.name = quadratic
schedule.family = linear
schedule.params = {"alpha0": 2.302585092994046, "beta0": -0.7, "gamma1": 10.0}
schedule.delta_T = 19.3
schedule.T = 2.0
mesh.steps = 20
model.kind = martingale
model.sigma = 0.5
model.n = 50
model.m = 10
optimizer.kind = mirror_sgd
optimizer.mode = empirical
seeds = [0, 1, 2]
"""


def _write_config(tmp_path, text, name="exp.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


class TestConfigParsing:
    def test_dotted_keys_and_json_values(self):
        cfg = parse_config_text(BASE_CONFIG)
        assert cfg["problem"]["kind"] == "quadratic"
        assert cfg["schedule"]["params"]["gamma1"] == 10.0
        assert cfg["seeds"] == [0, 1, 2]

    def test_comments_and_blank_lines_ignored(self):
        cfg = parse_config_text("# header\n\na.b = 1  # trailing\n")
        assert cfg == {"a": {"b": 1}}

    def test_bare_strings_kept(self):
        assert parse_config_text("x = not json\n") == {"x": "not json"}

    def test_missing_equals_rejected(self):
        with pytest.raises(ConfigError):
            parse_config_text("just a line\n")

    def test_scalar_conflict_rejected(self):
        with pytest.raises(ConfigError):
            parse_config_text("a = 1\na.b = 2\n")

    def test_load_config_missing_file(self):
        with pytest.raises(FileNotFoundError):
            load_config("/nonexistent/path.cfg")


class TestBuildExperiment:
    def test_valid_config_builds(self):
        exp = build_experiment(parse_config_text(BASE_CONFIG))
        assert exp.problem.n == 50
        assert exp.optimizer_spec.kind == "mirror_sgd"
        assert exp.seeds == [0, 1, 2]
        assert exp.steps == 20

    @pytest.mark.parametrize("override", [
        "map.name = sphere",
        "schedule.family = exotic",
        "optimizer.kind = adam",
        "model.kind = arma",
        "mesh.steps = -3",
    ])
    def test_invalid_values_rejected(self, override):
        raw = parse_config_text(BASE_CONFIG + override + "\n")
        with pytest.raises(ConfigError):
            build_experiment(raw)

    def test_mesh_past_horizon_rejected(self):
        raw = parse_config_text(BASE_CONFIG + "mesh.steps = 200\n")
        with pytest.raises(ConfigError):
            build_experiment(raw)

    def test_env_seed_override(self, monkeypatch):
        monkeypatch.setenv("VAROPT_SEED", "17")
        exp = build_experiment(parse_config_text(BASE_CONFIG))
        assert exp.seeds == [17]
        monkeypatch.setenv("VAROPT_SEED", "not-a-number")
        with pytest.raises(ConfigError):
            build_experiment(parse_config_text(BASE_CONFIG))


class TestProblems:
    @pytest.mark.parametrize("kind", ["quadratic", "logistic"])
    def test_minimizer_is_stationary(self, kind):
        problem = generate_problem(kind, d=4, n=60, rng=component_rng(0, "problem"))
        assert float(np.linalg.norm(problem.full_gradient(problem.x_star))) <= 1e-10

    def test_full_batch_reproduces_full_gradient_exactly(self):
        problem = generate_problem("logistic", d=3, n=40,
                                   rng=component_rng(1, "problem"))
        x = np.array([0.3, -0.2, 0.5])
        rng = component_rng(1, "batch")
        np.testing.assert_array_equal(
            problem.minibatch_gradient(x, 40, rng), problem.full_gradient(x))

    def test_minibatch_unbiased(self):
        problem = generate_problem("quadratic", d=3, n=30,
                                   rng=component_rng(2, "problem"))
        rng = component_rng(2, "batch")
        points = component_rng(3, "problem").standard_normal((5, 3))
        for x in points:
            draws = np.stack([problem.minibatch_gradient(x, 6, rng)
                              for _ in range(10_000)])
            mean = draws.mean(axis=0)
            se = draws.std(axis=0, ddof=1) / math.sqrt(len(draws))
            assert np.all(np.abs(mean - problem.full_gradient(x)) <= 3.0 * se)

    def test_finite_population_variance_factor(self):
        problem = generate_problem("quadratic", d=2, n=40,
                                   rng=component_rng(4, "problem"))
        x = np.array([0.7, -1.1])
        m = 8
        rng = component_rng(4, "batch")
        draws = np.stack([problem.minibatch_gradient(x, m, rng)
                          for _ in range(10_000)])
        trace = float(np.sum(draws.var(axis=0, ddof=1)))
        grads = problem.per_sample_gradients(x)
        s2 = float(np.sum((grads - grads.mean(axis=0)) ** 2)) / (problem.n - 1)
        expected = s2 / m * (problem.n - m) / problem.n
        assert trace == pytest.approx(expected, rel=0.1)

    def test_invalid_requests(self):
        problem = generate_problem("quadratic", d=2, n=10,
                                   rng=component_rng(0, "problem"))
        with pytest.raises(ValueError):
            problem.minibatch_gradient(np.zeros(2), 0, component_rng(0, "batch"))
        with pytest.raises(ValueError):
            generate_problem("svm", d=2, n=10, rng=component_rng(0, "problem"))
        with pytest.raises(ValueError):
            generate_problem("quadratic", d=100, n=10,
                             rng=component_rng(0, "problem"))


class TestRngStreams:
    def test_components_are_independent_and_reproducible(self):
        a1 = component_rng(5, "problem").standard_normal(4)
        a2 = component_rng(5, "problem").standard_normal(4)
        b = component_rng(5, "batch").standard_normal(4)
        np.testing.assert_array_equal(a1, a2)
        assert np.max(np.abs(a1 - b)) > 0

    def test_unknown_component_rejected(self):
        with pytest.raises(ValueError):
            component_rng(0, "weather")


class TestRunExperiment:
    def test_runs_and_writes_artifacts(self, tmp_path):
        raw = parse_config_text(BASE_CONFIG + f"output = {tmp_path}/out\n")
        art = run_experiment(build_experiment(raw))
        names = {os.path.basename(p) for p in art.files}
        assert names == {"trajectory_seed0.csv", "trajectory_seed1.csv",
                         "trajectory_seed2.csv", "diagnostics.csv", "summary.txt"}
        assert not art.errors
        assert art.report is not None
        assert np.all(np.isfinite(art.final_gaps))

    def test_byte_determinism(self, tmp_path):
        contents = []
        for sub in ("a", "b"):
            raw = parse_config_text(BASE_CONFIG + f"output = {tmp_path}/{sub}\n")
            art = run_experiment(build_experiment(raw))
            contents.append({os.path.basename(p): open(p, "rb").read()
                             for p in art.files})
        assert contents[0] == contents[1]

    def test_per_seed_failure_recorded(self, tmp_path):
        raw = parse_config_text(BASE_CONFIG + f"output = {tmp_path}/out\n"
                                "optimizer.batch_m = 500\n")
        art = run_experiment(build_experiment(raw))
        assert set(art.errors) == {0, 1, 2}
        assert art.report is None


class TestSweepAndCompare:
    def test_sweep_grid(self, tmp_path):
        raw = parse_config_text(BASE_CONFIG + f"output = {tmp_path}/sw\n"
                                "seeds = [0]\n")
        path = sweep(raw, {"model.m": [10, 50], "problem.d": [2, 3]})
        lines = open(path).read().strip().splitlines()
        assert lines[0] == "model.m,problem.d,n_seeds,n_failed,mean_final_gap"
        assert len(lines) == 5

    def test_sweep_records_cell_failure(self, tmp_path):
        raw = parse_config_text(BASE_CONFIG + f"output = {tmp_path}/sw\n"
                                "seeds = [0]\n")
        path = sweep(raw, {"mesh.steps": [10, 10_000]})
        lines = open(path).read().strip().splitlines()
        assert len(lines) == 3
        assert "error:" in lines[2]

    def test_compare_runs_kinds(self, tmp_path):
        raw = parse_config_text(BASE_CONFIG + f"output = {tmp_path}/cmp\n"
                                "seeds = [0]\n")
        path = compare(raw, ["mirror_sgd", "fosp_continuous"])
        lines = open(path).read().strip().splitlines()
        assert lines[0] == "optimizer,n_seeds,n_failed,mean_final_gap"
        assert len(lines) == 3
        assert lines[1].startswith("mirror_sgd,")


class TestCli:
    def test_run_success(self, tmp_path, capsys):
        cfg = _write_config(tmp_path, BASE_CONFIG + f"output = {tmp_path}/out\n")
        assert main(["run", cfg]) == EXIT_OK
        out = capsys.readouterr().out
        assert "summary.txt" in out

    def test_missing_config_is_config_error(self, capsys):
        assert main(["run", "/no/such/file.cfg"]) == EXIT_CONFIG

    def test_invalid_config_is_config_error(self, tmp_path, capsys):
        cfg = _write_config(tmp_path, BASE_CONFIG + "map.name = sphere\n")
        assert main(["run", cfg]) == EXIT_CONFIG

    def test_seed_failure_is_numerical_error(self, tmp_path, capsys):
        cfg = _write_config(tmp_path, BASE_CONFIG + f"output = {tmp_path}/out\n"
                            "optimizer.batch_m = 500\n")
        assert main(["run", cfg]) == EXIT_NUMERICAL

    def test_sweep_subcommand(self, tmp_path, capsys):
        cfg = _write_config(tmp_path, BASE_CONFIG + f"output = {tmp_path}/sw\n"
                            "seeds = [0]\n")
        assert main(["sweep", cfg, "--grid", "model.m=10,50"]) == EXIT_OK
        assert capsys.readouterr().out.strip().endswith("sweep.csv")

    def test_bad_grid_is_config_error(self, tmp_path, capsys):
        cfg = _write_config(tmp_path, BASE_CONFIG)
        assert main(["sweep", cfg, "--grid", "nonsense"]) == EXIT_CONFIG

    def test_compare_subcommand(self, tmp_path, capsys):
        cfg = _write_config(tmp_path, BASE_CONFIG + f"output = {tmp_path}/cmp\n"
                            "seeds = [0]\n")
        assert main(["compare", cfg, "--optimizers",
                     "mirror_sgd,fosp_continuous"]) == EXIT_OK

    def test_selftest_passes(self, capsys):
        assert main(["selftest"]) == EXIT_OK
        assert "PASS" in capsys.readouterr().out
