import json
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

import harness.sweeps as sweeps
from harness.experiment import KINDS, ExperimentConfig, config_from_dict, default_config, load_config
from harness.rates import fit_rate
from harness.report import collect, report
from harness.runner import CONFIG_FILE, MANIFEST_FILE, prepare_directory, run
from harness.sweeps import plan_cells
from main import main
from utils.errors import ConfigurationError, IntegrityError, ParameterError

EXPERIMENTS = Path(__file__).resolve().parent.parent / "experiments"


def rate_config(out, **overrides):
    data = {"kind": "empirical-rate", "players": (100, 400, 1600), "samples": 50, "points": 64,
            "seed": 7, "output_dir": str(out), "workers": 1}
    data.update(overrides)
    return ExperimentConfig(**data)


class TestFitRate:
    def test_exact_power_law(self):
        fit = fit_rate([1.0, 2.0, 4.0, 8.0], [3.0, 3.0 / 2 ** 0.5, 1.5, 3.0 / 8 ** 0.5])
        assert fit.slope == pytest.approx(-0.5)
        assert fit.intercept == pytest.approx(np.log(3.0))
        assert fit.r2 == pytest.approx(1.0)
        assert fit.within(-0.6, -0.4)

    @pytest.mark.parametrize("xs, ys", [
        ([1.0, 2.0], [1.0, 2.0]),
        ([1.0, 2.0, 3.0], [1.0, 2.0]),
        ([1.0, 2.0, 3.0], [1.0, 0.0, 2.0]),
        ([2.0, 2.0, 2.0], [1.0, 2.0, 3.0]),
        ([1.0, np.nan, 3.0], [1.0, 2.0, 3.0]),
    ])
    def test_rejects_bad_data(self, xs, ys):
        with pytest.raises(ParameterError):
            fit_rate(xs, ys)


class TestExperimentConfig:
    def test_all_problems_reported_together(self):
        with pytest.raises(ConfigurationError) as info:
            ExperimentConfig(kind="nope", points=4, seeds=0, epsilons=(0.1, -1.0))
        message = str(info.value)
        for fragment in ("kind must be one of", "points must be at least 8", "seeds must be at least 1",
                         "epsilons must be positive"):
            assert fragment in message

    def test_schedule_needs_two_players(self):
        with pytest.raises(ConfigurationError):
            ExperimentConfig(kind="nash-gap", players=(1, 2), beta=1.0)

    def test_hash_ignores_output_and_workers(self, tmp_path):
        a = rate_config(tmp_path / "a")
        b = rate_config(tmp_path / "b", workers=4)
        assert a.config_hash == b.config_hash
        assert a.run_name == f"empirical-rate-{a.config_hash[:12]}"
        assert rate_config(tmp_path, seed=8).config_hash != a.config_hash

    def test_hash_is_stable(self, tmp_path):
        assert rate_config(tmp_path).config_hash == rate_config(tmp_path).config_hash

    def test_epsilon_for(self):
        fixed = ExperimentConfig(kind="chaos", epsilons=(0.3, 0.1))
        assert fixed.epsilon_for(4) == 0.3
        scheduled = ExperimentConfig(kind="chaos", beta=1.0)
        assert scheduled.epsilon_for(100) == pytest.approx(1.0 / np.log(100))

    def test_overrides_skip_none(self, tmp_path):
        cfg = rate_config(tmp_path)
        assert cfg.with_overrides(seed=None, workers=None) == cfg
        assert cfg.with_overrides(seed=3).seed == 3

    def test_load_toml_and_json(self, tmp_path):
        toml_file = tmp_path / "exp.toml"
        toml_file.write_text('kind = "monotonicity"\npoints = 32\nseeds = 3\nepsilons = [0.2, 0.1]\n'
                             '[problem]\nprofile = "strong"\n')
        cfg = load_config(toml_file)
        assert cfg.kind == "monotonicity"
        assert cfg.epsilons == (0.2, 0.1)
        assert cfg.problem == {"profile": "strong"}

        json_file = tmp_path / "exp.json"
        json_file.write_text(json.dumps({"kind": "chaos", "players": [2, 3]}))
        assert load_config(json_file).players == (2, 3)

    def test_load_errors(self, tmp_path):
        with pytest.raises(ConfigurationError):
            load_config(tmp_path / "missing.toml")
        yaml_file = tmp_path / "exp.yaml"
        yaml_file.write_text("kind: chaos\n")
        with pytest.raises(ConfigurationError):
            load_config(yaml_file)
        with pytest.raises(ConfigurationError):
            config_from_dict({"kind": "chaos", "colour": "blue"})
        with pytest.raises(ConfigurationError):
            config_from_dict({"points": 32})

    @pytest.mark.parametrize("name", ["chaos.toml", "nash-gap-schedule.toml", "epsilon-stability.json"])
    def test_shipped_experiment_files_load(self, name):
        cfg = load_config(EXPERIMENTS / name)
        assert cfg.kind in KINDS
        assert len(plan_cells(cfg)) == 3

    def test_every_kind_has_defaults(self):
        for kind in KINDS:
            assert default_config(kind).kind == kind
        with pytest.raises(ConfigurationError):
            default_config("unknown")


class TestPlanCells:
    def test_cell_counts(self):
        assert len(plan_cells(ExperimentConfig(kind="nash-gap", players=(2, 3, 4)))) == 3
        assert len(plan_cells(ExperimentConfig(kind="monotonicity", seeds=5))) == 5
        assert len(plan_cells(ExperimentConfig(kind="epsilon-stability", epsilons=(0.2, 0.1)))) == 2

    def test_parabolic_ladders(self):
        cells = plan_cells(ExperimentConfig(kind="parabolic-order", points=16))
        ladders = [c.params["ladder"] for c in cells]
        assert ladders.count("dt") == 3
        assert ladders.count("h") == 3
        assert ladders.count("h-monotone") == 3
        assert ladders.count("maximum-principle") == 1
        assert [c.index for c in cells] == list(range(10))
        assert {c.params["points"] for c in cells if c.params["ladder"] == "dt"} == {64}

    def test_monotonicity_seeds_follow_root(self):
        cells = plan_cells(ExperimentConfig(kind="monotonicity", seeds=3, seed=10))
        assert [c.params["seed"] for c in cells] == [10, 11, 12]


def by_name(criteria):
    return {c.name: c for c in criteria}


class TestCriteria:
    def test_stability_slope_must_stay_near_one(self):
        eps = [0.2, 0.1, 0.05]
        table = pd.DataFrame({"epsilon": eps, "m_gap_L2": [e ** 2 for e in eps],
                              "sup_u_gap": [e ** 2 for e in eps], "status": "ok"})
        found = by_name(sweeps.evaluate_criteria(default_config("epsilon-stability"), table))
        assert found["m_gap_slope"].value == pytest.approx(2.0)
        assert not found["m_gap_slope"].passed
        assert found["m_gap_slope"].threshold == "[0.7, 1.3]"
        assert found["sup_u_slope"].passed

    def test_linear_stability_gap_passes(self):
        eps = [0.2, 0.1, 0.05]
        table = pd.DataFrame({"epsilon": eps, "m_gap_L2": [3.0 * e for e in eps],
                              "sup_u_gap": [e ** 0.6 for e in eps], "status": "ok"})
        found = by_name(sweeps.evaluate_criteria(default_config("epsilon-stability"), table))
        assert found["m_gap_slope"].passed and found["sup_u_slope"].passed

    @staticmethod
    def parabolic_table():
        rows = [{"ladder": "dt", "points": 256, "steps": k, "error": 2.0 / k} for k in (256, 512, 1024)]
        rows += [{"ladder": "h", "points": p, "steps": p * p, "error": 5.0 / p ** 2} for p in (16, 32, 64)]
        rows += [{"ladder": "h-monotone", "points": p, "steps": p * p, "error": 1.0 / p} for p in (16, 32, 64)]
        rows.append({"ladder": "maximum-principle", "points": 64, "steps": 64, "error": 0.0})
        table = pd.DataFrame(rows)
        table["maximum_principle"] = True
        table["status"] = "ok"
        return table

    def test_parabolic_labels_show_applied_thresholds(self):
        cfg = ExperimentConfig(kind="parabolic-order")
        found = by_name(sweeps.evaluate_criteria(cfg, self.parabolic_table()))
        assert found["dt_order"].threshold == ">= 0.9, r2 >= 0.98"
        assert found["h_order"].threshold == ">= 1.9, r2 >= 0.98"
        assert found["h_monotone_order"].value == pytest.approx(1.0)
        assert all(c.passed for c in found.values())

        strict = ExperimentConfig(kind="parabolic-order", thresholds={"h_order_min": 2.5})
        found = by_name(sweeps.evaluate_criteria(strict, self.parabolic_table()))
        assert found["h_order"].threshold == ">= 2.5, r2 >= 0.98"
        assert not found["h_order"].passed

    def test_parabolic_cells_run_the_monotone_stencil(self):
        cfg = ExperimentConfig(kind="parabolic-order", points=16)
        errors = [sweeps.handle_parabolic_order(cfg, "h-monotone", p, p * p)["error"] for p in (16, 32)]
        central = sweeps.handle_parabolic_order(cfg, "h", 32, 32 * 32)["error"]
        assert errors[1] < errors[0]
        assert errors[0] / errors[1] == pytest.approx(2.0, rel=0.2)
        assert central < errors[1]

    @staticmethod
    def nash_table(defect, n_beta):
        return pd.DataFrame({
            "players": [2, 3, 4],
            "sup_gap": [0.3, 0.2, 0.1],
            "r_N": [0.3, 0.2, 0.1],
            "avg_gap": [0.3, 0.2, 0.1],
            "exchangeability_defect": [0.0, defect, 0.0],
            "relabeling_defect": [0.0, 0.0, 0.0],
            "n_beta": n_beta,
            "status": "ok",
        })

    def test_nash_symmetry_and_beta_scaling(self):
        cfg = ExperimentConfig(kind="nash-gap")
        found = by_name(sweeps.evaluate_criteria(cfg, self.nash_table(0.0, [0.2, 0.21, 0.2])))
        assert found["symmetry_defect"].passed
        assert found["n_beta_growth"].passed

        found = by_name(sweeps.evaluate_criteria(cfg, self.nash_table(1e-6, [0.2, 0.3, 0.4])))
        assert not found["symmetry_defect"].passed
        assert found["n_beta_growth"].value == pytest.approx(2.0)
        assert not found["n_beta_growth"].passed

    def test_decoupled_beta_counts_as_bounded(self):
        found = by_name(sweeps.evaluate_criteria(ExperimentConfig(kind="nash-gap"),
                                                 self.nash_table(0.0, [0.0, 0.0, 0.0])))
        assert found["n_beta_growth"].value == 0.0
        assert found["n_beta_growth"].passed


class TestRunner:
    def test_run_writes_artifacts(self, out_dir):
        artifact = run(rate_config(out_dir))
        for name in ("table.csv", "criteria.csv", CONFIG_FILE, MANIFEST_FILE):
            assert (artifact.directory / name).exists()
        manifest = json.loads(artifact.manifest_path.read_text())
        assert manifest["content_hash"] == artifact.content_hash
        assert manifest["cells"] == 3
        assert manifest["failed_cells"] == 0
        assert list(artifact.table["players"]) == [100, 400, 1600]
        assert set(artifact.table["status"]) == {"ok"}

    def test_same_config_same_table_bytes(self, tmp_path):
        first = run(rate_config(tmp_path / "one"))
        second = run(rate_config(tmp_path / "two"))
        assert first.content_hash == second.content_hash
        assert first.table_path.read_bytes() == second.table_path.read_bytes()

    def test_failed_cell_does_not_stop_siblings(self, out_dir, monkeypatch):
        original = sweeps.HANDLERS["empirical-rate"]

        def flaky(cfg, players):
            if players == 400:
                raise RuntimeError("solver blew up")
            return original(cfg, players)

        monkeypatch.setitem(sweeps.HANDLERS, "empirical-rate", flaky)
        artifact = run(rate_config(out_dir))
        table = artifact.table
        assert list(table["status"]) == ["ok", "error", "ok"]
        assert table.loc[1, "error_type"] == "RuntimeError"
        assert not artifact.passed
        names = {c.name for c in artifact.criteria}
        assert "cells_ok" in names and "evaluable" in names

    def test_tampered_directory_is_refused(self, out_dir):
        cfg = rate_config(out_dir, players=(100, 200, 400), samples=5)
        run(cfg)
        stored = out_dir / cfg.run_name / CONFIG_FILE
        stored.write_text(json.dumps({"kind": "something else"}))
        with pytest.raises(IntegrityError):
            prepare_directory(cfg)

    def test_monotonicity_run_passes(self, out_dir):
        cfg = ExperimentConfig(kind="monotonicity", points=32, seeds=3, epsilons=(0.2, 0.1),
                               output_dir=str(out_dir), workers=1)
        artifact = run(cfg)
        assert artifact.passed
        assert (artifact.table["min_pairing"] >= -1e-10).all()


class TestReport:
    def test_empty_directory(self, out_dir):
        assert collect(out_dir).empty
        assert report(out_dir).empty
        assert main(["report", "--out", str(out_dir)]) == 1

    def test_summary_of_runs(self, out_dir):
        artifact = run(rate_config(out_dir))
        summary = report(out_dir)
        assert (out_dir / "summary.csv").exists()
        assert set(summary["run"]) == {artifact.directory.name}
        assert summary["criterion"].iloc[0] == "cells_ok"
        expected = 0 if artifact.passed else 1
        assert main(["report", "--out", str(out_dir)]) == expected
        assert pd.read_csv(out_dir / "summary.csv").shape[0] == len(summary)


@pytest.mark.slow
@pytest.mark.parametrize("kind", KINDS)
def test_default_experiment_meets_acceptance(kind, out_dir):
    artifact = run(default_config(kind, output_dir=str(out_dir), workers=1))
    failed = [c for c in artifact.criteria if not c.passed]
    assert not failed, failed
