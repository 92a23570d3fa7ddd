"""Protocol runners, persistence, verification, falsification table, CLI."""

import dataclasses
import json
from pathlib import Path

import numpy as np
import pytest

from infobench import ConfigError, EnvSpec, InsufficientDataError
from infobench.harness import (
    ExperimentConfig,
    ExperimentReport,
    default_config,
    default_env,
    falsification_summary,
    run_protocol,
    verify_report,
)
from infobench.harness.cli import main as cli_main
from infobench.harness.protocols import (
    b2_trial_stats,
    run_b2,
    run_b3,
    run_b4,
    run_b5,
    shifted_ground_truth,
)
from infobench.env_gen import env_ground_truth


def shrink_env(cfg: ExperimentConfig, **overrides) -> ExperimentConfig:
    env = dataclasses.replace(cfg.env, params={**cfg.env.params, **overrides})
    return dataclasses.replace(cfg, env=env)


def small_b2(seed=0, trials=2, **params):
    cfg = default_config("b2", "rule_exception", seed=seed, trials=trials)
    cfg = shrink_env(cfg, length=2000)
    return dataclasses.replace(
        cfg, params={"ood_length": 800, "permutations": 300, **params}
    )


def small_b3(kind="rule_exception", seed=0, trials=2, length=20_000, **params):
    cfg = default_config("b3", kind, seed=seed, trials=trials)
    cfg = shrink_env(cfg, length=length)
    return dataclasses.replace(cfg, params={"alpha_bootstrap": 150, **params})


def small_b5(seed=0, trials=2, length=4000):
    cfg = default_config("b5", seed=seed, trials=trials)
    return shrink_env(cfg, length=length)


class TestConfig:
    def test_json_round_trip(self):
        cfg = default_config("b2", seed=3, trials=5)
        back = ExperimentConfig.from_json(cfg.to_json())
        assert back == cfg
        assert back.config_hash() == cfg.config_hash()

    def test_alias_resolution(self):
        assert default_config("b3").protocol == "b3_exception_decay"

    def test_env_kind_validated_per_protocol(self):
        with pytest.raises(ConfigError):
            ExperimentConfig(
                protocol="b4_hierarchy_gradient",
                env=default_env("b2", "rule_exception"),
            )

    def test_unknown_param_rejected(self):
        with pytest.raises(ConfigError):
            dataclasses.replace(default_config("b2"), params={"bogus": 1})

    def test_bad_trials(self):
        with pytest.raises(ConfigError):
            dataclasses.replace(default_config("b2"), trials=0)

    def test_setting_needs_family(self):
        with pytest.raises(ConfigError):
            dataclasses.replace(
                default_config("b2"), model_settings=({"id": "x", "family": "magic"},)
            )

    def test_hash_changes_with_seed(self):
        a = default_config("b2", seed=0)
        b = default_config("b2", seed=1)
        assert a.config_hash() != b.config_hash()


class TestB2:
    def test_supports_on_default_small(self):
        rep = run_b2(small_b2())
        assert rep.falsification["verdict"] == "supports"
        for row in rep.per_trial:
            assert row["rho"] is not None and row["rho"] < 0

    def test_identical_settings_zero_variance(self):
        settings = tuple(
            {"id": f"same_{i}", "family": "correlational", "contexts": "surface",
             "confidence": 0.9}
            for i in range(4)
        )
        cfg = dataclasses.replace(small_b2(trials=1), model_settings=settings)
        rep = run_b2(cfg)
        row = rep.per_trial[0]
        assert row["zero_variance"]
        assert row["verdict"] == "indeterminate"
        assert row["rho"] is None

    def test_label_noise_shift_is_indeterminate(self):
        rep = run_b2(small_b2(trials=2, ood_shift="label_noise",
                              ood_length=800, permutations=300))
        for row in rep.per_trial:
            assert row["verdict"] != "supports" or row["rho"] > -0.9
        # Under pure label noise no model family can generalize better:
        # the coupling collapses toward zero.
        rhos = [r["rho"] for r in rep.per_trial if r["rho"] is not None]
        assert all(r > -0.5 for r in rhos)

    def test_small_family_rejected(self):
        settings = tuple(
            {"id": f"s{i}", "family": "generative", "contexts": "env"}
            for i in range(3)
        )
        cfg = dataclasses.replace(small_b2(trials=1), model_settings=settings)
        with pytest.raises(InsufficientDataError):
            run_b2(cfg)

    def test_context_swap_changes_frequencies(self):
        gt = env_ground_truth(default_env("b2", "rule_exception"))
        shifted = shifted_ground_truth(gt, "context_swap")
        assert not np.allclose(gt.context_freq, shifted.context_freq)
        assert shifted.context_freq.sum() == pytest.approx(1.0)
        np.testing.assert_array_equal(gt.emission.cond, shifted.emission.cond)


class TestB3:
    def test_signatures_and_dominance_small(self):
        rep = run_b3(small_b3(seed=1))
        for row in rep.per_trial:
            corr = row["families"]["correlational"]
            gen = row["families"]["generative"]
            assert corr["signature"] == "correlational_like"
            assert gen["signature"] == "causal_like"
            assert row["gen_dominates_from_burnin"]
            assert row["gen_two_part_smaller"]

    def test_deterministic_env_decay_skipped(self):
        cfg = small_b3(trials=1)
        cfg = shrink_env(cfg, exception_rate=0.0, length=5000)
        rep = run_b3(cfg)
        gen = rep.per_trial[0]["families"]["generative"]
        # Only the startup parameter revisions register; no decay curve.
        assert gen["decay_status"] in (
            "no_exceptions", "skipped_insufficient", "skipped_degenerate"
        )
        assert rep.falsification["verdict"] == "indeterminate"

    def test_frozen_model_reported_not_crashed(self):
        settings = (
            {"id": "frozen_gen", "family": "generative", "contexts": "env",
             "frozen": True},
            {"id": "live_gen", "family": "generative", "contexts": "env"},
        )
        cfg = dataclasses.replace(small_b3(trials=1, length=5000),
                                  model_settings=settings)
        rep = run_b3(cfg)
        frozen = rep.per_trial[0]["families"]["frozen_gen"]
        assert frozen["n_total"] == 0
        assert frozen["decay_status"] == "no_exceptions"
        assert frozen["signature"] == "insufficient_data"

    def test_conjecture_probe_reported(self):
        rep = run_b3(small_b3(seed=2, trials=1, length=10_000))
        gen = rep.per_trial[0]["families"]["generative"]
        assert 0.0 <= gen["min_c_after_burnin"] <= 1.0


class TestB4:
    def test_default_supports(self):
        rep = run_b4(default_config("b4", seed=0, trials=4))
        assert rep.falsification["verdict"] == "supports"
        assert rep.summary["strict_rate"] == 1.0

    def test_single_layer_vacuous(self):
        cfg = dataclasses.replace(
            default_config("b4", seed=0, trials=2),
            params={"layer_sizes": [4], "beta_per_layer": [10.0]},
        )
        rep = run_b4(cfg)
        assert all(r["vacuous"] for r in rep.per_trial)
        assert rep.falsification["verdict"] == "indeterminate"

    def test_beta_zero_counts_as_failure(self):
        cfg = dataclasses.replace(
            default_config("b4", seed=0, trials=2),
            params={"layer_sizes": [4, 2], "beta_per_layer": [0.0, 0.0]},
        )
        rep = run_b4(cfg)
        assert rep.summary["strict_rate"] == 0.0
        assert rep.falsification["verdict"] == "falsifies"


class TestB5:
    def test_generative_trend_negative(self):
        rep = run_b5(small_b5(seed=1, trials=3, length=10_000))
        gen_rows = [r["families"]["generative"] for r in rep.per_trial]
        assert sum(1 for g in gen_rows if g["trend_negative"]) >= 2

    def test_frozen_model_constant_xi(self):
        settings = (
            {"id": "frozen", "family": "generative", "contexts": "env",
             "frozen": True},
            {"id": "live", "family": "generative", "contexts": "env"},
        )
        cfg = dataclasses.replace(small_b5(trials=1), model_settings=settings)
        rep = run_b5(cfg)
        rows = [d for d in rep.details[0] if d[1] == "frozen" and d[6] == 1]
        xis = {round(d[5], 9) for d in rows}
        assert len(xis) <= 1  # constant energy per bit (or fully excluded)

    def test_zero_rate_rows_excluded(self):
        # A merged-context generative model has a single-row predictor:
        # its rate is identically zero, so every checkpoint is excluded.
        settings = (
            {"id": "merged", "family": "generative", "contexts": "merged"},
            {"id": "live", "family": "generative", "contexts": "env"},
        )
        cfg = dataclasses.replace(small_b5(trials=1), model_settings=settings)
        rep = run_b5(cfg)
        merged = rep.per_trial[0]["families"]["merged"]
        assert merged["theil_slope"] is None
        assert merged["n_excluded"] > 0
        assert rep.per_trial[0]["families"]["live"]["theil_slope"] is not None


class TestPersistence:
    def test_byte_identical_reruns(self, tmp_path):
        cfg = small_b3(seed=5, trials=2, length=8000)
        d1, d2 = tmp_path / "a", tmp_path / "b"
        run_protocol(cfg).save(d1)
        run_protocol(cfg).save(d2)
        for name in ("report.json", "per_trial/trial_000.csv", "per_trial/trial_001.csv"):
            assert (d1 / name).read_bytes() == (d2 / name).read_bytes()

    def test_seed_changes_outputs(self, tmp_path):
        a = run_protocol(small_b2(seed=1, trials=1))
        b = run_protocol(small_b2(seed=2, trials=1))
        assert a.per_trial[0]["rho"] != b.per_trial[0]["rho"]

    def test_verify_clean_reports(self, tmp_path):
        for make in (
            lambda: small_b2(trials=2),
            lambda: small_b3(trials=1, length=6000),
            lambda: default_config("b4", trials=2),
            lambda: small_b5(trials=1),
        ):
            cfg = make()
            out = tmp_path / cfg.protocol
            run_protocol(cfg).save(out)
            assert verify_report(out) == []

    def test_verify_detects_tampered_summary(self, tmp_path):
        out = tmp_path / "r"
        run_protocol(small_b2(trials=2)).save(out)
        obj = json.loads((out / "report.json").read_text())
        obj["summary"]["median_rho"] = 0.123
        (out / "report.json").write_text(json.dumps(obj))
        assert any("median_rho" in m for m in verify_report(out))

    def test_verify_detects_tampered_csv(self, tmp_path):
        out = tmp_path / "r"
        run_protocol(small_b2(trials=2)).save(out)
        path = out / "per_trial" / "trial_000.csv"
        lines = path.read_text().splitlines()
        cells = lines[1].split(",")
        cells[3] = repr(float(cells[3]) + 0.25)
        lines[1] = ",".join(cells)
        path.write_text("\n".join(lines) + "\n")
        assert verify_report(out)

    def test_report_load_round_trip(self, tmp_path):
        rep = run_protocol(small_b2(trials=2))
        rep.save(tmp_path / "r")
        back = ExperimentReport.load(tmp_path / "r")
        assert back.protocol == rep.protocol
        assert back.per_trial == json.loads(json.dumps(rep.per_trial))
        assert back.details[0] == rep.details[0]


class TestFalsificationSummary:
    def test_partial_coverage(self):
        rep = run_protocol(small_b3(trials=1, length=6000))
        rows = falsification_summary([rep])
        verdicts = {r["criterion"]: r["verdict"] for r in rows}
        assert verdicts[2] in ("supports", "indeterminate")
        assert verdicts[1] == "indeterminate"
        assert verdicts[3] == "indeterminate"
        assert verdicts[4] == "indeterminate"

    def test_majority_with_dissent(self):
        a = run_protocol(small_b2(seed=0, trials=2))
        b = run_protocol(small_b2(seed=1, trials=2))
        fake = ExperimentReport(
            protocol=a.protocol, per_trial=b.per_trial,
            summary=b.summary,
            falsification={**b.falsification, "verdict": "indeterminate"},
            config=b.config, details=b.details,
        )
        rows = falsification_summary([a, fake])
        row1 = next(r for r in rows if r["criterion"] == 1)
        assert row1["dissent"] == 1

    def test_trial_votes_recorded(self):
        rep = run_protocol(small_b2(trials=3))
        votes = rep.falsification["trial_votes"]
        assert sum(votes.values()) == 3


class TestWorkerPool:
    def test_parallel_matches_sequential(self):
        cfg = small_b2(trials=3)
        seq = run_protocol(cfg)
        par = run_protocol(dataclasses.replace(
            cfg, params={**cfg.params, "workers": 3}))
        assert seq.per_trial == par.per_trial
        assert seq.summary == par.summary


class TestCLI:
    def test_gen_env_and_frontier(self, tmp_path):
        spec = EnvSpec("markov_plain", {
            "transition": [[0.8, 0.2], [0.4, 0.6]], "length": 500,
        }, seed=7)
        spec_path = tmp_path / "env.json"
        spec_path.write_text(spec.to_json())
        out = tmp_path / "stream.txt"
        assert cli_main(["gen-env", "--spec", str(spec_path), "--out", str(out)]) == 0
        assert out.read_text().startswith("#alphabet=2")

        from infobench import JointTable

        joint_path = tmp_path / "joint.json"
        joint_path.write_text(JointTable.from_array([[0.4, 0.1], [0.1, 0.4]]).to_json())
        fr = tmp_path / "frontier.csv"
        assert cli_main([
            "ib-frontier", "--joint", str(joint_path), "--z-size", "2",
            "--beta-count", "6", "--restarts", "2", "--out", str(fr),
        ]) == 0
        header = fr.read_text().splitlines()[0]
        assert header == "beta,rate_bits,relevance_bits,epsilon_ib,converged"

    def test_run_verify_falsify_export(self, tmp_path):
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(small_b2(trials=2).to_json())
        out = tmp_path / "run"
        assert cli_main(["run", "b2", "--config", str(cfg_path),
                         "--out", str(out)]) == 0
        assert (out / "report.json").exists()
        assert cli_main(["verify", "--report", str(out)]) == 0

        fals = tmp_path / "falsification.json"
        assert cli_main(["falsify", "--reports", str(out), "--out", str(fals)]) == 0
        rows = json.loads(fals.read_text())
        assert len(rows) == 4

        plots = tmp_path / "plots"
        assert cli_main(["export-plots", "--report", str(out),
                         "--out", str(plots)]) == 0
        assert (plots / "detail_long.csv").exists()
        assert (plots / "trial_summary.csv").exists()

    def test_exit_code_config_error(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        assert cli_main(["run", "b2", "--config", str(bad)]) == 2

    def test_exit_code_protocol_mismatch(self, tmp_path):
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(small_b2(trials=1).to_json())
        assert cli_main(["run", "b3", "--config", str(cfg_path)]) == 2

    def test_exit_code_insufficient_data(self, tmp_path):
        cfg = small_b2(trials=1)
        cfg = dataclasses.replace(cfg, model_settings=(
            {"id": "a", "family": "generative", "contexts": "env"},
            {"id": "b", "family": "generative", "contexts": "merged"},
            {"id": "c", "family": "correlational", "contexts": "surface"},
            {"id": "d", "family": "correlational", "contexts": "surface",
             "confidence": 0.8},
        ))
        # 4 settings is fine; now force the failure with 3 by rebuilding.
        cfg3 = dataclasses.replace(cfg, model_settings=cfg.model_settings[:3])
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(cfg3.to_json())
        assert cli_main(["run", "b2", "--config", str(cfg_path)]) == 3

    def test_exit_code_verify_mismatch(self, tmp_path):
        out = tmp_path / "r"
        run_protocol(small_b2(trials=1)).save(out)
        obj = json.loads((out / "report.json").read_text())
        obj["summary"]["median_rho"] = 0.5
        (out / "report.json").write_text(json.dumps(obj))
        assert cli_main(["verify", "--report", str(out)]) == 4

    def test_run_seed_override_changes_hash(self, tmp_path):
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(small_b2(trials=1).to_json())
        out1, out2 = tmp_path / "r1", tmp_path / "r2"
        cli_main(["run", "b2", "--config", str(cfg_path), "--out", str(out1)])
        cli_main(["run", "b2", "--config", str(cfg_path), "--seed", "9",
                  "--out", str(out2)])
        h1 = json.loads((out1 / "report.json").read_text())["provenance"]["config_hash"]
        h2 = json.loads((out2 / "report.json").read_text())["provenance"]["config_hash"]
        assert h1 != h2
