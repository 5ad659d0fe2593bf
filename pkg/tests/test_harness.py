import json
import math

import numpy as np
import pytest

from isoattack import harness
from isoattack.harness import (
    CtriEvalConfig,
    ReportMismatch,
    TradeoffConfig,
    TransferEvalConfig,
    TsiEvalConfig,
    derive_seed,
    load_report,
    penalty_stats,
    recompute_aggregates,
    run_ctri_eval,
    run_tsi_eval,
    run_transfer_eval,
    verify_report,
    write_report,
)


class TestSeeds:
    def test_named_sub_seeds_are_stable_and_distinct(self):
        a = derive_seed(42, "tsi")
        assert a == derive_seed(42, "tsi")
        assert a != derive_seed(42, "ctri")
        assert a != derive_seed(43, "tsi")
        assert 0 <= a < 2**64


class TestPenaltyStats:
    def test_mixed_zero_and_positive(self):
        stats = penalty_stats([0.0, 0.0, 0.2, 0.4])
        assert stats["mean"] == pytest.approx(0.15)
        assert stats["mean_nonzero"] == pytest.approx(0.3)
        assert stats["max"] == pytest.approx(0.4)
        assert stats["var_nonzero"] == pytest.approx(np.var([0.2, 0.4]))

    def test_all_zero(self):
        stats = penalty_stats([0.0, 0.0])
        assert stats["mean"] == 0.0
        assert stats["mean_nonzero"] is None
        assert stats["var_nonzero"] is None

    def test_empty(self):
        stats = penalty_stats([])
        assert all(v is None for v in stats.values())


@pytest.fixture(scope="module")
def tsi_report(run_files):
    cfg = TsiEvalConfig(
        checkpoint=str(run_files["victim_a"]),
        manifest=str(run_files["manifest"]),
        s_list=(1, 2, 10),
        n_clouds=80,
        seed=5,
    )
    return cfg, run_tsi_eval(cfg)


@pytest.fixture(scope="module")
def ctri_report(run_files):
    cfg = CtriEvalConfig(
        checkpoint=str(run_files["victim_a"]),
        manifest=str(run_files["manifest"]),
        k_list=(7, 100),
        ranges=(math.pi, math.pi / 64),
        warm_samples=20,
        n_clouds=60,
        seed=6,
    )
    return cfg, run_ctri_eval(cfg)


class TestTsiEval:
    def test_rates_monotone_in_s(self, tsi_report):
        _, report = tsi_report
        rates = report.aggregates["success_rate_by_s"]
        assert rates["1"] <= rates["2"] <= rates["10"]

    def test_outcomes_ship_with_report(self, tsi_report):
        _, report = tsi_report
        assert len(report.outcomes) == report.aggregates["attacked"]
        for line in report.outcomes:
            assert line["penalty"] == 0.0
            assert len(line["transform"]) == 9

    def test_verify_report_accepts_and_rejects(self, tsi_report):
        _, report = tsi_report
        verify_report(report)
        tampered = harness.RunReport(
            experiment=report.experiment,
            seed=report.seed,
            sub_seeds=report.sub_seeds,
            config=report.config,
            outcomes=report.outcomes,
            aggregates={**report.aggregates, "attacked": report.aggregates["attacked"] + 1},
            wall_clock_s=report.wall_clock_s,
        )
        with pytest.raises(ReportMismatch):
            verify_report(tampered)

    def test_deterministic_outcome_bytes(self, tsi_report):
        cfg, report = tsi_report
        again = run_tsi_eval(cfg)
        assert harness.outcome_lines(report) == harness.outcome_lines(again)

    def test_summary_identical_minus_wall_clock(self, tsi_report, tmp_path):
        cfg, report = tsi_report
        again = run_tsi_eval(cfg)
        a, b = report.summary(), again.summary()
        a["wall_clock_s"] = b["wall_clock_s"] = 0.0
        assert json.dumps(a, sort_keys=True) == json.dumps(b, sort_keys=True)

    def test_written_files_roundtrip(self, tsi_report, tmp_path):
        _, report = tsi_report
        out = write_report(report, tmp_path / "run")
        assert (out / "outcomes.jsonl").exists()
        assert (out / "summary.json").exists()
        for plane in ("xy", "xz", "yz"):
            assert (out / f"heatmap_{plane}.csv").exists()
            assert (out / f"heatmap_{plane}.pgm").exists()
        loaded = load_report(out)
        verify_report(loaded)
        assert loaded.aggregates == json.loads(json.dumps(report.aggregates))

    def test_zero_denominator_flagged(self, tmp_path):
        # zero weights with a bias toward class 1 on an all-class-0 dataset:
        # every cloud is misclassified, so nothing is attackable
        from isoattack.model import MiniPointNet, MiniPointNetParams, save_checkpoint
        from isoattack.pointcloud import ShapeDatasetSpec, generate_shapes, save_dataset

        ds = generate_shapes(ShapeDatasetSpec(classes=("sphere",), train_count=1, test_count=5, seed=2))
        manifest = save_dataset(ds, tmp_path / "spheres")
        rng = np.random.default_rng(0)
        broken = MiniPointNet(MiniPointNetParams.init((4, 4, 4), 2, rng))
        for arr in broken.params.arrays():
            arr[:] = 0.0
        broken.params.b4[1] = 1.0
        path = tmp_path / "broken.mpn"
        save_checkpoint(broken, path)
        report = run_tsi_eval(TsiEvalConfig(checkpoint=str(path), manifest=str(manifest), seed=1))
        assert report.aggregates["zero_denominator"]
        assert report.aggregates["attacked"] == 0
        assert report.aggregates["success_rate_by_s"]["1"] is None


class TestCtriEval:
    def test_rates_monotone_in_k_and_above_tsi(self, ctri_report):
        _, report = ctri_report
        for sweep in report.aggregates["sweeps"]:
            r7 = sweep["by_k"]["7"]["success_rate"]
            r100 = sweep["by_k"]["100"]["success_rate"]
            assert r7 <= r100
            assert sweep["tsi_success_rate"] <= r7

    def test_warm_successes_have_zero_penalty(self, ctri_report):
        _, report = ctri_report
        for line in report.outcomes:
            if line["success"] and line["gradient_steps"] == 0:
                assert line["penalty"] == 0.0

    def test_penalty_stats_exclude_exactly_zero(self, ctri_report):
        _, report = ctri_report
        for sweep in report.aggregates["sweeps"]:
            stats = sweep["by_k"]["100"]["penalty"]
            lines = [
                o for o in report.outcomes
                if o["range_half"] == sweep["range_half"] and o["success"] and o["gradient_steps"] <= 100
            ]
            positives = [o["penalty"] for o in lines if o["penalty"] > 0]
            if positives:
                assert stats["mean_nonzero"] == pytest.approx(float(np.mean(positives)))
            else:
                assert stats["mean_nonzero"] is None

    def test_verify(self, ctri_report):
        _, report = ctri_report
        verify_report(report)

    def test_deterministic(self, ctri_report):
        cfg, report = ctri_report
        assert harness.outcome_lines(report) == harness.outcome_lines(run_ctri_eval(cfg))


@pytest.fixture(scope="module")
def transfer_report(run_files):
    cfg = TransferEvalConfig(
        checkpoints=(str(run_files["victim_a"]), str(run_files["victim_b"])),
        manifest=str(run_files["manifest"]),
        max_iters=150,
        warm_samples=25,
        n_clouds=60,
        seed=7,
    )
    return cfg, run_transfer_eval(cfg)


class TestTransferEval:

    def test_diagonal_omitted(self, transfer_report):
        _, report = transfer_report
        matrix = report.aggregates["transfer_matrix"]
        assert matrix[0][0] is None and matrix[1][1] is None
        assert matrix[0][1] is not None and matrix[1][0] is not None

    def test_identical_models_transfer_at_source_rate(self, run_files, tmp_path):
        import shutil

        twin = tmp_path / "victim_twin.mpn"
        shutil.copy(run_files["victim_a"], twin)
        cfg = TransferEvalConfig(
            checkpoints=(str(run_files["victim_a"]), str(twin)),
            manifest=str(run_files["manifest"]),
            max_iters=100,
            warm_samples=15,
            n_clouds=40,
            seed=8,
        )
        report = run_transfer_eval(cfg)
        attack_lines = [o for o in report.outcomes if o["kind"] == "attack" and o["source"] == "victim_a"]
        source_rate = sum(o["success"] for o in attack_lines) / len(attack_lines)
        assert report.aggregates["transfer_matrix"][0][1] == pytest.approx(source_rate)

    def test_verify_and_determinism(self, transfer_report):
        cfg, report = transfer_report
        verify_report(report)
        assert harness.outcome_lines(report) == harness.outcome_lines(run_transfer_eval(cfg))

    def test_needs_two_checkpoints(self, run_files):
        with pytest.raises(ValueError):
            run_transfer_eval(
                TransferEvalConfig(
                    checkpoints=(str(run_files["victim_a"]),),
                    manifest=str(run_files["manifest"]),
                )
            )

    def test_three_models_with_widened_variant(self, run_files, dataset, tmp_path):
        # transferability set: two seeds of the base net plus one widened net
        from isoattack.harness import victim_train_config
        from isoattack.model import save_checkpoint, train

        wide, report = train(dataset, victim_train_config(3, widths=(48, 96, 32)))
        assert report["test_accuracy"] >= 0.9
        wide_path = tmp_path / "victim_wide.mpn"
        save_checkpoint(wide, wide_path)
        cfg = TransferEvalConfig(
            checkpoints=(str(run_files["victim_a"]), str(run_files["victim_b"]), str(wide_path)),
            manifest=str(run_files["manifest"]),
            max_iters=100,
            warm_samples=15,
            n_clouds=30,
            seed=10,
        )
        report = run_transfer_eval(cfg)
        verify_report(report)
        matrix = report.aggregates["transfer_matrix"]
        assert all(matrix[i][i] is None for i in range(3))
        off_diagonal = [matrix[i][j] for i in range(3) for j in range(3) if i != j]
        assert all(v is not None for v in off_diagonal)


class TestAdversarialCloudExport:
    def test_export_matches_outcomes(self, tsi_report, tmp_path):
        from isoattack.harness import export_adversarial_clouds
        from isoattack.model import load_checkpoint
        from isoattack.pointcloud import load_cloud

        cfg, report = tsi_report
        written = export_adversarial_clouds(report, tmp_path / "adv")
        assert len(written) == len(report.outcomes)
        model = load_checkpoint(cfg.checkpoint)
        hit = next(p for p, o in zip(written, report.outcomes) if o["success"])
        line = next(o for o in report.outcomes if o["success"])
        cloud = load_cloud(hit)
        pred = model.predict(cloud)
        assert pred.predicted_class == line["final_class"]

    def test_rejects_other_experiments(self, tsi_report):
        from isoattack.harness import RunReport, export_adversarial_clouds

        _, report = tsi_report
        bogus = RunReport(
            experiment="tradeoff", seed=0, sub_seeds={}, config={}, outcomes=[], aggregates={}
        )
        with pytest.raises(ValueError):
            export_adversarial_clouds(bogus, "nowhere")


class TestReflectionFamily:
    def test_tsi_eval_reflections(self, run_files, tmp_path):
        cfg = TsiEvalConfig(
            checkpoint=str(run_files["victim_a"]),
            manifest=str(run_files["manifest"]),
            s_list=(1, 5),
            family="reflection",
            n_clouds=200,
            seed=12,
        )
        report = run_tsi_eval(cfg)
        verify_report(report)
        rates = report.aggregates["success_rate_by_s"]
        assert rates["1"] <= rates["5"]
        assert rates["5"] > 0.2  # reflections fool the canonical-pose victim
        heat = report.aggregates["heatmap"]
        assert set(heat["planes"]) == {"azimuth_polar"}
        out = write_report(report, tmp_path / "run")
        assert (out / "heatmap_azimuth_polar.csv").exists()


@pytest.fixture(scope="module")
def tradeoff_report(run_files):
    cfg = TradeoffConfig(
        manifest=str(run_files["manifest"]),
        p_list=(0.0, 1.0),
        repeats=2,
        epochs=12,
        max_iters=60,
        n_clouds=40,
        seed=9,
    )
    return cfg, harness.run_augmentation_tradeoff(cfg)


class TestTradeoff:

    def test_row_per_p(self, tradeoff_report):
        cfg, report = tradeoff_report
        rows = report.aggregates["rows"]
        assert [r["p"] for r in rows] == [0.0, 1.0]
        assert all(len(r["accuracies"]) == 2 for r in rows)

    def test_p_zero_matches_plain_training(self, tradeoff_report, run_files):
        from isoattack.model import TrainConfig, train
        from isoattack.pointcloud import load_dataset

        cfg, report = tradeoff_report
        ds = load_dataset(run_files["manifest"])
        seed = derive_seed(cfg.seed, "train:p=0.0:rep=0")
        _, ref = train(
            ds,
            TrainConfig(epochs=cfg.epochs, batch_size=cfg.batch_size,
                        learning_rate=cfg.learning_rate, widths=cfg.widths,
                        augment=False, p_rotation=0.0, seed=seed),
        )
        assert report.aggregates["rows"][0]["accuracies"][0] == pytest.approx(ref["test_accuracy"])

    def test_verify_and_csv(self, tradeoff_report, tmp_path):
        cfg, report = tradeoff_report
        verify_report(report)
        out = write_report(report, tmp_path / "run")
        csv = (out / "tradeoff.csv").read_text().splitlines()
        assert csv[0].startswith("p,accuracy_mean,accuracy_var")
        assert len(csv) == 3  # header + 2 p-rows

    def test_default_p_grid_has_eleven_rows(self):
        assert len(TradeoffConfig(manifest="x").p_list) == 11
