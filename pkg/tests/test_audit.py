import numpy as np
import pandas as pd
import pytest
from conftest import make_config

from src.audit_manager import (
    ABLATION_COLUMNS,
    DYNAMICS_COLUMNS,
    AuditManager,
    ablation,
    backdoor_forgotten_epoch,
    backdoor_success,
    fig2_dynamics,
    prepare_data,
    run_mib_baseline,
    run_tape_audit,
    train_base_model,
)
from src.reports import BASE_TRAIN, load_report
from src.sweep import SWEEP_COLUMNS, TIMING_COLUMNS, parse_axis_values, sweep
from src.utils.data import IndexSet, LabeledDataset, TriggerSpec
from src.utils.errors import ArgumentError, StageError
from src.utils.nn import MlpSpec, ModelParams, load_checkpoint

TAPE_STAGES = {
    BASE_TRAIN,
    "shadow_build",
    "rec_train",
    "udp",
    "unlearn",
    "posterior_diff",
    "verifier",
}


class TestPrepareData:
    def test_sizes_and_nesting(self, smoke_cfg):
        data = prepare_data(smoke_cfg)
        assert (len(data.train), len(data.test)) == (96, 24)
        assert len(data.local) == 12 and len(data.unlearn) == 1
        assert data.unlearn.issubset(data.local)

    def test_deterministic(self, smoke_cfg):
        a, b = prepare_data(smoke_cfg), prepare_data(smoke_cfg)
        assert a.local == b.local and a.unlearn == b.unlearn
        np.testing.assert_array_equal(a.train.features, b.train.features)


class TestStage:
    def test_failure_names_the_stage(self, smoke_cfg):
        manager = AuditManager(smoke_cfg)
        with pytest.raises(StageError) as info:
            with manager.stage("shadow_build"):
                raise ValueError("boom")
        assert info.value.stage == "shadow_build"
        assert isinstance(info.value.cause, ValueError)
        assert "shadow_build" in manager.timings


class TestTapeAudit:
    def test_report_and_artifacts(self, smoke_cfg, tmp_path):
        report = run_tape_audit(smoke_cfg)
        assert report.kind == "tape"
        assert set(report.timings) == TAPE_STAGES
        assert 0.0 <= report.verifiability <= 1.0
        assert -1.0 <= report.rec_similarity <= 1.0
        assert report.audit_seconds < report.baseline_seconds

        saved = load_report(tmp_path / "tape_report_seed42_ess1.json")
        assert saved.verifiability == report.verifiability
        artifacts = tmp_path / "artifacts_seed42_ess1"
        for name in (
            "shadow_corpus.csv",
            "verification_set.csv",
            "perturbed_samples.csv",
            "reconstructor.json",
            "verifier.json",
            "theta_t.json",
        ):
            assert (artifacts / name).is_file()
        assert len(pd.read_csv(artifacts / "shadow_corpus.csv")) == 12

    def test_same_seed_same_metrics(self, smoke_cfg):
        a = run_tape_audit(smoke_cfg, write=False)
        b = run_tape_audit(smoke_cfg, write=False)
        assert (a.model_accuracy, a.rec_similarity, a.verifiability) == (
            b.model_accuracy,
            b.rec_similarity,
            b.verifiability,
        )

    def test_without_udp(self, tmp_path):
        cfg = make_config(tmp_path, **{"strategies.udp_on": False})
        report = run_tape_audit(cfg, write=False)
        assert "udp" not in report.timings
        assert report.extras["udp_on"] is False

    def test_multi_sample_with_uid(self, tmp_path):
        manager = AuditManager(make_config(tmp_path, ess=3))
        report = manager.run_tape()
        assert len(manager.artifacts["udp"].perturbations) == 3
        assert len(manager.artifacts["verification_set"]) == 3 * 2 * 9
        assert 0.0 <= report.verifiability <= 1.0

    def test_keep_original_copy(self, tmp_path):
        cfg = make_config(tmp_path, ess=2, **{"strategies.keep_original_copy": True})
        manager = AuditManager(cfg)
        report = manager.run_tape()
        assert 0.0 <= report.verifiability <= 1.0

        dset = manager.artifacts["verification_set"]
        assert len(dset) == 2 * 3 * 10
        assert int(dset.labels.sum()) == 2 * 10
        for u in manager.data.unlearn:
            kept = np.all(dset.candidates == manager.data.train.features[u], axis=1)
            assert kept.sum() == 10
            assert (dset.labels[kept] == 0).all()

    @pytest.mark.parametrize("kind", ["retrain", "sisa", "newton", "ascent"])
    def test_other_unlearners(self, tmp_path, kind):
        cfg = make_config(tmp_path, unlearner=kind, ess=2, **{"strategies.udp_on": False})
        report = run_tape_audit(cfg)
        assert report.extras["unlearner"] == kind
        assert 0.0 <= report.model_accuracy <= 1.0

    def test_newton_parameter_cap_fails_in_unlearn(self, tmp_path):
        cfg = make_config(
            tmp_path,
            unlearner="newton",
            **{"model.hidden_widths": [300], "strategies.udp_on": False},
        )
        with pytest.raises(StageError) as info:
            run_tape_audit(cfg, write=False)
        assert info.value.stage == "unlearn"
        assert isinstance(info.value.cause, ArgumentError)


class TestBaseline:
    def test_mib_report(self, smoke_cfg, tmp_path):
        report = run_mib_baseline(smoke_cfg)
        assert report.kind == "mib"
        assert report.rec_similarity is None
        assert report.verifiability in (0.0, 1.0)
        assert {"backdoor_before", "backdoor_after"} <= report.extras.keys()
        assert BASE_TRAIN in report.timings
        assert (tmp_path / "mib_report_seed42_ess1.json").is_file()

    def test_backdoor_success_counts_target_predictions(self):
        # logit_1 = 10 * x_0, so inputs with x_0 > 0 are classified as 1.
        model = ModelParams(MlpSpec((2, 2)), np.array([0.0, 10.0, 0.0, 0.0, 0.0, 0.0]))
        test = LabeledDataset(np.array([[0.0, 0.3], [0.0, 0.2], [0.5, 0.5]]), [0, 0, 1], 2)
        trigger = TriggerSpec(IndexSet.of([0]), patch_value=1.0, target_label=1)
        assert backdoor_success(model, test, trigger) == pytest.approx(1.0)
        to_zero = TriggerSpec(IndexSet.of([0]), patch_value=-1.0, target_label=0)
        assert backdoor_success(model, test, to_zero) == pytest.approx(1.0)

    def test_backdoor_success_needs_victims(self, trained, blobs):
        only_zero = blobs.subset(np.arange(30))
        with pytest.raises(ArgumentError):
            backdoor_success(trained, only_zero, TriggerSpec(IndexSet.of([0]), target_label=0))


class TestDynamicsAndAblation:
    def test_dynamics_needs_ascent(self, smoke_cfg):
        with pytest.raises(ArgumentError):
            AuditManager(smoke_cfg).run_dynamics()

    def test_dynamics_table(self, tmp_path):
        cfg = make_config(tmp_path, unlearner="ascent")
        frame = fig2_dynamics(cfg)
        assert list(frame.columns) == DYNAMICS_COLUMNS
        assert list(frame["epoch"]) == list(range(11))
        assert (tmp_path / "dynamics_seed42.csv").is_file()

    def test_forgotten_epoch_needs_test_accuracy_kept(self):
        frame = pd.DataFrame(
            {
                "epoch": [0, 1, 2, 3],
                "acc_backdoor": [1.0, 0.4, 0.05, 0.0],
                "acc_genuine": [1.0, 0.9, 0.6, 0.1],
                "acc_test": [0.9, 0.88, 0.7, 0.3],
            }
        )
        assert backdoor_forgotten_epoch(frame) == 2
        assert backdoor_forgotten_epoch(frame, test_kept=0.9) is None
        assert backdoor_forgotten_epoch(frame, backdoor_max=0.5) == 1

    def test_forgotten_epoch_on_empty_curve(self):
        assert backdoor_forgotten_epoch(pd.DataFrame(columns=DYNAMICS_COLUMNS)) is None

    def test_ablation_rows(self, tmp_path):
        frame = ablation(make_config(tmp_path), seeds=[42])
        assert list(frame.columns) == ABLATION_COLUMNS
        assert len(frame) == 4
        assert frame["verifiability"].notna().all()
        assert (tmp_path / "ablation_ess1.csv").is_file()


class TestSweep:
    def test_rows_per_cell(self, tmp_path):
        cfg = make_config(tmp_path)
        frame = sweep(cfg, "ess", [1, 2], [42, 43], tmp_path / "sweep.csv")
        assert list(frame.columns) == SWEEP_COLUMNS
        cells = list(zip(frame["axis_value"], frame["seed"]))
        assert cells == [(1, 42), (1, 43), (2, 42), (2, 43)]
        assert frame["baseline_seconds"].isna().all()
        assert len(pd.read_csv(tmp_path / "sweep.csv")) == 4

    def test_repeatable_modulo_timings(self, tmp_path):
        cfg = make_config(tmp_path)
        sweep(cfg, "alpha", [0.0, 0.1], [42], tmp_path / "a.csv")
        sweep(cfg, "alpha", [0.0, 0.1], [42], tmp_path / "b.csv")
        a = pd.read_csv(tmp_path / "a.csv").drop(columns=TIMING_COLUMNS)
        b = pd.read_csv(tmp_path / "b.csv").drop(columns=TIMING_COLUMNS)
        pd.testing.assert_frame_equal(a, b)

    def test_failed_cell_keeps_empty_metrics(self, tmp_path):
        frame = sweep(make_config(tmp_path), "ess", [50], [42])
        assert len(frame) == 1
        assert np.isnan(frame["verifiability"][0])

    def test_baseline_cost_with_mib(self, tmp_path):
        cfg = make_config(tmp_path, **{"baseline.kind": "mib"})
        frame = sweep(cfg, "alpha", [0.05], [42])
        assert frame["baseline_seconds"][0] > 0

    @pytest.mark.parametrize(
        "axis, value, expected", [("alpha", 0.05, 0.05), ("ess", 2, None)]
    )
    def test_mib_trigger_follows_the_alpha_axis(
        self, tmp_path, monkeypatch, axis, value, expected
    ):
        seen = []

        def recording(cell, write=True, trigger_alpha=None):
            report = run_mib_baseline(cell, write, trigger_alpha)
            seen.append(report.extras["trigger_alpha"])
            return report

        monkeypatch.setattr("src.sweep.run_mib_baseline", recording)
        sweep(make_config(tmp_path, **{"baseline.kind": "mib"}), axis, [value], [42])
        assert seen == [expected]

    def test_axis_values(self):
        assert parse_axis_values("alpha", "0, 0.1,0.2") == [0.0, 0.1, 0.2]
        assert parse_axis_values("ess", "1,4") == [1, 4]
        with pytest.raises(ArgumentError):
            parse_axis_values("ess", "1.5")
        with pytest.raises(ArgumentError):
            parse_axis_values("gamma", "1")


def test_train_base_model(smoke_cfg, tmp_path):
    path = train_base_model(smoke_cfg)
    params, seed = load_checkpoint(path)
    assert path == tmp_path / "theta_t_seed42.json"
    assert seed == 42
    assert params.spec.layer_widths == (8, 16, 2)
