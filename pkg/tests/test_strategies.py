import numpy as np
import pandas as pd
import pytest

from src.utils.data import IndexSet
from src.utils.errors import ArgumentError, DegenerateWeightsError
from src.utils.nn import (
    MlpSpec,
    ModelParams,
    TrainConfig,
    batch_arrays,
    loss_and_grad,
    make_rng,
)
from src.utils.tape import (
    PosteriorDiff,
    RecTrainConfig,
    UdpConfig,
    UidConfig,
    posterior_difference,
    posteriors,
    reconstruct,
    shadow_model,
    udp_perturb,
    uid_divide,
)
from src.utils.tape.reconstructor import init_reconstructor
from src.utils.tape.strategies import _UdpObjective, clamp, export_perturbed_csv, uid_weights
from src.utils.unlearning import SisaUnlearner

LOCAL = IndexSet.of([3, 8, 21, 35, 50])
UNLEARN = IndexSet.of([8, 35])
QUICK = UdpConfig(alpha=0.1, restarts=2, steps=2, step_size=0.05)


@pytest.fixture
def ae():
    cfg = RecTrainConfig(latent_width=3, hidden_width=8)
    return init_reconstructor(2 * len(LOCAL), 4, cfg, make_rng(1))


def _random_diff(rng, local_size, num_classes=2) -> PosteriorDiff:
    blocks = rng.standard_normal((local_size, num_classes)) * 1e-3
    blocks -= blocks.mean(axis=1, keepdims=True)
    return PosteriorDiff(blocks.reshape(-1), local_size, num_classes)


class TestUdp:
    def test_clamp(self):
        clamped = clamp(np.array([-0.3, 0.05, 0.2]), 0.1)
        np.testing.assert_array_equal(clamped, [-0.1, 0.05, 0.1])

    def test_every_iterate_is_within_alpha(self, trained, blobs, ae):
        result = udp_perturb(trained, ae, blobs, UNLEARN, LOCAL, QUICK)
        assert [p.erased_index for p in result.perturbations] == [8, 35]
        for pert in result.perturbations:
            assert len(pert.restarts) == 2
            for run in pert.restarts:
                assert len(run.trajectory) == QUICK.steps + 1
                for delta in run.trajectory:
                    assert np.max(np.abs(delta)) <= QUICK.alpha
            assert np.max(np.abs(pert.perturbed - pert.original)) <= QUICK.alpha + 1e-12

    def test_best_restart_has_lowest_loss(self, trained, blobs, ae):
        pert = udp_perturb(trained, ae, blobs, UNLEARN, LOCAL, QUICK).perturbations[0]
        losses = [run.final_loss for run in pert.restarts]
        assert pert.best_restart == int(np.argmin(losses))
        assert pert.loss == min(losses)
        np.testing.assert_array_equal(pert.delta_p, pert.restarts[pert.best_restart].delta_p)

    def test_lowers_loss_against_the_unperturbed_sample(self, trained, blobs, ae):
        cfg = UdpConfig(alpha=0.2, restarts=2, steps=20, step_size=0.1)
        for pert in udp_perturb(trained, ae, blobs, UNLEARN, LOCAL, cfg).perturbations:
            objective = _UdpObjective(trained, ae, blobs, pert.erased_index, LOCAL, cfg.epsilon)
            assert pert.loss < objective(np.zeros(4))

    def test_deterministic(self, trained, blobs, ae):
        a = udp_perturb(trained, ae, blobs, UNLEARN, LOCAL, QUICK)
        b = udp_perturb(trained, ae, blobs, UNLEARN, LOCAL, QUICK)
        np.testing.assert_array_equal(a.perturbed, b.perturbed)

    def test_zero_alpha_submits_originals(self, trained, blobs, ae):
        cfg = UdpConfig(alpha=0.0, restarts=1, steps=1)
        result = udp_perturb(trained, ae, blobs, UNLEARN, LOCAL, cfg)
        np.testing.assert_array_equal(result.perturbed, blobs.features[UNLEARN.indices])

    def test_objective_at_origin(self, trained, blobs, ae):
        objective = _UdpObjective(trained, ae, blobs, 8, LOCAL, -1.0)
        diff = posterior_difference(
            posteriors(trained, blobs, LOCAL),
            posteriors(shadow_model(trained, blobs, IndexSet.of([8])), blobs, LOCAL),
        )
        err = reconstruct(ae, diff) - blobs.features[8]
        assert objective(np.zeros(4)) == pytest.approx(float(err @ err), rel=1e-12)

    def test_width_mismatch(self, trained, blobs):
        wrong = init_reconstructor(2 * len(LOCAL), 3, RecTrainConfig(hidden_width=4), make_rng(0))
        with pytest.raises(ArgumentError):
            udp_perturb(trained, wrong, blobs, UNLEARN, LOCAL, QUICK)

    def test_bad_config(self):
        with pytest.raises(ArgumentError):
            UdpConfig(alpha=-0.1)
        with pytest.raises(ArgumentError):
            UdpConfig(restarts=0)

    def test_csv_export(self, tmp_path, trained, blobs, ae):
        result = udp_perturb(trained, ae, blobs, UNLEARN, LOCAL, UdpConfig(restarts=1, steps=1))
        export_perturbed_csv(result, tmp_path / "udp.csv")
        frame = pd.read_csv(tmp_path / "udp.csv")
        assert list(frame["erased_index"]) == [8, 35]
        assert list(frame.columns[1:]) == ["x'_0", "x'_1", "x'_2", "x'_3"]


class TestUid:
    def test_shares_sum_to_overall_difference(self, trained, blobs):
        rng = make_rng(7)
        for case in range(100):
            m = int(rng.integers(2, 17))
            sigma = float(rng.choice([0.0, 1e-3, 1e-1]))
            unlearn = IndexSet.of(rng.choice(len(blobs), size=m, replace=False))
            overall = _random_diff(rng, int(rng.integers(2, 8)))
            shares = uid_divide(overall, trained, blobs, unlearn, UidConfig(sigma, seed=case))
            assert len(shares) == m
            total = np.sum([s.values for s in shares], axis=0)
            assert np.max(np.abs(total - overall.values)) <= 1e-9
            for share in shares:
                assert np.max(np.abs(share.blocks().sum(axis=1))) <= 1e-9

    def test_single_sample_passes_through(self, trained, blobs, rng):
        overall = _random_diff(rng, 4)
        (share,) = uid_divide(overall, trained, blobs, IndexSet.of([5]), UidConfig())
        np.testing.assert_array_equal(share.values, overall.values)
        assert share is not overall

    def test_noise_free_split_follows_weights(self, trained, blobs, rng):
        unlearn = IndexSet.of([1, 2, 40])
        overall = _random_diff(rng, 3)
        weights = uid_weights(trained, blobs, unlearn)
        shares = uid_divide(overall, trained, blobs, unlearn, UidConfig(sigma=0.0))
        for w, share in zip(weights, shares):
            np.testing.assert_allclose(share.values, w * overall.values, atol=1e-15)

    def test_noise_free_split_is_linear(self, trained, blobs, rng):
        unlearn = IndexSet.of([1, 2, 40])
        overall = _random_diff(rng, 3)
        doubled = overall.with_values(2.0 * overall.values)
        cfg = UidConfig(sigma=0.0)
        once = uid_divide(overall, trained, blobs, unlearn, cfg)
        twice = uid_divide(doubled, trained, blobs, unlearn, cfg)
        for a, b in zip(once, twice):
            np.testing.assert_allclose(b.values, 2.0 * a.values, rtol=1e-12, atol=1e-18)

    def test_weights_are_normalized_gradient_norms(self, trained, blobs):
        unlearn = IndexSet.of([0, 45])
        norms = []
        for i in unlearn:
            x, y = batch_arrays(trained.spec, blobs.subset(np.array([i])))
            norms.append(np.linalg.norm(loss_and_grad(trained, x, y)[1]))
        expected = np.array(norms) / sum(norms)
        np.testing.assert_allclose(uid_weights(trained, blobs, unlearn), expected)

    def test_zero_gradients_are_degenerate(self, blobs):
        # Saturated bias: class 0 has probability exactly 1 for every input.
        values = np.zeros(4 * 2 + 2)
        values[8] = 800.0
        model = ModelParams(MlpSpec((4, 2)), values)
        overall = PosteriorDiff(np.zeros(4), 2, 2)
        with pytest.raises(DegenerateWeightsError):
            uid_divide(overall, model, blobs, IndexSet.of([0, 1]), UidConfig())

    def test_ensemble_uses_shard_submodel(self, blobs, small_spec):
        ensemble = SisaUnlearner(small_spec, TrainConfig(epochs=2), shard_count=2).train(blobs)
        unlearn = IndexSet.of([0, 31])
        weights = uid_weights(ensemble, blobs, unlearn)
        norms = []
        for i in unlearn:
            sub = ensemble.submodels[int(ensemble.shard_assignment[i])]
            x, y = batch_arrays(sub.spec, blobs.subset(np.array([i])))
            norms.append(np.linalg.norm(loss_and_grad(sub, x, y)[1]))
        np.testing.assert_allclose(weights, np.array(norms) / sum(norms))

    def test_negative_sigma(self):
        with pytest.raises(ArgumentError):
            UidConfig(sigma=-1.0)
