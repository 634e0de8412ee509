import numpy as np
import pytest

from src.utils.data import SyntheticSpec, gen_synthetic
from src.utils.errors import ArgumentError, ConfigError, DivergenceError, ShapeError
from src.utils.nn import (
    Head,
    MlpSpec,
    ModelParams,
    TrainConfig,
    accuracy,
    batch_arrays,
    derive_seed,
    load_checkpoint,
    make_rng,
    save_checkpoint,
    sgd_train,
    shard_seed,
)
from src.utils.nn.checkpoint import params_to_document, read_document, write_document


class TestTrainConfig:
    @pytest.mark.parametrize(
        "kwargs", [{"epochs": 0}, {"batch_size": 0}, {"learning_rate": -0.1}, {"seed": -1}]
    )
    def test_rejects(self, kwargs):
        with pytest.raises(ArgumentError):
            TrainConfig(**kwargs)

    def test_zero_learning_rate_is_allowed(self):
        assert TrainConfig(learning_rate=0.0).learning_rate == 0.0


class TestSgdTrain:
    def test_zero_learning_rate_returns_init(self, blobs, small_spec):
        cfg = TrainConfig(epochs=3, learning_rate=0.0, seed=11)
        params = sgd_train(small_spec, blobs, cfg)
        init = ModelParams.init(small_spec, make_rng(11))
        np.testing.assert_array_equal(params.values, init.values)

    def test_deterministic(self, blobs, small_spec):
        cfg = TrainConfig(epochs=5, seed=9)
        a = sgd_train(small_spec, blobs, cfg)
        b = sgd_train(small_spec, blobs, cfg)
        np.testing.assert_array_equal(a.values, b.values)

    def test_learns_blobs(self, blobs, trained):
        assert accuracy(trained, blobs.features, blobs.labels) >= 0.8

    def test_divergence_names_epoch(self, blobs):
        spec = MlpSpec((4, 2), Head.MSE)
        with pytest.raises(DivergenceError) as info:
            sgd_train(spec, blobs, TrainConfig(epochs=3, learning_rate=1e150))
        assert info.value.epoch == 1

    def test_width_mismatch(self, blobs):
        with pytest.raises(ShapeError):
            sgd_train(MlpSpec((3, 2)), blobs, TrainConfig(epochs=1))

    def test_blank_inputs_keep_their_init_weights(self):
        data = gen_synthetic(SyntheticSpec(dims=6, samples_per_class=20, blank_dims=2), make_rng(3))
        spec = MlpSpec((6, 5, 2))
        params = sgd_train(spec, data, TrainConfig(epochs=5, seed=4))
        init = ModelParams.init(spec, make_rng(4))
        np.testing.assert_array_equal(params.layers()[0][0][4:], init.layers()[0][0][4:])
        assert not np.array_equal(params.layers()[0][0][:4], init.layers()[0][0][:4])

    def test_mse_head_targets_are_one_hot(self, blobs):
        _, y = batch_arrays(MlpSpec((4, 2), Head.MSE), blobs.subset(np.array([0, 59])))
        np.testing.assert_array_equal(y, [[1.0, 0.0], [0.0, 1.0]])


class TestSeeds:
    def test_derived_seeds_differ(self):
        assert derive_seed(42, 0) != derive_seed(42, 1)
        assert derive_seed(42, 0) == derive_seed(42, 0)

    def test_shard_zero_uses_master_seed(self):
        assert shard_seed(42, 0) == 42
        assert shard_seed(42, 3) == 45

    def test_rng_stream_is_pcg64(self):
        a = make_rng(5).standard_normal(3)
        b = np.random.Generator(np.random.PCG64(5)).standard_normal(3)
        np.testing.assert_array_equal(a, b)


class TestCheckpoint:
    def test_values_restore_exactly(self, tmp_path, trained):
        path = tmp_path / "theta.json"
        save_checkpoint(path, trained, seed=42)
        params, seed = load_checkpoint(path)
        assert seed == 42
        assert params.spec == trained.spec
        np.testing.assert_array_equal(params.values, trained.values)

    def test_wrong_format_version(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('{"format_version": "other", "seed": 1, "spec": {}, "values": []}')
        with pytest.raises(ConfigError):
            load_checkpoint(path)

    def test_multi_model_document(self, tmp_path, trained):
        path = tmp_path / "pair.json"
        write_document(path, {"seed": 3, "models": {"a": params_to_document(trained)}})
        assert set(read_document(path)["models"]) == {"a"}
        with pytest.raises(ConfigError):
            load_checkpoint(path)
