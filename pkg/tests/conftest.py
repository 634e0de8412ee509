import pytest

from src.profiles import get_profile
from src.utils.config import ExperimentConfig
from src.utils.data import LabeledDataset, SyntheticSpec, gen_synthetic
from src.utils.nn import MlpSpec, ModelParams, TrainConfig, make_rng, sgd_train


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: multi-seed trend reproductions (minutes)")


@pytest.fixture
def rng():
    return make_rng(42)


@pytest.fixture
def blobs() -> LabeledDataset:
    """60 samples, 4 features, 2 classes."""
    return gen_synthetic(SyntheticSpec(num_classes=2, dims=4, samples_per_class=30), make_rng(42))


@pytest.fixture
def small_spec() -> MlpSpec:
    return MlpSpec((4, 6, 2))


@pytest.fixture
def trained(blobs, small_spec) -> ModelParams:
    return sgd_train(small_spec, blobs, TrainConfig(epochs=20, batch_size=8, learning_rate=0.1))


@pytest.fixture
def random_params(small_spec, rng) -> ModelParams:
    return ModelParams.init(small_spec, rng)


def make_config(tmp_path, profile: str = "smoke", **overrides) -> ExperimentConfig:
    doc = get_profile(profile)
    doc["out_dir"] = str(tmp_path)
    return ExperimentConfig.from_document(doc).with_overrides(**overrides)


@pytest.fixture
def smoke_cfg(tmp_path) -> ExperimentConfig:
    return make_config(tmp_path)


