from .reconstructor import (
    Reconstructor,
    RecTrainConfig,
    reconstruct,
    reconstruct_batch,
    reconstruction_loss,
    reconstruction_similarity,
    train_reconstructor,
)
from .shadow import (
    PosteriorDiff,
    PosteriorVector,
    ShadowPair,
    build_shadow_corpus,
    corpus_arrays,
    export_corpus_csv,
    posterior_difference,
    posteriors,
    shadow_model,
    shadow_service,
)
from .strategies import UdpConfig, UdpResult, UidConfig, udp_perturb, uid_divide
from .verifier import (
    VerificationDataset,
    VerifierModel,
    build_verification_set,
    train_verifier,
    verifiability,
    verifier_accuracy,
)

__all__ = [
    "PosteriorDiff",
    "PosteriorVector",
    "RecTrainConfig",
    "Reconstructor",
    "ShadowPair",
    "UdpConfig",
    "UdpResult",
    "UidConfig",
    "VerificationDataset",
    "VerifierModel",
    "build_shadow_corpus",
    "build_verification_set",
    "corpus_arrays",
    "export_corpus_csv",
    "posterior_difference",
    "posteriors",
    "reconstruct",
    "reconstruct_batch",
    "reconstruction_loss",
    "reconstruction_similarity",
    "shadow_model",
    "shadow_service",
    "train_reconstructor",
    "train_verifier",
    "udp_perturb",
    "uid_divide",
    "verifiability",
    "verifier_accuracy",
]
