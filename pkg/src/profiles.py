# Preset experiment profiles. Every profile is a complete "tape-config-1"
# document; config files are deep-merged over one of these.
import copy

CONFIG_FORMAT = "tape-config-1"

# --- Desk-scale default: synthetic 2-class blobs, d=8, 400 train samples ---
DESK_PROFILE = {
    "format_version": CONFIG_FORMAT,
    "seed": 42,
    "out_dir": "results",
    "dataset": {
        "kind": "synthetic",
        "num_classes": 2,
        "dims": 8,
        "samples_per_class": 250,
        "class_center_spread": 0.8,
        "noise_sigma": 0.1,
        "blank_dims": 2,  # dims 6, 7 stay 0 in clean data
        "test_fraction": 0.2,  # 500 generated -> 400 train / 100 test
        "images_path": None,
        "labels_path": None,
        "limit": None,
    },
    "model": {"hidden_widths": [16]},
    "train": {"epochs": 200, "batch_size": 8, "learning_rate": 0.05},
    "local_size": 40,
    "ess": 1,
    "epsilon": -1.0,
    "unlearner": {
        "kind": "influence",
        "shard_count": 5,
        "colocate": True,
        "damping": 1e-3,
        "ascent_epochs": 20,
        "ascent_lr": 0.05,
    },
    "reconstructor": {
        "epochs": 200,
        "batch_size": 20,
        "learning_rate": 0.05,
        "latent_width": 16,
        "hidden_width": 64,
    },
    "verifier": {
        "epochs": 100,
        "batch_size": 26,
        "learning_rate": 0.1,
        "hidden_width": 32,
        "dedupe_positives": False,
    },
    "udp": {"alpha": 0.1, "restarts": 3, "steps": 10, "step_size": 0.05, "fd_step": 1e-4},
    "uid": {"sigma": 1e-3},
    "strategies": {"udp_on": True, "uid_on": True, "keep_original_copy": False},
    "baseline": {
        "kind": "none",
        "patch_indices": [6, 7],  # the blank dims
        "patch_value": 1.0,
        "target_label": 0,
        "establish_threshold": 0.5,
        "removed_threshold": 0.1,
    },
    "dynamics": {
        "backdoor_count": 20,
        "genuine_count": 20,
        "epochs": 400,
        "learning_rate": 0.02,
    },
}

# --- Smaller and faster; used for smoke runs ---
SMOKE_PROFILE = copy.deepcopy(DESK_PROFILE)
SMOKE_PROFILE["dataset"].update(samples_per_class=60)
SMOKE_PROFILE["train"].update(epochs=30)
SMOKE_PROFILE["local_size"] = 12
SMOKE_PROFILE["reconstructor"].update(epochs=40, hidden_width=16, latent_width=4)
SMOKE_PROFILE["verifier"].update(epochs=20, hidden_width=8)
SMOKE_PROFILE["udp"].update(restarts=2, steps=3)
SMOKE_PROFILE["dynamics"].update(backdoor_count=6, genuine_count=6, epochs=10)

PROFILES = {"desk": DESK_PROFILE, "smoke": SMOKE_PROFILE}


def get_profile(name: str = "desk") -> dict:
    """A deep copy, safe to mutate."""
    return copy.deepcopy(PROFILES[name])
