"""
Desk-scale trend reproductions on the default profile.

Each of these runs several full audits; they are deselected by default and
run with `pytest -m slow`.
"""
import numpy as np
import pytest
from conftest import make_config

from src.audit_manager import (
    backdoor_forgotten_epoch,
    fig2_dynamics,
    run_mib_baseline,
    run_tape_audit,
)
from src.sweep import sweep

SEEDS = [42, 43, 44, 45, 46]

pytestmark = pytest.mark.slow


def test_single_sample_reconstructs_better_than_multi(tmp_path):
    wins = 0
    for seed in SEEDS:
        single = run_tape_audit(make_config(tmp_path, "desk", seed=seed, ess=1), write=False)
        multi = run_tape_audit(make_config(tmp_path, "desk", seed=seed, ess=8), write=False)
        wins += single.rec_similarity > multi.rec_similarity
    assert wins >= 4


def test_verifiability_grows_with_alpha(tmp_path):
    cfg = make_config(tmp_path, "desk", ess=8, **{"strategies.keep_original_copy": True})
    alphas = [0.0, 0.05, 0.1, 0.15, 0.2]
    frame = sweep(cfg, "alpha", alphas, SEEDS)
    good_seeds = 0
    for _, rows in frame.groupby("seed"):
        scores = rows.sort_values("axis_value")["verifiability"].to_numpy()
        assert not np.isnan(scores).any()
        good_seeds += int(np.sum(np.diff(scores) >= 0)) >= 3
    assert good_seeds >= 3


def test_tape_is_cheaper_than_backdoor_baseline(tmp_path):
    cfg = make_config(tmp_path, "desk")
    tape = run_tape_audit(cfg, write=False)
    mib = run_mib_baseline(cfg, write=False)
    assert mib.baseline_seconds >= 2 * tape.audit_seconds


def test_backdoor_baseline_misses_single_sample(tmp_path):
    cfg = make_config(tmp_path, "desk", ess=1)
    assert run_mib_baseline(cfg, write=False).verifiability <= 0.2
    assert run_tape_audit(cfg, write=False).verifiability >= 0.8


def test_backdoor_baseline_verifies_large_erasures(tmp_path):
    cfg = make_config(tmp_path, "desk", ess=20, unlearner="retrain", **{"strategies.udp_on": False})
    assert run_mib_baseline(cfg, write=False).verifiability == 1.0


def test_ascent_forgets_backdoor_before_test_accuracy(tmp_path):
    frame = fig2_dynamics(make_config(tmp_path, "desk", unlearner="ascent"), write=False)
    assert frame["acc_backdoor"].iloc[0] >= 0.5
    assert backdoor_forgotten_epoch(frame, backdoor_max=0.1, test_kept=0.7) is not None
