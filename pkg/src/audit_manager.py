#
# file: audit_manager.py
#
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Optional, Sequence

import numpy as np
import pandas as pd
from logger_tt import logger

from .reports import BASE_TRAIN, AuditReport, save_report
from .utils.config import SEED_SELECT, ExperimentConfig
from .utils.data import (
    IndexSet,
    LabeledDataset,
    TriggerSpec,
    apply_trigger,
    gen_synthetic,
    load_idx,
    select_local,
    select_unlearn,
    train_test_split,
)
from .utils.debug_utils import debug_print, timed
from .utils.errors import ArgumentError, StageError
from .utils.nn import derive_seed, make_rng, save_checkpoint, sgd_train
from .utils.nn.checkpoint import params_to_document, write_document
from .utils.tape import (
    build_shadow_corpus,
    build_verification_set,
    posterior_difference,
    posteriors,
    reconstruct,
    reconstruction_similarity,
    train_reconstructor,
    train_verifier,
    udp_perturb,
    uid_divide,
    verifiability,
    verifier_accuracy,
)
from .utils.tape.reconstructor import save_reconstructor
from .utils.tape.shadow import export_corpus_csv
from .utils.tape.strategies import export_perturbed_csv
from .utils.tape.verifier import export_verification_csv, save_verifier
from .utils.unlearning import (
    SisaEnsemble,
    Unlearner,
    UnlearnerKind,
    ascent_unlearn,
    make_unlearner,
    service_accuracy,
)
from .utils.unlearning.unlearner import ServiceModel, service_predict

ABLATION_VARIANTS = {
    "TAPE": (True, True),
    "TAPE w/o UDP": (False, True),
    "TAPE w/o UID": (True, False),
    "TAPE w/o both": (False, False),
}
DYNAMICS_COLUMNS = ["epoch", "acc_backdoor", "acc_genuine", "acc_test"]
ABLATION_COLUMNS = ["variant", "seed", "ess", "rec_sim", "verifiability", "audit_seconds"]
BACKDOOR_FORGOTTEN = 0.1
TEST_KEPT = 0.7


@dataclass(frozen=True, eq=False)
class PreparedData:
    """Train/test split plus the auditor's local set and erased samples."""

    train: LabeledDataset
    test: LabeledDataset
    local: IndexSet
    unlearn: IndexSet


def prepare_data(cfg: ExperimentConfig) -> PreparedData:
    rng = make_rng(cfg.seed)
    ds = cfg.dataset
    if ds.kind == "synthetic":
        full = gen_synthetic(ds.synthetic, rng)
    else:
        full = load_idx(ds.images_path, ds.labels_path, limit=ds.limit)
    train, test = train_test_split(full, ds.test_fraction, rng)
    select_rng = make_rng(derive_seed(cfg.seed, SEED_SELECT))
    local = select_local(train, cfg.local_size, select_rng)
    unlearn = select_unlearn(local, cfg.ess, select_rng)
    debug_print(
        f"prepare_data: train={len(train)} test={len(test)} "
        f"local={len(local)} unlearn={unlearn}"
    )
    return PreparedData(train, test, local, unlearn)


def backdoor_success(
    model: ServiceModel, test: LabeledDataset, trigger: TriggerSpec
) -> float:
    """Share of triggered non-target test inputs classified as the target label."""
    victims = IndexSet(np.flatnonzero(test.labels != trigger.target_label))
    if len(victims) == 0:
        raise ArgumentError("no test samples outside the trigger's target class")
    triggered = apply_trigger(test, victims, trigger, flip_labels=False)
    probs = np.atleast_2d(service_predict(model, triggered.features[victims.indices]))
    return float(np.mean(np.argmax(probs, axis=1) == trigger.target_label))


class AuditManager:
    """
    Runs the audit pipeline stage by stage for one experiment config.

    Every stage is timed into `self.timings`; a failure inside a stage is
    re-raised as a `StageError` naming that stage.
    """

    def __init__(self, cfg: ExperimentConfig, data: Optional[PreparedData] = None):
        self.cfg = cfg
        self.data = data or prepare_data(cfg)
        self.spec = cfg.model_spec(self.data.train.dims, self.data.train.num_classes)
        self.timings: dict[str, float] = {}
        self.artifacts: dict[str, object] = {}

    @contextmanager
    def stage(self, name: str) -> Iterator[None]:
        try:
            with timed(name, self.timings):
                yield
        except StageError:
            raise
        except Exception as e:
            logger.error(f"[{name}] failed: {e}")
            raise StageError(name, e) from e

    def make_unlearner(self) -> Unlearner:
        return make_unlearner(
            self.cfg.unlearner.kind,
            self.spec,
            self.cfg.train,
            **self.cfg.unlearner.options(self.cfg.epsilon),
        )

    # ==========================================================================
    #  TAPE
    # ==========================================================================

    def run_tape(self) -> AuditReport:
        cfg, data = self.cfg, self.data
        train, local, unlearn = data.train, data.local, data.unlearn
        unlearner = self.make_unlearner()

        with self.stage(BASE_TRAIN):
            theta_t = unlearner.train(train, erase_hint=unlearn)

        with self.stage("shadow_build"):
            corpus = build_shadow_corpus(theta_t, train, local, cfg.epsilon)
        with self.stage("rec_train"):
            ae = train_reconstructor(corpus, cfg.reconstructor)

        submitted = train.features[unlearn.indices]
        if cfg.strategies.udp_on:
            with self.stage("udp"):
                udp = udp_perturb(theta_t, ae, train, unlearn, local, cfg.udp)
                submitted = udp.perturbed
            self.artifacts["udp"] = udp
        server_data = train.with_rows(unlearn, submitted)
        kept = {}
        if cfg.strategies.keep_original_copy:
            server_data = server_data.concat(train.subset(unlearn))
            kept = {u: server_data.features[len(train) + unlearn.position_of(u)] for u in unlearn}

        with self.stage("unlearn"):
            theta_u = unlearner.unlearn(unlearner.request(server_data, unlearn, theta_t))

        with self.stage("posterior_diff"):
            delta = posterior_difference(
                posteriors(theta_t, train, local), posteriors(theta_u, train, local)
            )
            if len(unlearn) == 1:
                diffs = {int(unlearn.indices[0]): delta}
            elif cfg.strategies.uid_on:
                shares = uid_divide(delta, theta_t, server_data, unlearn, cfg.uid)
                diffs = dict(zip(unlearn, shares))
            else:
                diffs = {u: delta for u in unlearn}
            x_hat = np.vstack([reconstruct(ae, diffs[u]) for u in unlearn])
            rec_sim = reconstruction_similarity(x_hat, submitted)

        with self.stage("verifier"):
            dset = build_verification_set(
                ae, diffs, server_data, local, unlearn, cfg.verifier.dedupe_positives, kept
            )
            verifier = train_verifier(dset, cfg.verifier.train, cfg.verifier.hidden_width)
            score = verifiability(verifier, ae, diffs, server_data, unlearn)

        self.artifacts.update(
            theta_t=theta_t, theta_u=theta_u, corpus=corpus, ae=ae,
            verification_set=dset, verifier=verifier, delta=delta,
        )
        report = AuditReport(
            kind="tape",
            seed=cfg.seed,
            model_accuracy=service_accuracy(theta_u, data.test),
            rec_similarity=rec_sim,
            verifiability=score,
            timings=dict(self.timings),
            extras={
                "ess": cfg.ess,
                "unlearner": cfg.unlearner.kind.value,
                "udp_on": cfg.strategies.udp_on,
                "uid_on": cfg.strategies.uid_on,
                "delta_norm": float(np.linalg.norm(delta.values)),
                "verifier_train_accuracy": verifier_accuracy(verifier, dset),
            },
            config=cfg.document,
        )
        logger.info(
            f"TAPE audit seed={cfg.seed} ess={cfg.ess}: rec_sim={rec_sim:.4f} "
            f"verifiability={score:.3f} audit={report.audit_seconds:.3f}s"
        )
        return report

    def write_tape_artifacts(self, out_dir: Path):
        """CSV exports and checkpoints of the last `run_tape`."""
        out_dir.mkdir(parents=True, exist_ok=True)
        a = self.artifacts
        export_corpus_csv(a["corpus"], out_dir / "shadow_corpus.csv")
        export_verification_csv(a["verification_set"], out_dir / "verification_set.csv")
        save_reconstructor(out_dir / "reconstructor.json", a["ae"], self.cfg.reconstructor.seed)
        save_verifier(out_dir / "verifier.json", a["verifier"], self.cfg.verifier.train.seed)
        save_service_model(out_dir / "theta_t.json", a["theta_t"], self.cfg.seed)
        if "udp" in a:
            export_perturbed_csv(a["udp"], out_dir / "perturbed_samples.csv")

    # ==========================================================================
    #  Backdoor baseline
    # ==========================================================================

    def run_mib(self, trigger_alpha: Optional[float] = None) -> AuditReport:
        cfg, data = self.cfg, self.data
        base = cfg.baseline
        unlearner = self.make_unlearner()
        poisoned = apply_trigger(
            data.train, data.unlearn, base.trigger, flip_labels=True, alpha=trigger_alpha
        )

        # The backdoor must be planted during original training, so that
        # training counts toward the baseline's verification cost.
        with self.stage(BASE_TRAIN):
            theta_t = unlearner.train(poisoned, erase_hint=data.unlearn)
        with self.stage("backdoor_check"):
            before = backdoor_success(theta_t, data.test, base.trigger)
        with self.stage("unlearn"):
            theta_u = unlearner.unlearn(unlearner.request(poisoned, data.unlearn, theta_t))
        with self.stage("backdoor_check"):
            after = backdoor_success(theta_u, data.test, base.trigger)

        verified = before >= base.establish_threshold and after < base.removed_threshold
        report = AuditReport(
            kind="mib",
            seed=cfg.seed,
            model_accuracy=service_accuracy(theta_u, data.test),
            rec_similarity=None,
            verifiability=1.0 if verified else 0.0,
            timings=dict(self.timings),
            extras={
                "ess": cfg.ess,
                "unlearner": cfg.unlearner.kind.value,
                "backdoor_before": before,
                "backdoor_after": after,
                "trigger_alpha": trigger_alpha,
            },
            config=cfg.document,
        )
        logger.info(
            f"MIB baseline seed={cfg.seed} ess={cfg.ess}: backdoor {before:.3f} -> "
            f"{after:.3f}, verified={verified}, cost={report.baseline_seconds:.3f}s"
        )
        return report

    # ==========================================================================
    #  Forgetting dynamics
    # ==========================================================================

    def run_dynamics(self) -> pd.DataFrame:
        cfg, data = self.cfg, self.data
        dyn, trigger = cfg.dynamics, cfg.baseline.trigger
        if cfg.unlearner.kind is not UnlearnerKind.ASCENT:
            raise ArgumentError("forgetting dynamics need the ascent unlearner")

        train = data.train
        rng = make_rng(derive_seed(cfg.seed, SEED_SELECT, len(train)))
        order = rng.permutation(len(train))
        eligible = order[train.labels[order] != trigger.target_label]
        if len(eligible) < dyn.backdoor_count:
            raise ArgumentError("not enough non-target samples to backdoor")
        backdoor = IndexSet(np.sort(eligible[: dyn.backdoor_count]))
        remaining = np.setdiff1d(order, backdoor.indices, assume_unique=True)
        genuine = IndexSet(np.sort(rng.choice(remaining, dyn.genuine_count, replace=False)))

        poisoned = apply_trigger(train, backdoor, trigger, flip_labels=True)
        with self.stage(BASE_TRAIN):
            theta_t = sgd_train(self.spec, poisoned, cfg.train)
        with self.stage("unlearn"):
            trajectory = ascent_unlearn(
                theta_t,
                poisoned.subset(backdoor.union(genuine)),
                {
                    "backdoor": poisoned.subset(backdoor),
                    "genuine": poisoned.subset(genuine),
                    "test": data.test,
                },
                dyn.epochs,
                dyn.learning_rate,
            )
        return pd.DataFrame(
            [
                (s.epoch, s.accuracies["backdoor"], s.accuracies["genuine"], s.accuracies["test"])
                for s in trajectory
            ],
            columns=DYNAMICS_COLUMNS,
        )


def save_service_model(path: Path, model: ServiceModel, seed: int):
    if isinstance(model, SisaEnsemble):
        models = {f"shard_{i}": params_to_document(m) for i, m in enumerate(model.submodels)}
        write_document(path, {"seed": int(seed), "models": models})
    else:
        save_checkpoint(path, model, seed)


def _run_tag(cfg: ExperimentConfig) -> str:
    return f"seed{cfg.seed}_ess{cfg.ess}"


def train_base_model(cfg: ExperimentConfig, path: Optional[Path] = None) -> Path:
    """Trains θ_t on the train split and writes it as a checkpoint."""
    manager = AuditManager(cfg)
    with manager.stage(BASE_TRAIN):
        model = manager.make_unlearner().train(manager.data.train)
    path = Path(path or Path(cfg.out_dir) / f"theta_t_seed{cfg.seed}.json")
    path.parent.mkdir(parents=True, exist_ok=True)
    save_service_model(path, model, cfg.seed)
    return path


def run_tape_audit(cfg: ExperimentConfig, write: bool = True) -> AuditReport:
    manager = AuditManager(cfg)
    report = manager.run_tape()
    if write:
        out = Path(cfg.out_dir)
        save_report(report, out / f"tape_report_{_run_tag(cfg)}.json")
        manager.write_tape_artifacts(out / f"artifacts_{_run_tag(cfg)}")
    return report


def run_mib_baseline(
    cfg: ExperimentConfig, write: bool = True, trigger_alpha: Optional[float] = None
) -> AuditReport:
    report = AuditManager(cfg).run_mib(trigger_alpha)
    if write:
        save_report(report, Path(cfg.out_dir) / f"mib_report_{_run_tag(cfg)}.json")
    return report


def backdoor_forgotten_epoch(
    frame: pd.DataFrame,
    backdoor_max: float = BACKDOOR_FORGOTTEN,
    test_kept: float = TEST_KEPT,
) -> Optional[int]:
    """
    First epoch whose backdoor accuracy is at most `backdoor_max` while test
    accuracy is still at least `test_kept` times its epoch-0 value.
    """
    if frame.empty:
        return None
    floor = test_kept * frame["acc_test"].iloc[0]
    hits = frame[(frame["acc_backdoor"] <= backdoor_max) & (frame["acc_test"] >= floor)]
    return None if hits.empty else int(hits["epoch"].iloc[0])


def fig2_dynamics(cfg: ExperimentConfig, write: bool = True) -> pd.DataFrame:
    """Per-epoch accuracies on the backdoored, genuine and test sets during ascent."""
    frame = AuditManager(cfg).run_dynamics()
    epoch = backdoor_forgotten_epoch(frame)
    if epoch is None:
        logger.info("dynamics: the backdoor never fell while test accuracy held")
    else:
        row = frame.loc[frame["epoch"] == epoch].iloc[0]
        logger.info(
            f"dynamics: backdoor forgotten at epoch {epoch} "
            f"(backdoor {row.acc_backdoor:.3f}, genuine {row.acc_genuine:.3f}, "
            f"test {row.acc_test:.3f})"
        )
    if write:
        out = Path(cfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        frame.to_csv(out / f"dynamics_seed{cfg.seed}.csv", index=False)
    return frame


def ablation(
    cfg: ExperimentConfig, seeds: Sequence[int], write: bool = True
) -> pd.DataFrame:
    """Every strategy variant on every seed; failed cells keep empty metrics."""
    rows = []
    for variant, (udp_on, uid_on) in ABLATION_VARIANTS.items():
        for seed in seeds:
            row = {"variant": variant, "seed": seed, "ess": cfg.ess}
            try:
                cell = cfg.with_overrides(
                    seed=seed,
                    **{
                        "strategies.udp_on": udp_on,
                        "strategies.uid_on": uid_on,
                        "strategies.keep_original_copy": (
                            udp_on and cfg.strategies.keep_original_copy
                        ),
                    },
                )
                report = run_tape_audit(cell, write=False)
                row.update(
                    rec_sim=report.rec_similarity,
                    verifiability=report.verifiability,
                    audit_seconds=report.audit_seconds,
                )
            except Exception as e:
                logger.error(f"ablation cell '{variant}' seed={seed} failed: {e}")
            rows.append(row)
    frame = pd.DataFrame(rows, columns=ABLATION_COLUMNS)
    if write:
        out = Path(cfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        frame.to_csv(out / f"ablation_ess{cfg.ess}.csv", index=False)
    return frame
