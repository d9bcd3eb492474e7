"""End-to-end training: features, split, preprocessing, selection, balancing, base bank, meta learner."""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .balance import BalanceReport, near_miss
from .bundle import dumps_payload, save_bundle
from .config import RunConfig, stage_seed
from .dataio import Dataset, Emotion, load_dataset, partition_indices, round_half_up
from .ensemble import (CANONICAL_TAGS, BaseBank, EnsembleModel, FrozenPreprocessing, MetaSearch, assemble,
                       build_meta_dataset, majority_vote, row_hashes, train_meta)
from .errors import DataError, SceneEmotionError, StageError, TrainingError
from .evaluation import EvaluationReport
from .features import FeatureExtractor, feature_names
from .learners.nn import TrainConfig, bpnn_arch, cnn_arch, nn_train
from .learners.svm import SvmHyper, svm_train_multiclass
from .preprocess import Preprocessor
from .selection import run_filter_bank
from .tuning import Grid, GridLedger, ShrinkSpec, run_search

log = logging.getLogger(__name__)


@dataclass
class FeatureTable:
    X: np.ndarray
    y: np.ndarray
    ids: list

    def __len__(self):
        return self.y.size


def extract_features(d: Dataset, cfg: RunConfig) -> FeatureTable:
    ext = FeatureExtractor(cfg.sample_rate, cfg.frame)
    X = ext.extract_many(d.segments)
    return FeatureTable(X, d.labels.astype(np.int64), [s.source_id for s in d.segments])


def stratified_holdout(y, fraction: float, seed: int):
    """Per-class random holdout of round_half_up(fraction * class count) rows."""
    rng = np.random.default_rng(seed)
    hold = []
    for c in np.unique(y):
        rows = rng.permutation(np.flatnonzero(y == c))
        hold.extend(rows[:round_half_up(fraction * rows.size)].tolist())
    hold = np.sort(np.asarray(hold, dtype=np.int64))
    mask = np.ones(y.size, dtype=bool)
    mask[hold] = False
    return np.flatnonzero(mask), hold


def _svm_fit(X, y, C, gamma):
    return svm_train_multiclass(X, y, SvmHyper(C, gamma))


@dataclass
class TrainResult:
    model: EnsembleModel
    test_report: EvaluationReport
    holdout_accuracy: dict          # tag -> accuracy of each base learner on the meta holdout
    test_accuracy: dict             # tag -> accuracy of each base learner on the test split
    ensemble_holdout_accuracy: float
    vote_test_accuracy: float
    kfold_ledger: GridLedger
    nested_ledger: GridLedger
    meta_search: MetaSearch
    balance: BalanceReport
    curves: dict = field(default_factory=dict)   # tag -> LearningCurve
    test_rows: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)

    @property
    def best_base_test_accuracy(self) -> float:
        return max(self.test_accuracy.values())


def _stage(name, timings):
    class _Ctx:
        def __enter__(self):
            self.t0 = time.perf_counter()
            log.info("stage %s", name)

        def __exit__(self, exc_type, exc, tb):
            timings[name] = time.perf_counter() - self.t0
            if exc is None or isinstance(exc, StageError):
                return False
            if isinstance(exc, SceneEmotionError):
                raise StageError(name, exc) from exc
            if isinstance(exc, (ValueError, ArithmeticError, np.linalg.LinAlgError)):
                raise StageError(name, TrainingError(str(exc))) from exc
            return False
    return _Ctx()


def train_from_features(table: FeatureTable, cfg: RunConfig) -> TrainResult:
    """Everything after feature extraction; deterministic in (table, cfg)."""
    timings: dict = {}
    seed = cfg.seed
    with _stage("partition", timings):
        if set(np.unique(table.y).tolist()) != {0, 1, 2}:
            raise DataError("training data must contain all three classes")
        tr, te = partition_indices(table.y, cfg.test_fraction, stage_seed(seed, "partition"))
        F_tr, y_tr, F_te, y_te = table.X[tr], table.y[tr], table.X[te], table.y[te]
    with _stage("preprocess", timings):
        pre = Preprocessor.fit(F_tr)
        X_tr, X_te = pre.transform(F_tr), pre.transform(F_te)
    with _stage("select", timings):
        mask = run_filter_bank(X_tr, y_tr, X_te, cfg.thresholds)
        X_tr, X_te = mask.apply(X_tr), mask.apply(X_te)
    prep = FrozenPreprocessing(cfg.sample_rate, cfg.window_seconds, cfg.frame, pre, mask)
    prep_hash = prep.state_hash()
    with _stage("balance", timings):
        X_bal, y_bal, balance = near_miss(X_tr, y_tr)
        base_rows, hold_rows = stratified_holdout(y_bal, cfg.holdout_fraction, stage_seed(seed, "holdout"))
        X_b, y_b, X_h, y_h = X_bal[base_rows], y_bal[base_rows], X_bal[hold_rows], y_bal[hold_rows]

    sc = cfg.search
    shrink = ShrinkSpec(rel_span=sc.rel_span, decay=sc.decay)
    models, curves = {}, {}
    with _stage("svm-kfold", timings):
        kfold = run_search(X_b, y_b, sc.kfold_rounds, stage_seed(seed, "svm-kfold"), _svm_fit, "kfold", k=sc.k,
                           first=Grid(sc.first_grid, sc.first_grid), shrink=shrink, title="K-fold grid search")
        for r, rnd in enumerate(kfold.rounds[:4], 1):
            models[f"svm-kfold-r{r}"] = _svm_fit(X_b, y_b, *rnd.best)
    with _stage("svm-nested", timings):
        nested = run_search(X_b, y_b, sc.nested_rounds, stage_seed(seed, "svm-nested"), _svm_fit, "nested",
                            k_outer=sc.k_outer, k_inner=sc.k_inner,
                            first=Grid(sc.nested_first_grid, sc.nested_first_grid), shrink=shrink,
                            title="Nested grid search")
        for r, rnd in enumerate(nested.rounds[:5], 1):
            models[f"svm-nested-r{r}"] = _svm_fit(X_b, y_b, *rnd.best)
    for name, arch_fn in (("bpnn", bpnn_arch), ("cnn", cnn_arch)):
        with _stage(name, timings):
            nn_cfg = TrainConfig(cfg.nn.batch_size, cfg.nn.learning_rate, cfg.nn.max_epochs, cfg.nn.stop_epochs,
                                 stage_seed(seed, name))
            for snap, curve in nn_train(arch_fn(X_b.shape[1]), X_b, y_b, nn_cfg, X_h, y_h):
                tag = f"{name}-e{snap.epochs_trained}"
                models[tag] = snap
                curves[tag] = curve
    with _stage("bank", timings):
        for m in models.values():
            m.train_hash = prep_hash
        base_hashes = row_hashes(X_b)
        bank = BaseBank(list(CANONICAL_TAGS), [models[t] for t in CANONICAL_TAGS],
                        {t: base_hashes for t in CANONICAL_TAGS})
    with _stage("meta", timings):
        md = build_meta_dataset(bank, X_h, y_h)
        meta, search = train_meta(md, Grid(sc.meta_grid, sc.meta_grid))
        meta.train_hash = prep_hash
        model = assemble(bank, meta, prep, md.row_hashes)
    with _stage("evaluate", timings):
        test_hashes = row_hashes(X_te)
        if set(test_hashes) & (set(base_hashes) | set(md.row_hashes)):
            raise TrainingError("test rows leaked into training provenance")
        pred = model.predict_inputs(X_te)
        report = EvaluationReport.from_predictions(y_te, pred, "ensemble")
        hold_acc = {t: float(np.mean(m.predict(X_h) == y_h)) for t, m in zip(bank.tags, bank.models)}
        test_acc = {t: float(np.mean(m.predict(X_te) == y_te)) for t, m in zip(bank.tags, bank.models)}
        ens_hold = float(np.mean(meta.predict(md.X) == y_h))
        vote = float(np.mean(majority_vote(bank, X_te) == y_te))
    return TrainResult(model, report, hold_acc, test_acc, ens_hold, vote, kfold, nested, search, balance, curves,
                       test_hashes, timings)


def load_features(cfg: RunConfig) -> FeatureTable:
    if not cfg.manifest:
        raise DataError("no manifest configured ([paths] manifest)")
    timings: dict = {}
    with _stage("load", timings):
        d = load_dataset(cfg.path(cfg.manifest), cfg.sample_rate, cfg.window_seconds, cfg.pad_short)
        if len(d) == 0:
            raise DataError("manifest yielded no full-length segments")
    with _stage("extract", timings):
        return extract_features(d, cfg)


def _curve_tsv(curve) -> str:
    rows = ["epoch\ttrain_accuracy\tval_accuracy\tloss"]
    for i, (a, v, l) in enumerate(zip(curve.train_accuracy, curve.val_accuracy, curve.loss), 1):
        rows.append(f"{i}\t{a:.6f}\t{v:.6f}\t{l:.6f}")
    return "\n".join(rows) + "\n"


def summary_text(res: TrainResult) -> str:
    lines = [str(res.test_report), "", "Base learners (holdout / test accuracy)"]
    for t in CANONICAL_TAGS:
        lines.append(f"  {t:<15} {res.holdout_accuracy[t]:.3f}  {res.test_accuracy[t]:.3f}")
    lines += [f"Majority vote baseline (test): {res.vote_test_accuracy:.3f}",
              f"Meta learner: C = {res.meta_search.best[0]:g}, gamma = {res.meta_search.best[1]:g}, "
              f"LOOCV accuracy {res.meta_search.best_score:.3f} ({res.meta_search.n_fits} fits)",
              str(res.balance)]
    return "\n".join(lines) + "\n"


def write_outputs(res: TrainResult, cfg: RunConfig, out_dir) -> dict:
    """Write bundle and reports under ``out_dir``; returns the written paths."""
    out = Path(out_dir)
    (out / "curves").mkdir(parents=True, exist_ok=True)
    paths = {"bundle": out / "model.afe"}
    digest = save_bundle(paths["bundle"], res.model)
    texts = {
        "report": ("report.txt", summary_text(res)),
        "kfold": ("ledger_kfold.txt", res.kfold_ledger.report() + "\n"),
        "nested": ("ledger_nested.txt", res.nested_ledger.report() + "\n"),
        "selection": ("selection.tsv", res.model.prep.mask.report(feature_names(cfg.frame)) + "\n"),
    }
    for key, (name, text) in texts.items():
        paths[key] = out / name
        paths[key].write_text(text, encoding="utf-8")
    for tag, curve in res.curves.items():
        (out / "curves" / f"{tag}.tsv").write_text(_curve_tsv(curve), encoding="utf-8")
    machine = {
        "bundle_sha256": digest,
        "seed": cfg.seed,
        "evaluation": res.test_report.to_dict(),
        "base_holdout_accuracy": res.holdout_accuracy,
        "base_test_accuracy": res.test_accuracy,
        "ensemble_holdout_accuracy": res.ensemble_holdout_accuracy,
        "majority_vote_test_accuracy": res.vote_test_accuracy,
        "meta_search": res.meta_search.to_dict(),
        "balance": res.balance.to_dict(),
        "kfold": res.kfold_ledger.to_dict(),
        "nested": res.nested_ledger.to_dict(),
    }
    paths["json"] = out / "report.json"
    paths["json"].write_bytes(dumps_payload(machine))
    return {k: str(v) for k, v in paths.items()} | {"bundle_sha256": digest}


def evaluate_manifest(model: EnsembleModel, manifest, pad_short: bool = False) -> EvaluationReport:
    d = load_dataset(manifest, model.prep.sample_rate, model.prep.window_seconds, pad_short)
    if len(d) == 0:
        raise DataError(f"{manifest} yielded no segments to evaluate")
    pred = model.predict_samples([s.samples for s in d.segments])
    return EvaluationReport.from_predictions(d.labels, pred, Path(manifest).name)


def label_counts(pred) -> dict:
    pred = np.asarray(pred)
    return {e.tag: int(np.sum(pred == e)) for e in Emotion}


def json_dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True)
