"""End-to-end orchestration: extraction, dictionary training, evaluation, ablation."""

from __future__ import annotations

import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import store as dstore
from .classify import (
    ClipLabelVector,
    EvalReport,
    ablation_table,
    evaluate,
    majority_vote,
    nn_classify_clip,
    reports_to_jsonl,
)
from .config import PipelineConfig, dump_config, parse_mask
from .covariance import CovarianceDescriptor, clip_windows, covariance_integral, default_reg
from .dataset import DatasetManifest, VideoRecord, assert_disjoint, group_split
from .features import FeatureSetMask, assemble_stack, compute_flows, depth_mask
from .io import atomic_open, read_frames
from .omp import batch_omp, build_dictionary
from .spd import LogDescriptor, matrix_log, vectorize
from .tsc import build_tensor_dictionary, tsc_classify_clip

log = logging.getLogger(__name__)

COV_FILE = "covariances.tsv"
LOG_FILE = "logdescriptors.tsv"
EXEMPLAR_FILE = "exemplars.tsv"
SUMMARY_FILE = "summary.txt"
PRED_HEADER = "# covact-predictions v1"


# ---------------------------------------------------------------- extraction


def ridge(raw: np.ndarray, cfg: PipelineConfig) -> float:
    c = cfg.covariance
    return c.reg_eps if c.reg_eps > 0 else default_reg(raw, c.reg_scale, c.reg_floor)


def extract_video(rec: VideoRecord, cfg: PipelineConfig, mask: FeatureSetMask | None = None) -> list[CovarianceDescriptor]:
    """Raw clip covariances of one video, each carrying the ridge it needs."""
    mask = mask or cfg.feature_mask()
    frames = read_frames(rec.frames)
    if frames.ndim == 3 and mask.include_intensity:
        raise ValueError(f"{rec.video_id}: colour features requested for a grayscale video")
    if frames.shape[0] < 2:
        log.warning("skipping %s: fewer than 2 frames", rec.video_id)
        return []
    validity = None
    if rec.depth is not None and cfg.pipeline.depth_threshold > 0:
        depth = read_frames(rec.depth)
        if depth.shape[0] != frames.shape[0]:
            raise ValueError(f"{rec.video_id}: depth and colour frame counts differ")
        validity = depth_mask(depth, cfg.pipeline.depth_threshold, frames.shape[1:3])
    flows = compute_flows(frames, cfg.flow_params()) if mask.needs_motion else None
    out = []
    for clip_id, (start, stop) in enumerate(clip_windows(frames.shape[0], cfg.pipeline.clip_length)):
        stack = assemble_stack(frames, flows, mask, validity, start, stop)
        if stack.n < 2:
            log.warning("skipping %s clip %d: fewer than 2 valid pixels", rec.video_id, clip_id)
            continue
        cov = covariance_integral(stack)
        out.append(
            CovarianceDescriptor(cov.matrix, cov.n, rec.label, rec.video_id, clip_id, rec.group, ridge(cov.matrix, cfg))
        )
    return out


def to_log(desc: CovarianceDescriptor, weighted: bool = True) -> LogDescriptor:
    v = vectorize(matrix_log(dstore.regularized(desc)), weighted)
    return LogDescriptor(v, desc.label, desc.video_id, desc.clip_id, desc.group)


def _extract_one(args):
    rec, cfg = args
    return extract_video(rec, cfg)


def _pmap(fn, items: Sequence, jobs: int) -> list:
    if jobs > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            return list(ex.map(fn, items))
    return [fn(it) for it in items]


def extract(manifest: DatasetManifest, cfg: PipelineConfig, out_dir: str | os.PathLike | None = None, records: Iterable[VideoRecord] | None = None):
    """Covariance and log descriptors for every clip; written to ``out_dir`` when given."""
    recs = list(records if records is not None else manifest.records)
    mask = cfg.feature_mask()
    per_video = _pmap(_extract_one, [(r, cfg) for r in recs], cfg.pipeline.jobs)
    covs = [c for vid in per_video for c in vid]
    logs = [to_log(c, cfg.covariance.weighted) for c in covs]
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        dstore.write_store(out / COV_FILE, "covariance", covs, mask.names)
        dstore.write_store(out / LOG_FILE, "log", logs, mask.names, cfg.covariance.weighted)
        with atomic_open(out / "config.ini") as fh:
            fh.write(dump_config(cfg))
    return covs, logs


def load_store(store_dir: str | os.PathLike):
    store_dir = Path(store_dir)
    cov = dstore.read_store(store_dir / COV_FILE)
    logs = dstore.read_store(store_dir / LOG_FILE)
    if cov.kind != "covariance" or logs.kind != "log":
        raise dstore.StoreFormatError(f"{store_dir}: store files have the wrong kinds")
    if len(cov.records) != len(logs.records):
        raise dstore.StoreFormatError(f"{store_dir}: covariance and log files disagree in length")
    return cov, logs


# ---------------------------------------------------------------- splits and training


@dataclass(frozen=True)
class _Video:
    video_id: str
    label: str
    group: str


def videos_of(descs: Sequence) -> list[_Video]:
    seen = {}
    for d in descs:
        seen.setdefault(d.video_id, _Video(d.video_id, d.label, d.group))
    return list(seen.values())


def split_videos(descs: Sequence, cfg: PipelineConfig) -> tuple[list[_Video], list[_Video]]:
    groups = [g.strip() for g in cfg.split.test_groups.split(",") if g.strip()]
    return group_split(videos_of(descs), groups, cfg.split.test_fraction, cfg.pipeline.seed)


def pick_exemplars(train: Sequence[_Video], cfg: PipelineConfig) -> list[str]:
    """``split.one_shot`` training videos per class, drawn with the config seed."""
    rng = np.random.default_rng(cfg.pipeline.seed + 1)
    by_class: dict[str, list[str]] = {}
    for v in train:
        by_class.setdefault(v.label, []).append(v.video_id)
    chosen = []
    for label in sorted(by_class):
        ids = sorted(by_class[label])
        k = min(cfg.split.one_shot, len(ids))
        chosen += sorted(rng.choice(ids, size=k, replace=False).tolist())
    return chosen


@dataclass
class TrainedModel:
    covs: list[CovarianceDescriptor]
    logs: list[LogDescriptor]
    exemplars: list[LogDescriptor]
    features: tuple[str, ...]
    weighted: bool = True

    @property
    def groups(self) -> set[str]:
        return {c.group for c in self.covs}

    def histogram(self) -> dict[str, int]:
        h: dict[str, int] = {}
        for c in self.covs:
            h[c.label] = h.get(c.label, 0) + 1
        return dict(sorted(h.items()))


def train(covs: Sequence[CovarianceDescriptor], logs: Sequence[LogDescriptor], cfg: PipelineConfig, features=()) -> tuple[TrainedModel, list[_Video]]:
    """Training-split atoms plus the one-shot exemplars; returns the model and held-out videos."""
    train_v, test_v = split_videos(covs, cfg)
    if not train_v:
        raise ValueError("training split is empty")
    ids = {v.video_id for v in train_v}
    tc = [c for c in covs if c.video_id in ids]
    tl = [l for l in logs if l.video_id in ids]
    ds = {c.d for c in tc}
    if len(ds) != 1:
        raise ValueError(f"training descriptors have mixed dimensions {sorted(ds)}")
    ex_ids = set(pick_exemplars(train_v, cfg))
    ex = [l for l in tl if l.video_id in ex_ids]
    return TrainedModel(tc, tl, ex, tuple(features), cfg.covariance.weighted), test_v


def save_model(model: TrainedModel, out_dir: str | os.PathLike) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    dstore.write_store(out / COV_FILE, "covariance", model.covs, model.features)
    dstore.write_store(out / LOG_FILE, "log", model.logs, model.features, model.weighted)
    dstore.write_store(out / EXEMPLAR_FILE, "log", model.exemplars, model.features, model.weighted)
    lines = [f"atoms {len(model.covs)}", f"groups {','.join(sorted(model.groups))}"]
    lines += [f"class {k} {v}" for k, v in model.histogram().items()]
    lines.append(f"exemplar_videos {','.join(sorted({e.video_id for e in model.exemplars}))}")
    with atomic_open(out / SUMMARY_FILE) as fh:
        fh.write("\n".join(lines) + "\n")


def load_model(model_dir: str | os.PathLike) -> TrainedModel:
    model_dir = Path(model_dir)
    cov = dstore.read_store(model_dir / COV_FILE)
    logs = dstore.read_store(model_dir / LOG_FILE)
    ex = dstore.read_store(model_dir / EXEMPLAR_FILE)
    if not cov.records:
        raise dstore.StoreFormatError(f"{model_dir}: dictionary has no atoms")
    return TrainedModel(cov.records, logs.records, ex.records, cov.features, logs.weighted)


# ---------------------------------------------------------------- classification


@dataclass
class Prediction:
    method: str
    video_id: str
    truth: str
    predicted: str
    clips: ClipLabelVector


class Classifier:
    """Clip- and video-level prediction for one trained model."""

    def __init__(self, model: TrainedModel, cfg: PipelineConfig):
        self.cfg = cfg
        self.model = model
        self._vec = None
        self._ten = None

    @property
    def vector_dictionary(self):
        if self._vec is None:
            self._vec = build_dictionary(self.model.logs)
        return self._vec

    @property
    def tensor_dictionary(self):
        if self._ten is None:
            self._ten = build_tensor_dictionary(
                np.stack([dstore.regularized(c) for c in self.model.covs]), [c.label for c in self.model.covs]
            )
        return self._ten

    def clips(self, method: str, covs: Sequence[CovarianceDescriptor], logs: Sequence[LogDescriptor]) -> ClipLabelVector:
        if method == "omp":
            dic = self.vector_dictionary
            if logs[0].v.shape[0] != dic.dim:
                raise ValueError(f"query length {logs[0].v.shape[0]} does not match dictionary {dic.dim}")
            P = min(self.cfg.omp.sparsity, dic.size)
            codes = batch_omp(dic, np.stack([l.v for l in logs]), P, self.cfg.omp.tolerance)
            labels, scores = [], []
            for code in codes:
                res = code.per_class_residual
                lab = min(res, key=lambda c: (res[c], str(c)))
                labels.append(lab)
                scores.append(res[lab])
            return ClipLabelVector(labels, scores)
        if method == "tsc":
            dic = self.tensor_dictionary
            labels, scores = [], []
            for c in covs:
                if c.d != dic.d:
                    raise ValueError(f"query d={c.d} does not match dictionary d={dic.d}")
                lab, sc, _ = tsc_classify_clip(dstore.regularized(c), dic, self.cfg.tsc.delta, self.cfg.solver_options())
                labels.append(lab)
                scores.append(sc[lab])
            return ClipLabelVector(labels, scores)
        if method == "nn":
            labels, scores = [], []
            for l in logs:
                lab, dist = nn_classify_clip(l, self.model.exemplars)
                labels.append(lab)
                scores.append(dist)
            return ClipLabelVector(labels, scores)
        raise ValueError(f"unknown method {method!r}")

    def predict(self, method: str, covs, logs) -> Prediction:
        clips = self.clips(method, covs, logs)
        return Prediction(method, covs[0].video_id, covs[0].label, majority_vote(clips), clips)


def _group_by_video(covs, logs):
    order: dict[str, tuple[list, list]] = {}
    for c, l in zip(covs, logs):
        if (c.video_id, c.clip_id) != (l.video_id, l.clip_id):
            raise ValueError("covariance and log records are not aligned")
        order.setdefault(c.video_id, ([], []))
        order[c.video_id][0].append(c)
        order[c.video_id][1].append(l)
    return order


def _predict_task(args):
    clf, method, covs, logs = args
    return clf.predict(method, covs, logs)


def evaluate_model(
    model: TrainedModel,
    covs: Sequence[CovarianceDescriptor],
    logs: Sequence[LogDescriptor],
    test_ids: Sequence[str],
    cfg: PipelineConfig,
    classes: Sequence[str] | None = None,
    methods: Sequence[str] | None = None,
    features: str = "",
) -> tuple[list[EvalReport], list[Prediction]]:
    """Video-level reports, one per method, over the videos in ``test_ids``."""
    if not test_ids:
        raise ValueError("test split is empty")
    by_vid = _group_by_video(covs, logs)
    missing = [v for v in test_ids if v not in by_vid]
    if missing:
        raise ValueError(f"no descriptors for test videos {missing[:5]}")
    test_groups = {by_vid[v][0][0].group for v in test_ids}
    overlap = test_groups & model.groups
    if overlap:
        raise ValueError(f"groups {sorted(overlap)} appear in both train and test")
    classes = list(classes) if classes is not None else sorted({c.label for c in model.covs} | {by_vid[v][0][0].label for v in test_ids})
    methods = list(methods) if methods is not None else cfg.method_list
    clf = Classifier(model, cfg)
    reports, preds = [], []
    for method in methods:
        tasks = [(clf, method, *by_vid[v]) for v in test_ids]
        got = _pmap(_predict_task, tasks, cfg.pipeline.jobs)
        preds += got
        reports.append(
            evaluate(
                [p.predicted for p in got],
                [p.truth for p in got],
                classes,
                method=method,
                features=features or cfg.pipeline.features,
                split=f"seed{cfg.pipeline.seed}",
            )
        )
    return reports, preds


def predictions_text(preds: Sequence[Prediction]) -> str:
    lines = [PRED_HEADER, "method\tvideo_id\ttruth\tpredicted\tclip_labels\tclip_scores"]
    for p in preds:
        lines.append(
            "\t".join(
                [
                    p.method,
                    p.video_id,
                    p.truth,
                    p.predicted,
                    ",".join(map(str, p.clips.labels)),
                    ",".join(repr(float(s)) for s in p.clips.scores),
                ]
            )
        )
    return "\n".join(lines) + "\n"


def write_reports(reports: Sequence[EvalReport], preds: Sequence[Prediction], out_dir: str | os.PathLike) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with atomic_open(out / "report.jsonl") as fh:
        fh.write(reports_to_jsonl(reports))
    with atomic_open(out / "report.txt") as fh:
        fh.write("\n\n".join(r.table() for r in reports) + "\n")
    for r in reports:
        name = f"confusion_{r.method}" + (f"_{r.features}" if r.features else "") + ".csv"
        with atomic_open(out / name) as fh:
            fh.write(r.confusion_csv())
    if preds:
        with atomic_open(out / "predictions.tsv") as fh:
            fh.write(predictions_text(preds))


# ---------------------------------------------------------------- ablation


def union_mask(masks: Sequence[FeatureSetMask]) -> FeatureSetMask:
    taus = {m.tau2 for m in masks}
    if len(taus) != 1:
        raise ValueError("masks disagree on the tau2 convention")
    terms = tuple(sorted({t for m in masks if m.include_kinematic for t in m.kinematic_terms}))
    return FeatureSetMask(
        include_intensity=any(m.include_intensity for m in masks),
        include_gradients=any(m.include_gradients for m in masks),
        include_basic_motion=any(m.include_basic_motion for m in masks),
        include_kinematic=any(m.include_kinematic for m in masks),
        include_position=any(m.include_position for m in masks),
        kinematic_terms=terms or (),
        tau2=taus.pop(),
    )


def restrict(covs: Sequence[CovarianceDescriptor], names: Sequence[str], keep: Sequence[str], cfg: PipelineConfig) -> list[CovarianceDescriptor]:
    """Principal sub-covariances for the features in ``keep``, with fresh ridges."""
    pos = {n: i for i, n in enumerate(names)}
    missing = [k for k in keep if k not in pos]
    if missing:
        raise ValueError(f"store lacks features {missing}")
    idx = np.array([pos[k] for k in keep])
    out = []
    for c in covs:
        sub = c.matrix[np.ix_(idx, idx)]
        out.append(replace(c, matrix=sub, reg=ridge(sub, cfg)))
    return out


def run_ablation(
    covs: Sequence[CovarianceDescriptor],
    names: Sequence[str],
    mask_specs: Sequence[str],
    methods: Sequence[str],
    cfg: PipelineConfig,
    classes: Sequence[str] | None = None,
) -> list[EvalReport]:
    """One report per (feature set, method) cell from a store holding the union of features.

    Covariances of a feature subset are principal submatrices of the union
    covariance, so extraction runs once.
    """
    reports = []
    for spec in mask_specs:
        mask = parse_mask(spec, cfg.pipeline.kinematic_terms, cfg.pipeline.tau2)
        sub = restrict(covs, names, mask.names, cfg)
        sub_logs = [to_log(c, cfg.covariance.weighted) for c in sub]
        model, test_v = train(sub, sub_logs, cfg, mask.names)
        reps, _ = evaluate_model(
            model, sub, sub_logs, [v.video_id for v in test_v], cfg, classes, methods, features=spec
        )
        reports += reps
    return reports


def write_ablation(reports: Sequence[EvalReport], out_dir: str | os.PathLike) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with atomic_open(out / "ablation.jsonl") as fh:
        fh.write(reports_to_jsonl(reports))
    with atomic_open(out / "ablation.txt") as fh:
        fh.write(ablation_table(reports) + "\n")


def check_split(model: TrainedModel, test: Sequence) -> None:
    assert_disjoint(videos_of(model.covs), test)
