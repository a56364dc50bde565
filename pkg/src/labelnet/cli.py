"""Batch CLI tying the pipeline together.

Subcommands: ingest, train, calibrate, evaluate, attribute, ablate.
Each command reads a flat key=value config, writes its artifacts into a
run directory, snapshots the resolved config there, and records every
produced file in a manifest with content hashes. Exit codes: 0 success,
2 input error, 3 missing prerequisite, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import calibration as cal
from . import metrics as met
from .baseline import fit_baseline, load_baseline, predict_baseline, save_baseline
from .corpus import (
    Corpus,
    CorpusError,
    LabelVocabulary,
    Record,
    SplitAssignment,
    clean,
    corpus_stats,
    load_csv,
    stratified_split,
    training_counts,
)
from .encoder import (
    EncoderError,
    encode_chunk_reference,
    featurize,
    load_precomputed,
    make_chunks,
    pool_chunks,
    tokenize,
    write_embeddings,
)
from .labelgraph import ChapterMap, GraphError, build_label_graph, export_edge_list
from .network import (
    NetworkError,
    init_params,
    read_container,
    sigmoid,
    write_container,
)
from .network import ModelParams
from .objective import FocalConfig, class_weights
from .trainer import (
    ABLATION_VARIANTS,
    PrecomputedSource,
    ReferenceSource,
    TrainConfig,
    TrainError,
    TrainTask,
    apply_ablation,
    predict_logits,
    train,
)

MODES = ("B1", "B6", "B8", "A1", "A2", "A4", "A5")

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_MISSING = 3
EXIT_NUMERIC = 4


class ConfigError(ValueError):
    pass


class MissingArtifact(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

DEFAULTS: dict[str, object] = {
    "data.csv": "",
    "data.chapter_map": "",
    "split.train": 0.70,
    "split.val": 0.15,
    "split.test": 0.15,
    "encoder.mode": "reference",        # reference | precomputed
    "encoder.embeddings": "",
    "encoder.dim": 768,
    "encoder.buckets": 262144,
    "encoder.window": 512,
    "encoder.stride": 128,
    "encoder.max_chunks": 4,
    "encoder.stride_mode": "step",      # step | overlap
    "graph.tau": 0.30,
    "graph.bonus": 0.20,
    "graph.per_label_cap": 30,
    "model.d1": 512,
    "model.d2": 256,
    "model.dropout": 0.3,
    "loss.gamma": 2.0,
    "loss.weight_clip_low": 0.1,
    "loss.weight_clip_high": 10.0,
    "train.lr_encoder": 2e-5,
    "train.lr_head": 1e-3,
    "train.weight_decay": 0.01,
    "train.warmup_fraction": 0.10,
    "train.clip_norm": 1.0,
    "train.batch_size": 16,
    "train.accumulation_steps": 2,
    "train.max_epochs": 30,
    "train.patience": 5,
    "metrics.ece_bins": 10,
    "attribute.steps": 50,
    "attribute.docs": 3,
    "attribute.label": "pred",
    "baseline.max_features": 50000,
    "baseline.l2": 1e-4,
    "baseline.max_iters": 500,
    "run.seed": 42,
    "run.mode": "B6",
}


class RunConfig:
    """Flat sectioned key=value configuration; unknown keys are rejected."""

    def __init__(self, values: dict[str, object] | None = None):
        self.values = dict(DEFAULTS)
        if values:
            for key, val in values.items():
                self.set(key, val)

    def set(self, key: str, raw) -> None:
        if key not in DEFAULTS:
            raise ConfigError(f"unknown config key {key!r}")
        default = DEFAULTS[key]
        if isinstance(raw, str) and not isinstance(default, str):
            text = raw.strip()
            try:
                if isinstance(default, bool):
                    raw = text.lower() in ("1", "true", "yes")
                elif isinstance(default, int):
                    raw = int(text)
                elif isinstance(default, float):
                    raw = float(text)
            except ValueError:
                raise ConfigError(f"config key {key}: cannot parse {text!r}") from None
        self.values[key] = raw

    def __getitem__(self, key: str):
        if key not in DEFAULTS:
            raise ConfigError(f"unknown config key {key!r}")
        return self.values[key]

    @classmethod
    def load(cls, path) -> "RunConfig":
        cfg = cls()
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                if "=" not in line:
                    raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
                key, val = line.split("=", 1)
                cfg.set(key.strip(), val.strip())
        return cfg

    def render(self) -> str:
        lines = []
        for key in sorted(self.values):
            val = self.values[key]
            if isinstance(val, float):
                lines.append(f"{key}={val!r}")
            else:
                lines.append(f"{key}={val}")
        return "\n".join(lines) + "\n"

    def fractions(self) -> tuple[float, float, float]:
        return (self["split.train"], self["split.val"], self["split.test"])

    def window_step(self) -> int:
        if self["encoder.stride_mode"] == "overlap":
            return max(self["encoder.window"] - self["encoder.stride"], 1)
        return self["encoder.stride"]

    def train_config(self) -> TrainConfig:
        cfg = TrainConfig(
            lr_encoder=self["train.lr_encoder"],
            lr_head=self["train.lr_head"],
            weight_decay=self["train.weight_decay"],
            warmup_fraction=self["train.warmup_fraction"],
            clip_norm=self["train.clip_norm"],
            batch_size=self["train.batch_size"],
            accumulation_steps=self["train.accumulation_steps"],
            max_epochs=self["train.max_epochs"],
            patience=self["train.patience"],
            seed=self["run.seed"],
        )
        mode = self["run.mode"]
        if mode in ABLATION_VARIANTS:
            cfg = apply_ablation(mode, cfg)
        return cfg


# ---------------------------------------------------------------------------
# run directory and manifest
# ---------------------------------------------------------------------------

def _canonical_bytes(path: Path) -> tuple[bytes, str]:
    """File bytes for hashing; the training log is canonicalized by masking
    the wall-clock seconds column, which is the one nondeterministic field."""
    raw = path.read_bytes()
    if path.name == "train_log.csv":
        lines = raw.decode("utf-8").splitlines()
        stripped = [ln.rsplit(",", 1)[0] for ln in lines]
        return ("\n".join(stripped) + "\n").encode("utf-8"), "sha256:nosec"
    return raw, "sha256"


class RunDir:
    MANIFEST = "manifest.txt"

    def __init__(self, root):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def path(self, name: str) -> Path:
        return self.root / name

    def exists(self, name: str) -> bool:
        return self.path(name).is_file()

    def require(self, name: str, hint: str) -> Path:
        p = self.path(name)
        if not p.is_file():
            raise MissingArtifact(f"missing artifact {name!r}: run `{hint}` first")
        return p

    def write_text(self, name: str, text: str) -> Path:
        p = self.path(name)
        p.write_text(text, encoding="utf-8")
        self._record(p)
        return p

    def register(self, name: str) -> None:
        """Record a file written through another writer (binary formats)."""
        self._record(self.path(name))

    def _record(self, p: Path) -> None:
        blob, algo = _canonical_bytes(p)
        digest = hashlib.sha256(blob).hexdigest()
        entries = self.manifest_entries()
        entries[p.name] = (algo, digest)
        lines = [f"{name},{algo},{digest}" for name, (algo, digest) in sorted(entries.items())]
        (self.root / self.MANIFEST).write_text("\n".join(lines) + "\n", encoding="utf-8")

    def manifest_entries(self) -> dict[str, tuple[str, str]]:
        out: dict[str, tuple[str, str]] = {}
        mp = self.root / self.MANIFEST
        if mp.is_file():
            for line in mp.read_text(encoding="utf-8").splitlines():
                if line.strip():
                    name, algo, digest = line.split(",")
                    out[name] = (algo, digest)
        return out


def _snapshot_config(run: RunDir, config: RunConfig) -> None:
    run.write_text("config.txt", config.render())


# ---------------------------------------------------------------------------
# corpus store
# ---------------------------------------------------------------------------

def write_corpus_store(run: RunDir, corpus: Corpus, split: SplitAssignment) -> None:
    rows = []
    for rec in corpus.records:
        rows.append(json.dumps({
            "id": rec.id,
            "description": rec.description,
            "specialty": rec.specialty,
            "transcription": rec.transcription,
            "keywords": rec.keywords,
        }, sort_keys=True, ensure_ascii=False))
    run.write_text("corpus.jsonl", "\n".join(rows) + "\n")
    counts = training_counts(corpus, split)
    run.write_text("labels.json", json.dumps({
        "names": corpus.vocabulary.names,
        "train_counts": counts.tolist(),
    }, sort_keys=True, ensure_ascii=False) + "\n")
    lines = [f"{rid},{split.split[rid]}" for rid in sorted(split.split)]
    run.write_text("split.txt", "\n".join(lines) + "\n")


def load_corpus_store(run: RunDir, config: RunConfig) -> tuple[Corpus, SplitAssignment]:
    cp = run.require("corpus.jsonl", "labelnet ingest")
    lp = run.require("labels.json", "labelnet ingest")
    sp = run.require("split.txt", "labelnet ingest")
    labels = json.loads(lp.read_text(encoding="utf-8"))
    records = []
    for line in cp.read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        row = json.loads(line)
        records.append(Record(
            id=row["id"], description=row["description"], specialty=row["specialty"],
            transcription=row["transcription"], keywords=row["keywords"],
        ))
    vocab = LabelVocabulary(names=labels["names"], counts=labels["train_counts"])
    corpus = Corpus(records=records, vocabulary=vocab)
    assignment = {}
    for line in sp.read_text(encoding="utf-8").splitlines():
        if line.strip():
            rid, name = line.split(",")
            assignment[int(rid)] = name
    split = SplitAssignment(split=assignment, fractions=config.fractions(), seed=config["run.seed"])
    return corpus, split


def _chapter_map(config: RunConfig) -> ChapterMap:
    path = config["data.chapter_map"]
    if not path:
        path = Path(__file__).parent / "data" / "chapters_default.csv"
    return ChapterMap.load(path)


# ---------------------------------------------------------------------------
# encoding plumbing
# ---------------------------------------------------------------------------

class EncodingSpec:
    def __init__(self, config: RunConfig):
        self.window = config["encoder.window"]
        self.step = config.window_step()
        self.max_chunks = 1 if config["run.mode"] == "A4" else config["encoder.max_chunks"]
        self.buckets = config["encoder.buckets"]
        self.dim = config["encoder.dim"]
        self.mode = config["encoder.mode"]


def _featurize_corpus(corpus: Corpus, spec: EncodingSpec, ids=None) -> dict[int, list]:
    wanted = set(corpus.records[i].id for i in range(len(corpus.records))) if ids is None else set(ids)
    cache = {}
    for rec in corpus.records:
        if rec.id not in wanted:
            continue
        seq = tokenize(rec.transcription)
        chunks = make_chunks(seq, spec.window, spec.step, spec.max_chunks)
        cache[rec.id] = featurize(seq, chunks, spec.buckets)
    return cache


def _initial_embeddings(cache: dict[int, list], projection: np.ndarray) -> dict[int, np.ndarray]:
    return {
        rid: pool_chunks([encode_chunk_reference(f, projection) for f in feats])
        for rid, feats in cache.items()
    }


def _build_source_and_graph(
    corpus: Corpus,
    split: SplitAssignment,
    config: RunConfig,
    spec: EncodingSpec,
    params: ModelParams,
):
    """Embedding source for training plus the frozen label graph."""
    seed = config["run.seed"]
    if spec.mode == "precomputed":
        path = config["encoder.embeddings"]
        if not path or not Path(path).is_file():
            raise MissingArtifact("encoder.embeddings file not found (precomputed mode)")
        vectors = load_precomputed(path)
        dims = {v.size for v in vectors.values()}
        if dims and dims != {spec.dim}:
            raise ConfigError(
                f"embedding file dimension {sorted(dims)} != encoder.dim {spec.dim}"
            )
        missing = [rec.id for rec in corpus.records if rec.id not in vectors]
        if missing:
            raise EncoderError(f"embedding file lacks {len(missing)} records (first: {missing[0]})")
        source = PrecomputedSource(vectors)
        graph_embeddings = source.vectors
    else:
        cache = _featurize_corpus(corpus, spec)
        source = ReferenceSource(cache)
        train_ids = [rid for rid, s in split.split.items() if s == "train"]
        graph_embeddings = _initial_embeddings(
            {rid: cache[rid] for rid in train_ids}, params.proj_enc
        )
    graph = build_label_graph(
        corpus, split, graph_embeddings, _chapter_map(config),
        tau=config["graph.tau"], bonus=config["graph.bonus"],
        per_label_cap=config["graph.per_label_cap"], seed=seed,
    )
    return source, graph


def _source_for_eval(corpus: Corpus, meta: dict):
    """Reconstruct the embedding source for a saved checkpoint from the
    encoder settings recorded at training time."""
    saved = RunConfig(meta.get("config", {}))
    spec = EncodingSpec(saved)
    if spec.mode == "precomputed":
        vectors = load_precomputed(saved["encoder.embeddings"])
        return PrecomputedSource(vectors), spec
    cache = _featurize_corpus(corpus, spec)
    return ReferenceSource(cache), spec


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_ingest(config: RunConfig, run: RunDir) -> None:
    csv_path = config["data.csv"]
    if not csv_path:
        raise ConfigError("data.csv is required for ingest")
    raw = load_csv(csv_path)
    corpus = clean(raw)
    split = stratified_split(corpus, config.fractions(), config["run.seed"])
    stats = corpus_stats(corpus, split, window=config["encoder.window"])
    write_corpus_store(run, corpus, split)
    run.write_text("stats.txt", stats.render())
    _snapshot_config(run, config)
    print(f"ingest: {len(corpus)} records, {corpus.vocabulary.size} labels, "
          f"split {stats.split_totals[0]}/{stats.split_totals[1]}/{stats.split_totals[2]}")


def _train_network(config: RunConfig, run: RunDir) -> None:
    corpus, split = load_corpus_store(run, config)
    spec = EncodingSpec(config)
    seed = config["run.seed"]
    rng = np.random.default_rng(seed)
    k = corpus.vocabulary.size
    params = init_params(
        d_enc=spec.dim, d1=config["model.d1"], d2=config["model.d2"],
        n_labels=k, rng=rng, dropout=config["model.dropout"],
        with_encoder=(spec.mode == "reference"), n_buckets=spec.buckets,
    )
    source, graph = _build_source_and_graph(corpus, split, config, spec, params)

    counts = training_counts(corpus, split)
    tcfg = config.train_config()
    if tcfg.plain_bce:
        focal = FocalConfig(gamma=0.0, weights=None)
    else:
        focal = FocalConfig(
            gamma=config["loss.gamma"],
            weights=class_weights(
                counts, (config["loss.weight_clip_low"], config["loss.weight_clip_high"])
            ),
        )
    targets = {rec.id: rec.specialty for rec in corpus.records}
    task = TrainTask(
        a_hat=graph.normalized, h0=graph.node_features, source=source,
        train_ids=split.ids("train"), val_ids=split.ids("val"),
        targets=targets, n_labels=k, focal=focal,
    )
    result = train(task, params, tcfg)

    meta_config = {key: config.values[key] for key in sorted(config.values)}
    tensors = {name: t for name, t, _ in result.params.blocks()}
    tensors["graph_a_hat"] = graph.normalized
    tensors["graph_h0"] = graph.node_features
    meta = {
        "type": "network",
        "labels": corpus.vocabulary.names,
        "graph_hash": graph.content_hash(),
        "config": meta_config,
        "dropout": result.params.dropout,
        "best_epoch": result.best_epoch,
        "best_val_macro_f1": result.best_val_f1,
    }
    write_container(run.path("checkpoint.ckpt"), meta, tensors)
    run.register("checkpoint.ckpt")

    export_edge_list(graph, corpus.vocabulary.names, run.path("graph_edges.txt"))
    run.register("graph_edges.txt")
    write_embeddings(
        run.path("graph_norm.lgemb"),
        {i: graph.normalized[i] for i in range(k)},
    )
    run.register("graph_norm.lgemb")

    val_ids = split.ids("val")
    val_logits = predict_logits(
        result.params, source, val_ids,
        a_hat=graph.normalized, h0=graph.node_features, no_gcn=tcfg.no_gcn,
    )
    write_embeddings(run.path("val_logits.lgemb"), {rid: val_logits[i] for i, rid in enumerate(val_ids)})
    run.register("val_logits.lgemb")

    log_lines = ["epoch,train_loss,val_macro_f1,lr_encoder,lr_head,seconds"]
    for row in result.log:
        log_lines.append(
            f"{row.epoch},{row.train_loss!r},{row.val_macro_f1!r},"
            f"{row.lr_encoder!r},{row.lr_head!r},{row.seconds:.3f}"
        )
    run.write_text("train_log.csv", "\n".join(log_lines) + "\n")
    print(f"train: best val macro-F1 {result.best_val_f1:.4f} at epoch {result.best_epoch}")


def _train_baseline(config: RunConfig, run: RunDir) -> None:
    corpus, split = load_corpus_store(run, config)
    train_ids = set(split.ids("train"))
    docs = [rec.transcription for rec in corpus.records if rec.id in train_ids]
    labels = np.array([rec.specialty for rec in corpus.records if rec.id in train_ids])
    model = fit_baseline(
        docs, labels, corpus.vocabulary.names,
        max_features=config["baseline.max_features"],
        l2=config["baseline.l2"], max_iters=config["baseline.max_iters"],
    )
    save_baseline(run.path("checkpoint.ckpt"), model, {k: config.values[k] for k in sorted(config.values)})
    run.register("checkpoint.ckpt")

    val_ids = split.ids("val")
    id_to_rec = {rec.id: rec for rec in corpus.records}
    probs = np.clip(
        predict_baseline(model, [id_to_rec[rid].transcription for rid in val_ids]),
        1e-12, 1.0 - 1e-12,
    )
    margins = np.log(probs) - np.log1p(-probs)
    write_embeddings(run.path("val_logits.lgemb"), {rid: margins[i] for i, rid in enumerate(val_ids)})
    run.register("val_logits.lgemb")
    print(f"train: baseline fitted on {len(docs)} docs, {len(model.tfidf.vocabulary)} features")


def cmd_train(config: RunConfig, run: RunDir) -> None:
    _snapshot_config(run, config)
    if config["run.mode"] == "B1":
        _train_baseline(config, run)
    else:
        _train_network(config, run)


def cmd_calibrate(config: RunConfig, run: RunDir) -> None:
    run.require("checkpoint.ckpt", "labelnet train")
    logits_path = run.require("val_logits.lgemb", "labelnet train")
    corpus, split = load_corpus_store(run, config)
    val_ids = split.ids("val")
    if not val_ids:
        raise ConfigError("validation split is empty; calibration needs validation data")
    vectors = load_precomputed(logits_path)
    logits = np.stack([np.asarray(vectors[rid], dtype=np.float64) for rid in val_ids])
    id_to_rec = {rec.id: rec for rec in corpus.records}
    labels = np.array([id_to_rec[rid].specialty for rid in val_ids], dtype=np.int64)
    k = corpus.vocabulary.size

    mode = config["run.mode"]
    if mode == "B8":
        platt = cal.fit_platt_all(logits, labels, k)
        probs = cal.apply_platt(logits, platt)
        thresholds = cal.optimize_thresholds(probs, labels, k)
    elif mode == "A5":
        platt = cal.PlattParams(a=np.full(k, -1.0), b=np.zeros(k))
        thresholds = cal.Thresholds(tau=np.full(k, 0.5))
    else:   # B1 / B6 / A1 / A2 / A4: raw sigmoid probabilities
        platt = cal.PlattParams(a=np.full(k, -1.0), b=np.zeros(k))
        probs = cal.apply_platt(logits, platt)
        thresholds = cal.optimize_thresholds(probs, labels, k)
    cal.save_calibration(run.path("calibration.txt"), platt, thresholds)
    run.register("calibration.txt")
    _snapshot_config(run, config)
    print(f"calibrate: mode {mode}, mean threshold {thresholds.tau.mean():.3f}")


def _test_probabilities(config: RunConfig, run: RunDir):
    """(probs, labels, ids, corpus, split, word counts, train counts, mode note)."""
    ckpt = run.require("checkpoint.ckpt", "labelnet train")
    calib = run.require("calibration.txt", "labelnet calibrate")
    corpus, split = load_corpus_store(run, config)
    platt, thresholds = cal.load_calibration(calib)
    if config["run.mode"] == "A5":
        # mode-definitional: raw sigmoid probabilities at fixed 0.5, no
        # matter what an earlier calibrate pass wrote
        k = corpus.vocabulary.size
        platt = cal.PlattParams(a=np.full(k, -1.0), b=np.zeros(k))
        thresholds = cal.Thresholds(tau=np.full(k, 0.5))
    test_ids = split.ids("test")
    id_to_rec = {rec.id: rec for rec in corpus.records}

    meta, _ = read_container(ckpt)
    if meta.get("type") == "baseline":
        model = load_baseline(ckpt)
        probs_raw = np.clip(
            predict_baseline(model, [id_to_rec[rid].transcription for rid in test_ids]),
            1e-12, 1.0 - 1e-12,
        )
        logits = np.log(probs_raw) - np.log1p(-probs_raw)
    else:
        from .network import load_checkpoint

        params, meta = load_checkpoint(ckpt)
        source, spec = _source_for_eval(corpus, meta)
        saved = RunConfig(meta.get("config", {}))
        no_gcn = saved["run.mode"] == "A1"
        tensors = read_container(ckpt)[1]
        logits = predict_logits(
            params, source, test_ids,
            a_hat=tensors["graph_a_hat"], h0=tensors["graph_h0"], no_gcn=no_gcn,
        )
    probs = cal.apply_platt(logits, platt)
    labels = np.array([id_to_rec[rid].specialty for rid in test_ids], dtype=np.int64)
    word_counts = np.array([len(tokenize(id_to_rec[rid].transcription).tokens) for rid in test_ids])
    counts = training_counts(corpus, split)
    return probs, labels, test_ids, corpus, thresholds, word_counts, counts


def cmd_evaluate(config: RunConfig, run: RunDir, against: list[str] | None = None) -> None:
    probs, labels, test_ids, corpus, thresholds, word_counts, counts = _test_probabilities(config, run)
    mode = config["run.mode"]
    note = "fixed 0.5" if mode == "A5" else "per-label grid search on validation F1"
    report = met.evaluate(
        probs, labels, thresholds.tau, corpus.vocabulary.names, counts, word_counts,
        mode=mode, thresholds_note=note, ece_bins=config["metrics.ece_bins"],
    )

    preds = met.argmax_predictions(probs)
    pred_lines = ["record_id,true,pred,correct"]
    for i, rid in enumerate(test_ids):
        pred_lines.append(f"{rid},{labels[i]},{preds[i]},{int(preds[i] == labels[i])}")
    run.write_text("predictions.csv", "\n".join(pred_lines) + "\n")

    if against:
        rows = []
        p_values = []
        for entry in against:
            if "=" not in entry:
                raise ConfigError(f"--against expects NAME=RUNDIR, got {entry!r}")
            name, other_dir = entry.split("=", 1)
            other = Path(other_dir) / "predictions.csv"
            if not other.is_file():
                raise MissingArtifact(f"no predictions.csv under {other_dir}")
            other_correct = _load_correct(other, test_ids)
            table = met.ContingencyTable.from_flags(
                baseline_correct=other_correct,
                candidate_correct=(preds == labels),
            )
            chi2, p = met.mcnemar(table)
            rows.append((name, table, chi2, p))
            p_values.append(p)
        flags = met.bonferroni(p_values, 0.05)
        report.significance = [
            met.SignificanceRow(
                baseline=name, n01=t.n01, n10=t.n10, chi2=chi2, p=p, significant=sig,
            )
            for (name, t, chi2, p), sig in zip(rows, flags)
        ]
        sig_lines = ["baseline,n01,n10,chi2,p,significant,corrected_alpha"]
        for row in report.significance:
            sig_lines.append(
                f"{row.baseline},{row.n01},{row.n10},{row.chi2:.2f},"
                f"{met.format_p(row.p)},{'yes' if row.significant else 'ns'},"
                f"{0.05 / len(report.significance):.4f}"
            )
        run.write_text("significance.csv", "\n".join(sig_lines) + "\n")

    run.write_text("report.txt", report.render())
    metric_lines = [
        "metric,value",
        f"macro_f1,{report.macro_f1!r}",
        f"micro_f1,{report.micro_f1!r}",
        f"accuracy,{report.accuracy!r}",
        f"hamming,{report.hamming!r}",
        f"ece,{report.ece!r}",
    ]
    run.write_text("metrics.csv", "\n".join(metric_lines) + "\n")
    f1_lines = ["label_id,label,f1"]
    for kk, name in enumerate(corpus.vocabulary.names):
        f1_lines.append(f"{kk},{_csv_safe(name)},{float(report.per_label_f1[kk])!r}")
    run.write_text("per_label_f1.csv", "\n".join(f1_lines) + "\n")
    conf_lines = ["true,predicted,count,pct_of_true"]
    for t, pd, c, pct in report.confusion[:50]:
        conf_lines.append(f"{_csv_safe(t)},{_csv_safe(pd)},{c},{pct:.1f}")
    run.write_text("confusion_pairs.csv", "\n".join(conf_lines) + "\n")
    run.write_text("class_size_bins.csv", _bins_csv(report.class_size_bins, "train_count"))
    run.write_text("length_bins.csv", _bins_csv(report.length_bins, "word_count"))
    _snapshot_config(run, config)
    print(report.render())


def _csv_safe(name: str) -> str:
    return '"' + name.replace('"', '""') + '"' if "," in name or '"' in name else name


def _bins_csv(bins, key_name: str) -> str:
    lines = [f"{key_name}_lo,{key_name}_hi,mean,count"]
    for lo, hi, mean, count in bins:
        hi_txt = "inf" if np.isinf(hi) else f"{hi:g}"
        mean_txt = "" if np.isnan(mean) else f"{mean!r}"
        lines.append(f"{lo:g},{hi_txt},{mean_txt},{count}")
    return "\n".join(lines) + "\n"


def _load_correct(path: Path, expected_ids) -> np.ndarray:
    rows = {}
    for line in path.read_text(encoding="utf-8").splitlines()[1:]:
        if line.strip():
            rid, _true, _pred, correct = line.split(",")
            rows[int(rid)] = bool(int(correct))
    missing = [rid for rid in expected_ids if rid not in rows]
    if missing:
        raise ConfigError(f"predictions file lacks {len(missing)} test records (first: {missing[0]})")
    return np.array([rows[rid] for rid in expected_ids], dtype=bool)


def cmd_attribute(config: RunConfig, run: RunDir) -> None:
    from .attribution import AttributionModel, HashedDocument, integrated_gradients
    from .network import load_checkpoint

    ckpt = run.require("checkpoint.ckpt", "labelnet train")
    corpus, split = load_corpus_store(run, config)
    meta, tensors = read_container(ckpt)
    if meta.get("type") != "network":
        raise ConfigError("attribution requires a network checkpoint")
    params, meta = load_checkpoint(ckpt)
    saved = RunConfig(meta.get("config", {}))
    spec = EncodingSpec(saved)
    no_gcn = saved["run.mode"] == "A1"
    model = AttributionModel(
        params=params, a_hat=tensors["graph_a_hat"], h0=tensors["graph_h0"], no_gcn=no_gcn,
    )
    source, _ = _source_for_eval(corpus, meta)
    id_to_rec = {rec.id: rec for rec in corpus.records}
    test_ids = split.ids("test")[: config["attribute.docs"]]
    steps = config["attribute.steps"]

    score_lines = ["doc_id,label_id,label,token,score"]
    gap_lines = ["doc_id,label_id,f_input,f_baseline,attribution_sum,completeness_gap,mode"]
    for rid in test_ids:
        logits = predict_logits(
            params, source, [rid], a_hat=model.a_hat, h0=model.h0, no_gcn=no_gcn,
        )
        label_cfg = config["attribute.label"]
        label = int(np.argmax(logits[0])) if label_cfg == "pred" else int(label_cfg)
        if spec.mode == "reference":
            seq = tokenize(id_to_rec[rid].transcription)
            chunks_set = make_chunks(seq, spec.window, spec.step, spec.max_chunks)
            doc = HashedDocument(
                tokens=seq.tokens, windows=chunks_set.windows,
                chunks=source.chunks[rid], n_buckets=spec.buckets,
            )
        else:
            doc = source.vectors[rid]
        result = integrated_gradients(model, doc, label, steps=steps)
        for token, score in result.token_scores[:25]:
            score_lines.append(
                f"{rid},{label},{_csv_safe(corpus.vocabulary.names[label])},{_csv_safe(token)},{score!r}"
            )
        gap_lines.append(
            f"{rid},{label},{result.f_input!r},{result.f_baseline!r},"
            f"{result.attribution_sum!r},{result.completeness_gap!r},{result.mode}"
        )
    run.write_text("attributions.csv", "\n".join(score_lines) + "\n")
    run.write_text("completeness.csv", "\n".join(gap_lines) + "\n")
    _snapshot_config(run, config)
    print(f"attribute: {len(test_ids)} documents, {steps} steps")


ABLATION_COMPONENT = {
    "A1": "GCN label graph",
    "A2": "Focal loss",
    "A4": "Sliding window",
    "A5": "Per-label thresholds",
}


def cmd_ablate(config: RunConfig, run: RunDir) -> None:
    """Full run plus the four single-component ablations; emits the delta table."""
    corpus, split = load_corpus_store(run, config)
    results: dict[str, met.EvalReport] = {}
    for mode in ("B6",) + ABLATION_VARIANTS:
        sub = RunConfig(dict(config.values))
        sub.set("run.mode", mode)
        subdir = RunDir(run.root / f"ablation_{mode}")
        write_corpus_store(subdir, corpus, split)
        cmd_train(sub, subdir)
        cmd_calibrate(sub, subdir)
        probs, labels, _, corpus, thresholds, word_counts, counts = _test_probabilities(sub, subdir)
        results[mode] = met.evaluate(
            probs, labels, thresholds.tau, corpus.vocabulary.names, counts, word_counts, mode=mode,
        )
    full = results["B6"]
    lines = ["id,removed_component,macro_f1,micro_f1,delta_macro_f1"]
    for mode in ABLATION_VARIANTS:
        rep = results[mode]
        lines.append(
            f"{mode},{ABLATION_COMPONENT[mode]},{rep.macro_f1:.4f},{rep.micro_f1:.4f},"
            f"{rep.macro_f1 - full.macro_f1:+.4f}"
        )
    run.write_text("ablation.csv", "\n".join(lines) + "\n")
    run.write_text(
        "ablation_full.csv",
        f"id,macro_f1,micro_f1\nB6,{full.macro_f1:.4f},{full.micro_f1:.4f}\n",
    )
    _snapshot_config(run, config)
    print(f"ablate: B6 macro-F1 {full.macro_f1:.4f}; " + ", ".join(
        f"{m} delta {results[m].macro_f1 - full.macro_f1:+.3f}" for m in ABLATION_VARIANTS
    ))


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="labelnet", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("ingest", "train", "calibrate", "evaluate", "attribute", "ablate"):
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="key=value config file")
        p.add_argument("--seed", type=int, default=None, help="overrides run.seed")
        p.add_argument("--mode", choices=MODES, default=None, help="overrides run.mode")
        p.add_argument("--run-dir", required=True, help="artifact directory")
        if name == "ingest":
            p.add_argument("--csv", default=None, help="overrides data.csv")
        if name == "evaluate":
            p.add_argument(
                "--against", action="append", default=[],
                help="NAME=RUNDIR of another evaluated run for McNemar comparison",
            )
    return parser


def _resolve_config(args) -> RunConfig:
    config = RunConfig.load(args.config) if args.config else RunConfig()
    if args.seed is not None:
        config.set("run.seed", args.seed)
    if args.mode is not None:
        config.set("run.mode", args.mode)
    if getattr(args, "csv", None):
        config.set("data.csv", args.csv)
    return config


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = _resolve_config(args)
        run = RunDir(args.run_dir)
        if args.command == "ingest":
            cmd_ingest(config, run)
        elif args.command == "train":
            cmd_train(config, run)
        elif args.command == "calibrate":
            cmd_calibrate(config, run)
        elif args.command == "evaluate":
            cmd_evaluate(config, run, against=args.against)
        elif args.command == "attribute":
            cmd_attribute(config, run)
        elif args.command == "ablate":
            cmd_ablate(config, run)
        return EXIT_OK
    except MissingArtifact as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except (TrainError,) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, CorpusError, EncoderError, GraphError, NetworkError,
            cal.CalibrationError, met.MetricsError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
