"""Operator CLI: ingest corpora, train and evaluate every model, run
ablations, compute session metrics, serve, and produce one-shot
suggestions for a transcript prefix.

Exit codes: 0 success, 1 failed precondition, 2 usage error.
"""

from __future__ import annotations

import json
import sys
import zipfile
from pathlib import Path
from typing import Optional

import click
import numpy as np

from negocoach import corpus as C
from negocoach import outcome as O
from negocoach import predictor as P
from negocoach import report as R
from negocoach.config import RunConfig
from negocoach.detector import (
    AnnotatedTurn,
    DetectorModel,
    LexiconSet,
    TacticAnnotation,
    annotate_dialog,
    calibrate_dominance_threshold,
    mentions_price,
    train_detectors,
)
from negocoach.embeddings import EmbeddingTable
from negocoach.engine import CoachEngine, CoachModels, Session, metrics as session_metrics
from negocoach.realizer import TemplateSet, build_index
from negocoach.registry import DEFAULT_REGISTRY, TacticRegistry


class Fail(click.ClickException):
    exit_code = 1


def _config(ctx) -> RunConfig:
    return ctx.obj["config"]


def _out(cfg: RunConfig) -> Path:
    return Path(cfg.out_dir)


def _registry(cfg: RunConfig) -> TacticRegistry:
    if cfg.registry:
        return TacticRegistry(tuple(cfg.registry))
    return DEFAULT_REGISTRY


def _lexicons(cfg: RunConfig) -> LexiconSet:
    if cfg.lexicon_dir:
        return LexiconSet.load_dir(Path(cfg.lexicon_dir))
    return LexiconSet.load_default()


def _embeddings(cfg: RunConfig) -> Optional[EmbeddingTable]:
    if cfg.embeddings_path:
        return EmbeddingTable.load(cfg.embeddings_path)
    return None


def _stamp_json_artifact(path: Path, cfg: RunConfig) -> None:
    obj = json.loads(path.read_text(encoding="utf-8"))
    obj["config_hash"] = cfg.hash()
    path.write_text(json.dumps(obj, indent=1), encoding="utf-8")


def _stamp_zip_artifact(path: Path, cfg: RunConfig) -> None:
    with zipfile.ZipFile(path, "a") as zf:
        if "config.json" not in zf.namelist():
            zf.writestr("config.json", json.dumps({"config_hash": cfg.hash()}))


def _load_split(cfg: RunConfig, name: str) -> list[C.Dialog]:
    path = _out(cfg) / f"{name}.jsonl"
    if not path.exists():
        raise Fail(f"missing {path}; run `coach ingest` first")
    return C.parse_corpus(path.read_text(encoding="utf-8")).dialogs


def _save_annotations(path: Path, anns: dict[str, dict[int, TacticAnnotation]],
                      registry: TacticRegistry) -> None:
    obj = {
        "registry": list(registry.ids),
        "dialogs": {
            did: {
                str(idx): {
                    "mentions": [[t, p] for t, p in a.mentions],
                    "turn_flags": [registry.ids[j] for j, f in enumerate(a.turn_flags) if f],
                    "counts": a.counts,
                }
                for idx, a in per.items()
            }
            for did, per in anns.items()
        },
    }
    path.write_text(json.dumps(obj), encoding="utf-8")


def _load_annotations(path: Path) -> tuple[dict[str, dict[int, TacticAnnotation]], TacticRegistry]:
    obj = json.loads(path.read_text(encoding="utf-8"))
    registry = TacticRegistry(tuple(obj["registry"]))
    n = len(registry)
    out: dict[str, dict[int, TacticAnnotation]] = {}
    for did, per in obj["dialogs"].items():
        out[did] = {}
        for idx, a in per.items():
            flags = np.zeros(n, dtype=int)
            for t in a["turn_flags"]:
                flags[registry.index(t)] = 1
            presence = flags.copy()
            mentions = [(t, int(p)) for t, p in a["mentions"]]
            for t, _p in mentions:
                presence[registry.index(t)] = 1
            out[did][int(idx)] = TacticAnnotation(
                turn_index=int(idx), registry=registry, presence=presence,
                mentions=mentions, turn_flags=flags,
                counts={k: int(v) for k, v in a.get("counts", {}).items()})
    return out, registry


def _require(path: Path, hint: str) -> Path:
    if not path.exists():
        raise Fail(f"missing {path}; {hint}")
    return path


def _check_registry(cfg: RunConfig, *registries: TacticRegistry) -> None:
    expected = _registry(cfg)
    for r in registries:
        if tuple(r.ids) != tuple(expected.ids):
            raise Fail("registry order mismatch between configured registry and artifact")


@click.group()
@click.option("--config", "config_path", type=click.Path(exists=True), default=None,
              help="JSON run-configuration file.")
@click.option("--seed", type=int, default=None, help="Override the config seed.")
@click.option("--out", "out_dir", type=click.Path(), default=None,
              help="Output/artifact directory.")
@click.pass_context
def main(ctx, config_path, seed, out_dir):
    """Negotiation coach operator CLI."""
    cfg = RunConfig.load(config_path) if config_path else RunConfig()
    if seed is not None:
        cfg.seed = seed
    if out_dir is not None:
        cfg.out_dir = out_dir
    ctx.obj = {"config": cfg}


@main.command()
@click.option("--input", "input_path", type=click.Path(exists=True), required=True)
@click.option("--format", "fmt", type=click.Choice(["raw", "normalized"]),
              default="normalized")
@click.pass_context
def ingest(ctx, input_path, fmt):
    """Parse, validate, filter, and split a corpus into train/dev/test."""
    cfg = _config(ctx)
    try:
        result = C.parse_corpus(Path(input_path).read_bytes(), format=fmt)
    except C.ParseError as exc:
        raise Fail(str(exc))
    kept, dropped = C.filter_corpus(result.dialogs)
    train, dev, test = C.split_corpus(kept, cfg.dev_fraction, cfg.test_fraction, cfg.seed)
    out = _out(cfg)
    out.mkdir(parents=True, exist_ok=True)
    for name, dialogs in (("train", train), ("dev", dev), ("test", test)):
        (out / f"{name}.jsonl").write_text(C.serialize_corpus(dialogs), encoding="utf-8")
    payload = {
        "parsed": len(result.dialogs),
        "rejected": [{"id": r.dialog_id, "reason": r.reason} for r in result.rejections],
        "dropped": dropped,
        "sizes": {"train": len(train), "dev": len(dev), "test": len(test)},
        "config_hash": cfg.hash(),
    }
    R.write_report(out, "ingest_report", payload)
    click.echo(json.dumps(payload["sizes"]))


@main.command()
@click.pass_context
def label(ctx):
    """Fit ratio quantile thresholds on train; label every split."""
    cfg = _config(ctx)
    out = _out(cfg)
    train = _load_split(cfg, "train")
    try:
        thresholds = C.fit_label_thresholds(train)
    except C.CorpusError as exc:
        raise Fail(str(exc))
    labels = {}
    for name in ("train", "dev", "test"):
        labels.update(C.label_outcomes(_load_split(cfg, name), thresholds))
    payload = {"thresholds": {"negative": thresholds[0], "positive": thresholds[1]},
               "labels": labels, "config_hash": cfg.hash()}
    (out / "labels.json").write_text(json.dumps(payload), encoding="utf-8")
    counts = {v: sum(1 for x in labels.values() if x == v)
              for v in ("positive", "negative", "excluded")}
    click.echo(json.dumps(counts))


@main.command()
@click.pass_context
def annotate(ctx):
    """Run the tactic detectors over every split."""
    cfg = _config(ctx)
    out = _out(cfg)
    lexset = _lexicons(cfg)
    registry = _registry(cfg)
    embeddings = _embeddings(cfg)
    detector_path = out / "detector.json"
    model = DetectorModel.load(detector_path) if detector_path.exists() else None
    if model is not None:
        _check_registry(cfg, model.registry)
    anns: dict[str, dict[int, TacticAnnotation]] = {}
    for name in ("train", "dev", "test"):
        for d in _load_split(cfg, name):
            anns[d.id] = annotate_dialog(d, lexset, model, embeddings, registry)
    _save_annotations(out / "annotations.json", anns, registry)
    click.echo(f"annotated {len(anns)} dialogs")


@main.group()
def train():
    """Train a model component."""


@train.command("detectors")
@click.option("--gold", "gold_path", type=click.Path(exists=True), required=True,
              help="JSON array of {text, scenario, previous_buyer_turn?, labels}.")
@click.pass_context
def train_detectors_cmd(ctx, gold_path):
    cfg = _config(ctx)
    out = _out(cfg)
    raw = json.loads(Path(gold_path).read_text(encoding="utf-8"))
    annotated = []
    for obj in raw:
        s = obj["scenario"]
        scenario = C.Scenario(id=s.get("id", "gold"), title=s.get("title", ""),
                              description=s["description"], category=s["category"],
                              list_price=float(s["list_price"]),
                              buyer_target=float(s["buyer_target"]))
        annotated.append(AnnotatedTurn(
            text=obj["text"], scenario=scenario,
            previous_buyer_turn=obj.get("previous_buyer_turn"),
            labels=set(obj["labels"])))
    lexset = _lexicons(cfg)
    train_dialogs = []
    train_file = out / "train.jsonl"
    if train_file.exists():
        train_dialogs = C.parse_corpus(train_file.read_text(encoding="utf-8")).dialogs
    dom_threshold = calibrate_dominance_threshold(train_dialogs, lexset) \
        if train_dialogs else None
    try:
        model = train_detectors(annotated, _embeddings(cfg), _registry(cfg),
                                seed=cfg.seed,
                                **({"dominance_threshold": dom_threshold}
                                   if dom_threshold is not None else {}))
    except ValueError as exc:
        raise Fail(str(exc))
    out.mkdir(parents=True, exist_ok=True)
    model.save(out / "detector.json")
    _stamp_json_artifact(out / "detector.json", cfg)
    R.write_report(out, "detector_cv",
                   {"cv_accuracy": model.cv_accuracy, "config_hash": cfg.hash()},
                   headers=["tactic", "cv_accuracy"],
                   rows=[[t, a] for t, a in model.cv_accuracy.items()])
    R.bar_figure(out, "detector_cv", list(model.cv_accuracy),
                 list(model.cv_accuracy.values()),
                 "Detector 5-fold CV accuracy", "accuracy")
    click.echo(json.dumps(model.cv_accuracy))


def _predictor_examples(cfg: RunConfig, split: str,
                        anns: dict[str, dict[int, TacticAnnotation]],
                        registry: TacticRegistry) -> list[P.Example]:
    examples = []
    for d in _load_split(cfg, split):
        examples.extend(P.make_examples(d, anns[d.id], registry))
    return examples


@train.command("predictor")
@click.pass_context
def train_predictor_cmd(ctx):
    cfg = _config(ctx)
    out = _out(cfg)
    anns, registry = _load_annotations(_require(out / "annotations.json",
                                                "run `coach annotate` first"))
    _check_registry(cfg, registry)
    train_dialogs = _load_split(cfg, "train")
    vocab = P.build_vocab(train_dialogs)
    pconfig = P.PredictorConfig(
        hidden_dim=cfg.hidden_dim, word_dim=cfg.word_dim, tactic_dim=cfg.tactic_dim,
        product_dim=cfg.product_dim, learning_rate=cfg.learning_rate,
        epochs=cfg.epochs, dropout=cfg.dropout, seed=cfg.seed)
    train_ex = _predictor_examples(cfg, "train", anns, registry)
    dev_ex = _predictor_examples(cfg, "dev", anns, registry)
    if not train_ex:
        raise Fail("no seller turns in the training split")
    try:
        model = P.train_predictor(train_ex, dev_ex, vocab, pconfig, registry,
                                  _embeddings(cfg))
    except P.TrainingDiverged as exc:
        raise Fail(str(exc))
    model.save(out / "predictor.model")
    _stamp_zip_artifact(out / "predictor.model", cfg)
    if model.train_log:
        R.line_figure(out, "predictor_loss",
                      [e["epoch"] for e in model.train_log],
                      {"train": [e["train_loss"] for e in model.train_log],
                       "dev": [e["dev_loss"] for e in model.train_log]},
                      "Predictor training", "epoch", "mean loss")
    click.echo(json.dumps(model.train_log[-1] if model.train_log else {}))


@train.command("outcome")
@click.pass_context
def train_outcome_cmd(ctx):
    cfg = _config(ctx)
    out = _out(cfg)
    data = _outcome_data(cfg)
    try:
        model = O.train_outcome(data["train"], data["dev"], data["registry"])
    except ValueError as exc:
        raise Fail(str(exc))
    model.save(out / "outcome.json")
    _stamp_json_artifact(out / "outcome.json", cfg)
    accs = {name: O.accuracy(model, data[name]) for name in ("train", "dev", "test")
            if len(data[name].y)}
    R.write_report(out, "outcome_train", {"accuracy": accs, "l2": model.model.l2,
                                          "config_hash": cfg.hash()})
    click.echo(json.dumps(accs))


@train.command("baseline")
@click.pass_context
def train_baseline_cmd(ctx):
    cfg = _config(ctx)
    out = _out(cfg)
    labels = _labels(cfg)
    train_dialogs = _load_split(cfg, "train")
    try:
        model, vocab = O.train_shallow_baseline(train_dialogs, labels,
                                                min_freq=cfg.min_ngram_freq)
    except ValueError as exc:
        raise Fail(str(exc))
    accs = {}
    for name in ("train", "dev", "test"):
        dialogs = _load_split(cfg, name)
        try:
            data, _ = O.ngram_features(dialogs, labels, vocabulary=vocab)
        except ValueError:
            continue
        if len(data.y):
            accs[name] = float((model.model.predict(data.X) == data.y).mean())
    R.write_report(out, "baseline", {"accuracy": accs, "vocab_size": len(vocab),
                                     "config_hash": cfg.hash()})
    click.echo(json.dumps(accs))


def _labels(cfg: RunConfig) -> dict[str, str]:
    path = _require(_out(cfg) / "labels.json", "run `coach label` first")
    return json.loads(path.read_text(encoding="utf-8"))["labels"]


def _outcome_data(cfg: RunConfig) -> dict:
    out = _out(cfg)
    anns, registry = _load_annotations(_require(out / "annotations.json",
                                                "run `coach annotate` first"))
    _check_registry(cfg, registry)
    labels = _labels(cfg)
    lexset = _lexicons(cfg)
    result = {"registry": registry}
    for name in ("train", "dev", "test"):
        dialogs = _load_split(cfg, name)
        splits = {d.id: C.split_stages(d, mentions_price) for d in dialogs}
        result[name] = O.collect_features(dialogs, anns, splits, labels, registry)
    return result


@main.command()
@click.pass_context
def calibrate(ctx):
    """Grid-search per-tactic thresholds on dev F1."""
    cfg = _config(ctx)
    out = _out(cfg)
    model = P.PredictorModel.load(_require(out / "predictor.model",
                                           "run `coach train predictor` first"))
    _check_registry(cfg, model.registry)
    anns, registry = _load_annotations(_require(out / "annotations.json",
                                                "run `coach annotate` first"))
    dev_ex = _predictor_examples(cfg, "dev", anns, registry)
    if not dev_ex:
        raise Fail("no dev examples to calibrate on")
    gammas = P.calibrate_thresholds(model, dev_ex)
    model.save(out / "predictor.model")
    _stamp_zip_artifact(out / "predictor.model", cfg)
    R.write_report(out, "thresholds",
                   {"thresholds": dict(zip(registry.ids, gammas.tolist())),
                    "config_hash": cfg.hash()},
                   headers=["tactic", "threshold"],
                   rows=[[t, g] for t, g in zip(registry.ids, gammas.tolist())])
    click.echo("calibrated")


@main.group(name="eval")
def eval_group():
    """Evaluate trained models."""


@eval_group.command("predictor")
@click.option("--ablate", is_flag=True, default=False)
@click.pass_context
def eval_predictor_cmd(ctx, ablate):
    cfg = _config(ctx)
    out = _out(cfg)
    model = P.PredictorModel.load(_require(out / "predictor.model",
                                           "run `coach train predictor` first"))
    _check_registry(cfg, model.registry)
    anns, registry = _load_annotations(_require(out / "annotations.json",
                                                "run `coach annotate` first"))
    test_ex = _predictor_examples(cfg, "test", anns, registry)
    if not test_ex:
        raise Fail("no test examples")
    rows = []
    if ablate:
        configs = [("turn embedding", dict(ablate_product=True, ablate_tactics=True)),
                   ("+product embedding", dict(ablate_product=False, ablate_tactics=True)),
                   ("+tactics embedding", dict(ablate_product=False, ablate_tactics=False))]
    else:
        configs = [("full", dict())]
    for name, kwargs in configs:
        scores = P.evaluate_predictor(model, test_ex, **kwargs)
        rows.append([name, scores["macro_f1"], scores["micro_f1"]])
    payload = {"rows": [{"components": r[0], "macro_f1": r[1], "micro_f1": r[2]}
                        for r in rows], "config_hash": cfg.hash()}
    R.write_report(out, "predictor_eval", payload,
                   headers=["components", "macro_f1", "micro_f1"], rows=rows)
    R.grouped_bar_figure(out, "predictor_eval", [r[0] for r in rows],
                         {"macro F1": [r[1] for r in rows],
                          "micro F1": [r[2] for r in rows]},
                         "Next-tactic prediction", "F1")
    click.echo((out / "predictor_eval.txt").read_text(encoding="utf-8"))


@eval_group.command("outcome")
@click.option("--ablate", is_flag=True, default=False)
@click.pass_context
def eval_outcome_cmd(ctx, ablate):
    cfg = _config(ctx)
    out = _out(cfg)
    data = _outcome_data(cfg)
    model_path = _require(out / "outcome.json", "run `coach train outcome` first")
    model = O.OutcomeModel.load(model_path)
    _check_registry(cfg, model.registry)
    payload = {"test_accuracy": O.accuracy(model, data["test"]),
               "config_hash": cfg.hash()}
    rows = [["full", payload["test_accuracy"]]]
    if ablate:
        deltas = O.ablate_outcome(data["train"], data["test"], data["dev"],
                                  data["registry"], l2=model.model.l2)
        for key in ("delta_abstract", "delta_lexical", "delta_stage1", "delta_stage2"):
            payload[key] = deltas[key]
            rows.append([key, deltas[key]])
    R.write_report(out, "outcome_eval", payload,
                   headers=["features", "accuracy_or_delta"], rows=rows)
    R.bar_figure(out, "outcome_eval", [r[0] for r in rows], [r[1] for r in rows],
                 "Outcome classifier", "accuracy / delta")
    click.echo((out / "outcome_eval.txt").read_text(encoding="utf-8"))


@main.command()
@click.pass_context
def weights(ctx):
    """Report seller tactic weights per stage from the outcome model."""
    cfg = _config(ctx)
    out = _out(cfg)
    model = O.OutcomeModel.load(_require(out / "outcome.json",
                                         "run `coach train outcome` first"))
    _check_registry(cfg, model.registry)
    rows_data = O.report_weights(model)
    rows = [[r["tactic"], r["stage1_weight"], r["stage2_weight"]] for r in rows_data]
    R.write_report(out, "weights",
                   {"weights": rows_data, "scaling": "standardized features",
                    "config_hash": cfg.hash()},
                   headers=["tactic", "stage1_weight", "stage2_weight"], rows=rows)
    R.grouped_bar_figure(out, "weights", [r[0] for r in rows],
                         {"stage 1": [r[1] for r in rows],
                          "stage 2": [r[2] for r in rows]},
                         "Seller tactic weights", "weight")
    click.echo((out / "weights.txt").read_text(encoding="utf-8"))


@main.command(name="metrics")
@click.option("--sessions", "sessions_dir", type=click.Path(exists=True), required=True,
              help="Directory of session transcript JSON exports.")
@click.option("--baseline", "baseline_dir", type=click.Path(exists=True), default=None)
@click.pass_context
def metrics_cmd(ctx, sessions_dir, baseline_dir):
    """Outcome metrics over exported sessions (optionally vs a baseline set)."""
    cfg = _config(ctx)
    out = _out(cfg)

    def load_sessions(directory) -> list[Session]:
        lexset = _lexicons(cfg)
        engine = CoachEngine(CoachModels(lexicons=lexset, templates=TemplateSet.load(
            cfg.templates_path), registry=_registry(cfg)))
        sessions = []
        for path in sorted(Path(directory).glob("*.json")):
            obj = json.loads(path.read_text(encoding="utf-8"))
            result = C.parse_corpus(json.dumps([obj]))
            if not result.dialogs:
                raise Fail(f"bad transcript {path}: {result.rejections}")
            d = result.dialogs[0]
            session = Session(id=d.id, scenario=d.scenario)
            for e in d.events:
                engine.on_event(session, e.speaker, e.kind, text=e.text, price=e.price)
            sessions.append(session)
        return sessions

    sessions = load_sessions(sessions_dir)
    baseline = load_sessions(baseline_dir) if baseline_dir else None
    result = session_metrics(sessions, baseline)
    result["config_hash"] = cfg.hash()
    rows = [[k, v] for k, v in result.items() if isinstance(v, (int, float)) and v is not None]
    R.write_report(out, "metrics", result, headers=["metric", "value"], rows=rows)
    R.bar_figure(out, "metrics", [r[0] for r in rows],
                 [float(r[1]) for r in rows], "Session metrics", "value")
    click.echo(json.dumps(result, indent=2))


@main.command()
@click.option("--transcript", "transcript_path", type=click.Path(exists=True),
              required=True, help="Normalized dialog JSON (single object).")
@click.pass_context
def suggest(ctx, transcript_path):
    """One-shot suggestion for the seller given a transcript prefix."""
    cfg = _config(ctx)
    out = _out(cfg)
    models = _load_coach_models(cfg)
    if models.predictor is None or models.outcome is None:
        raise Fail("suggest needs trained predictor and outcome artifacts in --out")
    obj = json.loads(Path(transcript_path).read_text(encoding="utf-8"))
    result = C.parse_corpus(json.dumps([obj]))
    if not result.dialogs:
        raise Fail(f"bad transcript: {[r.reason for r in result.rejections]}")
    d = result.dialogs[0]
    engine = CoachEngine(models)
    session = Session(id=d.id, scenario=d.scenario)
    for e in d.events:
        engine.on_event(session, e.speaker, e.kind, text=e.text, price=e.price)
    suggestion = engine.coach(session)
    if suggestion is None:
        click.echo(json.dumps({"tactics": [], "instruction": "", "exemplars": []}))
    else:
        click.echo(json.dumps(suggestion.to_obj(), indent=2))


def _load_coach_models(cfg: RunConfig) -> CoachModels:
    out = _out(cfg)
    registry = _registry(cfg)
    detector = DetectorModel.load(out / "detector.json") \
        if (out / "detector.json").exists() else None
    predictor = P.PredictorModel.load(out / "predictor.model") \
        if (out / "predictor.model").exists() else None
    outcome_model = O.OutcomeModel.load(out / "outcome.json") \
        if (out / "outcome.json").exists() else None
    for artifact in (detector, predictor, outcome_model):
        if artifact is not None:
            _check_registry(cfg, artifact.registry)
    index = None
    anns_path = out / "annotations.json"
    labels_path = out / "labels.json"
    if anns_path.exists() and labels_path.exists() and (out / "train.jsonl").exists():
        anns, _ = _load_annotations(anns_path)
        labels = json.loads(labels_path.read_text(encoding="utf-8"))["labels"]
        train_dialogs = C.parse_corpus(
            (out / "train.jsonl").read_text(encoding="utf-8")).dialogs
        index = build_index(train_dialogs, anns, labels)
    return CoachModels(
        lexicons=_lexicons(cfg), templates=TemplateSet.load(cfg.templates_path),
        detector=detector, predictor=predictor, outcome=outcome_model,
        exemplar_index=index, embeddings=_embeddings(cfg), registry=registry)


@main.command()
@click.option("--port", type=int, default=None)
@click.option("--static-dir", type=click.Path(), default=None,
              help="Directory of built web UI assets to serve at /.")
@click.pass_context
def serve(ctx, port, static_dir):
    """Run the live coaching service."""
    import uvicorn

    from negocoach.service import build_app

    cfg = _config(ctx)
    models = _load_coach_models(cfg)
    app = build_app(models, static_dir=Path(static_dir) if static_dir else None)
    uvicorn.run(app, host="0.0.0.0", port=port or cfg.port)


if __name__ == "__main__":
    sys.exit(main())
