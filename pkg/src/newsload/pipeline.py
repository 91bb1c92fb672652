"""Stage-by-stage orchestration with on-disk artifacts.

Every stage reads its inputs from the output directory written by the
stages before it, writes its own sub-directory, and records a
``manifest.json`` carrying the config hash and seed. Nothing time- or
host-dependent is written, so rerunning a stage reproduces its files
byte for byte.
"""
from __future__ import annotations

import copy
import datetime as dt
import hashlib
import json
import logging
import time
from contextlib import contextmanager
from pathlib import Path
from typing import Any, Iterator

import numpy as np
import pandas as pd
import yaml

from . import evaluate as ev
from . import explain as ex
from .features import (
    FAMILY_CODES,
    TEXT_TYPE_CODES,
    TEXT_TYPES,
    EmbeddingTable,
    SentimentLexicon,
    build_vocabulary,
    daily_rows,
    default_lexicon,
    family_id,
    parse_family_id,
    prepare,
    read_feature_table,
    rows_to_frame,
    write_feature_table,
)
from .forecast import BENCHMARKS, COMBINATIONS, FeatureSetSpec, build_design, default_grid, grid_search_cv, persistence_forecast
from .ingest import AlignedDataset, align, ingest_corpus, ingest_demand, ingest_holidays, ingest_temperature
from .select import GrangerConfig, bilateral_select, write_audit
from .synth import SynthConfig, write_fixture
from .topics import LdaConfig, LdaModel, daily_topic_features, fit_lda, select_topic_count
from .trees import ExtraTreesConfig, ExtraTreesModel, fit_extratrees

logger = logging.getLogger(__name__)

STAGES = ("synth", "features", "select", "train", "evaluate", "explain", "report")
ALL_FAMILY_IDS = tuple(family_id(f, t) for t in TEXT_TYPES for f in ("count", "wordfreq", "sentiment", "topic", "embedding"))

DEFAULT_CONFIG: dict[str, Any] = {
    "seed": 0,
    "paths": {
        # unset paths fall back to the fixture written by `synth`
        "corpus": None,
        "corpus_format": "jsonl",
        "demand": None,
        "temperature": None,
        "holidays": None,
        "embeddings": None,
        "lexicon": None,
        "modifiers": None,
        "official_forecast": None,
    },
    "demand": {"day_tz": None, "source_tz": None, "max_missing": 4},
    "window": {"start": None, "end": None},
    "split": None,  # first target date of the test year; default: last 365 days
    "features": {
        "families": {t: ["count", "wordfreq", "sentiment", "topic", "embedding"] for t in TEXT_TYPES},
        "wordfreq_threshold": {"title": 200, "description": 400, "body": 5000},
        "topics": {
            "candidates": {"title": [87], "description": [100], "body": [69]},
            "sweeps": 1000,
            "burn_in": 500,
            "beta": 0.01,
            "alpha": None,
            "infer_sweeps": 50,
            "infer_burn_in": 20,
        },
    },
    "granger": {"lags": 30, "alpha": 0.05, "stationarity": "adf"},
    "model": {
        "grid_search": True,
        "folds": 5,
        "n_trees": 100,
        "max_features": "third",
        "min_samples_split": 5,
        "repeats": 3,
        "benchmarks": list(BENCHMARKS),
        "family_models": True,
        "combinations": list(COMBINATIONS),
    },
    "evaluate": {"dm_models": ["D", "D+C+T", "M0", "M6"], "advanced": "M6", "small_sample": False},
    "explain": {
        "model": "M6",
        "max_features": 10,
        "lime_days": 12,
        "lime_samples": 5000,
        "kernel_width": None,
        "cross_fit": True,
        "nuisance": {"n_trees": 100, "max_features": "third", "min_samples_split": 20},
    },
    "synth": {},
}


class PipelineError(RuntimeError):
    pass


# --------------------------------------------------------------- config


def _merge(base: dict, override: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, val in (override or {}).items():
        if key not in base:
            raise PipelineError(f"unknown config key {path + key!r}")
        if isinstance(base[key], dict) and key not in ("synth", "families", "candidates", "wordfreq_threshold"):
            if not isinstance(val, dict):
                raise PipelineError(f"config key {path + key!r} must be a mapping")
            out[key] = _merge(base[key], val, f"{path}{key}.")
        else:
            out[key] = copy.deepcopy(val)
    return out


def load_config(path: str | Path | None = None, seed: int | None = None) -> dict:
    raw = {}
    if path is not None:
        raw = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
    cfg = _merge(DEFAULT_CONFIG, raw)
    if path is not None:
        # relative data paths are taken relative to the config file
        base = Path(path).resolve().parent
        for key in ("corpus", "demand", "temperature", "holidays", "embeddings", "lexicon", "modifiers", "official_forecast"):
            val = cfg["paths"][key]
            if val is not None and not Path(val).is_absolute():
                cfg["paths"][key] = str(base / val)
    if seed is not None:
        cfg["seed"] = int(seed)
    for key in ("start", "end"):
        if isinstance(cfg["window"][key], str):
            cfg["window"][key] = dt.date.fromisoformat(cfg["window"][key])
    if isinstance(cfg["split"], str):
        cfg["split"] = dt.date.fromisoformat(cfg["split"])
    return cfg


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, dt.date):
        return obj.isoformat()
    return obj


def config_hash(cfg: dict) -> str:
    text = json.dumps(_jsonable(cfg), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]


# --------------------------------------------------------------- helpers


class Run:
    """Resolved config plus output directory, shared by all stages."""

    def __init__(self, cfg: dict, out: str | Path, jobs: int = 1):
        self.cfg = cfg
        self.out = Path(out)
        self.jobs = max(1, int(jobs))
        self.hash = config_hash(cfg)
        self.seed = int(cfg["seed"])

    def stage_dir(self, stage: str) -> Path:
        d = self.out / stage
        d.mkdir(parents=True, exist_ok=True)
        return d

    def require(self, stage: str) -> dict:
        path = self.out / stage / "manifest.json"
        if not path.is_file():
            raise PipelineError(f"missing {stage} artifacts in {self.out}; run the '{stage}' subcommand first")
        manifest = json.loads(path.read_text(encoding="utf-8"))
        if manifest.get("config_hash") != self.hash:
            logger.warning("%s artifacts were built with config %s, current config is %s", stage, manifest.get("config_hash"), self.hash)
        return manifest

    def write_manifest(self, stage: str, payload: dict) -> None:
        body = {"stage": stage, "config_hash": self.hash, "seed": self.seed, **payload}
        text = json.dumps(_jsonable(body), sort_keys=True, indent=1) + "\n"
        (self.stage_dir(stage) / "manifest.json").write_text(text, encoding="utf-8")

    def path(self, key: str) -> Path | None:
        val = self.cfg["paths"][key]
        if val is not None:
            return Path(val)
        fixture = self.out / "synth"
        default = {
            "corpus": "corpus.jsonl",
            "demand": "demand.csv",
            "temperature": "temperature.csv",
            "holidays": "holidays.txt",
            "embeddings": "embeddings.txt",
        }.get(key)
        if default is None:
            return None
        if not (fixture / "manifest.json").is_file():
            raise PipelineError(f"paths.{key} is not set and no fixture exists; run the 'synth' subcommand first or set it")
        return fixture / default


@contextmanager
def timed(stage: str) -> Iterator[None]:
    t0 = time.perf_counter()
    logger.info("%s: start", stage)
    yield
    logger.info("%s: done in %.1f s", stage, time.perf_counter() - t0)


def _write_csv(frame: pd.DataFrame, path: Path, index: bool = False) -> None:
    frame.to_csv(path, index=index, float_format="%.17g", lineterminator="\n")


def _write_json(obj, path: Path) -> None:
    path.write_text(json.dumps(_jsonable(obj), sort_keys=True, indent=1) + "\n", encoding="utf-8")


def load_dataset(run: Run, with_corpus: bool) -> AlignedDataset:
    cfg = run.cfg
    window = None
    if cfg["window"]["start"] is not None and cfg["window"]["end"] is not None:
        window = (cfg["window"]["start"], cfg["window"]["end"])
    items = []
    if with_corpus:
        items = ingest_corpus(run.path("corpus"), format=cfg["paths"]["corpus_format"], window=window).items
    demand = ingest_demand(
        run.path("demand"),
        day_tz=cfg["demand"]["day_tz"],
        source_tz=cfg["demand"]["source_tz"],
        max_missing=cfg["demand"]["max_missing"],
    )
    hol_path = run.path("holidays")
    holidays = ingest_holidays(hol_path) if hol_path is not None and hol_path.is_file() else set()
    return align(items, demand, ingest_temperature(run.path("temperature")), holidays, window)


def split_date(run: Run, ds: AlignedDataset) -> dt.date:
    split = run.cfg["split"]
    if split is None:
        split = ds.dates[-1] - dt.timedelta(days=364)
    if not ds.dates[0] < split <= ds.dates[-1]:
        raise PipelineError(f"split date {split} lies outside the data window {ds.dates[0]}..{ds.dates[-1]}")
    return split


# --------------------------------------------------------------- stages


def stage_synth(run: Run) -> None:
    synth_cfg = dict(run.cfg["synth"])
    synth_cfg.setdefault("seed", run.seed)
    config = SynthConfig.from_dict(synth_cfg)
    d = run.stage_dir("synth")
    with timed("synth"):
        ds, truth = write_fixture(config, d)
    run.write_manifest(
        "synth",
        {"days": len(ds), "articles": sum(len(v) for v in ds.articles.values()), "event_days": len(truth.event_days), "synth": config.to_dict()},
    )


def _lexicon(run: Run) -> SentimentLexicon:
    lex = run.cfg["paths"]["lexicon"]
    if lex is None:
        return default_lexicon()
    return SentimentLexicon.from_files(lex, run.cfg["paths"]["modifiers"])


def stage_features(run: Run) -> None:
    cfg = run.cfg["features"]
    out = run.stage_dir("features")
    with timed("features"):
        ds = load_dataset(run, with_corpus=True)
        split = split_date(run, ds)
        lexicon = table = None
        rows = []
        counts = {}
        topic_choice = {}
        for text_type in TEXT_TYPES:
            families = cfg["families"].get(text_type, [])
            if not families:
                continue
            arts = {d: prepare([it for it in ds.day_articles(d) if it.text(text_type).strip()], text_type) for d in ds.dates}
            train_docs = [a.tokens for d in ds.dates if d < split for a in arts[d]]
            # counts are always computed: they carry the missing-day indicator
            fam_rows = {"count": daily_rows(arts, text_type, "count")}
            if "wordfreq" in families:
                vocab = build_vocabulary(train_docs, int(cfg["wordfreq_threshold"][text_type]))
                fam_rows["wordfreq"] = daily_rows(arts, text_type, "wordfreq", vocabulary=vocab)
            if "sentiment" in families:
                lexicon = lexicon or _lexicon(run)
                fam_rows["sentiment"] = daily_rows(arts, text_type, "sentiment", lexicon=lexicon)
            if "embedding" in families:
                table = table or EmbeddingTable.load(run.path("embeddings"))
                fam_rows["embedding"] = daily_rows(arts, text_type, "embedding", table=table)
            if "topic" in families:
                model, scores = _fit_topics(run, text_type, [doc for doc in train_docs if doc])
                model.save(out / f"topics_{text_type}.npz")
                topic_choice[text_type] = {"n_topics": model.n_topics, "coherence": {str(k): v for k, v in scores.items()}}
                fam_rows["topic"] = [daily_topic_features(model, d, [a.tokens for a in arts[d] if a.tokens], text_type) for d in ds.dates]
            for family, frs in fam_rows.items():
                rows += frs
                if family in families:
                    counts[family_id(family, text_type)] = len(frs[0].values)
        frame = rows_to_frame(rows)
        # the count family is kept for the missing flags even when disabled
        for text_type in TEXT_TYPES:
            if "count" not in cfg["families"].get(text_type, []):
                frame = frame.drop(columns=[c for c in frame.columns if c.startswith(f"count.{text_type}.")])
        write_feature_table(frame, out / "features.csv")
    run.write_manifest(
        "features",
        {"split": split, "days": len(ds), "original_counts": counts, "topics": topic_choice, "columns": len(frame.columns)},
    )


def _fit_topics(run: Run, text_type: str, docs: list[list[str]]) -> tuple[LdaModel, dict]:
    tcfg = run.cfg["features"]["topics"]
    candidates = list(tcfg["candidates"][text_type])
    base = LdaConfig(
        n_topics=candidates[0],
        alpha=tcfg["alpha"],
        beta=tcfg["beta"],
        sweeps=tcfg["sweeps"],
        burn_in=tcfg["burn_in"],
        seed=run.seed,
        infer_sweeps=tcfg["infer_sweeps"],
        infer_burn_in=tcfg["infer_burn_in"],
    )
    k, scores = select_topic_count(docs, candidates, base)
    return fit_lda(docs, LdaConfig(**{**base.__dict__, "n_topics": k})), scores


def text_feature_columns(frame: pd.DataFrame) -> list[str]:
    return [c for c in frame.columns if not c.startswith("missing.")]


def stage_select(run: Run) -> None:
    feat_manifest = run.require("features")
    out = run.stage_dir("select")
    with timed("select"):
        frame = read_feature_table(run.out / "features" / "features.csv")
        ds = load_dataset(run, with_corpus=False)
        split = dt.date.fromisoformat(feat_manifest["split"])
        train_days = [d for d in ds.dates if d < split and d in frame.index]
        target = np.array([ds.demand[ds.index[d]].mean() for d in train_days])
        cols = text_feature_columns(frame)
        gcfg = GrangerConfig(**run.cfg["granger"])
        sub = frame.loc[train_days]
        selected, outcomes = bilateral_select({c: sub[c].to_numpy() for c in cols}, target, gcfg)
        write_audit(outcomes, out / "audit.csv")
        per_family = {}
        for fid in feat_manifest["original_counts"]:
            family, text_type = parse_family_id(fid)
            prefix = f"{family}.{text_type}."
            per_family[fid] = {
                "original": feat_manifest["original_counts"][fid],
                "selected": [c for c in selected if c.startswith(prefix)],
            }
        _write_json({"selected": selected, "families": per_family}, out / "selected.json")
    run.write_manifest("select", {"n_tested": len(cols), "n_selected": len(selected)})


def model_labels(run: Run, available_families: list[str]) -> list[str]:
    mcfg = run.cfg["model"]
    labels = list(mcfg["benchmarks"])
    if mcfg["family_models"]:
        labels += [f"D+C+T+{fid}" for fid in ALL_FAMILY_IDS if fid in available_families]
    labels += [m for m in mcfg["combinations"] if all(f in available_families for f in COMBINATIONS[m])]
    return labels


def _designs(run: Run):
    feat_manifest = run.require("features")
    run.require("select")
    sel = json.loads((run.out / "select" / "selected.json").read_text(encoding="utf-8"))
    frame = read_feature_table(run.out / "features" / "features.csv")
    ds = load_dataset(run, with_corpus=False)
    split = dt.date.fromisoformat(feat_manifest["split"])
    return ds, frame, sel["selected"], split, list(feat_manifest["original_counts"])


def stage_train(run: Run) -> None:
    run.require("select")
    out = run.stage_dir("train")
    mcfg = run.cfg["model"]
    with timed("train"):
        ds, frame, selected, split, families = _designs(run)
        base_design, _ = build_design(ds, frame, FeatureSetSpec()).split(split)
        if mcfg["grid_search"]:
            grid = default_grid(run.seed)
            result = grid_search_cv(base_design.X, base_design.Y, grid, n_folds=mcfg["folds"], n_jobs=run.jobs)
            _write_csv(result.table, out / "grid.csv")
            chosen = result.best
        else:
            chosen = ExtraTreesConfig(mcfg["n_trees"], mcfg["max_features"], mcfg["min_samples_split"], run.seed)
        labels = model_labels(run, families)
        (out / "models").mkdir(exist_ok=True)
        trained = {}
        for label in labels:
            design, _ = build_design(ds, frame, FeatureSetSpec.parse(label), selected).split(split)
            seeds = [run.seed + r for r in range(mcfg["repeats"])]
            for seed in seeds:
                cfg = ExtraTreesConfig(chosen.n_trees, chosen.max_features, chosen.min_samples_split, seed)
                model = fit_extratrees(design.X, design.Y, cfg, feature_names=design.columns, n_jobs=run.jobs)
                model.save(out / "models" / f"{_slug(label)}__seed{seed}.npz", {"config_hash": run.hash, "label": label, "seed": seed})
            trained[label] = {"seeds": seeds, "n_features": len(design.columns), "n_text": len(design.columns) - len(base_design.columns), "rows": len(design)}
            logger.info("trained %s (%d columns)", label, len(design.columns))
    run.write_manifest(
        "train",
        {"chosen": {"n_trees": chosen.n_trees, "max_features": chosen.max_features, "min_samples_split": chosen.min_samples_split}, "models": trained, "order": labels},
    )


def _slug(label: str) -> str:
    return label.replace("+", "_")


def _predict_all(run: Run):
    manifest = run.require("train")
    ds, frame, selected, split, _ = _designs(run)
    preds = {}
    truth = dates = None
    for label in manifest["order"]:
        _, test = build_design(ds, frame, FeatureSetSpec.parse(label), selected).split(split)
        per_seed = []
        for seed in manifest["models"][label]["seeds"]:
            model = ExtraTreesModel.load(run.out / "train" / "models" / f"{_slug(label)}__seed{seed}.npz")
            per_seed.append(model.predict(test.X))
        if dates is None:
            dates, truth = test.target_dates, test.Y
        elif test.target_dates != dates:
            raise PipelineError(f"model {label} covers different test days than {manifest['order'][0]}")
        preds[label] = per_seed
    return ds, dates, truth, preds, manifest["order"]


def stage_evaluate(run: Run) -> None:
    out = run.stage_dir("evaluate")
    ecfg = run.cfg["evaluate"]
    with timed("evaluate"):
        ds, dates, truth, preds, order = _predict_all(run)
        (out / "predictions").mkdir(exist_ok=True)
        rows, mean_forecast = [], {}
        values: dict[str, Any] = {"test_days": len(dates), "test_start": dates[0].isoformat(), "test_end": dates[-1].isoformat()}
        for label in order:
            seed_metrics = np.array([ev.period_metrics(ev.daily_scores(truth, p, dates)) for p in preds[label]])
            mean_forecast[label] = np.mean(preds[label], axis=0)
            ev.write_predictions(out / "predictions" / f"{_slug(label)}.csv", dates, mean_forecast[label])
            row = {"model": label}
            for j, name in enumerate(("rmse", "mae", "smape")):
                row[name] = float(seed_metrics[:, j].mean())
                row[f"{name}_std"] = float(seed_metrics[:, j].std())
                values[f"{label}.{name}"] = row[name]
            rows.append(row)
        baselines = {"persistence_d7": persistence_forecast(ds, dates)}
        official = run.cfg["paths"]["official_forecast"]
        if official is not None:
            series = ingest_demand(official, day_tz=run.cfg["demand"]["day_tz"], source_tz=run.cfg["demand"]["source_tz"]).as_dict()
            if all(d in series for d in dates):
                baselines["official"] = np.vstack([series[d] for d in dates])
            else:
                logger.warning("official forecast does not cover the test period; skipped")
        for name, fc in baselines.items():
            rmse, mae, smape = ev.period_metrics(ev.daily_scores(truth, fc, dates))
            rows.append({"model": name, "rmse": rmse, "mae": mae, "smape": smape, "rmse_std": 0.0, "mae_std": 0.0, "smape_std": 0.0})
            values.update({f"{name}.rmse": rmse, f"{name}.mae": mae, f"{name}.smape": smape})
            ev.write_predictions(out / "predictions" / f"{name}.csv", dates, fc)
        _write_csv(pd.DataFrame(rows), out / "metrics.csv")

        losses = {label: ev.daily_mse(truth, f) for label, f in mean_forecast.items()}
        # significance of each text model against the D+C+T benchmark
        if "D+C+T" in losses:
            sig = []
            for label in order:
                if label == "D+C+T":
                    continue
                try:
                    p = ev.dm_test(losses[label], losses["D+C+T"], (label, "D+C+T"), ecfg["small_sample"]).p_value
                except ev.DegenerateComparison:
                    p = 1.0
                sig.append({"model": label, "p_vs_benchmark": p})
            _write_csv(pd.DataFrame(sig), out / "dm_vs_benchmark.csv")
        dm_models = [m for m in ecfg["dm_models"] if m in losses]
        matrix = ev.dm_matrix({m: losses[m] for m in dm_models}, ecfg["small_sample"])
        matrix.index.name = "row"
        _write_csv(matrix, out / "dm_matrix.csv", index=True)

        decomposed = [m for m in ("D+C+T", ecfg["advanced"]) if m in mean_forecast]
        for label in decomposed:
            hours, types = ev.error_decomposition(mean_forecast[label], truth, dates)
            _write_csv(hours, out / f"hours_{_slug(label)}.csv")
            _write_csv(types, out / f"daytype_{_slug(label)}.csv")
        _write_csv(ev.scores_frame(ev.daily_scores(truth, mean_forecast[order[0]], dates)), out / f"daily_{_slug(order[0])}.csv")
        ev.write_key_values(out / "metrics.txt", values)
    run.write_manifest("evaluate", {"models": order, "dm_models": dm_models, "decomposed": decomposed, "baselines": list(baselines)})


def stage_explain(run: Run) -> None:
    xcfg = run.cfg["explain"]
    manifest = run.require("train")
    out = run.stage_dir("explain")
    with timed("explain"):
        ds, frame, selected, split, _ = _designs(run)
        label = xcfg["model"] if xcfg["model"] in manifest["order"] else manifest["order"][-1]
        spec = FeatureSetSpec.parse(label)
        design = build_design(ds, frame, spec, selected)
        train, test = design.split(split)
        base_cols = build_design(ds, frame, FeatureSetSpec()).columns
        text_cols = [c for c in design.columns if c not in base_cols][: xcfg["max_features"]]
        payload: dict[str, Any] = {"model": label, "features": text_cols}
        if not text_cols:
            logger.warning("model %s has no textual columns; nothing to explain", label)
            for name in ("pearson.csv", "lime.csv", "effects.csv"):
                (out / name).write_text("", encoding="utf-8")
            run.write_manifest("explain", payload)
            return

        cells = []
        for col in text_cols:
            cells += ex.pearson_grid(col, frame[col], ds.dates, ds.demand)
        grid = ex.cells_frame(cells)
        _write_csv(grid, out / "pearson.csv")
        (out / "pearson.svg").write_text(_heatmap_svg(grid), encoding="utf-8")

        seed = manifest["models"][label]["seeds"][0]
        model = ExtraTreesModel.load(run.out / "train" / "models" / f"{_slug(label)}__seed{seed}.npz")
        mean, scale = train.X.mean(axis=0), train.X.std(axis=0)
        picks = np.unique(np.linspace(0, len(test) - 1, min(xcfg["lime_days"], len(test))).round().astype(int))
        lime_rows = []
        for i in picks:
            rep = ex.lime_explain(
                model.predict, test.X[i], mean, scale, design.columns, text_cols,
                n_samples=xcfg["lime_samples"], kernel_width=xcfg["kernel_width"], seed=run.seed, date=test.target_dates[i],
            )
            for name, c, sc, se in zip(rep.features, rep.coefficients, rep.std_coefficients, rep.std_errors):
                lime_rows.append({"date": rep.instance, "feature": name, "coefficient": c, "std_coefficient": sc, "std_error": se, "r2": rep.r2, "kernel_width": rep.kernel_width, "n_samples": rep.n_samples, "ridge": rep.ridge})
        _write_csv(pd.DataFrame(lime_rows), out / "lime.csv")

        nuisance = ExtraTreesConfig(seed=run.seed, **xcfg["nuisance"])
        confounders = train.X[:, [design.columns.index(c) for c in base_cols]]
        effects = []
        for col in text_cols:
            treatment = train.X[:, design.columns.index(col)]
            try:
                rep = ex.effect_profile(col, treatment, confounders, train.Y, nuisance, xcfg["cross_fit"], run.jobs)
            except ex.TreatmentExplained as exc:
                logger.warning("double ML skipped for %s: %s", col, exc)
                continue
            effects.append(rep.frame())
        if effects:
            _write_csv(pd.concat(effects, ignore_index=True), out / "effects.csv")
        else:
            (out / "effects.csv").write_text("", encoding="utf-8")
        payload["lime_days"] = [test.target_dates[i] for i in picks]
    run.write_manifest("explain", payload)


def _heatmap_svg(grid: pd.DataFrame) -> str:
    """Hour x (season, day type) heatmap of r per feature, significant cells outlined."""
    strata = [(s, d) for s in ex.SEASONS for d in ex.DAY_TYPES]
    features = list(dict.fromkeys(grid["feature"]))
    cw, ch, left, top = 14, 12, 230, 20
    block = len(strata) * ch + 30
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{left + 24 * cw + 10}" height="{top + block * len(features)}" font-family="sans-serif" font-size="9">']
    lookup = {(r.feature, r.hour, r.season, r.day_type): r for r in grid.itertuples()}
    for fi, feat in enumerate(features):
        y0 = top + fi * block
        parts.append(f'<text x="2" y="{y0 - 4}">{feat}</text>')
        for si, (season, dtype) in enumerate(strata):
            parts.append(f'<text x="2" y="{y0 + si * ch + 9}">{season}/{dtype}</text>')
            for h in range(24):
                cell = lookup[(feat, h, season, dtype)]
                r = 0.0 if np.isnan(cell.r) else float(cell.r)
                fade = int(round(255 * (1 - abs(r))))
                colour = f"rgb(255,{fade},{fade})" if r >= 0 else f"rgb({fade},{fade},255)"
                stroke = ' stroke="black"' if cell.significant else ""
                parts.append(f'<rect x="{left + h * cw}" y="{y0 + si * ch}" width="{cw}" height="{ch}" fill="{colour}"{stroke}/>')
    parts.append("</svg>\n")
    return "\n".join(parts)


# --------------------------------------------------------------- report


def _fmt(row: pd.Series, name: str) -> str:
    std = row.get(f"{name}_std", 0.0)
    return f"{row[name]:.2f}" if not std else f"{row[name]:.2f}±{std:.2f}"


def stage_report(run: Run) -> None:
    eval_manifest = run.require("evaluate")
    run.require("select")
    out = run.stage_dir("report")
    ed = run.out / "evaluate"
    metrics = pd.read_csv(ed / "metrics.csv").set_index("model")
    sel = json.loads((run.out / "select" / "selected.json").read_text(encoding="utf-8"))
    dm_bench = pd.read_csv(ed / "dm_vs_benchmark.csv").set_index("model")["p_vs_benchmark"] if (ed / "dm_vs_benchmark.csv").is_file() else pd.Series(dtype=float)
    lines = [f"# Forecasting report", "", f"config hash: `{run.hash}`, seed: {run.seed}", ""]

    lines += ["## Benchmark models", "", "| Features | rmse (MW) | mae (MW) | smape (%) |", "|---|---|---|---|"]
    for name in ("official", "persistence_d7"):
        if name in metrics.index:
            r = metrics.loc[name]
            lines.append(f"| {name} | {_fmt(r, 'rmse')} | {_fmt(r, 'mae')} | {_fmt(r, 'smape')} |")
    for label in ("D", "D+C", "D+T", "D+C+T"):
        if label in metrics.index:
            r = metrics.loc[label]
            lines.append(f"| {label} | {_fmt(r, 'rmse')} | {_fmt(r, 'mae')} | {_fmt(r, 'smape')} |")

    lines += ["", "## Adding one textual family to D+C+T", "", "Significance marks: * DM p < 0.05 against D+C+T.", "",
              "| Text type | Family | #Original | #Selected | rmse (MW) | mae (MW) | smape (%) |", "|---|---|---|---|---|---|---|"]
    if "D+C+T" in metrics.index:
        r = metrics.loc["D+C+T"]
        lines.append(f"| D+C+T | - | 0 | 0 | {_fmt(r, 'rmse')} | {_fmt(r, 'mae')} | {_fmt(r, 'smape')} |")
    for fid in ALL_FAMILY_IDS:
        if fid not in sel["families"]:
            continue
        family, text_type = parse_family_id(fid)
        info = sel["families"][fid]
        label = f"D+C+T+{fid}"
        cells = ["-", "-", "-"]
        if label in metrics.index:
            r = metrics.loc[label]
            star = "*" if float(dm_bench.get(label, 1.0)) < 0.05 else ""
            cells = [_fmt(r, m) + star for m in ("rmse", "mae", "smape")]
        lines.append(f"| {TEXT_TYPE_CODES[text_type]} | {FAMILY_CODES[family]} | {info['original']} | {len(info['selected'])} | " + " | ".join(cells) + " |")

    combos = [m for m in COMBINATIONS if m in metrics.index]
    if combos:
        lines += ["", "## Feature combinations", "", "| Model | Families | rmse (MW) | mae (MW) | smape (%) |", "|---|---|---|---|---|"]
        for m in combos:
            r = metrics.loc[m]
            lines.append(f"| {m} | {'+'.join(COMBINATIONS[m])} | {_fmt(r, 'rmse')} | {_fmt(r, 'mae')} | {_fmt(r, 'smape')} |")

    decomposed = eval_manifest["decomposed"]
    if decomposed:
        lines += ["", "## Weekdays and weekends", ""]
        header = "| Day type | " + " | ".join(f"{m} {k}" for k in ("rmse", "mae", "smape") for m in decomposed) + " |"
        lines += [header, "|" + "---|" * (1 + 3 * len(decomposed))]
        tables = {m: pd.read_csv(ed / f"daytype_{_slug(m)}.csv").set_index("day_type") for m in decomposed}
        for dtype in ("weekday", "weekend"):
            vals = [f"{tables[m].loc[dtype, k]:.2f}" for k in ("rmse", "mae", "smape") for m in decomposed]
            lines.append(f"| {dtype} | " + " | ".join(vals) + " |")

    matrix = pd.read_csv(ed / "dm_matrix.csv", index_col=0)
    lines += ["", "## DM test p-values", "", "Entry (row, column) tests whether the column model is more accurate than the row model.", ""]
    lines += ["| | " + " | ".join(matrix.columns) + " |", "|" + "---|" * (1 + len(matrix.columns))]
    for row in matrix.index:
        cells = []
        for col in matrix.columns:
            p = float(matrix.loc[row, col])
            mark = "**" if p < 0.01 else "*" if p < 0.05 else ""
            cells.append(f"{p:.4f}{mark}")
        lines.append(f"| {row} | " + " | ".join(cells) + " |")

    effects = run.out / "explain" / "effects.csv"
    if effects.is_file() and effects.stat().st_size:
        eff = pd.read_csv(effects)
        lines += ["", "## Treatment effects (half-hours with p < 0.05)", "", "| Feature | retained half-hours | mean retained tau |", "|---|---|---|"]
        for feat, grp in eff.groupby("feature", sort=False):
            kept = grp[grp["retained"] == 1]
            mean_tau = f"{kept['tau'].mean():.3f}" if len(kept) else "-"
            lines.append(f"| {feat} | {len(kept)} | {mean_tau} |")
    (out / "report.md").write_text("\n".join(lines) + "\n", encoding="utf-8")
    run.write_manifest("report", {"sections": ["benchmarks", "families", "combinations", "daytypes", "dm"]})


STAGE_FUNCS = {
    "synth": stage_synth,
    "features": stage_features,
    "select": stage_select,
    "train": stage_train,
    "evaluate": stage_evaluate,
    "explain": stage_explain,
    "report": stage_report,
}


def run_stage(stage: str, cfg: dict, out: str | Path, jobs: int = 1) -> Run:
    if stage not in STAGE_FUNCS:
        raise PipelineError(f"unknown stage {stage!r}")
    run = Run(cfg, out, jobs)
    STAGE_FUNCS[stage](run)
    return run
