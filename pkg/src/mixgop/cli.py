"""Command-line pipeline: train, score, evaluate, ablate, analyze.

Configuration comes from an optional JSON file with flag overrides (flags
win). Every run resolves to a canonical config whose SHA-256 prefix is
embedded in all outputs, and all randomness derives from the config seed,
so a rerun with the same config produces byte-identical artifacts.

Exit codes: 0 success, 1 usage error, 2 data/model error, 3 numerical
failure. Errors are emitted as one-line JSON on stderr.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import allophony, attention, classifier, gmm, ood
from .errors import DataError, MixgopError, NumericalFailure
from .evaluate import (
    REPORT_COLUMNS,
    ScoreTable,
    build_score_table,
    evaluate,
)
from .feature_store import (
    FeatureSet,
    PhonemeInventory,
    dump_json,
    dump_manifest_summary,
    load_feature_set,
    load_natural_classes,
    subsample_per_phoneme,
)

CLASSIFIER_METHODS = classifier.GOP_METHODS
GMM_METHODS = ("mixgop", "mixgop_attn")
DETECTOR_METHODS = ("knn", "osvm", "p_osvm")
METHODS = CLASSIFIER_METHODS + DETECTOR_METHODS + GMM_METHODS

WORKERS_ENV = "MIXGOP_WORKERS"

ABLATION_COLUMNS = (
    "cap",
    "n_components",
    "status",
    "n",
    "kendall_tau",
    "abs_kendall_tau",
    "reason",
    "config_hash",
)
ANMI_COLUMNS = ("encoder_tag", "layer_index", "phoneme", "n", "anmi", "config_hash")
ATTENTION_COLUMNS = ("phoneme", "fold", "logit", "weight", "config_hash")


class UsageError(MixgopError):
    """Bad flags, enums, or config keys: exit code 1."""


DEFAULT_CONFIG = {
    "manifest": None,
    "method": "mixgop",
    "out_dir": None,
    "seed": 0,
    "split": "test",
    "level": "utterance",
    "subsample_cap": 512,
    "gmm": {
        "n_components": 32,
        "covariance_mode": "full",
        "reg_covar": 1e-6,
        "max_em_iters": 100,
        "tol": 1e-3,
    },
    "adam": {
        "lr": 1e-3,
        "beta1": 0.9,
        "beta2": 0.999,
        "epsilon": 1e-8,
        "max_iters": 500,
    },
    "knn": {"quantile": 0.10},
    "osvm": {"nu": 0.5, "gamma": "scale"},
    "attention": {
        "folds": 5,
        "lr": 1e-2,
        "max_iters": 200,
        "regularization_strength": 1.0,
    },
    "allophony": {"k": 32, "split": "train", "class_table": None},
}


def _merge(base: dict, override: dict) -> dict:
    out = dict(base)
    for key, value in override.items():
        if key not in base:
            raise UsageError(f"unknown config key {key!r}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise UsageError(f"config key {key!r} must be an object")
            out[key] = _merge(base[key], value)
        else:
            out[key] = value
    return out


def resolve_config(args: argparse.Namespace) -> dict:
    """config file -> defaults -> flag overrides; flags win."""
    cfg = dict(DEFAULT_CONFIG)
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.exists():
            raise UsageError(f"config file {path} does not exist")
        try:
            file_cfg = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise UsageError(f"config file is not valid JSON: {exc}") from exc
        cfg = _merge(cfg, file_cfg)

    flat_flags = {
        "manifest": "manifest",
        "method": "method",
        "out_dir": "out_dir",
        "seed": "seed",
        "split": "split",
        "level": "level",
    }
    for flag, key in flat_flags.items():
        value = getattr(args, flag, None)
        if value is not None:
            cfg[key] = value
    if getattr(args, "subsample_cap", None) is not None:
        cap = args.subsample_cap
        cfg["subsample_cap"] = None if cap == "full" else int(cap)
    nested_flags = {
        "n_components": ("gmm", "n_components"),
        "covariance_mode": ("gmm", "covariance_mode"),
        "folds": ("attention", "folds"),
        "k_clusters": ("allophony", "k"),
        "class_table": ("allophony", "class_table"),
        "epsilon_rank": ("attention", "regularization_strength"),
    }
    for flag, (section, key) in nested_flags.items():
        value = getattr(args, flag, None)
        if value is not None:
            cfg[section][key] = value

    if cfg["method"] not in METHODS:
        raise UsageError(f"method must be one of {METHODS}, got {cfg['method']!r}")
    if cfg["level"] not in ("utterance", "segment"):
        raise UsageError("level must be 'utterance' or 'segment'")
    if cfg["split"] not in ("train", "test"):
        raise UsageError("split must be 'train' or 'test'")
    if not cfg["manifest"]:
        raise UsageError("a manifest is required (--manifest or config file)")
    if not cfg["out_dir"]:
        raise UsageError("an output directory is required (--out-dir or config file)")
    return cfg


def config_hash(cfg: dict) -> str:
    canon = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()[:12]


def _write_csv(path: Path, columns, rows) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow(row)
    path.write_text(buf.getvalue(), encoding="utf-8")


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _sanitize(symbol: str) -> str:
    return "".join(c if c.isalnum() else f"_{ord(c):02x}" for c in symbol)


# -- training --------------------------------------------------------------


def _gmm_params(cfg: dict) -> dict:
    g = cfg["gmm"]
    return {
        "n_components": g["n_components"],
        "covariance_mode": g["covariance_mode"],
        "reg_covar": g["reg_covar"],
        "max_iter": g["max_em_iters"],
        "tol": g["tol"],
    }


def _train_feature_set(cfg: dict) -> FeatureSet:
    fs = load_feature_set(cfg["manifest"])
    if cfg["method"] in GMM_METHODS and cfg["subsample_cap"] is not None:
        fs = subsample_per_phoneme(fs, cfg["subsample_cap"], cfg["seed"])
    return fs


def cmd_train(cfg: dict) -> dict:
    fs = _train_feature_set(cfg)
    out = Path(cfg["out_dir"])
    models_dir = out / "models"
    models_dir.mkdir(parents=True, exist_ok=True)
    chash = config_hash(cfg)
    dump_json({"config": cfg, "config_hash": chash}, out / "config.json")

    method = cfg["method"]
    log: dict = {"method": method, "config_hash": chash}
    if method in CLASSIFIER_METHODS:
        a = cfg["adam"]
        clf = classifier.train_classifier(
            fs,
            lr=a["lr"],
            beta1=a["beta1"],
            beta2=a["beta2"],
            epsilon=a["epsilon"],
            max_iter=a["max_iters"],
        )
        classifier.save_classifier(clf, models_dir / "classifier.json")
        log["loss_curve"] = clf.loss_curve_
        log["final_loss"] = clf.loss_curve_[-1]
    elif method in GMM_METHODS:
        models = gmm.fit_phoneme_gmms(fs, seed=cfg["seed"], **_gmm_params(cfg))
        log["phonemes"] = {}
        for phoneme, model in models.items():
            gmm.save_gmm(model, phoneme, models_dir / f"gmm_{_sanitize(phoneme)}.json")
            log["phonemes"][phoneme] = {
                "em_iterations": model.n_iter_,
                "converged": model.converged_,
                "ll_curve": model.ll_curve_,
            }
    elif method == "knn":
        indexes = ood.fit_knn_indexes(fs, quantile=cfg["knn"]["quantile"])
        for phoneme, index in indexes.items():
            ood.save_knn(index, phoneme, models_dir / f"knn_{_sanitize(phoneme)}.json")
        return {"out_dir": str(out), "config_hash": chash}  # no optimization log
    elif method == "osvm":
        model = ood.fit_global_ocsvm(fs, nu=cfg["osvm"]["nu"], gamma=cfg["osvm"]["gamma"])
        ood.save_ocsvm(model, "global", models_dir / "osvm_global.json")
        log["n_iter"] = model.n_iter_
        log["converged"] = model.converged_
    elif method == "p_osvm":
        models = ood.fit_per_phoneme_ocsvm(
            fs, nu=cfg["osvm"]["nu"], gamma=cfg["osvm"]["gamma"]
        )
        log["phonemes"] = {}
        for phoneme, model in models.items():
            ood.save_ocsvm(
                model, phoneme, models_dir / f"osvm_p_{_sanitize(phoneme)}.json"
            )
            log["phonemes"][phoneme] = {
                "n_iter": model.n_iter_,
                "converged": model.converged_,
            }
    dump_json(log, out / "train_log.json")
    return {"out_dir": str(out), "config_hash": chash}


# -- scoring ---------------------------------------------------------------


def _load_per_phoneme(models_dir: Path, prefix: str, loader) -> dict:
    models = {}
    for header in sorted(models_dir.glob(f"{prefix}*.json")):
        phoneme, model = loader(header)
        models[phoneme] = model
    return models


def _score_rows(cfg: dict, fs: FeatureSet, split: str) -> dict[int, float]:
    method = cfg["method"]
    models_dir = Path(cfg["out_dir"]) / "models"
    if not models_dir.exists():
        raise DataError(f"no models directory at {models_dir}; run train first")
    if method in CLASSIFIER_METHODS:
        path = models_dir / "classifier.json"
        if not path.exists():
            raise DataError(f"missing artifact {path}")
        clf = classifier.load_classifier(path)
        return classifier.classifier_scores(clf, fs, split, method)
    if method in GMM_METHODS:
        models = _load_per_phoneme(models_dir, "gmm_", gmm.load_gmm)
        if not models:
            raise DataError(f"no gmm artifacts in {models_dir}")
        return gmm.score_rows_by_phoneme(models, fs, split)
    if method == "knn":
        models = _load_per_phoneme(models_dir, "knn_", ood.load_knn)
        if not models:
            raise DataError(f"no knn artifacts in {models_dir}")
        return ood.detector_scores(models, fs, split)
    if method == "osvm":
        path = models_dir / "osvm_global.json"
        if not path.exists():
            raise DataError(f"missing artifact {path}")
        _, model = ood.load_ocsvm(path)
        return ood.detector_scores(model, fs, split)
    # p_osvm
    models = _load_per_phoneme(models_dir, "osvm_p_", ood.load_ocsvm)
    if not models:
        raise DataError(f"no per-phoneme osvm artifacts in {models_dir}")
    return ood.detector_scores(models, fs, split)


def _score_table(cfg: dict, fs: FeatureSet, split: str) -> ScoreTable:
    return build_score_table(fs, _score_rows(cfg, fs, split), cfg["method"])


def _write_scores(table: ScoreTable, path: Path, chash: str) -> None:
    columns = ("method_tag", "utterance_id", "segment_index", "phoneme", "score",
               "config_hash")
    rows = [
        [e.method_tag, e.utterance_id, e.segment_index, e.phoneme, repr(e.score), chash]
        for e in table.entries
    ]
    _write_csv(path, columns, rows)


def cmd_score(cfg: dict) -> dict:
    fs = load_feature_set(cfg["manifest"])
    table = _score_table(cfg, fs, cfg["split"])
    out = Path(cfg["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    chash = config_hash(cfg)
    path = out / f"scores_{cfg['method']}_{cfg['split']}.csv"
    _write_scores(table, path, chash)
    return {"scores": str(path), "n": len(table), "config_hash": chash}


def cmd_evaluate(cfg: dict) -> dict:
    fs = load_feature_set(cfg["manifest"])
    out = Path(cfg["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    chash = config_hash(cfg)
    table = _score_table(cfg, fs, cfg["split"])
    _write_scores(table, out / f"scores_{cfg['method']}_{cfg['split']}.csv", chash)

    if cfg["method"] == "mixgop_attn":
        att = cfg["attention"]
        poolers, report = attention.train_attention(
            table,
            fs,
            folds=att["folds"],
            lr=att["lr"],
            max_iter=att["max_iters"],
            regularization_strength=att["regularization_strength"],
            seed=cfg["seed"],
        )
        _write_attention_outputs(poolers, report, fs, out, chash)
    else:
        report = evaluate(table, fs, cfg["level"])

    stem = f"report_{cfg['method']}_{report.level}"
    payload = report.to_dict()
    payload["config_hash"] = chash
    dump_json(payload, out / f"{stem}.json")
    _write_csv(out / f"{stem}.csv", REPORT_COLUMNS + ("config_hash",),
               [report.as_row() + [chash]])
    return {
        "report": str(out / f"{stem}.json"),
        "kendall_tau": report.kendall_tau,
        "abs_kendall_tau": report.abs_kendall_tau,
        "n": report.n,
        "config_hash": chash,
    }


def _write_attention_outputs(poolers, report, fs, out: Path, chash: str) -> None:
    import numpy as np

    rows = []
    logits = np.stack([p.w_ for p in poolers])
    weights = np.exp(logits - logits.max(axis=1, keepdims=True))
    weights /= weights.sum(axis=1, keepdims=True)
    for f, _pooler in enumerate(poolers):
        for i, phoneme in enumerate(fs.inventory):
            rows.append([phoneme, f, repr(float(logits[f, i])),
                         repr(float(weights[f, i])), chash])
    mean_w = weights.mean(axis=0)
    mean_l = logits.mean(axis=0)
    for i, phoneme in enumerate(fs.inventory):
        rows.append([phoneme, "mean", repr(float(mean_l[i])),
                     repr(float(mean_w[i])), chash])
    _write_csv(out / "attention_weights.csv", ATTENTION_COLUMNS, rows)
    payload = report.to_dict()
    payload["config_hash"] = chash
    dump_json(payload, out / "attention_report.json")


# -- ablation ----------------------------------------------------------------


def _ablate_point(cfg: dict, cap, n_components: int) -> list:
    point_cfg = json.loads(json.dumps(cfg))  # deep copy
    point_cfg["subsample_cap"] = cap
    point_cfg["gmm"]["n_components"] = n_components
    fs = _train_feature_set(point_cfg)

    from .feature_store import group_by_phoneme

    counts = {p: len(rows) for p, rows in group_by_phoneme(fs, "train").items()}
    min_count = min(counts.values()) if counts else 0
    cap_label = "full" if cap is None else cap
    if n_components > min_count:
        return [cap_label, n_components, "skipped", "", "", "",
                f"insufficient phoneme samples (min {min_count})", ""]
    models = gmm.fit_phoneme_gmms(fs, seed=point_cfg["seed"], **_gmm_params(point_cfg))
    full_fs = load_feature_set(point_cfg["manifest"])
    scores = gmm.score_rows_by_phoneme(models, full_fs, point_cfg["split"])
    table = build_score_table(full_fs, scores, "mixgop")
    report = evaluate(table, full_fs, point_cfg["level"])
    return [cap_label, n_components, "ok", report.n, repr(report.kendall_tau),
            repr(report.abs_kendall_tau), "", ""]


def cmd_ablate(cfg: dict, caps, components) -> dict:
    if cfg["method"] not in GMM_METHODS:
        raise UsageError("ablate sweeps the mixture method; use --method mixgop")
    out = Path(cfg["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    chash = config_hash(cfg)
    grid = [(cap, comp) for cap in caps for comp in components]
    workers = int(os.environ.get(WORKERS_ENV, "1"))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_ablate_point, cfg, cap, comp) for cap, comp in grid]
            rows = [f.result() for f in futures]
    else:
        rows = [_ablate_point(cfg, cap, comp) for cap, comp in grid]
    for row in rows:
        row[-1] = chash
    path = out / "ablation_mixgop.csv"
    _write_csv(path, ABLATION_COLUMNS, rows)
    return {"grid": str(path), "points": len(rows), "config_hash": chash}


# -- analysis ----------------------------------------------------------------


def cmd_analyze(cfg: dict) -> dict:
    fs = load_feature_set(cfg["manifest"])
    out = Path(cfg["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    chash = config_hash(cfg)

    table = load_natural_classes(cfg["allophony"]["class_table"])
    inventory = PhonemeInventory.with_classes(fs.inventory, table)
    assignments, envs = allophony.analyze_allophony(
        fs,
        inventory,
        k=cfg["allophony"]["k"],
        seed=cfg["seed"],
        split=cfg["allophony"]["split"],
    )
    per_phoneme = allophony.anmi_by_phoneme(assignments, envs)
    pooled = allophony.anmi(assignments, envs)
    rows = [
        [fs.encoder_tag, fs.layer_index, phoneme, n,
         "" if value is None else repr(value), chash]
        for phoneme, (n, value) in sorted(per_phoneme.items())
    ]
    rows.append([fs.encoder_tag, fs.layer_index, "*",
                 sum(n for n, _ in per_phoneme.values()), repr(pooled), chash])
    _write_csv(out / "anmi.csv", ANMI_COLUMNS, rows)

    result = {"anmi": str(out / "anmi.csv"), "anmi_pooled": pooled,
              "config_hash": chash}

    # attention CV over mixgop scores; reuse trained mixtures when present
    models_dir = Path(cfg["out_dir"]) / "models"
    models = (
        _load_per_phoneme(models_dir, "gmm_", gmm.load_gmm)
        if models_dir.exists()
        else {}
    )
    if not models:
        models = gmm.fit_phoneme_gmms(
            _train_feature_set({**cfg, "method": "mixgop"}),
            seed=cfg["seed"],
            **_gmm_params(cfg),
        )
    scores = gmm.score_rows_by_phoneme(models, fs, "test")
    table_scores = build_score_table(fs, scores, "mixgop")
    att = cfg["attention"]
    try:
        poolers, report = attention.train_attention(
            table_scores,
            fs,
            folds=att["folds"],
            lr=att["lr"],
            max_iter=att["max_iters"],
            regularization_strength=att["regularization_strength"],
            seed=cfg["seed"],
        )
    except MixgopError as exc:
        result["attention"] = f"skipped: {exc}"
        return result
    _write_attention_outputs(poolers, report, fs, out, chash)

    # layerwise scatter row: pooled allophony metric vs downstream tau
    plain = evaluate(table_scores, fs, cfg["level"])
    _write_csv(
        out / "anmi_vs_tau.csv",
        ("encoder_tag", "layer_index", "anmi_pooled", "method_tag",
         "kendall_tau", "abs_kendall_tau", "config_hash"),
        [[fs.encoder_tag, fs.layer_index, repr(pooled), plain.method_tag,
          repr(plain.kendall_tau), repr(plain.abs_kendall_tau), chash]],
    )
    result["attention_report"] = str(out / "attention_report.json")
    result["mean_post_tau"] = report.kendall_tau
    return result


def cmd_validate_manifest(path: str) -> dict:
    fs = load_feature_set(path)
    return {"valid": True, **dump_manifest_summary(fs)}


# -- entry point --------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors must exit 1, not argparse's 2
        raise UsageError(message)


def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", help="JSON config file; flags override it")
    sub.add_argument("--manifest", help="feature manifest path")
    sub.add_argument("--out-dir", dest="out_dir", help="output directory")
    sub.add_argument("--method", choices=METHODS)
    sub.add_argument("--seed", type=int)
    sub.add_argument("--split", choices=("train", "test"))
    sub.add_argument("--level", choices=("utterance", "segment"))
    sub.add_argument("--subsample-cap", dest="subsample_cap",
                     help="max train rows per phoneme, or 'full'")
    sub.add_argument("--n-components", dest="n_components", type=int)
    sub.add_argument("--covariance-mode", dest="covariance_mode",
                     choices=("full", "diagonal"))
    sub.add_argument("--folds", type=int)
    sub.add_argument("--k-clusters", dest="k_clusters", type=int)
    sub.add_argument("--class-table", dest="class_table")
    sub.add_argument("--epsilon-rank", dest="epsilon_rank", type=float,
                     help="soft-rank regularization strength")


def build_parser() -> _Parser:
    parser = _Parser(prog="mixgop", description=__doc__)
    subs = parser.add_subparsers(dest="command", required=True)
    for name in ("train", "score", "evaluate", "analyze"):
        _add_common(subs.add_parser(name))
    ablate = subs.add_parser("ablate")
    _add_common(ablate)
    ablate.add_argument("--caps", default="64,128,256,512,full",
                        help="comma-separated subsample caps")
    ablate.add_argument("--components", default="4,8,16,32,64",
                        help="comma-separated mixture sizes")
    validate = subs.add_parser("validate-manifest")
    validate.add_argument("manifest_path")
    return parser


def _run(args: argparse.Namespace) -> dict:
    if args.command == "validate-manifest":
        return cmd_validate_manifest(args.manifest_path)
    cfg = resolve_config(args)
    if args.command == "train":
        return cmd_train(cfg)
    if args.command == "score":
        return cmd_score(cfg)
    if args.command == "evaluate":
        return cmd_evaluate(cfg)
    if args.command == "analyze":
        return cmd_analyze(cfg)
    # ablate
    caps = [None if c == "full" else int(c) for c in args.caps.split(",")]
    components = [int(c) for c in args.components.split(",")]
    return cmd_ablate(cfg, caps, components)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        result = _run(args)
    except UsageError as exc:
        _emit_error(exc, 1)
        return 1
    except NumericalFailure as exc:
        _emit_error(exc, 3)
        return 3
    except (MixgopError, OSError) as exc:
        _emit_error(exc, 2)
        return 2
    print(json.dumps(result, sort_keys=True))
    return 0


def _emit_error(exc: Exception, code: int) -> None:
    print(
        json.dumps(
            {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
        ),
        file=sys.stderr,
    )


if __name__ == "__main__":
    sys.exit(main())
