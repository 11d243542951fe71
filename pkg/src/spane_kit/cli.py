"""Command-line driver: ``spane-kit <command> --config <json> [--seed N] [--out DIR] [--jobs N]``.

Exit status is 0 on success, 2 for configuration errors and 3 for data
errors. Every run writes ``run_<command>.log`` into the output directory:
a timestamp line followed by a JSON record of the resolved configuration,
package version, kernel backend and counts. Report files never contain the
timestamp, so identical configs and seeds reproduce them byte for byte.
"""

import argparse
import csv
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__, corpus, distortion, kernels, knn_convert, privacy, prosody, synth, utility

EXIT_OK, EXIT_CONFIG, EXIT_DATA = 0, 2, 3
COMMANDS = ("synth", "convert", "features", "distort", "privacy", "utility", "wer", "report")


class ConfigError(Exception):
    pass


DEFAULTS = {
    "synth": {
        "n_hc": 10, "n_pd": 10, "groups": "default", "utterances_per_speaker": 4,
        "task": "sentences", "genders": "MF", "sample_rate": 16000,
        "conditions": {"original": None},
        "frames": None,
        "targets": None,
    },
    "convert": {"manifest": None, "targets": None, "k": 4, "policy": "same_gender",
                "name": "knn"},
    "features": {"manifest": None, "output": "features.csv", "prosody": {}},
    "distort": {"original": None, "anonymized": None, "k": 3, "output": "distortion.csv"},
    "privacy": {"manifest": None, "embeddings": None, "per_speaker_trials": 20,
                "per_speaker_enroll": 20, "output": "privacy.csv",
                "embeddings_output": "embeddings.csv"},
    "utility": {"manifest": None, "conditions": None, "pairs": None, "folds": 5,
                "seeds": [0, 1, 2, 3, 4], "output": "utility.csv", "probe": {}},
    "wer": {"input": None, "output": "wer.csv"},
    "report": {"distortion": None, "privacy": None, "utility": None, "wer": None,
               "summary": "summary.csv", "plot_data": "plot_data.csv",
               "summary_kv": "summary.json"},
}
REQUIRED = {
    "convert": ("manifest", "targets"), "features": ("manifest",),
    "distort": ("original", "anonymized"), "privacy": ("manifest",),
    "utility": ("manifest", "conditions"), "wer": ("input",),
}
PATH_KEYS = {"manifest", "targets", "original", "anonymized", "embeddings", "input",
             "distortion", "privacy", "utility", "wer"}


def resolve_config(command, raw, base):
    """Merge ``raw`` over the command defaults; input paths resolve against ``base``."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    cfg = json.loads(json.dumps(DEFAULTS[command]))
    unknown = sorted(set(raw) - set(cfg) - {"seed"})
    if unknown:
        raise ConfigError(f"unknown config key(s) for '{command}': {', '.join(unknown)}")
    cfg.update({k: v for k, v in raw.items() if k != "seed"})
    for key in REQUIRED.get(command, ()):
        if cfg.get(key) is None:
            raise ConfigError(f"'{command}' needs config key '{key}'")
    for key in PATH_KEYS & set(cfg):
        if isinstance(cfg[key], str):
            cfg[key] = str(corpus.resolve(base / "_", cfg[key]))
    if command == "utility" and isinstance(cfg["conditions"], dict):
        cfg["conditions"] = {k: str(corpus.resolve(base / "_", v))
                             for k, v in cfg["conditions"].items()}
    return cfg


class Run:
    """Output directory, seed and counters of one invocation."""

    def __init__(self, command, cfg, seed, out, jobs):
        self.command, self.cfg, self.seed, self.jobs = command, cfg, seed, jobs
        self.out = Path(out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.counts = {}

    def count(self, key, n):
        self.counts[key] = self.counts.get(key, 0) + int(n)

    def write_log(self):
        record = {"command": self.command, "version": __version__, "backend": kernels.BACKEND,
                  "seed": self.seed, "jobs": self.jobs, "config": self.cfg,
                  "counts": dict(sorted(self.counts.items()))}
        with open(self.out / f"run_{self.command}.log", "w", encoding="utf-8") as fh:
            fh.write(f"timestamp: {time.strftime('%Y-%m-%dT%H:%M:%S%z')}\n")
            fh.write(json.dumps(record, indent=2, sort_keys=True) + "\n")


def _groups(spec):
    if isinstance(spec, str):
        if spec not in synth.GROUP_PRESETS:
            raise ConfigError(f"unknown group preset '{spec}' "
                              f"(choose from {', '.join(sorted(synth.GROUP_PRESETS))})")
        return synth.GROUP_PRESETS[spec]
    try:
        return {g: synth.GroupDistribution(**{k: tuple(v) if isinstance(v, list) else v
                                              for k, v in d.items()})
                for g, d in spec.items()}
    except (TypeError, AttributeError) as exc:
        raise ConfigError(f"bad group distribution: {exc}") from None


def cmd_synth(run):
    cfg = run.cfg
    try:
        conditions = {name: (None if pols is None else [synth.parse_policy(p) for p in pols])
                      for name, pols in cfg["conditions"].items()}
    except synth.SynthError as exc:
        raise ConfigError(str(exc)) from None
    if "original" not in conditions:
        raise ConfigError("synth conditions must include 'original'")
    cohort = synth.synth_cohort(cfg["n_hc"], cfg["n_pd"], _groups(cfg["groups"]), run.seed,
                                cfg["utterances_per_speaker"], cfg["task"], cfg["sample_rate"],
                                cfg["genders"])
    synth.write_spec_file(cohort, run.out / "specs.jsonl")
    fcfg = dict(cfg["frames"] or {})
    scramble = set(fcfg.pop("scramble", []))
    fps = fcfg.pop("frames_per_second", 50)
    model = synth.FrameModel(seed=run.seed, **fcfg) if cfg["frames"] is not None else None
    for name, pols in sorted(conditions.items()):
        synth.write_cohort(cohort, run.out, pols, model, fps, name, scramble=name in scramble)
    run.count("utterances", len(cohort.records))
    run.count("conditions", len(conditions))
    if cfg["targets"] is not None:
        if model is None:
            raise ConfigError("'targets' needs a 'frames' model")
        recs = synth.write_targets(model, run.out, **cfg["targets"])
        run.count("target_utterances", len(recs))


def _load_matrices(manifest_path, records):
    out = {}
    for r in records:
        if r.feature_path is None:
            raise corpus.CorpusError(f"{manifest_path}: record '{r.id}' has no feature_path")
        try:
            out[r.id] = corpus.read_fmat(corpus.resolve(manifest_path, r.feature_path))
        except corpus.CorpusError as exc:
            raise corpus.CorpusError(f"{manifest_path}: record '{r.id}': {exc}") from None
    return out


def cmd_convert(run):
    cfg = run.cfg
    try:
        ccfg = knn_convert.ConversionConfig(cfg["k"], run.seed, cfg["policy"])
    except knn_convert.ConversionError as exc:
        raise ConfigError(str(exc)) from None
    records = corpus.load_manifest(cfg["manifest"])
    target_recs = corpus.load_manifest(cfg["targets"])
    src = _load_matrices(cfg["manifest"], records)
    tmats = _load_matrices(cfg["targets"], target_recs)
    by_spk = {}
    for r in target_recs:
        by_spk.setdefault((r.speaker, r.gender), []).append(tmats[r.id])
    pools = [knn_convert.build_pool(spk, g, mats) for (spk, g), mats in sorted(by_spk.items())]
    run.count("pool_dropped_rows", sum(p.dropped for p in pools))
    name = cfg["name"]
    (run.out / "fmat" / name).mkdir(parents=True, exist_ok=True)
    out_recs = []
    for r in sorted(records, key=lambda r: r.id):
        pool = knn_convert.select_target(r, pools, ccfg)
        m, info = knn_convert.convert(src[r.id], pool, ccfg.k, return_info=True)
        rel = f"fmat/{name}/{r.id}.fmat"
        corpus.write_fmat(m, run.out / rel)
        run.count("passthrough_rows", info.zero_rows)
        out_recs.append(corpus.UtteranceRecord(r.id, r.speaker, r.gender, r.group, r.task,
                                               None, rel, r.transcript))
    corpus.write_manifest(out_recs, run.out / f"manifest_{name}.jsonl")
    run.count("utterances", len(out_recs))


def _summarize_one(args):
    path, pcfg = args
    return prosody.summarize(corpus.read_wav(path), pcfg)


def cmd_features(run):
    cfg = run.cfg
    try:
        pcfg = prosody.ProsodyConfig(**cfg["prosody"])
    except TypeError as exc:
        raise ConfigError(f"bad prosody config: {exc}") from None
    records = sorted(corpus.load_manifest(cfg["manifest"]), key=lambda r: r.id)
    for r in records:
        if r.audio_path is None:
            raise corpus.CorpusError(f"{cfg['manifest']}: record '{r.id}' has no audio_path")
    tasks = [(corpus.resolve(cfg["manifest"], r.audio_path), pcfg) for r in records]
    if run.jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=run.jobs) as ex:
            summaries = list(ex.map(_summarize_one, tasks, chunksize=4))
    else:
        summaries = [_summarize_one(t) for t in tasks]
    rows = list(zip([r.id for r in records], summaries))
    prosody.write_summaries(rows, run.out / cfg["output"])
    run.count("utterances", len(rows))
    for flag in ("no_voicing", "no_speech"):
        run.count(f"flag_{flag}", sum(flag in s.flags for _, s in rows))


def cmd_distort(run):
    cfg = run.cfg
    orig = distortion.FeatureTable.read_csv(cfg["original"])
    anon = distortion.FeatureTable.read_csv(cfg["anonymized"])
    std = distortion.fit_standardizer(orig)
    rep = distortion.distortion_report(orig, anon, std, cfg["k"])
    rep.write_csv(run.out / cfg["output"])
    run.count("utterances_original", len(orig.ids))
    run.count("utterances_paired", rep.rows[0].n if rep.rows else 0)
    run.count("degenerate_features", int(std.degenerate.sum()))


def cmd_privacy(run):
    cfg = run.cfg
    records = corpus.load_manifest(cfg["manifest"])
    proto = privacy.build_protocol(records, cfg["per_speaker_trials"], cfg["per_speaker_enroll"],
                                   run.seed)
    if cfg["embeddings"] is not None:
        emb = privacy.read_embeddings(cfg["embeddings"])
    else:
        bases = {i[:-2] if i[-2:] in privacy.HALF_SUFFIXES else i for i in proto.ids()}
        emb = privacy.protocol_embeddings(
            proto, _load_matrices(cfg["manifest"], [r for r in records if r.id in bases]))
        privacy.write_embeddings(run.out / cfg["embeddings_output"], emb)
    pooled, per_group = privacy.score_trials(proto, emb)
    rows = privacy.privacy_report(pooled, per_group)
    privacy.write_privacy_report(rows, run.out / cfg["output"])
    run.count("speakers", len(proto.speakers()))
    run.count("trials", pooled.genuine.size + pooled.impostor.size)


def cmd_utility(run):
    cfg = run.cfg
    records = corpus.load_manifest(cfg["manifest"])
    inputs = {}
    for cond, path in sorted(cfg["conditions"].items()):
        table = distortion.FeatureTable.read_csv(path)
        inputs[cond] = dict(zip(table.ids, table.values))
    pairs = cfg["pairs"] or [[c, c] for c in sorted(inputs)]
    try:
        pcfg = utility.ProbeConfig(**cfg["probe"])
    except TypeError as exc:
        raise ConfigError(f"bad probe config: {exc}") from None
    with open(run.out / cfg["output"], "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["train_cond", "eval_cond", "fold", "seed", "f1"])
        for tc, ec in pairs:
            rep = utility.cross_validate(records, inputs, tc, ec, cfg["folds"], cfg["seeds"], pcfg)
            for r in rep.rows:
                w.writerow([r.train_cond, r.eval_cond, r.fold, r.seed, repr(r.f1)])
            w.writerow([tc, ec, "ALL", "mean", repr(rep.mean)])
            w.writerow([tc, ec, "ALL", "std", repr(rep.std)])
            run.count("degenerate_folds", sum(r.degenerate for r in rep.rows))
    run.count("utterances", len(records))
    run.count("pairs", len(pairs))


def cmd_wer(run):
    cfg = run.cfg
    rows = []
    with open(cfg["input"], newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"id", "reference", "hypothesis"} <= set(reader.fieldnames):
            raise corpus.CorpusError(f"{cfg['input']}: need columns id, reference, hypothesis")
        for line_no, r in enumerate(reader, start=2):
            if not utility.normalize_text(r["reference"]):
                raise utility.UtilityError(f"{cfg['input']}: line {line_no}: empty reference")
            rows.append((r["id"], r["reference"], r["hypothesis"]))
    rows.sort(key=lambda t: t[0])
    utility.write_wer_report(rows, run.out / cfg["output"])
    run.count("utterances", len(rows))


def _read_rows(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def cmd_report(run):
    """Merge per-command CSVs into summary.csv, plot_data.csv and a key-value JSON."""
    cfg = run.cfg
    summary = []
    if cfg["distortion"]:
        rep = distortion.DistortionReport.read_csv(cfg["distortion"])
        rows = sorted(rep.rows, key=lambda r: (-r.emd, r.feature))
        with open(run.out / cfg["plot_data"], "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["feature", "emd", "mi"])
            for r in rows:
                w.writerow([r.feature, repr(r.emd), repr(r.mi)])
        for r in rows:
            summary.append(("distortion", r.feature, "emd", r.emd))
            summary.append(("distortion", r.feature, "mi", r.mi))
        run.count("features", len(rows))
    if cfg["privacy"]:
        for r in _read_rows(cfg["privacy"]):
            summary.append(("privacy", r["group"], "eer", float(r["eer"])))
    if cfg["utility"]:
        for r in _read_rows(cfg["utility"]):
            if r["fold"] == "ALL":
                summary.append(("utility", f"{r['train_cond']}->{r['eval_cond']}",
                                f"f1_{r['seed']}", float(r["f1"])))
    if cfg["wer"]:
        vals = np.array([float(r["wer"]) for r in _read_rows(cfg["wer"])])
        if vals.size:
            summary.append(("wer", "ALL", "mean", float(vals.mean())))
    with open(run.out / cfg["summary"], "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["section", "item", "metric", "value"])
        for s, item, metric, v in summary:
            w.writerow([s, item, metric, repr(v)])
    kv = {f"{s}.{item}.{metric}": v for s, item, metric, v in summary}
    with open(run.out / cfg["summary_kv"], "w", encoding="utf-8") as fh:
        fh.write(json.dumps(kv, indent=2, sort_keys=True) + "\n")
    run.count("summary_rows", len(summary))


HANDLERS = {"synth": cmd_synth, "convert": cmd_convert, "features": cmd_features,
            "distort": cmd_distort, "privacy": cmd_privacy, "utility": cmd_utility,
            "wer": cmd_wer, "report": cmd_report}


def build_parser():
    p = argparse.ArgumentParser(prog="spane-kit",
                                description="Prosody and speaker-identity evaluation toolkit.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", required=True, help="JSON config file")
    p.add_argument("--seed", type=int, default=None, help="global seed (default: config or 0)")
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--jobs", type=int, default=None, help="worker processes (default: all cores)")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        path = Path(args.config)
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from None
        cfg = resolve_config(args.command, raw, path.resolve().parent)
        seed = args.seed if args.seed is not None else int(raw.get("seed", 0) if isinstance(raw, dict) else 0)
        jobs = args.jobs if args.jobs is not None else (os.cpu_count() or 1)
        if jobs < 1:
            raise ConfigError("--jobs must be >= 1")
        run = Run(args.command, cfg, seed, args.out, jobs)
        HANDLERS[args.command](run)
        run.write_log()
    except ConfigError as exc:
        print(f"spane-kit {args.command}: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ValueError, OSError) as exc:
        print(f"spane-kit {args.command}: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
