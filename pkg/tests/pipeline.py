"""Small end-to-end CLI pipeline shared by the CLI and acceptance tests."""

import json
from pathlib import Path

from spane_kit.cli import main

SYNTH = {
    "n_hc": 3, "n_pd": 3, "groups": "marker", "utterances_per_speaker": 2,
    "conditions": {"original": None,
                   "degraded": ["f0_smooth", {"name": "energy_gain", "db": 6.0},
                                "jitter_remove", "pause_preserve"]},
    "frames": {"scramble": ["degraded"]}, "targets": {"n_speakers": 4, "n_frames": 60},
}
WER_ROWS = "id,reference,hypothesis\nu1,\"Hola, mundo.\",hola mundo\nu2,a b c,a x c\nu3,a,a b c\n"
REPORTS = ("specs.jsonl", "manifest.jsonl", "feat_orig.csv", "feat_deg.csv", "distortion.csv",
           "manifest_knn.jsonl", "privacy.csv", "embeddings.csv", "utility.csv", "wer.csv",
           "summary.csv", "plot_data.csv", "summary.json")


def _cfg(root, name, obj):
    path = Path(root) / f"{name}.json"
    path.write_text(json.dumps(obj), encoding="utf-8")
    return str(path)


def run_pipeline(root, seed=0, jobs=1, synth=None):
    """Run every command into ``root/run``; returns the output directory."""
    root = Path(root)
    out = root / "run"
    root.mkdir(parents=True, exist_ok=True)
    (root / "w.csv").write_text(WER_ROWS, encoding="utf-8")
    steps = [
        ("synth", synth or SYNTH),
        ("features", {"manifest": "run/manifest.jsonl", "output": "feat_orig.csv"}),
        ("features", {"manifest": "run/manifest_degraded.jsonl", "output": "feat_deg.csv"}),
        ("distort", {"original": "run/feat_orig.csv", "anonymized": "run/feat_deg.csv"}),
        ("convert", {"manifest": "run/manifest.jsonl", "targets": "run/manifest_targets.jsonl"}),
        ("privacy", {"manifest": "run/manifest_knn.jsonl"}),
        ("utility", {"manifest": "run/manifest.jsonl", "folds": 3, "seeds": [0, 1],
                     "conditions": {"original": "run/feat_orig.csv",
                                    "degraded": "run/feat_deg.csv"},
                     "pairs": [["original", "degraded"], ["degraded", "degraded"]]}),
        ("wer", {"input": "w.csv"}),
        ("report", {"distortion": "run/distortion.csv", "privacy": "run/privacy.csv",
                    "utility": "run/utility.csv", "wer": "run/wer.csv"}),
    ]
    for i, (cmd, cfg) in enumerate(steps):
        code = main([cmd, "--config", _cfg(root, f"{i}_{cmd}", cfg), "--seed", str(seed),
                     "--out", str(out), "--jobs", str(jobs)])
        if code != 0:
            raise RuntimeError(f"step {cmd} exited with {code}")
    return out
