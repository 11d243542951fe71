import csv
import json

import numpy as np
import pytest

from pipeline import REPORTS, run_pipeline
from spane_kit import corpus
from spane_kit.cli import EXIT_CONFIG, EXIT_DATA, main
from spane_kit.corpus import FrameMatrix, UtteranceRecord


def cfg(tmp_path, obj, name="c.json"):
    p = tmp_path / name
    p.write_text(json.dumps(obj) if not isinstance(obj, str) else obj, encoding="utf-8")
    return str(p)


def rows(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture(scope="module")
def pipeline_dir(tmp_path_factory):
    return run_pipeline(tmp_path_factory.mktemp("pipe"), seed=3)


def test_pipeline_outputs(pipeline_dir):
    for name in REPORTS:
        assert (pipeline_dir / name).exists(), name
    log = (pipeline_dir / "run_report.log").read_text().splitlines()
    assert log[0].startswith("timestamp: ")
    meta = json.loads("\n".join(log[1:]))
    assert meta["command"] == "report" and meta["seed"] == 3
    kv = json.loads((pipeline_dir / "summary.json").read_text())
    assert kv["wer.ALL.mean"] == pytest.approx((0 + 1 / 3 + 2) / 3)
    plot = rows(pipeline_dir / "plot_data.csv")
    emds = [float(r["emd"]) for r in plot]
    assert emds == sorted(emds, reverse=True) and len(plot) == 11


def test_identity_degradation_small_emd(tmp_path):
    synth = {"n_hc": 2, "n_pd": 2, "utterances_per_speaker": 2,
             "conditions": {"original": None, "same": []}}
    assert main(["synth", "--config", cfg(tmp_path, synth), "--out", str(tmp_path / "o")]) == 0
    for name, man in (("a.csv", "manifest.jsonl"), ("b.csv", "manifest_same.jsonl")):
        c = cfg(tmp_path, {"manifest": f"o/{man}", "output": name}, "f.json")
        assert main(["features", "--config", c, "--out", str(tmp_path / "o"), "--jobs", "1"]) == 0
    c = cfg(tmp_path, {"original": "o/a.csv", "anonymized": "o/b.csv"}, "d.json")
    assert main(["distort", "--config", c, "--out", str(tmp_path / "o")]) == 0
    assert all(float(r["emd"]) < 0.05 for r in rows(tmp_path / "o" / "distortion.csv"))


def test_privacy_orthogonal(tmp_path):
    recs = []
    for j, spk in enumerate(("A", "B")):
        for u in range(2):
            uid = f"{spk}{u}"
            v = np.zeros((3, 4), dtype=np.float32)
            v[:, j] = 1.0
            corpus.write_fmat(FrameMatrix(v, 0.02), tmp_path / f"{uid}.fmat")
            recs.append(UtteranceRecord(uid, spk, "M", "HC", "sentences",
                                        feature_path=f"{uid}.fmat"))
    corpus.write_manifest(recs, tmp_path / "m.jsonl")
    assert main(["privacy", "--config", cfg(tmp_path, {"manifest": "m.jsonl"}),
                 "--out", str(tmp_path / "o")]) == 0
    first = rows(tmp_path / "o" / "privacy.csv")[0]
    assert first["group"] == "ALL" and float(first["eer"]) == 0.0


def test_utility_separable(tmp_path):
    recs = [UtteranceRecord(f"{g}{s}_{u}", f"{g}{s}", "M", g, "sentences", audio_path="x.wav")
            for g in ("HC", "PD") for s in range(5) for u in range(2)]
    corpus.write_manifest(recs, tmp_path / "m.jsonl")
    with open(tmp_path / "f.csv", "w", encoding="utf-8") as fh:
        fh.write("id,x\n" + "".join(f"{r.id},{1.0 if r.group == 'PD' else -1.0}\n" for r in recs))
    c = cfg(tmp_path, {"manifest": "m.jsonl", "conditions": {"orig": "f.csv"}})
    assert main(["utility", "--config", c, "--out", str(tmp_path / "o")]) == 0
    agg = [r for r in rows(tmp_path / "o" / "utility.csv") if r["seed"] == "mean"]
    assert float(agg[0]["f1"]) == 1.0


def test_unknown_command(tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate", "--config", cfg(tmp_path, {})])
    assert exc.value.code != 0


def test_config_errors(tmp_path, capsys):
    out = ["--out", str(tmp_path / "o")]
    assert main(["features", "--config", cfg(tmp_path, {})] + out) == EXIT_CONFIG
    assert main(["features", "--config", cfg(tmp_path, {"manifest": "m", "bogus": 1})] + out) == EXIT_CONFIG
    assert main(["wer", "--config", cfg(tmp_path, "{not json")] + out) == EXIT_CONFIG
    assert main(["wer", "--config", str(tmp_path / "missing.json")] + out) == EXIT_CONFIG
    assert main(["synth", "--config", cfg(tmp_path, {"groups": "nope"})] + out) == EXIT_CONFIG
    assert "config error" in capsys.readouterr().err


def test_data_error_names_record(tmp_path, capsys):
    (tmp_path / "m.jsonl").write_text(json.dumps(
        {"id": "u1", "speaker": "s", "gender": "M", "group": "HC", "task": "sentences",
         "audio_path": "nope.wav"}) + "\n", encoding="utf-8")
    code = main(["features", "--config", cfg(tmp_path, {"manifest": "m.jsonl"}),
                 "--out", str(tmp_path / "o"), "--jobs", "1"])
    assert code == EXIT_DATA
    assert "nope.wav" in capsys.readouterr().err


def test_parallel_features_match_serial(tmp_path):
    synth = {"n_hc": 2, "n_pd": 2, "utterances_per_speaker": 2}
    assert main(["synth", "--config", cfg(tmp_path, synth), "--out", str(tmp_path / "o")]) == 0
    outs = []
    for jobs in (1, 2):
        c = cfg(tmp_path, {"manifest": "o/manifest.jsonl", "output": f"f{jobs}.csv"}, "f.json")
        assert main(["features", "--config", c, "--out", str(tmp_path / "o"),
                     "--jobs", str(jobs)]) == 0
        outs.append((tmp_path / "o" / f"f{jobs}.csv").read_bytes())
    assert outs[0] == outs[1]
