import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import central_difference, levenshtein
from spane_kit.corpus import UtteranceRecord
from spane_kit.utility import (CVReport, ProbeConfig, UtilityError, cross_validate, edit_distance,
                               f1_score, gradient, normalize_text, objective, predict,
                               speaker_folds, train_probe, wer, write_wer_report)


def test_f1_examples():
    assert f1_score([1, 0, 1], [1, 0, 1]) == (1.0, False)
    assert f1_score([1, 1, 1, 0], [1, 1, 0, 1]) == (pytest.approx(2 / 3), False)
    assert f1_score([0, 0], [0, 0]) == (0.0, True)


def test_f1_length_mismatch():
    with pytest.raises(UtilityError):
        f1_score([1], [1, 0])


def test_probe_separable():
    rng = np.random.default_rng(0)
    x = np.r_[rng.normal([2, 0], 0.3, (50, 2)), rng.normal([-2, 0], 0.3, (50, 2))]
    y = np.r_[np.ones(50), np.zeros(50)].astype(bool)
    assert np.mean(predict(train_probe(x, y), x) == y) == 1.0


def test_probe_random_labels():
    accs = []
    for seed in range(10):
        rng = np.random.default_rng(seed)
        x = rng.standard_normal((200, 2))
        y = rng.random(200) < 0.5
        accs.append(np.mean(predict(train_probe(x, y), x) == y))
    assert np.mean(accs) <= 0.65


def test_probe_objective_decreases_and_is_deterministic():
    rng = np.random.default_rng(1)
    x = rng.standard_normal((80, 4))
    y = x[:, 0] + 0.5 * rng.standard_normal(80) > 0
    m1, m2 = train_probe(x, y), train_probe(x, y)
    assert np.all(np.diff(m1.history) <= 1e-15)
    assert np.array_equal(m1.weight, m2.weight) and m1.bias == m2.bias


def test_probe_constant_column():
    x = np.c_[np.ones(20), np.r_[np.zeros(10), np.ones(10)]]
    m = train_probe(x, x[:, 1] > 0.5)
    assert m.scale[0] == 1.0 and np.isfinite(m.weight).all()


def test_probe_single_class():
    with pytest.raises(UtilityError):
        train_probe(np.zeros((4, 2)), [1, 1, 1, 1])


@pytest.mark.parametrize("seed", range(5))
def test_gradient_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((40, 5))
    y = (rng.random(40) < 0.5).astype(float)
    w, b = rng.standard_normal(5), float(rng.standard_normal())
    theta = np.r_[w, b]
    num = central_difference(lambda t: objective(t[:-1], t[-1], z, y, 1e-3), theta)
    gw, gb = gradient(w, b, z, y, 1e-3)
    ana = np.r_[gw, gb]
    assert np.linalg.norm(ana - num) / np.linalg.norm(num) <= 1e-6


def _records(n_hc, n_pd, per=3):
    recs = []
    for g, n in (("HC", n_hc), ("PD", n_pd)):
        for s in range(n):
            for u in range(per):
                recs.append(UtteranceRecord(f"{g}{s}_{u}", f"{g}{s}", "M", g, "sentences",
                                            audio_path="x.wav"))
    return recs


def test_speaker_folds_stratified_and_disjoint():
    spk = [f"HC{i}" for i in range(10)] + [f"PD{i}" for i in range(10)]
    grp = ["HC"] * 10 + ["PD"] * 10
    a = speaker_folds(spk, grp, 5, seed=0)
    for g in ("HC", "PD"):
        counts = np.bincount([a[s] for s in spk if s.startswith(g)], minlength=5)
        assert counts.tolist() == [2] * 5
    assert a == speaker_folds(spk, grp, 5, seed=0)
    assert a != speaker_folds(spk, grp, 5, seed=1)


def test_speaker_in_two_groups():
    with pytest.raises(UtilityError):
        speaker_folds(["A", "A"], ["HC", "PD"])


def test_cv_separable():
    recs = _records(10, 10)
    vec = {r.id: np.array([3.0 if r.group == "PD" else -3.0, float(i % 3)])
           for i, r in enumerate(recs)}
    rep = cross_validate(recs, {"orig": vec}, "orig", "orig")
    assert rep.mean == 1.0 and rep.std == 0.0 and len(rep.rows) == 25


def test_cv_shuffled_labels_chance():
    recs = _records(10, 10, per=4)
    rng = np.random.default_rng(0)
    vec = {r.id: rng.standard_normal(3) for r in recs}
    rep = cross_validate(recs, {"orig": vec}, "orig", "orig")
    assert 0.3 <= rep.mean <= 0.7


def test_cv_unknown_condition():
    with pytest.raises(UtilityError):
        cross_validate(_records(5, 5), {"orig": {}}, "orig", "anon")


def test_cv_report_csv(tmp_path):
    recs = _records(5, 5)
    vec = {r.id: np.array([1.0 if r.group == "PD" else -1.0]) for r in recs}
    rep = cross_validate(recs, {"a": vec}, "a", "a", seeds=[0])
    rep.write_csv(tmp_path / "u.csv")
    lines = (tmp_path / "u.csv").read_text().splitlines()
    assert lines[0] == "train_cond,eval_cond,fold,seed,f1"
    assert lines[-2:] == ["a,a,ALL,mean,1.0", "a,a,ALL,std,0.0"]


def test_wer_examples():
    assert wer("Hola, mundo.", "hola mundo") == 0.0
    assert wer("a b c", "a x c") == 1 / 3
    assert wer("a", "a b c") == 2.0


def test_wer_normalization():
    assert normalize_text("  Well-known\tCAFÉ!! ") == "well known café"
    with pytest.raises(UtilityError):
        wer("?!", "x")


@settings(max_examples=200, deadline=None)
@given(st.lists(st.sampled_from("abcd"), max_size=12), st.lists(st.sampled_from("abcd"), max_size=12))
def test_edit_distance_matches_table_oracle(a, b):
    assert edit_distance(a, b) == levenshtein(a, b)


def test_write_wer_report(tmp_path):
    write_wer_report([("u1", "a b c", "a x c")], tmp_path / "w.csv")
    assert (tmp_path / "w.csv").read_text().splitlines() == ["id,wer,n_ref_tokens",
                                                            f"u1,{1 / 3!r},3"]
