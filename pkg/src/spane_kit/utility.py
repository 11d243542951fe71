"""Utility scoring: a deterministic logistic probe under speaker-disjoint CV, and WER.

The probe is a stand-in classifier head for PD detection (PD = positive
class). Training and evaluation conditions are decoupled so that a probe
fitted on original inputs can be scored on degraded ones and vice versa.
"""

import csv
import unicodedata
from dataclasses import dataclass, field

import numpy as np

from .knn_convert import fnv1a_64

POSITIVE = "PD"


class UtilityError(ValueError):
    pass


def f1_score(predictions, labels):
    """Positive-class F1 = 2TP / (2TP + FP + FN).

    Returns ``(f1, degenerate)``; degenerate is True (and f1 0.0) when the
    denominator is zero.
    """
    p = np.asarray(predictions, dtype=bool).ravel()
    y = np.asarray(labels, dtype=bool).ravel()
    if p.size != y.size:
        raise UtilityError(f"length mismatch ({p.size} predictions, {y.size} labels)")
    if p.size == 0:
        raise UtilityError("f1_score needs at least one example")
    tp = int(np.sum(p & y))
    den = 2 * tp + int(np.sum(p & ~y)) + int(np.sum(~p & y))
    if den == 0:
        return 0.0, True
    return 2 * tp / den, False


# --- probe -----------------------------------------------------------------

@dataclass(frozen=True)
class ProbeConfig:
    learning_rate: float = 0.1
    iterations: int = 500
    l2: float = 1e-3


@dataclass
class ProbeModel:
    weight: np.ndarray
    bias: float
    mean: np.ndarray
    scale: np.ndarray
    cfg: ProbeConfig = field(default_factory=ProbeConfig)
    history: np.ndarray = field(default=None, repr=False)

    def decision(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.weight.size:
            raise UtilityError(f"expected inputs of dimension {self.weight.size}")
        return ((x - self.mean) / self.scale) @ self.weight + self.bias


def objective(w, b, z, y, l2):
    """Mean logistic loss with labels in {0, 1} plus (l2 / 2) * ||w||^2."""
    s = z @ w + b
    return float(np.mean(np.logaddexp(0.0, s) - y * s) + 0.5 * l2 * (w @ w))


def gradient(w, b, z, y, l2):
    s = z @ w + b
    r = 1.0 / (1.0 + np.exp(-s)) - y
    return z.T @ r / y.size + l2 * w, float(r.mean())


def train_probe(x, labels, cfg=None):
    """Full-batch gradient descent from zero on standardized inputs."""
    cfg = cfg or ProbeConfig()
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(labels, dtype=bool).astype(np.float64)
    if x.ndim != 2 or x.shape[0] != y.size:
        raise UtilityError("inputs must be an (n, d) array with one label per row")
    if not np.isfinite(x).all():
        raise UtilityError("non-finite probe inputs")
    if y.min() == y.max():
        raise UtilityError("training set contains a single class")
    mean = x.mean(axis=0)
    sd = x.std(axis=0)
    scale = np.where(sd > 1e-12, sd, 1.0)
    z = (x - mean) / scale
    w, b = np.zeros(x.shape[1]), 0.0
    hist = np.empty(cfg.iterations + 1)
    hist[0] = objective(w, b, z, y, cfg.l2)
    for it in range(cfg.iterations):
        gw, gb = gradient(w, b, z, y, cfg.l2)
        w = w - cfg.learning_rate * gw
        b = b - cfg.learning_rate * gb
        hist[it + 1] = objective(w, b, z, y, cfg.l2)
    return ProbeModel(w, b, mean, scale, cfg, hist)


def predict(model, x):
    """True where the probe calls the positive class."""
    return model.decision(x) > 0.0


# --- cross-validation --------------------------------------------------------

def speaker_folds(speakers, groups, n_folds=5, seed=0):
    """Speaker -> fold index, stratified by group.

    Within each group speakers are visited in order of a seeded hash and
    placed greedily in the fold holding the fewest of that group (then the
    fewest overall, then the lowest index).
    """
    spk_group = {}
    for s, g in zip(speakers, groups):
        if spk_group.setdefault(s, g) != g:
            raise UtilityError(f"speaker '{s}' appears in more than one group")
    total = np.zeros(n_folds, dtype=np.int64)
    assign = {}
    for g in sorted(set(spk_group.values())):
        members = sorted((s for s in spk_group if spk_group[s] == g),
                         key=lambda s: (fnv1a_64(f"{seed}/{s}".encode("utf-8")), s))
        count = np.zeros(n_folds, dtype=np.int64)
        for s in members:
            f = min(range(n_folds), key=lambda i: (count[i], total[i], i))
            assign[s] = f
            count[f] += 1
            total[f] += 1
    return assign


@dataclass
class CVRow:
    train_cond: str
    eval_cond: str
    fold: int
    seed: int
    f1: float
    degenerate: bool = False


@dataclass
class CVReport:
    rows: list

    @property
    def f1s(self):
        return np.array([r.f1 for r in self.rows])

    @property
    def mean(self):
        return float(self.f1s.mean())

    @property
    def std(self):
        return float(self.f1s.std())

    def write_csv(self, path):
        """Per-fold rows, then aggregate rows with fold ALL and seed mean / std."""
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["train_cond", "eval_cond", "fold", "seed", "f1"])
            for r in self.rows:
                w.writerow([r.train_cond, r.eval_cond, r.fold, r.seed, repr(r.f1)])
            if self.rows:
                tc, ec = self.rows[0].train_cond, self.rows[0].eval_cond
                w.writerow([tc, ec, "ALL", "mean", repr(self.mean)])
                w.writerow([tc, ec, "ALL", "std", repr(self.std)])


def cross_validate(records, inputs, train_cond, eval_cond, n_folds=5, seeds=range(5), cfg=None):
    """Speaker-disjoint stratified CV of the probe.

    ``inputs`` maps condition name -> {utterance id: vector}. For each seed
    and fold the probe trains on ``train_cond`` vectors of the training
    speakers and is scored (utterance-level F1) on ``eval_cond`` vectors of
    the held-out speakers.
    """
    for cond in (train_cond, eval_cond):
        if cond not in inputs:
            raise UtilityError(f"unknown condition '{cond}'")
    ids = sorted(r.id for r in records)
    rec = {r.id: r for r in records}
    for cond in {train_cond, eval_cond}:
        missing = [i for i in ids if i not in inputs[cond]]
        if missing:
            raise UtilityError(f"condition '{cond}' lacks utterance '{missing[0]}'")
    xt = np.array([inputs[train_cond][i] for i in ids], dtype=np.float64)
    xe = np.array([inputs[eval_cond][i] for i in ids], dtype=np.float64)
    y = np.array([rec[i].group == POSITIVE for i in ids])
    spk = [rec[i].speaker for i in ids]
    grp = [rec[i].group for i in ids]
    rows = []
    for seed in seeds:
        assign = speaker_folds(spk, grp, n_folds, seed)
        fold_of = np.array([assign[s] for s in spk])
        for f in range(n_folds):
            test = fold_of == f
            if len(set(y[test])) < 2 or len(set(y[~test])) < 2:
                raise UtilityError(f"fold {f} (seed {seed}) lacks one of the classes")
            model = train_probe(xt[~test], y[~test], cfg)
            f1, degenerate = f1_score(predict(model, xe[test]), y[test])
            rows.append(CVRow(train_cond, eval_cond, f, int(seed), f1, degenerate))
    return CVReport(rows)


# --- WER -------------------------------------------------------------------

def normalize_text(text):
    """NFC, lowercase, Unicode punctuation/symbols to spaces, collapsed whitespace."""
    text = unicodedata.normalize("NFC", text).lower()
    text = "".join(" " if unicodedata.category(c)[0] in "PS" else c for c in text)
    return " ".join(text.split())


def edit_distance(ref, hyp):
    """Token-level Levenshtein distance with unit costs."""
    prev = np.arange(len(hyp) + 1)
    for i, r in enumerate(ref, start=1):
        cur = np.empty_like(prev)
        cur[0] = i
        for j, h in enumerate(hyp, start=1):
            cur[j] = min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (r != h))
        prev = cur
    return int(prev[-1])


def wer(reference, hypothesis):
    """(S + D + I) / N on normalized, space-tokenized text; may exceed 1."""
    ref = normalize_text(reference).split()
    if not ref:
        raise UtilityError("reference is empty after normalization")
    hyp = normalize_text(hypothesis).split()
    return edit_distance(ref, hyp) / len(ref)


def write_wer_report(rows, path):
    """rows: (id, reference, hypothesis) triples."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "wer", "n_ref_tokens"])
        for uid, ref, hyp in rows:
            w.writerow([uid, repr(wer(ref, hyp)), len(normalize_text(ref).split())])
