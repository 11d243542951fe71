"""Simulated speaker-verification attack: pooled embeddings, trials, EER.

The embedding is the per-dimension mean and std of a frame matrix,
L2-normalized; enrollment models are normalized means of enrollment
embeddings and trials are scored by cosine. Intra-group EER restricts both
trial and claimed speaker to the same clinical group.
"""

import csv
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from .corpus import FrameMatrix
from .knn_convert import derive_seed

ZERO_NORM = 1e-12
HALF_SUFFIXES = ("#a", "#b")


class PrivacyError(ValueError):
    pass


@dataclass(frozen=True)
class UtteranceEmbedding:
    id: str
    speaker: str
    group: str
    vector: np.ndarray = field(repr=False)


def embed(m):
    """concat(per-dim mean, per-dim population std), L2-normalized."""
    x = np.asarray(m.frames if isinstance(m, FrameMatrix) else m, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise PrivacyError("embed needs a non-empty 2-D frame matrix")
    v = np.concatenate([x.mean(axis=0), x.std(axis=0)])
    norm = np.linalg.norm(v)
    if norm < ZERO_NORM:
        raise PrivacyError("pooled vector is zero; cannot normalize")
    return v / norm


def split_halves(m):
    """Split at frame T // 2 into two pseudo-utterances (first half, second half)."""
    t = m.frames.shape[0]
    if t < 2:
        raise PrivacyError(f"cannot split a {t}-frame matrix into halves")
    return FrameMatrix(m.frames[:t // 2], m.hop_s), FrameMatrix(m.frames[t // 2:], m.hop_s)


def write_embeddings(path, embeddings):
    """CSV with columns id, v0..v{n-1}; rows in the given order."""
    items = list(embeddings.items())
    dim = items[0][1].size if items else 0
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id"] + [f"v{i}" for i in range(dim)])
        for uid, v in items:
            w.writerow([uid] + [repr(float(x)) for x in v])


def read_embeddings(path):
    out = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0] != "id":
            raise PrivacyError(f"{path}: first column must be 'id'")
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise PrivacyError(f"{path}: line {line_no}: expected {len(header)} fields")
            try:
                v = np.array([float(x) for x in row[1:]])
            except ValueError:
                raise PrivacyError(f"{path}: line {line_no}: bad numeric value") from None
            if not np.isfinite(v).all():
                raise PrivacyError(f"{path}: line {line_no}: non-finite value")
            if row[0] in out:
                raise PrivacyError(f"{path}: line {line_no}: duplicate id '{row[0]}'")
            out[row[0]] = v
    return out


@dataclass(frozen=True)
class Trial:
    trial_id: str
    speaker: str
    claimed: str
    same: bool
    group: str
    claimed_group: str


@dataclass
class TrialProtocol:
    enroll: dict
    """speaker -> enrollment ids"""
    trials: dict
    """speaker -> trial ids"""
    groups: dict
    """speaker -> group"""

    def speakers(self):
        return sorted(self.enroll)

    def trial_list(self):
        """Full cross: every trial utterance against every enrolled speaker."""
        out = []
        for spk in self.speakers():
            for tid in self.trials[spk]:
                for claimed in self.speakers():
                    out.append(Trial(tid, spk, claimed, claimed == spk, self.groups[spk],
                                     self.groups[claimed]))
        return out

    def ids(self):
        return sorted({i for d in (self.enroll, self.trials) for v in d.values() for i in v})


def build_protocol(records, per_speaker_trials=20, per_speaker_enroll=20, seed=0):
    """Randomly and evenly split each speaker's utterances into enrollment and trials.

    With an odd count the extra utterance goes to enrollment. A speaker with a
    single monologue recording contributes halves ``id#a`` (enrollment) and
    ``id#b`` (trial).
    """
    if per_speaker_trials < 1 or per_speaker_enroll < 1:
        raise PrivacyError("per-speaker trial and enrollment caps must be >= 1")
    by_spk = defaultdict(list)
    groups = {}
    for r in records:
        by_spk[r.speaker].append(r)
        if groups.setdefault(r.speaker, r.group) != r.group:
            raise PrivacyError(f"speaker '{r.speaker}' appears in more than one group")
    enroll, trials = {}, {}
    for spk in sorted(by_spk):
        recs = by_spk[spk]
        if len(recs) == 1:
            if recs[0].task != "monologue":
                raise PrivacyError(
                    f"speaker '{spk}' has a single non-monologue utterance ('{recs[0].id}')")
            enroll[spk] = [recs[0].id + HALF_SUFFIXES[0]]
            trials[spk] = [recs[0].id + HALF_SUFFIXES[1]]
            continue
        ids = sorted(r.id for r in recs)
        rng = np.random.default_rng(derive_seed(spk, seed))
        ids = [ids[i] for i in rng.permutation(len(ids))]
        n_enroll = (len(ids) + 1) // 2
        enroll[spk] = sorted(ids[:n_enroll][:per_speaker_enroll])
        trials[spk] = sorted(ids[n_enroll:][:per_speaker_trials])
    return TrialProtocol(enroll, trials, groups)


def protocol_embeddings(protocol, matrices):
    """Embed every id the protocol needs; ``#a``/``#b`` ids embed matrix halves."""
    out = {}
    for uid in protocol.ids():
        base, half = uid, None
        if uid[-2:] in HALF_SUFFIXES:
            base, half = uid[:-2], HALF_SUFFIXES.index(uid[-2:])
        if base not in matrices:
            raise PrivacyError(f"no frame matrix for '{base}'")
        m = matrices[base]
        out[uid] = embed(split_halves(m)[half] if half is not None else m)
    return out


@dataclass
class ScoreSet:
    genuine: np.ndarray
    impostor: np.ndarray

    def __post_init__(self):
        self.genuine = np.asarray(self.genuine, dtype=np.float64).ravel()
        self.impostor = np.asarray(self.impostor, dtype=np.float64).ravel()


def score_trials(protocol, embeddings):
    """Cosine scores for the full trial cross.

    Returns the pooled ScoreSet and a dict group -> ScoreSet built from
    trials whose speaker and claimed speaker share that group.
    """
    missing = [i for i in protocol.ids() if i not in embeddings]
    if missing:
        raise PrivacyError(f"missing embedding for id '{missing[0]}'"
                           + (f" (+{len(missing) - 1} more)" if len(missing) > 1 else ""))
    speakers = protocol.speakers()
    models = []
    for spk in speakers:
        mean = np.mean([embeddings[i] for i in protocol.enroll[spk]], axis=0)
        models.append(mean / max(np.linalg.norm(mean), ZERO_NORM))
    models = np.array(models)
    col = {s: j for j, s in enumerate(speakers)}
    trials = protocol.trial_list()
    tids = sorted({t.trial_id for t in trials})
    row = {t: i for i, t in enumerate(tids)}
    scores = np.array([embeddings[t] for t in tids]) @ models.T
    s = np.array([scores[row[t.trial_id], col[t.claimed]] for t in trials])
    same = np.array([t.same for t in trials], dtype=bool)
    pooled = ScoreSet(s[same], s[~same])
    per_group = {}
    tg = np.array([t.group for t in trials], dtype=object)
    cg = np.array([t.claimed_group for t in trials], dtype=object)
    for g in sorted(set(protocol.groups.values())):
        sel = (tg == g) & (cg == g)
        per_group[g] = ScoreSet(s[sel & same], s[sel & ~same])
    return pooled, per_group


def eer(s):
    """Equal error rate and its threshold.

    Sweeps thresholds over the sorted distinct scores with
    FAR(t) = P(impostor >= t), FRR(t) = P(genuine < t), and interpolates
    linearly at the first operating point where FAR <= FRR.
    """
    g, i = np.sort(s.genuine), np.sort(s.impostor)
    if g.size == 0 or i.size == 0:
        raise PrivacyError("EER needs non-empty genuine and impostor score lists")
    thr = np.unique(np.concatenate([g, i]))
    far = (i.size - np.searchsorted(i, thr, side="left")) / i.size
    frr = np.searchsorted(g, thr, side="left") / g.size
    # closing point above every score: FAR 0, FRR 1
    far = np.append(far, 0.0)
    frr = np.append(frr, 1.0)
    d = far - frr
    j = int(np.argmax(d <= 0))
    if d[j] == 0 or j == 0:
        return float(far[j]), float(thr[min(j, thr.size - 1)])
    a = d[j - 1] / (d[j - 1] - d[j])
    rate = far[j - 1] + a * (far[j] - far[j - 1])
    t = thr[j - 1] + a * (thr[j] - thr[j - 1]) if j < thr.size else thr[-1]
    return float(rate), float(t)


def intra_eer(per_group):
    """EER per group; groups lacking genuine or impostor scores are omitted."""
    return {g: eer(s) for g, s in sorted(per_group.items())
            if s.genuine.size and s.impostor.size}


@dataclass
class PrivacyRow:
    group: str
    eer: float
    threshold: float
    n_genuine: int
    n_impostor: int


def privacy_report(pooled, per_group):
    rows = [PrivacyRow("ALL", *eer(pooled), pooled.genuine.size, pooled.impostor.size)]
    for g, (rate, t) in intra_eer(per_group).items():
        s = per_group[g]
        rows.append(PrivacyRow(g, rate, t, s.genuine.size, s.impostor.size))
    return rows


def write_privacy_report(rows, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["group", "eer", "threshold", "n_genuine", "n_impostor"])
        for r in rows:
            w.writerow([r.group, repr(r.eer), repr(r.threshold), r.n_genuine, r.n_impostor])
