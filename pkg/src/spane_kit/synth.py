"""Synthetic speech-like cohorts and parameter-track degradations.

Utterances are harmonic pulse trains (5 harmonics, 1/h rolloff) following an
F0 contour built from a base pitch, a slow intonation sinusoid, a tremor
sinusoid and a jitter perturbation. Degradation policies edit these tracks
before rendering, which keeps every effect exactly controllable. They are
analogs of measured anonymizer effects, not anonymizers.
"""

import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .corpus import FrameMatrix, UtteranceRecord, Waveform, write_fmat, write_manifest, write_wav
from .knn_convert import derive_seed

N_HARMONICS = 5
EDGE_S = 0.010
JITTER_KNOT_S = 0.020
# knot amplitude per percent of jitter; calibrated so the frame-level local
# jitter measured by prosody.jitter_stats equals jitter_pct / 100 (valid up
# to ~2 %)
JITTER_GAIN = 1.0 / 0.203
MIN_SEGMENT_S = 0.2


class SynthError(ValueError):
    pass


@dataclass(frozen=True)
class UtteranceSpec:
    f0_base: float
    duration_s: float
    f0_var: float = 0.0
    f0_var_rate: float = 0.5
    jitter_pct: float = 0.0
    tremor_depth: float = 0.0
    tremor_rate: float = 5.0
    pauses: tuple = ()
    amplitude: float = 0.5
    sample_rate: int = 16000

    def __post_init__(self):
        object.__setattr__(self, "pauses",
                           tuple((float(a), float(b)) for a, b in self.pauses))
        self.validate()

    def validate(self):
        if not 60.0 <= self.f0_base <= 400.0:
            raise SynthError(f"f0_base {self.f0_base} outside [60, 400] Hz")
        if self.duration_s <= 2 * EDGE_S:
            raise SynthError("duration too short")
        if self.jitter_pct < 0 or self.f0_var < 0 or self.tremor_depth < 0:
            raise SynthError("jitter_pct, f0_var and tremor_depth must be non-negative")
        if self.amplitude <= 0 or self.sample_rate <= 0:
            raise SynthError("amplitude and sample_rate must be positive")
        lo = 0.0
        for onset, dur in self.pauses:
            if dur <= 0:
                raise SynthError(f"pause at {onset} s has non-positive duration")
            if onset < lo + EDGE_S:
                raise SynthError(f"pause at {onset} s overlaps the previous segment")
            lo = onset + dur
        if lo > self.duration_s - EDGE_S:
            raise SynthError("pause schedule runs past the end of the utterance")

    def to_dict(self):
        d = asdict(self)
        d["pauses"] = ";".join(f"{a!r}:{b!r}" for a, b in self.pauses)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        raw = d.get("pauses") or ""
        if isinstance(raw, str):
            d["pauses"] = tuple(tuple(float(v) for v in p.split(":"))
                                for p in raw.split(";") if p)
        return cls(**d)


@dataclass
class Tracks:
    """Per-sample parameter tracks of one utterance."""

    f0: np.ndarray
    jitter: np.ndarray
    pauses: tuple
    amplitude: float
    sample_rate: int
    gain_db: float = 0.0


def build_tracks(spec, seed):
    sr = spec.sample_rate
    n = int(round(spec.duration_s * sr))
    rng = np.random.default_rng(seed)
    phi_var, phi_trem = rng.uniform(0.0, 2 * np.pi, size=2)
    n_knots = int(np.ceil(spec.duration_s / JITTER_KNOT_S)) + 2
    knots = rng.uniform(-1.0, 1.0, size=n_knots) * (JITTER_GAIN * spec.jitter_pct / 100.0)
    t = np.arange(n) / sr
    f0 = (spec.f0_base
          + spec.f0_var * np.sin(2 * np.pi * spec.f0_var_rate * t + phi_var)
          + spec.tremor_depth * np.sin(2 * np.pi * spec.tremor_rate * t + phi_trem))
    jitter = np.interp(t, np.arange(n_knots) * JITTER_KNOT_S, knots)
    return Tracks(f0, jitter, spec.pauses, spec.amplitude, sr)


def _envelope(n, sr, pauses):
    env = np.ones(n)
    edge = max(1, int(round(EDGE_S * sr)))
    ramp = 0.5 - 0.5 * np.cos(np.pi * np.arange(edge) / edge)
    bounds = []
    for onset, dur in pauses:
        a, b = int(round(onset * sr)), int(round((onset + dur) * sr))
        env[a:b] = 0.0
        bounds.append((a, b))
    starts = [0] + [b for _, b in bounds]
    stops = [a for a, _ in bounds] + [n]
    for s, e in zip(starts, stops):
        m = min(edge, (e - s) // 2)
        env[s:s + m] *= ramp[:m]
        env[e - m:e] *= ramp[:m][::-1]
    return env


def render(tracks):
    sr = tracks.sample_rate
    n = tracks.f0.size
    inst = tracks.f0 * (1.0 + tracks.jitter)
    phase = 2 * np.pi * np.cumsum(inst) / sr
    harm = np.arange(1, N_HARMONICS + 1)
    weights = 1.0 / harm
    x = np.zeros(n)
    for h, wgt in zip(harm, weights):
        x += wgt * np.sin(h * phase)
    scale = tracks.amplitude * 10 ** (tracks.gain_db / 20.0) / weights.sum()
    return Waveform(scale * x * _envelope(n, sr, tracks.pauses), sr)


def synth_utterance(spec, seed):
    return render(build_tracks(spec, seed))


# --- degradation policies -------------------------------------------------

@dataclass(frozen=True)
class F0Smooth:
    window_s: float = 0.2

    def __post_init__(self):
        if not self.window_s > 0:
            raise SynthError(f"f0_smooth window must be positive, got {self.window_s}")


@dataclass(frozen=True)
class EnergyGain:
    db: float = 6.0
    spread_db: float = 0.0
    """Std of a per-utterance Gaussian offset added to ``db`` (the level a
    target voice imposes); 0 gives a fixed gain."""

    def __post_init__(self):
        if self.spread_db < 0:
            raise SynthError(f"energy_gain spread_db must be >= 0, got {self.spread_db}")


@dataclass(frozen=True)
class JitterRemove:
    pass


@dataclass(frozen=True)
class PausePreserve:
    pass


@dataclass(frozen=True)
class TranscriptResynth:
    target_f0: float = 120.0
    pause_s: float = 0.25
    f0_var: float = 10.0
    f0_var_rate: float = 0.5
    amplitude: float = 0.5


POLICY_TYPES = {
    "f0_smooth": F0Smooth,
    "energy_gain": EnergyGain,
    "jitter_remove": JitterRemove,
    "pause_preserve": PausePreserve,
    "transcript_resynth": TranscriptResynth,
}


def parse_policy(obj):
    """Policy from ``"name"`` or ``{"name": ..., **params}``."""
    if isinstance(obj, str):
        obj = {"name": obj}
    obj = dict(obj)
    name = obj.pop("name", None)
    if name not in POLICY_TYPES:
        raise SynthError(f"unknown degradation policy '{name}'")
    try:
        return POLICY_TYPES[name](**obj)
    except TypeError as exc:
        raise SynthError(f"bad parameters for '{name}': {exc}") from None


def _moving_average(x, width):
    if width <= 1:
        return x.copy()
    left = width // 2
    padded = np.pad(x, (left, width - 1 - left), mode="edge")
    c = np.concatenate([[0.0], np.cumsum(padded)])
    return (c[width:] - c[:-width]) / width


def resynth_spec(spec, policy):
    """Replace all source prosody; keep duration and the number of pauses."""
    n = len(spec.pauses)
    step = spec.duration_s / (n + 1)
    pauses = tuple((step * (i + 1) - policy.pause_s / 2, policy.pause_s) for i in range(n))
    # a whole number of intonation cycles, so the contour averages to target_f0
    cycles = max(1, round(spec.duration_s * policy.f0_var_rate))
    return UtteranceSpec(f0_base=policy.target_f0, duration_s=spec.duration_s,
                         f0_var=policy.f0_var, f0_var_rate=cycles / spec.duration_s,
                         pauses=pauses, amplitude=policy.amplitude, sample_rate=spec.sample_rate)


def degrade_tracks(spec, policies, seed):
    tracks = build_tracks(spec, seed)
    rng = np.random.default_rng([seed, 1])
    for pol in policies:
        if isinstance(pol, F0Smooth):
            width = int(round(pol.window_s * tracks.sample_rate))
            tracks.f0 = _moving_average(tracks.f0, width)
            tracks.jitter = _moving_average(tracks.jitter, width)
        elif isinstance(pol, EnergyGain):
            tracks.gain_db += pol.db + pol.spread_db * rng.standard_normal()
        elif isinstance(pol, JitterRemove):
            tracks.jitter = np.zeros_like(tracks.jitter)
        elif isinstance(pol, PausePreserve):
            pass
        elif isinstance(pol, TranscriptResynth):
            tracks = build_tracks(resynth_spec(spec, pol), seed)
        else:
            raise SynthError(f"unsupported policy {pol!r}")
    return tracks


def degrade(spec, policies, seed):
    """Render ``spec`` after applying ``policies`` to its parameter tracks."""
    return render(degrade_tracks(spec, [parse_policy(p) if not hasattr(p, "__dataclass_fields__")
                                        else p for p in policies], seed))


# --- cohorts --------------------------------------------------------------

@dataclass(frozen=True)
class GroupDistribution:
    """Uniform ranges for the parameters of one clinical group."""

    jitter_pct: tuple = (0.2, 0.6)
    f0_var: tuple = (15.0, 30.0)
    tremor_depth: tuple = (1.5, 3.0)
    tremor_rate: tuple = (4.0, 6.0)
    pause_count: tuple = (2, 4)
    pause_dur: tuple = (0.15, 0.35)
    duration_s: tuple = (3.0, 4.0)
    level_db: tuple = (-3.0, 3.0)
    f0_spread: float = 0.03
    """Relative per-utterance deviation of F0 around the speaker's base."""

    def validate(self):
        for name in ("jitter_pct", "f0_var", "tremor_depth", "tremor_rate", "pause_count", "pause_dur",
                     "duration_s", "level_db"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise SynthError(f"{name}: empty range ({lo}, {hi})")
        if self.jitter_pct[0] < 0 or self.f0_var[0] < 0 or self.tremor_depth[0] < 0:
            raise SynthError("negative ranges for non-negative parameters")
        if self.pause_count[0] < 0 or self.pause_dur[0] <= 0 or self.duration_s[0] <= 0:
            raise SynthError("pause and duration ranges must be positive")
        if not 0 <= self.f0_spread < 0.5:
            raise SynthError("f0_spread must lie in [0, 0.5)")


DEFAULT_GROUPS = {
    "HC": GroupDistribution(),
    "PD": GroupDistribution(jitter_pct=(1.2, 2.0), f0_var=(5.0, 12.0), pause_count=(3, 5),
                            pause_dur=(0.3, 0.6)),
}
# Pause timing is the only group marker besides jitter; intonation depth is
# shared and a strong, fixed-depth tremor dominates frame-to-frame F0 motion.
TIMING_GROUPS = {
    "HC": GroupDistribution(jitter_pct=(0.2, 0.5), f0_var=(10.0, 20.0), tremor_depth=(8.0, 12.0),
                            tremor_rate=(4.5, 5.5), pause_count=(3, 3), pause_dur=(0.1, 1.0),
                            duration_s=(5.0, 6.0), level_db=(-0.5, 0.5), f0_spread=0.01),
    "PD": GroupDistribution(jitter_pct=(0.8, 1.2), f0_var=(10.0, 20.0), tremor_depth=(8.0, 12.0),
                            tremor_rate=(4.5, 5.5), pause_count=(3, 3), pause_dur=(0.3, 1.5),
                            duration_s=(5.0, 6.0), level_db=(-0.5, 0.5), f0_spread=0.01),
}
# F0 variability and jitter separate the groups; pauses do not.
MARKER_GROUPS = {
    "HC": GroupDistribution(jitter_pct=(0.2, 0.6), f0_var=(15.0, 30.0), pause_count=(2, 4)),
    "PD": GroupDistribution(jitter_pct=(1.2, 2.0), f0_var=(5.0, 12.0), pause_count=(2, 4)),
}
IDENTICAL_GROUPS = {"HC": GroupDistribution(), "PD": GroupDistribution()}
GROUP_PRESETS = {"default": DEFAULT_GROUPS, "timing": TIMING_GROUPS, "marker": MARKER_GROUPS,
                 "identical": IDENTICAL_GROUPS}
F0_RANGES = {"M": (95.0, 135.0), "F": (170.0, 230.0)}


@dataclass
class Cohort:
    records: list
    specs: dict
    seeds: dict = field(default_factory=dict)

    def spec_of(self, uid):
        return self.specs[uid]


def _place_pauses(rng, duration, count, dur_range):
    durs = rng.uniform(*dur_range, size=count)
    speech = duration - durs.sum()
    need = (count + 1) * MIN_SEGMENT_S
    if speech < need:
        duration += need - speech
        speech = need
    shares = rng.dirichlet(np.full(count + 1, 2.0))
    segs = MIN_SEGMENT_S + shares * (speech - need)
    pauses, t = [], 0.0
    for i in range(count):
        t += segs[i]
        pauses.append((round(t, 4), round(float(durs[i]), 4)))
        t += durs[i]
    return duration, tuple(pauses)


def synth_cohort(n_hc, n_pd, groups=None, seed=0, utterances_per_speaker=4,
                 task="sentences", sample_rate=16000, genders="MF"):
    """Draw utterance specs for an HC/PD cohort; nothing is rendered here.

    Speakers within a group cycle through ``genders`` ("MF" alternates).
    """
    if n_hc < 2 or n_pd < 2:
        raise SynthError("need at least 2 speakers per group")
    if task == "monologue":
        utterances_per_speaker = 1
    if utterances_per_speaker < 1:
        raise SynthError("utterances_per_speaker must be >= 1")
    if not genders or set(genders) - set(F0_RANGES):
        raise SynthError(f"genders must be drawn from {sorted(F0_RANGES)}, got '{genders}'")
    groups = dict(DEFAULT_GROUPS if groups is None else groups)
    for g in ("HC", "PD"):
        if g not in groups:
            raise SynthError(f"missing distribution for group {g}")
        groups[g].validate()
    records, specs, seeds = [], {}, {}
    for group, count in (("HC", n_hc), ("PD", n_pd)):
        dist = groups[group]
        for i in range(count):
            speaker = f"{group}{i:02d}"
            gender = genders[i % len(genders)]
            rng = np.random.default_rng(derive_seed(speaker, seed))
            f0_base = rng.uniform(*F0_RANGES[gender])
            jit_c = rng.uniform(*dist.jitter_pct)
            var_c = rng.uniform(*dist.f0_var)
            for u in range(utterances_per_speaker):
                uid = f"{speaker}_u{u:02d}"
                duration = rng.uniform(*dist.duration_s)
                count_p = int(rng.integers(dist.pause_count[0], dist.pause_count[1] + 1))
                duration, pauses = _place_pauses(rng, duration, count_p, dist.pause_dur)
                spec = UtteranceSpec(
                    f0_base=round(float(f0_base * (1 + dist.f0_spread * rng.uniform(-1, 1))), 3),
                    duration_s=round(float(duration), 4),
                    f0_var=round(float(var_c * rng.uniform(0.85, 1.15)), 3),
                    f0_var_rate=round(float(rng.uniform(0.3, 0.8)), 3),
                    jitter_pct=round(float(jit_c * rng.uniform(0.85, 1.15)), 4),
                    tremor_depth=round(float(rng.uniform(*dist.tremor_depth)), 3),
                    tremor_rate=round(float(rng.uniform(*dist.tremor_rate)), 3),
                    pauses=pauses,
                    amplitude=round(float(0.3 * 10 ** (rng.uniform(*dist.level_db) / 20)), 5),
                    sample_rate=sample_rate,
                )
                specs[uid] = spec
                seeds[uid] = derive_seed(uid, seed)
                records.append(UtteranceRecord(uid, speaker, gender, group, task,
                                               audio_path=f"wav/{uid}.wav"))
    return Cohort(records, specs, seeds)


def render_cohort(cohort, policies=None):
    """Waveforms by id, undegraded when ``policies`` is None."""
    out = {}
    for rec in cohort.records:
        spec, s = cohort.specs[rec.id], cohort.seeds[rec.id]
        out[rec.id] = synth_utterance(spec, s) if policies is None else degrade(spec, policies, s)
    return out


def write_spec_file(cohort, path):
    with open(path, "w", encoding="utf-8") as fh:
        for rec in cohort.records:
            row = {"id": rec.id, "seed": cohort.seeds[rec.id]}
            row.update(cohort.specs[rec.id].to_dict())
            fh.write(json.dumps(row) + "\n")


def read_spec_file(path):
    specs, seeds = {}, {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                row = json.loads(line)
                uid = row.pop("id")
                seeds[uid] = int(row.pop("seed"))
                specs[uid] = UtteranceSpec.from_dict(row)
    return specs, seeds


# --- frame-level speaker model --------------------------------------------

@dataclass
class FrameModel:
    """Frames = shared content unit + speaker offset + gender offset + noise.

    A stand-in for encoder features: identity lives in the speaker offset,
    content in the unit sequence.
    """

    dim: int = 32
    n_units: int = 48
    speaker_scale: float = 0.6
    gender_scale: float = 0.8
    noise: float = 0.3
    hop_s: float = 0.02
    seed: int = 0

    def __post_init__(self):
        rng = np.random.default_rng([self.seed, 7])
        self.units = rng.standard_normal((self.n_units, self.dim))
        self.gender_offsets = {g: self.gender_scale * rng.standard_normal(self.dim)
                               for g in ("M", "F")}

    def speaker_offset(self, speaker):
        rng = np.random.default_rng(derive_seed("offset/" + speaker, self.seed))
        return self.speaker_scale * rng.standard_normal(self.dim)

    def utterance(self, key, speaker, gender, n_frames, offset=None):
        rng = np.random.default_rng(derive_seed("frames/" + key, self.seed))
        units = rng.integers(self.n_units, size=n_frames)
        base = self.speaker_offset(speaker) if offset is None else offset
        frames = (self.units[units] + base + self.gender_offsets[gender]
                  + self.noise * rng.standard_normal((n_frames, self.dim)))
        return FrameMatrix(frames.astype(np.float32), self.hop_s)

    def randomize_offset(self, key, fm, speaker, gender):
        """Swap the speaker offset for a fresh random one (identity scrambling)."""
        rng = np.random.default_rng(derive_seed("scramble/" + key, self.seed))
        new = self.speaker_scale * rng.standard_normal(self.dim)
        frames = fm.frames.astype(np.float64) - self.speaker_offset(speaker) + new
        return FrameMatrix(frames.astype(np.float32), fm.hop_s)


def write_cohort(cohort, out_dir, policies=None, frame_model=None, frames_per_second=50,
                 name="original", scramble=False):
    """Render a cohort condition to ``out_dir``: WAVs, optional SPFM frames, manifest.

    With ``scramble`` every utterance's frames get a fresh random speaker offset.
    """
    out = Path(out_dir)
    (out / "wav" / name).mkdir(parents=True, exist_ok=True)
    if frame_model is not None:
        (out / "fmat" / name).mkdir(parents=True, exist_ok=True)
    records = []
    for rec in cohort.records:
        spec, s = cohort.specs[rec.id], cohort.seeds[rec.id]
        w = synth_utterance(spec, s) if policies is None else degrade(spec, policies, s)
        wav_rel = f"wav/{name}/{rec.id}.wav"
        write_wav(w, out / wav_rel)
        fmat_rel = None
        if frame_model is not None:
            n = max(2, int(round(spec.duration_s * frames_per_second)))
            fm = frame_model.utterance(rec.id, rec.speaker, rec.gender, n)
            if scramble:
                fm = frame_model.randomize_offset(rec.id, fm, rec.speaker, rec.gender)
            fmat_rel = f"fmat/{name}/{rec.id}.fmat"
            write_fmat(fm, out / fmat_rel)
        records.append(replace(rec, audio_path=wav_rel, feature_path=fmat_rel))
    manifest = out / ("manifest.jsonl" if name == "original" else f"manifest_{name}.jsonl")
    write_manifest(records, manifest)
    return records


def write_targets(frame_model, out_dir, n_speakers=8, genders="MF", utterances=5, n_frames=200,
                  task="sentences"):
    """Frame matrices and a manifest for a pool of external target speakers."""
    out = Path(out_dir)
    (out / "fmat" / "targets").mkdir(parents=True, exist_ok=True)
    records = []
    for j in range(n_speakers):
        speaker, gender = f"T{j:02d}", genders[j % len(genders)]
        for u in range(utterances):
            uid = f"{speaker}_u{u:02d}"
            rel = f"fmat/targets/{uid}.fmat"
            write_fmat(frame_model.utterance(uid, speaker, gender, n_frames), out / rel)
            records.append(UtteranceRecord(uid, speaker, gender, "HC", task, feature_path=rel))
    write_manifest(records, out / "manifest_targets.jsonl")
    return records
