"""Prosody and phonation features from waveforms.

Pitch uses the cumulative-mean-normalised difference function (YIN family).
Pauses come from an energy gate relative to the median speech level.
Jitter is a frame-level period-perturbation proxy for glottal-cycle
variability.
"""

import csv
from dataclasses import asdict, dataclass, field

import numpy as np

from . import kernels
from .corpus import Waveform

ENERGY_FLOOR = 1e-10
FEATURES = (
    "f0_avg", "f0_std", "f0_deriv_avg",
    "energy_avg", "energy_std",
    "pause_dur_avg", "pause_dur_std", "pause_count",
    "unvoiced_ratio", "jitter_avg", "jitter_std",
)


class ProsodyError(ValueError):
    pass


@dataclass(frozen=True)
class ProsodyConfig:
    frame_s: float = 0.04
    hop_s: float = 0.01
    fmin: float = 60.0
    fmax: float = 400.0
    threshold: float = 0.15
    voicing_floor_db: float = -60.0
    pause_rel_db: float = 25.0
    min_pause_s: float = 0.1


@dataclass
class F0Track:
    f0: np.ndarray
    voiced: np.ndarray
    frame_s: float
    hop_s: float

    def __post_init__(self):
        self.f0 = np.asarray(self.f0, dtype=np.float64)
        self.voiced = np.asarray(self.voiced, dtype=bool)
        if self.f0.shape != self.voiced.shape:
            raise ProsodyError("f0 and voiced arrays differ in length")
        if np.any((self.f0 > 0) != self.voiced):
            raise ProsodyError("f0 must be positive exactly on voiced frames")

    @property
    def times(self):
        return np.arange(self.f0.size) * self.hop_s + self.frame_s / 2


def _frame_geometry(sr, frame_s, hop_s):
    frame_len = int(round(frame_s * sr))
    hop_len = int(round(hop_s * sr))
    if frame_len < 1 or hop_len < 1:
        raise ProsodyError("frame and hop must span at least one sample")
    return frame_len, hop_len


def frame_signal(x, frame_len, hop_len):
    if x.size < frame_len:
        raise ProsodyError(
            f"waveform of {x.size} samples is shorter than one {frame_len}-sample frame")
    n = 1 + (x.size - frame_len) // hop_len
    return np.lib.stride_tricks.sliding_window_view(x, frame_len)[::hop_len][:n]


def difference_function(frames, window, tau_max):
    """d(tau) = sum_{j<window} (x[j] - x[j+tau])^2 for tau = 0..tau_max."""
    n, frame_len = frames.shape
    head = frames[:, :window]
    e_head = np.einsum("ij,ij->i", head, head)
    csum = np.concatenate([np.zeros((n, 1)), np.cumsum(frames * frames, axis=1)], axis=1)
    lags = np.arange(tau_max + 1)
    e_lag = csum[:, lags + window] - csum[:, lags]
    size = 1 << int(np.ceil(np.log2(frame_len + window)))
    spec = np.fft.rfft(frames, size) * np.conj(np.fft.rfft(head, size))
    xcorr = np.fft.irfft(spec, size)[:, :tau_max + 1]
    d = e_head[:, None] + e_lag - 2.0 * xcorr
    d[:, 0] = 0.0
    return np.maximum(d, 0.0)


def energy_track(w, frame_s=0.04, hop_s=0.01):
    """Per-frame energy in dB: 10 log10(mean square + 1e-10)."""
    frame_len, hop_len = _frame_geometry(w.sample_rate, frame_s, hop_s)
    frames = frame_signal(w.samples, frame_len, hop_len)
    ms = np.einsum("ij,ij->i", frames, frames) / frame_len
    return 10.0 * np.log10(ms + ENERGY_FLOOR)


def f0_track(w, frame_s=0.04, hop_s=0.01, fmin=60.0, fmax=400.0, threshold=0.15,
             voicing_floor_db=-60.0):
    """Frame-wise F0 by the cumulative-mean-normalised difference function."""
    sr = w.sample_rate
    if not fmin < fmax:
        raise ProsodyError(f"fmin ({fmin}) must be below fmax ({fmax})")
    if sr < 4 * fmax:
        raise ProsodyError(f"sample rate {sr} Hz too low for fmax {fmax} Hz")
    frame_len, hop_len = _frame_geometry(sr, frame_s, hop_s)
    tau_min = max(1, int(np.floor(sr / fmax)))
    tau_max = int(np.ceil(sr / fmin)) + 1
    window = frame_len - tau_max
    if window < 1:
        raise ProsodyError(f"frame of {frame_s} s too short for fmin {fmin} Hz")
    frames = frame_signal(w.samples, frame_len, hop_len)
    energy = 10.0 * np.log10(np.einsum("ij,ij->i", frames, frames) / frame_len + ENERGY_FLOOR)
    period = kernels.yin_pick(difference_function(frames, window, tau_max),
                              tau_min, tau_max, threshold)
    with np.errstate(divide="ignore"):
        f0 = np.where(period > 0, sr / period, 0.0)
    ok = (f0 >= fmin) & (f0 <= fmax) & (energy >= voicing_floor_db)
    return F0Track(np.where(ok, f0, 0.0), ok, frame_s, hop_s)


@dataclass
class PauseSegmentation:
    pauses: list
    """(start_s, end_s) per pause, in time order."""
    region: tuple = None
    """First and last non-silent frame index, or None when all frames are silent."""
    pause_frames: np.ndarray = field(default=None, repr=False)

    @property
    def durations(self):
        return np.array([b - a for a, b in self.pauses], dtype=np.float64)


def _runs(mask):
    """(start, stop) of maximal True runs."""
    padded = np.concatenate([[False], mask, [False]])
    edges = np.flatnonzero(np.diff(padded.astype(np.int8)))
    return list(zip(edges[::2], edges[1::2]))


def segment_pauses(energy, voiced, hop_s=0.01, frame_s=0.04, min_pause_s=0.1, rel_db=25.0):
    """Find pauses: unvoiced runs more than ``rel_db`` below the median speech level.

    A pause spans the time covered by its silent analysis windows, so a run
    of n frames lasts about (n - 1) * hop + frame; both edges are refined by
    linear interpolation of frame power against the gate. Leading and
    trailing silence is never a pause.
    """
    energy = np.asarray(energy, dtype=np.float64)
    voiced = np.asarray(voiced, dtype=bool)
    if energy.shape != voiced.shape:
        raise ProsodyError("energy and voicing tracks are not aligned")
    pause_frames = np.zeros(energy.size, dtype=bool)
    floor_db = 10.0 * np.log10(ENERGY_FLOOR)
    ref = voiced if voiced.any() else energy > floor_db + 1e-6
    if not ref.any():
        return PauseSegmentation([], None, pause_frames)
    level = np.median(energy[ref])
    silent = energy < level - rel_db
    loud = np.flatnonzero(~silent)
    if loud.size == 0:
        return PauseSegmentation([], None, pause_frames)
    first, last = int(loud[0]), int(loud[-1])
    candidate = silent & ~voiced
    candidate[:first] = False
    candidate[last + 1:] = False
    power = 10.0 ** (energy / 10.0)
    gate = 10.0 ** ((level - rel_db) / 10.0)
    pauses = []
    for start, stop in _runs(candidate):
        # refine both edges to the sub-frame position where power crosses the
        # gate; window overlap with speech falls linearly between frames
        lead = (power[start - 1] - gate) / (power[start - 1] - power[start])
        tail = (gate - power[stop - 1]) / (power[stop] - power[stop - 1])
        onset = (start - 1 + lead) * hop_s
        dur = (stop - 1 + tail) * hop_s + frame_s - onset
        if dur >= min_pause_s - 1e-9:
            pauses.append((onset, onset + dur))
            pause_frames[start:stop] = True
    return PauseSegmentation(pauses, (first, last), pause_frames)


def voiced_runs(voiced):
    return _runs(np.asarray(voiced, dtype=bool))


def jitter_stats(track):
    """Mean and std of |T_i - T_{i-1}| / mean(T) over consecutive voiced frames.

    Returns ``(jitter_avg, jitter_std, no_voicing)``; the flag is set and the
    stats are zero when no two consecutive frames are voiced.
    """
    f0, voiced = track.f0, track.voiced
    samples = []
    if voiced.any():
        periods = np.where(voiced, 1.0 / np.where(voiced, f0, 1.0), 0.0)
        mean_period = periods[voiced].mean()
        for start, stop in voiced_runs(voiced):
            if stop - start >= 2:
                samples.append(np.abs(np.diff(periods[start:stop])) / mean_period)
    if not samples:
        return 0.0, 0.0, True
    s = np.concatenate(samples)
    return float(s.mean()), float(s.std()), False


@dataclass
class AcousticSummary:
    f0_avg: float
    f0_std: float
    f0_deriv_avg: float
    energy_avg: float
    energy_std: float
    pause_dur_avg: float
    pause_dur_std: float
    pause_count: int
    unvoiced_ratio: float
    jitter_avg: float
    jitter_std: float
    flags: tuple = ()

    def values(self):
        return np.array([getattr(self, f) for f in FEATURES], dtype=np.float64)

    def as_dict(self):
        d = asdict(self)
        d["flags"] = ";".join(self.flags)
        return d


def summarize(w, cfg=None):
    """Compute the per-utterance prosody/phonation summary.

    Energy and voicing statistics use the speech region (first to last
    non-silent frame) minus detected pauses.
    """
    cfg = cfg or ProsodyConfig()
    track = f0_track(w, cfg.frame_s, cfg.hop_s, cfg.fmin, cfg.fmax, cfg.threshold,
                     cfg.voicing_floor_db)
    energy = energy_track(w, cfg.frame_s, cfg.hop_s)
    seg = segment_pauses(energy, track.voiced, cfg.hop_s, cfg.frame_s, cfg.min_pause_s,
                         cfg.pause_rel_db)
    flags = []

    voiced = track.voiced
    if voiced.any():
        f0v = track.f0[voiced]
        f0_avg, f0_std = float(f0v.mean()), float(f0v.std())
        pairs = voiced[1:] & voiced[:-1]
        f0_deriv = float(np.abs(np.diff(track.f0))[pairs].mean()) if pairs.any() else 0.0
    else:
        f0_avg = f0_std = f0_deriv = 0.0
    jit_avg, jit_std, no_voicing = jitter_stats(track)
    if not voiced.any():
        no_voicing = True
    if no_voicing:
        flags.append("no_voicing")

    if seg.region is None:
        flags.append("no_speech")
        speech = np.zeros(energy.size, dtype=bool)
    else:
        speech = np.zeros(energy.size, dtype=bool)
        speech[seg.region[0]:seg.region[1] + 1] = True
        speech &= ~seg.pause_frames
    span = speech if speech.any() else np.ones(energy.size, dtype=bool)
    energy_avg, energy_std = float(energy[span].mean()), float(energy[span].std())
    unvoiced_ratio = float((~voiced[speech]).mean()) if speech.any() else 0.0

    durs = seg.durations
    pause_avg = float(durs.mean()) if durs.size else 0.0
    pause_std = float(durs.std()) if durs.size else 0.0
    return AcousticSummary(
        f0_avg=f0_avg, f0_std=f0_std, f0_deriv_avg=f0_deriv,
        energy_avg=energy_avg, energy_std=energy_std,
        pause_dur_avg=pause_avg, pause_dur_std=pause_std, pause_count=len(seg.pauses),
        unvoiced_ratio=unvoiced_ratio, jitter_avg=jit_avg, jitter_std=jit_std,
        flags=tuple(flags),
    )


def write_summaries(rows, path):
    """Write (id, AcousticSummary) pairs; header is id, the 11 features, flags."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("id",) + FEATURES + ("flags",))
        for uid, s in rows:
            writer.writerow([uid] + [repr(float(getattr(s, f))) if f != "pause_count"
                                     else str(s.pause_count) for f in FEATURES]
                            + [";".join(s.flags)])
