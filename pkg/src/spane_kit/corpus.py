"""Data model and on-disk formats: manifests, SPFM frame matrices, WAV I/O."""

import json
import struct
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.io import wavfile

GENDERS = ("M", "F")
GROUPS = ("HC", "PD")
TASKS = ("sentences", "monologue")

FMAT_MAGIC = b"SPFM"
FMAT_VERSION = 1
_FMAT_HEADER = struct.Struct("<4sIIIf")


class CorpusError(ValueError):
    """Malformed manifest, feature file or waveform."""


class ManifestError(CorpusError):
    pass


class FmatError(CorpusError):
    pass


class WavError(CorpusError):
    pass


@dataclass(frozen=True)
class UtteranceRecord:
    id: str
    speaker: str
    gender: str
    group: str
    task: str
    audio_path: Optional[str] = None
    feature_path: Optional[str] = None
    transcript: Optional[str] = None

    def to_json(self):
        return json.dumps({k: v for k, v in asdict(self).items() if v is not None},
                          ensure_ascii=False, sort_keys=False)


_REQUIRED = ("id", "speaker", "gender", "group", "task")
_ENUMS = {"gender": GENDERS, "group": GROUPS, "task": TASKS}
_FIELDS = _REQUIRED + ("audio_path", "feature_path", "transcript")


def parse_record(obj, line_no=None):
    """Validate one decoded manifest object and build the record."""
    where = f"line {line_no}: " if line_no is not None else ""
    if not isinstance(obj, dict):
        raise ManifestError(f"{where}expected a JSON object")
    for name in _REQUIRED:
        if name not in obj or obj[name] in (None, ""):
            raise ManifestError(f"{where}missing field '{name}'")
        if not isinstance(obj[name], str):
            raise ManifestError(f"{where}field '{name}' must be a string")
    for name, allowed in _ENUMS.items():
        if obj[name] not in allowed:
            raise ManifestError(
                f"{where}unknown {name} '{obj[name]}' (expected one of {', '.join(allowed)})")
    unknown = set(obj) - set(_FIELDS)
    if unknown:
        raise ManifestError(f"{where}unknown field(s) {', '.join(sorted(unknown))}")
    if not obj.get("audio_path") and not obj.get("feature_path"):
        raise ManifestError(f"{where}record needs audio_path or feature_path")
    return UtteranceRecord(**{k: obj.get(k) for k in _FIELDS})


def load_manifest(path):
    """Read a line-delimited JSON manifest, validating every record.

    Blank lines are skipped. Errors cite 1-based line numbers.
    """
    records = []
    seen = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ManifestError(f"line {line_no}: invalid JSON ({exc.msg})") from None
            rec = parse_record(obj, line_no)
            if rec.id in seen:
                raise ManifestError(
                    f"line {line_no}: duplicate id '{rec.id}' (first seen on line {seen[rec.id]})")
            seen[rec.id] = line_no
            records.append(rec)
    return records


def write_manifest(records, path):
    ids = [r.id for r in records]
    if len(set(ids)) != len(ids):
        raise ManifestError("duplicate ids in records")
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(rec.to_json() + "\n")


def resolve(base, path):
    """Resolve a manifest path relative to the manifest's directory."""
    p = Path(path)
    return p if p.is_absolute() else Path(base).parent / p


@dataclass(frozen=True, eq=False)
class FrameMatrix:
    """T x D frame-level representation of one utterance.

    Frames are stored as float32 and ``hop_s`` is rounded to float32 so a
    matrix survives a round trip through the SPFM format unchanged.
    """

    frames: np.ndarray
    hop_s: float

    def __post_init__(self):
        frames = np.array(self.frames, dtype=np.float32, copy=True)
        if frames.ndim != 2 or frames.shape[0] < 1 or frames.shape[1] < 1:
            raise CorpusError(f"frame matrix must be T x D with T, D >= 1, got {frames.shape}")
        if not np.isfinite(frames).all():
            raise CorpusError("frame matrix contains non-finite values")
        hop = float(np.float32(self.hop_s))
        if not hop > 0 or not np.isfinite(hop):
            raise CorpusError(f"hop_s must be positive, got {self.hop_s}")
        frames.setflags(write=False)
        object.__setattr__(self, "frames", frames)
        object.__setattr__(self, "hop_s", hop)

    @property
    def shape(self):
        return self.frames.shape

    def __eq__(self, other):
        if not isinstance(other, FrameMatrix):
            return NotImplemented
        return (self.hop_s == other.hop_s and self.frames.shape == other.frames.shape
                and np.array_equal(self.frames, other.frames))


def write_fmat(m, path):
    t, d = m.frames.shape
    header = _FMAT_HEADER.pack(FMAT_MAGIC, FMAT_VERSION, t, d, m.hop_s)
    payload = m.frames.astype("<f4", copy=False).tobytes(order="C")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload)


def read_fmat(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < _FMAT_HEADER.size:
        raise FmatError(f"{path}: file shorter than the {_FMAT_HEADER.size}-byte header")
    magic, version, t, d, hop = _FMAT_HEADER.unpack_from(blob)
    if magic != FMAT_MAGIC:
        raise FmatError(f"{path}: bad magic {magic!r}")
    if version != FMAT_VERSION:
        raise FmatError(f"{path}: unsupported version {version}")
    expected = t * d * 4
    payload = blob[_FMAT_HEADER.size:]
    if len(payload) != expected:
        raise FmatError(
            f"{path}: truncated payload ({len(payload)} bytes, header implies {expected})")
    frames = np.frombuffer(payload, dtype="<f4").reshape(t, d)
    if not np.isfinite(frames).all():
        raise FmatError(f"{path}: non-finite values in payload")
    return FrameMatrix(frames, hop)


@dataclass(frozen=True, eq=False)
class Waveform:
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        x = np.asarray(self.samples, dtype=np.float64)
        if x.ndim != 1 or x.size < 1:
            raise CorpusError("waveform must be a non-empty mono sequence")
        if int(self.sample_rate) != self.sample_rate or self.sample_rate <= 0:
            raise CorpusError(f"invalid sample rate {self.sample_rate}")
        object.__setattr__(self, "samples", x)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    @property
    def duration(self):
        return self.samples.size / self.sample_rate


def read_wav(path):
    """Load 16-bit PCM or 32-bit float WAV as a mono float waveform."""
    try:
        rate, data = wavfile.read(path)
    except ValueError as exc:
        raise WavError(f"{path}: unsupported WAV ({exc})") from None
    if data.dtype == np.int16:
        x = data.astype(np.float64) / 32768.0
    elif data.dtype == np.float32:
        x = data.astype(np.float64)
    else:
        raise WavError(f"{path}: unsupported sample encoding {data.dtype}")
    if x.ndim == 2:
        x = x.mean(axis=1)
    if x.size == 0:
        raise WavError(f"{path}: zero-length data chunk")
    return Waveform(x, rate)


def write_wav(w, path):
    """Write 16-bit PCM, clipping to the representable range."""
    pcm = np.clip(np.round(w.samples * 32768.0), -32768, 32767).astype(np.int16)
    wavfile.write(path, w.sample_rate, pcm)
