"""Frame-wise kNN voice conversion over a target speaker's feature pool."""

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .corpus import GENDERS, FrameMatrix

ZERO_NORM = 1e-12
POLICIES = ("same_gender", "cross_gender", "unconstrained")

# rows per similarity block; 256 x 80k doubles is ~160 MB
_BLOCK_ROWS = 256

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF


class ConversionError(ValueError):
    pass


def fnv1a_64(data):
    h = _FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * _FNV_PRIME) & _MASK64
    return h


def derive_seed(key, seed):
    """Per-item seed: FNV-1a-64 of the key's UTF-8 bytes XOR the run seed."""
    return fnv1a_64(key.encode("utf-8")) ^ (int(seed) & _MASK64)


@dataclass(frozen=True, eq=False)
class TargetPool:
    speaker: str
    gender: str
    frames: np.ndarray
    norms: np.ndarray
    dropped: int = 0
    _unit: np.ndarray = field(default=None, repr=False)
    _dups: tuple = field(default=None, repr=False)
    """(duplicate, representative) column indices of repeated unit directions."""

    @property
    def size(self):
        return self.frames.shape[0]

    @property
    def dim(self):
        return self.frames.shape[1]

    @property
    def unit_rows(self):
        return self._unit


def build_pool(speaker, gender, matrices):
    """Concatenate a target speaker's frames, dropping (near-)zero rows."""
    if gender not in GENDERS:
        raise ConversionError(f"unknown gender '{gender}'")
    if not matrices:
        raise ConversionError(f"no frame matrices for target '{speaker}'")
    dims = {m.frames.shape[1] for m in matrices}
    if len(dims) != 1:
        raise ConversionError(f"dimension mismatch in pool '{speaker}': {sorted(dims)}")
    frames = np.concatenate([m.frames for m in matrices], axis=0)
    norms = np.linalg.norm(frames.astype(np.float64), axis=1)
    keep = norms >= ZERO_NORM
    dropped = int((~keep).sum())
    frames = np.ascontiguousarray(frames[keep])
    norms = norms[keep]
    if frames.shape[0] == 0:
        raise ConversionError(f"pool '{speaker}' is empty after dropping zero-norm rows")
    unit = frames.astype(np.float64) / norms[:, None]
    for arr in (frames, norms, unit):
        arr.setflags(write=False)
    return TargetPool(speaker, gender, frames, norms, dropped, unit, _duplicate_columns(unit))


def _duplicate_columns(unit):
    """Rows sharing a unit direction, each mapped to its first occurrence.

    A blocked matmul may round identical columns differently, so the scores
    of duplicates are copied from their representative to keep ties exact.
    """
    _, first, inverse = np.unique(unit, axis=0, return_index=True, return_inverse=True)
    rep = first[inverse.ravel()]
    dup = np.flatnonzero(rep != np.arange(unit.shape[0]))
    return dup, rep[dup]


@dataclass
class ConversionInfo:
    indices: np.ndarray
    """T x k pool-row indices, best match first; -1 for passed-through rows."""
    zero_rows: int


def knn_indices(src_frames, pool, k):
    """Indices of the k most cosine-similar pool rows for every source row."""
    src = np.asarray(src_frames, dtype=np.float32)
    if src.ndim != 2 or src.shape[1] != pool.dim:
        raise ConversionError(
            f"dimension mismatch: source D={src.shape[-1]}, pool D={pool.dim}")
    if not 1 <= k <= pool.size:
        raise ConversionError(f"k={k} must lie in [1, pool size {pool.size}]")
    q = src.astype(np.float64)
    qn = np.linalg.norm(q, axis=1)
    zero = qn < ZERO_NORM
    idx = np.full((src.shape[0], k), -1, dtype=np.int64)
    live = np.flatnonzero(~zero)
    unit_t = pool.unit_rows.T
    dup, rep = pool._dups
    for start in range(0, live.size, _BLOCK_ROWS):
        rows = live[start:start + _BLOCK_ROWS]
        sims = (q[rows] / qn[rows, None]) @ unit_t
        if dup.size:
            sims[:, dup] = sims[:, rep]
        idx[rows] = kernels.topk_desc(np.ascontiguousarray(sims), k)
    return idx, zero


def convert(src, pool, k=4, return_info=False):
    """Replace each source frame by the mean of its k nearest pool frames.

    Similarity is cosine, computed in double precision; ties go to the lower
    pool index. Zero-norm source frames are copied through unchanged.
    """
    idx, zero = knn_indices(src.frames, pool, k)
    out = src.frames.astype(np.float64)
    live = ~zero
    if live.any():
        chosen = np.sort(idx[live], axis=1)
        # sum in ascending pool-index order so results do not depend on ranking
        out[live] = pool.frames[chosen].astype(np.float64).sum(axis=1) / k
    result = FrameMatrix(out.astype(np.float32), src.hop_s)
    if return_info:
        return result, ConversionInfo(idx, int(zero.sum()))
    return result


def resynthesis_passthrough(src):
    """Identity conversion: features bypass the kNN step."""
    return src


@dataclass(frozen=True)
class ConversionConfig:
    k: int = 4
    seed: int = 0
    policy: str = "same_gender"

    def __post_init__(self):
        if int(self.k) < 1:
            raise ConversionError(f"k must be >= 1, got {self.k}")
        if self.policy not in POLICIES:
            raise ConversionError(f"unknown target policy '{self.policy}'")


def eligible_targets(gender, candidates, policy):
    if policy == "same_gender":
        return [c for c in candidates if c.gender == gender]
    if policy == "cross_gender":
        return [c for c in candidates if c.gender != gender]
    return list(candidates)


def select_target(record, candidates, cfg):
    """Pick a random target pool for one utterance, reproducibly.

    The draw is keyed on (cfg.seed, record.id), so it does not depend on
    processing order.
    """
    if not candidates:
        raise ConversionError("no target candidates supplied")
    pool = eligible_targets(record.gender, candidates, cfg.policy)
    if not pool:
        raise ConversionError(
            f"no target satisfies policy '{cfg.policy}' for '{record.id}' (gender {record.gender})")
    rng = np.random.default_rng(derive_seed(record.id, cfg.seed))
    return pool[int(rng.integers(len(pool)))]
