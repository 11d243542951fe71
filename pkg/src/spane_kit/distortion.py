"""Per-feature distortion between original and anonymized cohorts.

EMD is the 1-D Wasserstein-1 distance between empirical distributions;
MI is the Kraskov-Stoegbauer-Grassberger estimator (algorithm 1) on rows
paired by utterance id. Both run on values standardized with statistics
fitted on the original cohort.
"""

import csv
import hashlib
from dataclasses import dataclass

import numpy as np
from scipy.special import digamma

from . import kernels

DEGENERATE_STD = 1e-12
TIE_JITTER = 1e-10
AXIS_GRID = 1e-9


class DistortionError(ValueError):
    pass


@dataclass
class FeatureTable:
    """Rows of named per-utterance features keyed by id."""

    ids: list
    names: list
    values: np.ndarray

    def __post_init__(self):
        self.ids = [str(i) for i in self.ids]
        self.names = [str(n) for n in self.names]
        self.values = np.asarray(self.values, dtype=np.float64).reshape(len(self.ids),
                                                                         len(self.names))
        if len(set(self.ids)) != len(self.ids):
            raise DistortionError("duplicate ids in feature table")
        if len(set(self.names)) != len(self.names):
            raise DistortionError("duplicate feature names")
        if not np.isfinite(self.values).all():
            raise DistortionError("feature table contains non-finite values")

    def column(self, name):
        try:
            return self.values[:, self.names.index(name)]
        except ValueError:
            raise DistortionError(f"no feature column '{name}'") from None

    def select(self, ids):
        pos = {uid: i for i, uid in enumerate(self.ids)}
        return FeatureTable(list(ids), self.names, self.values[[pos[i] for i in ids]])

    @classmethod
    def from_rows(cls, rows, names):
        ids = [uid for uid, _ in rows]
        return cls(ids, list(names), np.array([v for _, v in rows], dtype=np.float64))

    @classmethod
    def read_csv(cls, path, skip=("flags",)):
        """Load ``id`` plus numeric columns; non-numeric bookkeeping columns are skipped."""
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if not header or header[0] != "id":
                raise DistortionError(f"{path}: first column must be 'id'")
            keep = [i for i, h in enumerate(header[1:], start=1) if h not in skip]
            ids, vals = [], []
            for line_no, row in enumerate(reader, start=2):
                if not row:
                    continue
                try:
                    vals.append([float(row[i]) for i in keep])
                except (ValueError, IndexError):
                    raise DistortionError(f"{path}: line {line_no}: bad numeric value") from None
                ids.append(row[0])
        return cls(ids, [header[i] for i in keep], np.array(vals).reshape(len(ids), len(keep)))

    def write_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["id"] + self.names)
            for uid, row in zip(self.ids, self.values):
                w.writerow([uid] + [repr(float(v)) for v in row])


@dataclass
class Standardizer:
    names: list
    mean: np.ndarray
    std: np.ndarray
    degenerate: np.ndarray

    def apply(self, table):
        missing = [n for n in self.names if n not in table.names]
        if missing:
            raise DistortionError(f"table lacks fitted column(s): {', '.join(missing)}")
        cols = np.stack([table.column(n) for n in self.names], axis=1)
        scale = np.where(self.degenerate, 1.0, self.std)
        return FeatureTable(table.ids, self.names, (cols - self.mean) / scale)


def fit_standardizer(table):
    """Per-column mean and population std of the original cohort."""
    if table.values.shape[0] < 2:
        raise DistortionError("need at least 2 rows to fit a standardizer")
    mean = table.values.mean(axis=0)
    std = table.values.std(axis=0)
    return Standardizer(list(table.names), mean, std, std < DEGENERATE_STD)


def apply(s, table):
    return s.apply(table)


def emd_1d(a, b):
    """Wasserstein-1 distance between two empirical samples.

    Integrates |Qa(u) - Qb(u)| over u in [0, 1] where Q are the piecewise
    constant quantile functions. Breakpoints are kept as exact integers on
    the common grid 1/(n*m).
    """
    a = np.sort(np.asarray(a, dtype=np.float64).ravel())
    b = np.sort(np.asarray(b, dtype=np.float64).ravel())
    n, m = a.size, b.size
    if n == 0 or m == 0:
        raise DistortionError("emd_1d needs non-empty samples")
    if not (np.isfinite(a).all() and np.isfinite(b).all()):
        raise DistortionError("emd_1d needs finite samples")
    if n == m:
        return float(np.abs(a - b).sum() / n)
    brk = np.union1d(np.arange(1, n + 1, dtype=np.int64) * m,
                     np.arange(1, m + 1, dtype=np.int64) * n)
    widths = np.diff(brk, prepend=0)
    ia = (brk + m - 1) // m - 1
    ib = (brk + n - 1) // n - 1
    return float((widths * np.abs(a[ia] - b[ib])).sum() / (n * m))


def _axis_jitter(x):
    """Deterministic tie-breaking noise keyed on the axis content only."""
    digest = hashlib.blake2b(np.ascontiguousarray(x).tobytes(), digest_size=8).digest()
    rng = np.random.default_rng(int.from_bytes(digest, "little"))
    return rng.uniform(-1.0, 1.0, size=x.size)


def _prepare_axis(x):
    """Standardize, snap to the AXIS_GRID lattice, then add tie-breaking jitter.

    Snapping removes float rounding left over from standardization, so an
    axis and any translated or rescaled copy of it prepare bit-identically.
    """
    sd = x.std()
    if sd < DEGENERATE_STD:
        return None
    z = np.round((x - x.mean()) / sd / AXIS_GRID) * AXIS_GRID
    return z + TIE_JITTER * _axis_jitter(z)


def ksg_mi_raw(a, b, k=3):
    """Unclamped KSG-1 estimate in nats; 0.0 when either axis is constant."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.size != b.size:
        raise DistortionError(f"length mismatch ({a.size} vs {b.size})")
    n = a.size
    if k < 1 or n < k + 2:
        raise DistortionError(f"need at least k + 2 = {k + 2} paired samples, got {n}")
    if not (np.isfinite(a).all() and np.isfinite(b).all()):
        raise DistortionError("mutual_info needs finite samples")
    x, y = _prepare_axis(a), _prepare_axis(b)
    if x is None or y is None:
        return 0.0
    nx, ny = kernels.ksg_counts(x, y, k)
    return float(digamma(k) + digamma(n) - np.mean(digamma(nx + 1) + digamma(ny + 1)))


def mutual_info(a, b, k=3):
    """KSG mutual information in nats, clamped at zero."""
    return max(0.0, ksg_mi_raw(a, b, k))


@dataclass
class DistortionRow:
    feature: str
    emd: float
    mi: float
    n: int
    mi_raw: float = 0.0


@dataclass
class DistortionReport:
    rows: list

    def by_feature(self):
        return {r.feature: r for r in self.rows}

    def write_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["feature", "emd", "mi", "n"])
            for r in self.rows:
                w.writerow([r.feature, repr(r.emd), repr(r.mi), r.n])

    @classmethod
    def read_csv(cls, path):
        with open(path, newline="", encoding="utf-8") as fh:
            return cls([DistortionRow(r["feature"], float(r["emd"]), float(r["mi"]), int(r["n"]))
                        for r in csv.DictReader(fh)])


def distortion_report(original, anonymized, standardizer=None, k=3):
    """EMD (all rows) and MI (rows paired by id) per feature, sorted by name."""
    standardizer = standardizer or fit_standardizer(original)
    orig = standardizer.apply(original)
    anon = standardizer.apply(anonymized)
    shared = sorted(set(orig.ids) & set(anon.ids))
    if not shared:
        raise DistortionError("original and anonymized tables share no utterance ids")
    po, pa = orig.select(shared), anon.select(shared)
    rows = []
    for name in sorted(standardizer.names):
        emd = emd_1d(orig.column(name), anon.column(name))
        raw = ksg_mi_raw(po.column(name), pa.column(name), k)
        rows.append(DistortionRow(name, emd, max(0.0, raw), len(shared), raw))
    return DistortionReport(rows)
