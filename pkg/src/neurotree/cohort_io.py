"""Subject time-series I/O and synthetic two-cohort generation.

On-disk layout of a cohort directory::

    manifest.csv        subject_id,age,label,file
    <file>              one CSV per subject, v rows (regions) x T columns, no header
    atlas.csv           optional, region_index,region_name,network
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

logger = logging.getLogger(__name__)

NETWORKS = ("VN", "SMN", "DAN", "VAN", "FPN", "DMN", "SUB", "Others")
MANIFEST_HEADER = ["subject_id", "age", "label", "file"]
ATLAS_HEADER = ["region_index", "region_name", "network"]


class CohortError(ValueError):
    """Base class for malformed cohort inputs."""


class ManifestError(CohortError):
    pass


class SubjectFileNotFound(CohortError):
    pass


class RowCountMismatch(CohortError):
    pass


class NonFiniteSignal(CohortError):
    pass


class ZeroVarianceRegion(CohortError):
    pass


class InvalidSynthSpec(CohortError):
    pass


@dataclass
class BoldSeries:
    subject_id: str
    signal: np.ndarray
    age: float
    label: int

    def __post_init__(self):
        self.signal = np.asarray(self.signal, dtype=float)
        validate_signal(self.signal, self.subject_id)
        if not self.age > 0:
            raise CohortError(f"{self.subject_id}: age must be positive, got {self.age}")
        if self.label not in (0, 1):
            raise CohortError(f"{self.subject_id}: label must be 0 or 1, got {self.label}")

    @property
    def v(self) -> int:
        return self.signal.shape[0]

    @property
    def T(self) -> int:
        return self.signal.shape[1]


@dataclass
class Cohort:
    subjects: list[BoldSeries]
    region_labels: list[str] | None = None
    network_map: dict[int, str] | None = None

    def __post_init__(self):
        vs = {s.v for s in self.subjects}
        if len(vs) > 1:
            raise RowCountMismatch(f"subjects disagree on region count: {sorted(vs)}")

    @property
    def v(self) -> int:
        return self.subjects[0].v

    def __len__(self):
        return len(self.subjects)

    def labels(self) -> np.ndarray:
        return np.array([s.label for s in self.subjects], dtype=int)

    def ages(self) -> np.ndarray:
        return np.array([s.age for s in self.subjects], dtype=float)

    def region_name(self, i: int) -> str:
        if self.region_labels is not None and i < len(self.region_labels):
            return self.region_labels[i]
        return str(i)


@dataclass
class SynthSpec:
    """Parameters of the planted two-cohort VAR(1) generator.

    ``age_split`` draws class-0 ages from the lower half of [18, 60] and
    class-1 ages from the upper half, so that labels correlate with age.
    """

    v: int = 12
    T: int = 200
    n_per_class: int = 60
    coupling_strength: float = 0.4
    planted_blocks: list[list[int]] = field(default_factory=lambda: [[0, 1, 2]])
    noise_sigma: float = 1.0
    seed: int = 7
    eta: float = 1.0
    rho: float = 0.5
    self_decay: float = 1.0
    base_scale: float = 0.1
    age_split: bool = False

    def validate(self):
        if self.v < 2 or self.T < 4:
            raise InvalidSynthSpec(f"need v >= 2 and T >= 4, got v={self.v}, T={self.T}")
        if self.n_per_class < 1:
            raise InvalidSynthSpec("n_per_class must be >= 1")
        if not self.noise_sigma > 0:
            raise InvalidSynthSpec("noise_sigma must be positive")
        seen: set[int] = set()
        for block in self.planted_blocks:
            for i in block:
                if not 0 <= i < self.v:
                    raise InvalidSynthSpec(f"planted block index {i} out of range [0, {self.v})")
                if i in seen:
                    raise InvalidSynthSpec(f"planted blocks overlap at index {i}")
                seen.add(i)


def validate_signal(signal: np.ndarray, name: str = "signal"):
    if signal.ndim != 2:
        raise CohortError(f"{name}: signal must be a v x T matrix")
    v, T = signal.shape
    if v < 2 or T < 4:
        raise CohortError(f"{name}: need v >= 2 and T >= 4, got {v} x {T}")
    if not np.all(np.isfinite(signal)):
        raise NonFiniteSignal(f"{name}: NaN or Inf in signal")
    var = signal.var(axis=1)
    bad = np.flatnonzero(var <= 0)
    if bad.size:
        raise ZeroVarianceRegion(f"{name}: zero-variance region {int(bad[0])}")


def standardize_age(age):
    """Map age in years to the O(1) scale used by the ODE and age modulation."""
    return np.asarray(age, dtype=float) / 100.0


def destandardize_age(age_std):
    return np.asarray(age_std, dtype=float) * 100.0


def _read_matrix(path: Path) -> np.ndarray:
    rows = []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if row:
                rows.append([float(x) for x in row])
    return np.array(rows, dtype=float)


def write_matrix(path, m: np.ndarray):
    """Write a matrix as header-less CSV using round-trip-exact decimals."""
    with open(path, "w", newline="") as fh:
        for row in np.atleast_2d(m):
            fh.write(",".join(format(float(x), ".17g") for x in row))
            fh.write("\n")


def load_atlas(path) -> tuple[list[str], dict[int, str]]:
    names: dict[int, str] = {}
    networks: dict[int, str] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ATLAS_HEADER:
            raise CohortError(f"atlas header must be {','.join(ATLAS_HEADER)}")
        for row in reader:
            idx = int(row["region_index"])
            net = row["network"]
            if net not in NETWORKS:
                raise CohortError(f"unknown network {net!r} for region {idx}")
            names[idx] = row["region_name"]
            networks[idx] = net
    labels = [names.get(i, str(i)) for i in range(max(names) + 1)] if names else []
    return labels, networks


def load_cohort(dir_path) -> Cohort:
    root = Path(dir_path)
    manifest = root / "manifest.csv"
    if not manifest.exists():
        raise ManifestError(f"manifest not found: {manifest}")
    subjects = []
    with open(manifest, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != MANIFEST_HEADER:
            raise ManifestError(f"manifest header must be {','.join(MANIFEST_HEADER)}")
        for row in reader:
            if any(row.get(k) in (None, "") for k in MANIFEST_HEADER):
                raise ManifestError(f"incomplete manifest entry: {row}")
            fpath = root / row["file"]
            if not fpath.exists():
                raise SubjectFileNotFound(f"subject file not found: {fpath}")
            signal = _read_matrix(fpath)
            subjects.append(BoldSeries(row["subject_id"], signal,
                                       float(row["age"]), int(row["label"])))
    if not subjects:
        raise ManifestError("manifest lists no subjects")
    subjects.sort(key=lambda s: s.subject_id)
    v0 = subjects[0].v
    for s in subjects:
        if s.v != v0:
            raise RowCountMismatch(f"{s.subject_id} has {s.v} regions, expected {v0}")
    region_labels = network_map = None
    atlas = root / "atlas.csv"
    if atlas.exists():
        region_labels, network_map = load_atlas(atlas)
    return Cohort(subjects, region_labels, network_map)


def save_cohort(cohort: Cohort, dir_path):
    root = Path(dir_path)
    root.mkdir(parents=True, exist_ok=True)
    with open(root / "manifest.csv", "w", newline="") as fh:
        fh.write(",".join(MANIFEST_HEADER) + "\n")
        for s in sorted(cohort.subjects, key=lambda s: s.subject_id):
            fname = f"{s.subject_id}.csv"
            write_matrix(root / fname, s.signal)
            fh.write(f"{s.subject_id},{format(s.age, '.17g')},{s.label},{fname}\n")
    if cohort.region_labels is not None:
        with open(root / "atlas.csv", "w", newline="") as fh:
            fh.write(",".join(ATLAS_HEADER) + "\n")
            for i, name in enumerate(cohort.region_labels):
                net = (cohort.network_map or {}).get(i, "Others")
                fh.write(f"{i},{name},{net}\n")


def coupling_matrix(spec: SynthSpec, label: int, rng: np.random.Generator) -> np.ndarray:
    """Class-dependent coupling A_c: self-decay plus a shared random baseline,
    with planted blocks strengthened in class 1."""
    v = spec.v
    base = spec.base_scale * rng.standard_normal((v, v))
    np.fill_diagonal(base, 0.0)
    a = base - spec.self_decay * np.eye(v)
    if label == 1:
        for block in spec.planted_blocks:
            idx = np.asarray(block, dtype=int)
            a[np.ix_(idx, idx)] += spec.coupling_strength
            a[idx, idx] -= spec.coupling_strength
    return a


def transition_matrix(a_c: np.ndarray, eta: float, rho: float, theta_std: float,
                      max_radius: float = 0.95) -> np.ndarray:
    v = a_c.shape[0]
    m = np.eye(v) + eta * a_c + rho * theta_std * np.eye(v)
    radius = np.max(np.abs(np.linalg.eigvals(m)))
    if radius > max_radius:
        m = m * (max_radius / radius)
    return m


def simulate_var(m: np.ndarray, T: int, noise_sigma: float, rng: np.random.Generator,
                 burn_in: int = 50) -> np.ndarray:
    v = m.shape[0]
    x = np.zeros(v)
    out = np.empty((v, T))
    noise = noise_sigma * rng.standard_normal((burn_in + T, v))
    for t in range(burn_in + T):
        x = m @ x + noise[t]
        if t >= burn_in:
            out[:, t - burn_in] = x
    return out


def synthetic_atlas(v: int) -> tuple[list[str], dict[int, str]]:
    names = [f"region_{i:03d}" for i in range(v)]
    networks = {i: NETWORKS[i % len(NETWORKS)] for i in range(v)}
    return names, networks


def generate_synthetic(spec: SynthSpec) -> Cohort:
    """Simulate a two-cohort dataset; a pure function of ``spec``."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    # one baseline per cohort so both classes share everything except the planted blocks
    base_state = rng.bit_generator.state
    a_by_class = {}
    for label in (0, 1):
        rng.bit_generator.state = base_state
        a_by_class[label] = coupling_matrix(spec, label, rng)
    subjects = []
    lo, hi, mid = 18.0, 60.0, 39.0
    for label in (0, 1):
        for n in range(spec.n_per_class):
            if spec.age_split:
                age = rng.uniform(lo, mid) if label == 0 else rng.uniform(mid, hi)
            else:
                age = rng.uniform(lo, hi)
            m = transition_matrix(a_by_class[label], spec.eta, spec.rho,
                                  float(standardize_age(age)))
            signal = simulate_var(m, spec.T, spec.noise_sigma, rng)
            subjects.append(BoldSeries(f"sub-{label}{n:04d}", signal, float(age), label))
    subjects.sort(key=lambda s: s.subject_id)
    names, networks = synthetic_atlas(spec.v)
    return Cohort(subjects, names, networks)
