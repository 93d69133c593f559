"""Skeleton sequences: JSONL ingestion, clip/normalize, splits, synthetic data."""

from __future__ import annotations

import dataclasses
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .topology import Topology

log = logging.getLogger(__name__)


class DataError(ValueError):
    """Malformed dataset file or invalid generator spec."""


@dataclass
class SkeletonSequence:
    frames: np.ndarray              # (raw_len, V, 3)
    label: int
    subject_id: str
    source: str = "file"

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float64)
        if self.frames.ndim != 3 or self.frames.shape[2] != 3 or self.frames.shape[0] < 1:
            raise DataError(f"frames must have shape (raw_len >= 1, V, 3), got {self.frames.shape}")
        if not np.all(np.isfinite(self.frames)):
            raise DataError(f"sequence of subject {self.subject_id!r} has non-finite coordinates")
        if self.label not in (0, 1):
            raise DataError(f"label must be 0 or 1, got {self.label!r}")

    @property
    def num_joints(self) -> int:
        return self.frames.shape[1]


@dataclass
class DatasetManifest:
    sequences: list[SkeletonSequence]
    topology_name: str
    split: dict[str, str] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.sequences)

    @property
    def subjects(self) -> list[str]:
        return sorted({s.subject_id for s in self.sequences})

    def subset(self, part: str) -> "DatasetManifest":
        if not self.split:
            raise DataError("manifest has no split; call split_by_subject first")
        chosen = [s for s in self.sequences if self.split.get(s.subject_id) == part]
        return DatasetManifest(chosen, self.topology_name, dict(self.split))

    def labels(self) -> np.ndarray:
        return np.array([s.label for s in self.sequences], dtype=np.int64)

    def to_arrays(self, length: int, topology: Topology | None = None) -> tuple[np.ndarray, np.ndarray]:
        """Stack into ``(N, T, V, 3)`` inputs and ``(N,)`` labels, clipping to ``length``.

        With a topology, coordinates are also made relative to its root joint.
        """
        xs = []
        for s in self.sequences:
            frames = clip_to_length(s.frames, length)
            if topology is not None:
                frames = normalize_root(frames, topology.root)
            xs.append(frames)
        if not xs:
            raise DataError("cannot stack an empty manifest")
        return np.stack(xs), self.labels()


# -- file IO ----------------------------------------------------------------

def load_jsonl(path, topology: Topology) -> DatasetManifest:
    path = Path(path)
    sequences = []
    split = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                subject = str(rec["subject"])
                label = rec["label"]
                frames = np.asarray(rec["frames"], dtype=np.float64)
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise DataError(f"{path}:{lineno}: malformed record ({exc})") from None
            if frames.ndim != 3 or frames.shape[2] != 3:
                raise DataError(f"{path}:{lineno}: frames must be a list of [V][3] joint triples, "
                                f"got array of shape {frames.shape}")
            if frames.shape[1] != topology.num_vertices:
                raise DataError(f"{path}:{lineno}: expected {topology.num_vertices} joints per frame "
                                f"(topology {topology.name}), got {frames.shape[1]}")
            try:
                seq = SkeletonSequence(frames, label, subject, source=rec.get("source", "file"))
            except DataError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
            sequences.append(seq)
            if "split" in rec:
                if rec["split"] not in ("train", "test"):
                    raise DataError(f"{path}:{lineno}: split must be 'train' or 'test', got {rec['split']!r}")
                if split.setdefault(subject, rec["split"]) != rec["split"]:
                    raise DataError(f"{path}:{lineno}: subject {subject!r} appears in both splits")
    if not sequences:
        log.warning("%s: no sequences found", path)
    return DatasetManifest(sequences, topology.name, split)


def _round_list(a: np.ndarray, decimals: int | None):
    return (np.round(a, decimals) if decimals is not None else a).tolist()


def write_jsonl(manifest: DatasetManifest, path, decimals: int | None = 6) -> Path:
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        for s in manifest.sequences:
            rec = {"subject": s.subject_id, "label": int(s.label), "frames": _round_list(s.frames, decimals)}
            if manifest.split:
                rec["split"] = manifest.split[s.subject_id]
            fh.write(json.dumps(rec, separators=(",", ":")) + "\n")
    return path


# -- per-sequence transforms ------------------------------------------------------

def clip_to_length(frames: np.ndarray, length: int) -> np.ndarray:
    """Resample longer sequences by nearest index; pad shorter ones with the last frame."""
    raw = frames.shape[0]
    if raw == length:
        return frames.copy()
    if raw > length:
        idx = np.floor(np.arange(length) * raw / length).astype(np.int64)
        return frames[idx]
    pad = np.repeat(frames[-1:], length - raw, axis=0)
    return np.concatenate([frames, pad], axis=0)


def normalize_root(frames: np.ndarray, root: int) -> np.ndarray:
    return frames - frames[:, root:root + 1, :]


# -- subject split --------------------------------------------------------------------

def split_by_subject(manifest: DatasetManifest, train_fraction: float = 0.75, seed: int = 0) -> DatasetManifest:
    subjects = manifest.subjects
    if len(subjects) < 2:
        raise DataError(f"subject-independent split needs at least 2 subjects, got {len(subjects)}")
    if not 0.0 < train_fraction < 1.0:
        raise DataError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    order = np.random.default_rng(seed).permutation(len(subjects))
    n_train = min(max(int(round(train_fraction * len(subjects))), 1), len(subjects) - 1)
    split = {}
    for rank, i in enumerate(order):
        split[subjects[i]] = "train" if rank < n_train else "test"
    return DatasetManifest(list(manifest.sequences), manifest.topology_name, split)


# -- synthetic micro-gestures ----------------------------------------------------------

@dataclass
class SynthSpec:
    num_subjects: int = 4
    sequences_per_subject: int = 16
    positive_fraction: float = 0.5
    length: int = 52
    noise_std: float = 0.02
    amplitude: tuple[float, float] = (0.25, 0.5)
    frequency: tuple[float, float] = (0.05, 0.2)    # cycles per frame
    pose_scale: float = 0.5
    positive_group: int = -1
    negative_group: int = 0
    seed: int = 0
    max_attempts: int = 100

    def __post_init__(self):
        self.amplitude = tuple(self.amplitude)
        self.frequency = tuple(self.frequency)
        if self.num_subjects < 1 or self.sequences_per_subject < 1:
            raise DataError("num_subjects and sequences_per_subject must be positive")
        if not 0.0 <= self.positive_fraction <= 1.0:
            raise DataError(f"positive_fraction must lie in [0, 1], got {self.positive_fraction}")
        if self.length < 1:
            raise DataError(f"length must be >= 1, got {self.length}")
        lo, hi = self.amplitude
        if not 0 < lo <= hi:
            raise DataError(f"amplitude range must satisfy 0 < low <= high, got {list(self.amplitude)}")
        if lo <= 3 * self.noise_std:
            raise DataError(f"amplitude {lo} must exceed 3 * noise_std = {3 * self.noise_std} "
                            "for the energy oracle to separate the classes")
        f_lo, f_hi = self.frequency
        if not 0 < f_lo <= f_hi <= 0.5:
            raise DataError(f"frequency range must satisfy 0 < low <= high <= 0.5, got {list(self.frequency)}")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["amplitude"] = list(self.amplitude)
        d["frequency"] = list(self.frequency)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SynthSpec":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise DataError(f"unknown synthetic spec keys: {unknown}")
        return cls(**d)


def group_energies(frames: np.ndarray, topology: Topology) -> np.ndarray:
    """Mean temporal variance of the coordinates in each hyperedge."""
    var = frames.var(axis=0).sum(axis=-1)        # per-joint variance, summed over x/y/z
    H = topology.partition.incidence.astype(np.float64)
    return (H.T @ var) / H.sum(axis=0)


def energy_oracle(frames: np.ndarray, topology: Topology, positive_group: int, negative_group: int) -> int | None:
    """1 if the positive group dominates, 0 if the negative group does, else None."""
    n_e = topology.num_hyperedges
    winner = int(np.argmax(group_energies(frames, topology)))
    if winner == positive_group % n_e:
        return 1
    if winner == negative_group % n_e:
        return 0
    return None


def _one_sequence(rng, base, label, spec: SynthSpec, topology: Topology) -> np.ndarray:
    t = np.arange(spec.length)[:, None]
    frames = np.repeat(base[None], spec.length, axis=0)
    frames = frames + spec.noise_std * rng.standard_normal(frames.shape)
    group = spec.positive_group if label == 1 else spec.negative_group
    members = topology.partition.members(group % topology.num_hyperedges)
    amp = rng.uniform(*spec.amplitude)
    freq = rng.uniform(*spec.frequency)
    phase = rng.uniform(0, 2 * math.pi)
    direction = rng.standard_normal(3)
    direction /= np.linalg.norm(direction)
    wave = amp * np.sin(2 * math.pi * freq * t + phase)            # (T, 1)
    frames[:, members, :] += wave[:, :, None] * direction
    return frames


def generate_synthetic(spec: SynthSpec, topology: Topology) -> DatasetManifest:
    """Static per-subject poses with a class-specific oscillating joint group.

    Any draw whose energy-oracle label disagrees with the intended label is
    redrawn, so the oracle agrees with every emitted label.
    """
    n_e = topology.num_hyperedges
    if spec.positive_group % n_e == spec.negative_group % n_e:
        raise DataError("positive_group and negative_group must name different hyperedges")
    for g in (spec.positive_group, spec.negative_group):
        if not -n_e <= g < n_e:
            raise DataError(f"group index {g} outside topology with {n_e} hyperedges")
        if topology.root in topology.partition.members(g % n_e):
            raise DataError(f"group {g} contains the root joint {topology.root}; root-relative "
                            "coordinates would spread its motion to every joint")
    rng = np.random.default_rng(spec.seed)
    n_pos = int(round(spec.positive_fraction * spec.sequences_per_subject))
    sequences = []
    for s in range(spec.num_subjects):
        subject = f"s{s + 1:02d}"
        base = spec.pose_scale * rng.standard_normal((topology.num_vertices, 3))
        labels = [1] * n_pos + [0] * (spec.sequences_per_subject - n_pos)
        for label in labels:
            for _ in range(spec.max_attempts):
                frames = _one_sequence(rng, base, label, spec, topology)
                if energy_oracle(frames, topology, spec.positive_group, spec.negative_group) == label:
                    break
            else:
                raise DataError(f"could not draw an oracle-consistent sequence in {spec.max_attempts} attempts")
            sequences.append(SkeletonSequence(frames, label, subject, source="synthetic"))
    return DatasetManifest(sequences, topology.name)


def oracle_agreement(manifest: DatasetManifest, topology: Topology, spec: SynthSpec) -> float:
    if not manifest.sequences:
        return float("nan")
    hits = [energy_oracle(s.frames, topology, spec.positive_group, spec.negative_group) == s.label
            for s in manifest.sequences]
    return float(np.mean(hits))


def class_balance(manifest: DatasetManifest) -> tuple[int, int]:
    labels = manifest.labels()
    return int((labels == 1).sum()), int((labels == 0).sum())
