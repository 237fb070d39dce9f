"""AudioMNIST ingestion, speaker-disjoint fold plans, and a synthetic
desk-scale generator for digit-like and gender-like tasks.
"""

import json
import os
import re
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError
from .pipeline import RATE

_WAV_RE = re.compile(r"^(\d)_([A-Za-z0-9]+)_(\d+)\.wav$")

GENDERS = ("female", "male")


@dataclass
class AudioRecord:
    digit: int
    speaker: str
    gender: str
    take: int = 0
    path: str = None
    samples: np.ndarray = None  # in-memory buffer (synthetic records)
    rate: int = RATE
    role: str = None  # train | validation | test

    def __post_init__(self):
        if not 0 <= self.digit <= 9:
            raise DataError(f"digit label {self.digit} out of range")
        if self.gender not in GENDERS:
            raise DataError(f"unknown gender {self.gender!r}")


def scan_audiomnist(root, meta_name="audioMNIST_meta.txt"):
    """Scan the published `<speaker>/<digit>_<speaker>_<take>.wav` layout.

    The metadata file (JSON, speaker -> fields) must provide at least a
    gender per speaker; unknown extra fields are ignored.
    """
    meta_path = os.path.join(root, meta_name)
    if not os.path.exists(meta_path):
        raise DataError(f"missing metadata file {meta_path}")
    with open(meta_path) as f:
        try:
            meta = json.load(f)
        except ValueError as exc:
            raise DataError(f"{meta_path}: not valid JSON: {exc}") from exc
    records = []
    for speaker_dir in sorted(os.listdir(root)):
        full = os.path.join(root, speaker_dir)
        if not os.path.isdir(full):
            continue
        for name in sorted(os.listdir(full)):
            if not name.endswith(".wav"):
                continue
            m = _WAV_RE.match(name)
            if m is None:
                raise DataError(f"unparseable recording filename: "
                                f"{os.path.join(speaker_dir, name)}")
            digit, speaker, take = m.groups()
            if speaker != speaker_dir:
                raise DataError(
                    f"{os.path.join(speaker_dir, name)}: speaker id does not "
                    f"match its directory")
            info = meta.get(speaker)
            if info is None or "gender" not in info:
                raise DataError(f"no gender metadata for speaker {speaker!r}")
            records.append(AudioRecord(
                digit=int(digit), speaker=speaker,
                gender=str(info["gender"]).lower(), take=int(take),
                path=os.path.join(full, name), rate=None))
    return records


@dataclass(frozen=True)
class FoldPlan:
    task: str  # digit | gender
    splits: tuple  # tuple of tuples of speaker ids
    rotations: tuple  # tuple of dicts {"train": (idx...), "validation": i, "test": i}
    seed: int = 0

    def role_of(self, rotation, speaker):
        rot = self.rotations[rotation]
        for si, split in enumerate(self.splits):
            if speaker in split:
                if si == rot["test"]:
                    return "test"
                if si == rot["validation"]:
                    return "validation"
                return "train"
        raise DataError(f"speaker {speaker!r} not in any split")

    def to_text(self) -> str:
        lines = [f"task {self.task}", f"seed {self.seed}"]
        for i, split in enumerate(self.splits):
            lines.append(f"split {i} " + " ".join(split))
        for i, rot in enumerate(self.rotations):
            tr = ",".join(str(t) for t in rot["train"])
            lines.append(f"rotation {i} train={tr} "
                         f"validation={rot['validation']} test={rot['test']}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text):
        task = seed = None
        splits = []
        rotations = []
        for line in text.splitlines():
            parts = line.split()
            if not parts:
                continue
            if parts[0] == "task":
                task = parts[1]
            elif parts[0] == "seed":
                seed = int(parts[1])
            elif parts[0] == "split":
                splits.append(tuple(parts[2:]))
            elif parts[0] == "rotation":
                kv = dict(p.split("=", 1) for p in parts[2:])
                rotations.append({
                    "train": tuple(int(t) for t in kv["train"].split(",")),
                    "validation": int(kv["validation"]),
                    "test": int(kv["test"]),
                })
        if task is None or not splits:
            raise DataError("malformed fold plan text")
        return cls(task=task, splits=tuple(splits), rotations=tuple(rotations),
                   seed=seed or 0)


def _chunks(seq, n_chunks):
    size = len(seq) // n_chunks
    return [tuple(seq[i * size : (i + 1) * size]) for i in range(n_chunks)]


def make_folds(records, task, rng) -> FoldPlan:
    """Speaker-disjoint cross-validation plan.

    Digit: all speakers shuffled into 5 splits; rotation k tests on
    split k, validates on split (k+1) mod 5, trains on the rest.
    Gender: the 12 female speakers plus 12 males sampled with the given
    rng, arranged into 4 splits of 3 female + 3 male each.
    """
    if isinstance(rng, (int, np.integer)):
        seed = int(rng)
        rng = np.random.default_rng(seed)
    else:
        seed = 0
    by_speaker = {}
    for r in records:
        prev = by_speaker.setdefault(r.speaker, r.gender)
        if prev != r.gender:
            raise DataError(f"speaker {r.speaker!r} has inconsistent gender tags")
    speakers = sorted(by_speaker)
    if task == "digit":
        if len(speakers) < 5:
            raise DataError("digit folds need at least 5 speakers")
        order = [speakers[i] for i in rng.permutation(len(speakers))]
        splits = _chunks(order, 5)
        n = 5
    elif task == "gender":
        females = [s for s in speakers if by_speaker[s] == "female"]
        males = [s for s in speakers if by_speaker[s] == "male"]
        if len(females) < 12 or len(males) < 12:
            raise DataError("gender folds need >= 12 speakers of each gender")
        females = [females[i] for i in rng.permutation(len(females))][:12]
        males = [males[i] for i in rng.permutation(len(males))][:12]
        fsplit = _chunks(females, 4)
        msplit = _chunks(males, 4)
        splits = [fsplit[i] + msplit[i] for i in range(4)]
        n = 4
    else:
        raise ConfigError(f"unknown task {task!r}")
    rotations = []
    for k in range(n):
        val = (k + 1) % n
        train = tuple(i for i in range(n) if i not in (k, val))
        rotations.append({"train": train, "validation": val, "test": k})
    return FoldPlan(task=task, splits=tuple(splits), rotations=tuple(rotations),
                    seed=seed)


@dataclass(frozen=True)
class SynthConfig:
    """Knobs for the synthetic desk-scale signal generator."""

    f0_low: float = 120.0  # "male"-like fundamental
    f0_high: float = 220.0  # "female"-like fundamental
    f0_jitter: float = 30.0
    harmonics: tuple = (1.0, 0.55, 0.35, 0.2, 0.12)
    digit_f0_base: float = 350.0
    digit_f0_step: float = 160.0
    digit_f0_jitter: float = 20.0
    am_base: float = 2.0
    am_step: float = 1.5
    am_depth: float = 0.8
    noise: float = 0.003
    min_len: int = 4000
    max_len: int = 7000
    amplitude: float = 0.5
    n_speakers: int = 12


def _envelope(n):
    # quarter-sine attack, half-cosine release
    attack = max(1, n // 8)
    release = max(1, n // 4)
    env = np.ones(n)
    env[:attack] = np.sin(np.linspace(0, np.pi / 2, attack))
    env[n - release :] = 0.5 + 0.5 * np.cos(np.linspace(0, np.pi, release))
    return env


def _tone(f0, harmonics, n, rng, noise, amplitude):
    t = np.arange(n) / RATE
    phase = rng.uniform(0, 2 * np.pi)
    x = np.zeros(n)
    for h, amp in enumerate(harmonics, start=1):
        x += amp * np.sin(2 * np.pi * f0 * h * t + phase * h)
    x *= _envelope(n)
    x += rng.normal(0.0, noise, size=n)
    peak = np.abs(x).max()
    return amplitude * x / peak if peak > 0 else x


def synth_generate(n_classes, per_class, rng, config: SynthConfig = SynthConfig()):
    """Generate in-memory records for a 2-class (gender-like) or
    10-class (digit-like) task.

    Gender-like signals are harmonic series with the fundamental near
    120 Hz (class 0, "male") or 220 Hz (class 1, "female"); digit-like
    signals are AM-patterned tones with per-class carrier and modulation
    rates. Deterministic given the rng state.
    """
    if n_classes not in (2, 10):
        raise ConfigError("synthetic tasks support 2 or 10 classes")
    if per_class < 1:
        raise ConfigError("per_class must be >= 1")
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(rng)
    records = []
    counter = 0
    for cls in range(n_classes):
        for _ in range(per_class):
            n = int(rng.integers(config.min_len, config.max_len + 1))
            if n_classes == 2:
                base = config.f0_low if cls == 0 else config.f0_high
                f0 = base + rng.uniform(-config.f0_jitter, config.f0_jitter)
                x = _tone(f0, config.harmonics, n, rng, config.noise,
                          config.amplitude)
                gender = "male" if cls == 0 else "female"
            else:
                f0 = (config.digit_f0_base + cls * config.digit_f0_step
                      + rng.uniform(-config.digit_f0_jitter, config.digit_f0_jitter))
                am = config.am_base + cls * config.am_step
                t = np.arange(n) / RATE
                carrier = np.sin(2 * np.pi * f0 * t + rng.uniform(0, 2 * np.pi))
                carrier += 0.3 * np.sin(4 * np.pi * f0 * t)
                mod = 1.0 - config.am_depth * 0.5 * (1 + np.sin(2 * np.pi * am * t))
                x = carrier * mod * _envelope(n)
                x += rng.normal(0.0, config.noise, size=n)
                x = config.amplitude * x / np.abs(x).max()
                gender = "male" if cls % 2 == 0 else "female"
            speaker = f"syn{counter % config.n_speakers:02d}"
            records.append(AudioRecord(
                digit=cls if n_classes == 10 else cls,
                speaker=speaker, gender=gender, take=counter,
                samples=x, rate=RATE))
            counter += 1
    return records
