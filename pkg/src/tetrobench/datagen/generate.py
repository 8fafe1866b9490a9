"""Synthetic tetromino datasets with known important pixels."""

from __future__ import annotations

from dataclasses import dataclass, field, asdict, replace
from pathlib import Path
from typing import Iterator

import numpy as np

from .filters import (gaussian_smooth, threshold_support, frobenius_normalize,
                      rescale_dataset)
from .patterns import (RigidTransform, make_pattern, fixed_positions,
                       sample_rigid_transform)

GENERATOR_VERSION = "1.0"

SCENARIOS = ("LIN", "MULT", "RIGID", "XOR")
BACKGROUNDS = ("WHITE", "CORR", "IMAGENET")
XOR_CASES = ("++", "--", "+-", "-+")
SCENARIO_NAMES = {"LIN": "linear", "MULT": "multiplicative",
                  "RIGID": "translations_rotations", "XOR": "xor"}
BACKGROUND_NAMES = {"WHITE": "white", "CORR": "correlated", "IMAGENET": "imagenet"}
IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg", ".bmp", ".gif", ".tif", ".tiff", ".webp"}

# rng stream tags: (seed, tag, ...) keeps every stream independent of the others
_SAMPLE_STREAM, _XOR_STREAM, _IMAGE_STREAM = 0, 1, 2


@dataclass(frozen=True)
class ScenarioSpec:
    scenario: str
    background: str
    side: int = 8
    pattern_thickness: int = 1
    alpha: float = 0.5
    sigma_pattern: float = 0.0
    sigma_background: float = 3.0
    n_samples: int = 10_000
    split: tuple[float, float, float] = (0.8, 0.1, 0.1)
    seed: int = 0
    image_dir: str | None = None

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ValueError(f"unknown scenario {self.scenario!r}; expected one of {SCENARIOS}")
        if self.background not in BACKGROUNDS:
            raise ValueError(f"unknown background {self.background!r}; expected one of {BACKGROUNDS}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")
        if self.n_samples < 1:
            raise ValueError("n_samples must be positive")
        if len(self.split) != 3 or min(self.split) < 0 or abs(sum(self.split) - 1.0) > 1e-9:
            raise ValueError(f"split fractions must be three non-negative numbers summing to 1, got {self.split}")
        if self.sigma_pattern < 0 or self.sigma_background < 0:
            raise ValueError("smoothing widths must be non-negative")
        if self.background == "IMAGENET" and not self.image_dir:
            raise ValueError("IMAGENET background needs image_dir")
        object.__setattr__(self, "split", tuple(float(f) for f in self.split))

    @classmethod
    def paper_defaults(cls, scenario: str, background: str, side: int = 8, alpha: float = 0.5,
                       seed: int = 0, **overrides) -> "ScenarioSpec":
        """Scale-appropriate defaults: 8px images are the small benchmark, 64px the large one."""
        if side == 8:
            base = dict(pattern_thickness=1, sigma_pattern=0.0, sigma_background=3.0,
                        n_samples=10_000, split=(0.8, 0.1, 0.1))
        else:
            thickness = 4 if scenario == "RIGID" else max(side // 8, 1)
            base = dict(pattern_thickness=thickness, sigma_pattern=1.5, sigma_background=10.0,
                        n_samples=40_000, split=(0.9, 0.05, 0.05))
        base.update(overrides)
        return cls(scenario=scenario, background=background, side=side, alpha=alpha,
                   seed=seed, **base)

    @property
    def name(self) -> str:
        """Directory name: {scenario}_{Jd}{Kp}_{alpha}_{background}."""
        scale = max(self.side // 8, 1)
        return (f"{SCENARIO_NAMES[self.scenario]}_{scale}d{self.pattern_thickness}p_"
                f"{self.alpha:g}_{BACKGROUND_NAMES[self.background]}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["split"] = list(self.split)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioSpec":
        d = dict(d)
        d["split"] = tuple(d["split"])
        return cls(**d)

    def with_alpha(self, alpha: float) -> "ScenarioSpec":
        return replace(self, alpha=alpha)


@dataclass(frozen=True)
class LabeledSample:
    image: np.ndarray
    label: int
    mask: np.ndarray
    transform: RigidTransform
    xor_sign_case: str | None


@dataclass
class Split:
    """Sample-major arrays for one split."""

    x: np.ndarray           # (n, side, side) float32
    y: np.ndarray           # (n,) uint8
    masks: np.ndarray       # (n, side, side) bool
    transforms: np.ndarray  # (n, 3) int32: rotation, row, col
    cases: np.ndarray       # (n,) uint8 index into XOR_CASES, 255 when unused

    def __len__(self) -> int:
        return len(self.y)

    def sample(self, i: int) -> LabeledSample:
        case = int(self.cases[i])
        return LabeledSample(self.x[i], int(self.y[i]), self.masks[i],
                             RigidTransform(*(int(v) for v in self.transforms[i])),
                             XOR_CASES[case] if case < len(XOR_CASES) else None)

    def __iter__(self) -> Iterator[LabeledSample]:
        return (self.sample(i) for i in range(len(self)))

    def subset(self, idx) -> "Split":
        idx = np.asarray(idx, dtype=np.int64)
        return Split(self.x[idx], self.y[idx], self.masks[idx], self.transforms[idx], self.cases[idx])


@dataclass
class Dataset:
    spec: ScenarioSpec
    train: Split
    val: Split
    test: Split
    offsets: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)

    @property
    def name(self) -> str:
        return self.spec.name

    def split(self, name: str) -> Split:
        if name not in ("train", "val", "test"):
            raise ValueError(f"unknown split {name!r}")
        return getattr(self, name)


# ----------------------------------------------------------------- components

def _image_files(image_dir) -> list[Path]:
    d = Path(image_dir)
    if not d.is_dir():
        raise FileNotFoundError(f"image directory {d} does not exist")
    files = sorted(p for p in d.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
    if not files:
        raise FileNotFoundError(f"image directory {d} contains no readable images")
    return files


def load_background_image(path, side: int) -> np.ndarray:
    """Shorter edge scaled to ``side``, centre-cropped, luminance grey, zero mean."""
    from PIL import Image

    try:
        with Image.open(path) as im:
            im = im.convert("RGB")
            w, h = im.size
            scale = side / min(w, h)
            nw, nh = max(side, round(w * scale)), max(side, round(h * scale))
            im = im.resize((nw, nh), Image.BILINEAR)
            left, top = (nw - side) // 2, (nh - side) // 2
            im = im.crop((left, top, left + side, top + side))
            rgb = np.asarray(im, dtype=np.float64)
    except OSError as exc:
        raise OSError(f"cannot read background image {path}: {exc}") from exc
    grey = rgb @ np.array([0.299, 0.587, 0.114])
    return grey - grey.mean()


def sample_background(spec: ScenarioSpec, rng: np.random.Generator,
                      image_path=None) -> np.ndarray:
    """One background grid before normalisation."""
    if spec.background == "IMAGENET":
        if image_path is None:
            files = _image_files(spec.image_dir)
            image_path = files[int(rng.integers(len(files)))]
        return load_background_image(image_path, spec.side)
    noise = rng.standard_normal((spec.side, spec.side))
    if spec.background == "CORR":
        return gaussian_smooth(noise, spec.sigma_background)
    return noise


def generate_additive(signal, noise, alpha: float) -> np.ndarray:
    """alpha * signal + (1 - alpha) * noise on already-normalised components."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    return alpha * np.asarray(signal) + (1.0 - alpha) * np.asarray(noise)


def generate_multiplicative(signal, noise, alpha: float) -> np.ndarray:
    """(1 - alpha * signal) * noise on already-normalised components."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    return (1.0 - alpha * np.asarray(signal)) * np.asarray(noise)


def static_patterns(spec: ScenarioSpec) -> dict[str, np.ndarray]:
    pos = fixed_positions(spec.side, spec.pattern_thickness)
    return {k: make_pattern(k, 0, pos[k], spec.pattern_thickness, spec.side).grid
            for k in ("T", "L")}


def build_ground_truth(spec: ScenarioSpec, smoothed_signal=None) -> np.ndarray:
    """Important-pixel mask.

    LIN, MULT and XOR share one static mask, the union of the thresholded
    supports of both smoothed tetrominoes. RIGID uses the thresholded support
    of the sample's own transformed, smoothed pattern.
    """
    if spec.scenario == "RIGID":
        if smoothed_signal is None:
            raise ValueError("RIGID ground truth needs the sample's smoothed signal")
        return threshold_support(smoothed_signal)
    pats = static_patterns(spec)
    t = threshold_support(gaussian_smooth(pats["T"], spec.sigma_pattern))
    l_ = threshold_support(gaussian_smooth(pats["L"], spec.sigma_pattern))
    return t | l_


def split_sizes(n: int, fractions) -> tuple[int, int, int]:
    n_train = int(round(fractions[0] * n))
    n_val = int(round(fractions[1] * n))
    n_val = min(n_val, n - n_train)
    return n_train, n_val, n - n_train - n_val


def _xor_cases(labels: np.ndarray, seed: int) -> np.ndarray:
    """Within each label, split the two sign cases as evenly as possible in random order."""
    rng = np.random.default_rng([seed, _XOR_STREAM])
    cases = np.empty(len(labels), dtype=np.uint8)
    for label, pair in ((0, (0, 1)), (1, (2, 3))):
        idx = np.flatnonzero(labels == label)
        assign = np.where(np.arange(len(idx)) % 2 == 0, pair[0], pair[1])
        cases[idx] = rng.permutation(assign)
    return cases


def build_dataset(spec: ScenarioSpec) -> Dataset:
    """Generate, normalise, rescale and split a full dataset; a pure function of ``spec``."""
    N, side, t = spec.n_samples, spec.side, spec.pattern_thickness
    rngs = [np.random.default_rng([spec.seed, _SAMPLE_STREAM, i]) for i in range(N)]
    labels = np.array([int(r.random() < 0.5) for r in rngs], dtype=np.uint8)

    # backgrounds
    if spec.background == "IMAGENET":
        files = _image_files(spec.image_dir)
        if len(files) < N:
            raise ValueError(f"image directory {spec.image_dir} has {len(files)} images, "
                             f"{N} needed (images are not reused)")
        order = np.random.default_rng([spec.seed, _IMAGE_STREAM]).permutation(len(files))[:N]
        noise = np.stack([load_background_image(files[j], side) for j in order])
    else:
        noise = np.stack([r.standard_normal((side, side)) for r in rngs])
        if spec.background == "CORR":
            noise = gaussian_smooth(noise, spec.sigma_background)

    # signal patterns
    transforms = np.zeros((N, 3), dtype=np.int32)
    cases = np.full(N, 255, dtype=np.uint8)
    offsets: dict = {}
    if spec.scenario == "RIGID":
        raw = np.zeros((N, side, side))
        for i, r in enumerate(rngs):
            kind = "T" if labels[i] == 0 else "L"
            tr = sample_rigid_transform(r, kind, t, side)
            transforms[i] = tr.as_tuple()
            raw[i] = make_pattern(kind, tr.rotation, (tr.row, tr.col), t, side).grid
    else:
        pats = static_patterns(spec)
        offsets = {k: list(v) for k, v in fixed_positions(side, t).items()}
        if spec.scenario == "XOR":
            cases = _xor_cases(labels, spec.seed)
            sign_t = np.array([1, -1, 1, -1], dtype=np.float64)[cases]
            sign_l = np.array([1, -1, -1, 1], dtype=np.float64)[cases]
            raw = sign_t[:, None, None] * pats["T"] + sign_l[:, None, None] * pats["L"]
        else:
            raw = np.where(labels[:, None, None] == 0, pats["T"], pats["L"])
    signal = gaussian_smooth(raw, spec.sigma_pattern)

    if spec.scenario == "RIGID":
        masks = np.stack([threshold_support(s) for s in signal])
    else:
        masks = np.broadcast_to(build_ground_truth(spec), (N, side, side)).copy()

    signal = frobenius_normalize(signal)
    noise = frobenius_normalize(noise)
    if spec.scenario == "MULT":
        x = generate_multiplicative(signal, noise, spec.alpha)
    else:
        x = generate_additive(signal, noise, spec.alpha)
    x = rescale_dataset(x).astype(np.float32)

    n_train, n_val, _ = split_sizes(N, spec.split)
    bounds = {"train": (0, n_train), "val": (n_train, n_train + n_val), "test": (n_train + n_val, N)}
    splits = {}
    for name, (a, b) in bounds.items():
        sl = slice(a, b)
        splits[name] = Split(x[sl], labels[sl], masks[sl], transforms[sl], cases[sl])
        if b > a and len(np.unique(labels[sl])) < 2:
            raise ValueError(f"{name} split of {spec.name} contains a single label; "
                             f"increase n_samples or change the seed")
    return Dataset(spec, splits["train"], splits["val"], splits["test"], offsets,
                   {"generator_version": GENERATOR_VERSION, "seed": spec.seed})
