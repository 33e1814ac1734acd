"""Dataset generators, leave-out splits and the two input controls.

Four sources share one record type:

* toy      5-d vectors (RGB, material, shape) with Gaussian noise
* babyai   3 integers (type, color, state) in the BabyAI symbolic convention
* ai2thor  6-d vectors (mass, temperature, toggled, broken, dirty, shape)
* scenes   64x64 RGB rasters of one object on gray, described "[color] [shape]"
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .gradcore.errors import UsageError
from .gradcore.rng import Rng


class ConfigError(ValueError):
    """Generator or split configuration is inconsistent."""


ARTICLES = frozenset({"a"})


def description_key(tokens: Iterable[str]) -> str:
    """Canonical description string; a leading article is not part of the key."""
    tokens = list(tokens)
    if tokens and tokens[0] in ARTICLES:
        tokens = tokens[1:]
    return " ".join(tokens)


@dataclass
class Example:
    features: np.ndarray
    tokens: list[str]
    key: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        if not self.tokens:
            raise ValueError("an Example needs at least one token")
        if not self.key:
            self.key = description_key(self.tokens)

    def __eq__(self, other):
        if not isinstance(other, Example):
            return NotImplemented
        return (np.array_equal(self.features, other.features) and self.tokens == other.tokens
                and self.key == other.key and self.meta == other.meta)


@dataclass
class SceneImage:
    pixels: np.ndarray
    truth: dict

    @property
    def tokens(self) -> list[str]:
        return [self.truth["color"], self.truth["shape"]]

    @property
    def key(self) -> str:
        return description_key(self.tokens)

    @property
    def bbox(self) -> tuple[int, int, int, int]:
        return tuple(self.truth["bbox"])

    def __eq__(self, other):
        if not isinstance(other, SceneImage):
            return NotImplemented
        return np.array_equal(self.pixels, other.pixels) and self.truth == other.truth


@dataclass
class Split:
    train: list
    holdout: list
    holdout_keys: frozenset

    def __post_init__(self):
        self.holdout_keys = frozenset(self.holdout_keys)
        if any(x.key in self.holdout_keys for x in self.train):
            raise ConfigError("train split contains a held-out description")
        if any(x.key not in self.holdout_keys for x in self.holdout):
            raise ConfigError("holdout split contains a training description")

    def train_keys(self) -> list[str]:
        return sorted({x.key for x in self.train})


# -- toy ------------------------------------------------------------------------

TOY_COLORS = {"red": (1.0, 0.0, 0.0), "green": (0.0, 1.0, 0.0), "blue": (0.0, 0.0, 1.0)}
TOY_MATERIALS = {"rubber": 0.0, "metal": 1.0}
TOY_SHAPES = {"ball": 0.0, "triangle": 0.5, "rectangle": 1.0}
TOY_VOCAB = (*TOY_COLORS, *TOY_MATERIALS, *TOY_SHAPES)
TOY_HOLDOUT = ("red metal ball", "red rubber triangle", "blue rubber rectangle",
               "blue metal triangle", "green metal triangle", "green rubber ball")


def toy_encode(color: str, material: str, shape: str) -> np.ndarray:
    return np.array([*TOY_COLORS[color], TOY_MATERIALS[material], TOY_SHAPES[shape]])


def gen_toy(rng: Rng, n_per_combo: int = 500, noise: float = 0.05) -> list[Example]:
    if n_per_combo < 1:
        raise ConfigError("n_per_combo must be >= 1")
    out = []
    for color, material, shape in itertools.product(TOY_COLORS, TOY_MATERIALS, TOY_SHAPES):
        base = toy_encode(color, material, shape)
        feats = base + rng.normal(0.0, noise, size=(n_per_combo, 5)) if noise > 0 else \
            np.tile(base, (n_per_combo, 1))
        for f in feats:
            out.append(Example(f, [color, material, shape]))
    return out


# -- BabyAI -----------------------------------------------------------------------

BABYAI_COLORS = {"red": 0, "green": 1, "blue": 2, "purple": 3, "yellow": 4, "grey": 5}
BABYAI_TYPES = {"wall": 2, "floor": 3, "door": 4, "key": 5, "ball": 6, "box": 7}
BABYAI_STATES = {"open": 0, "closed": 1, "locked": 2}
BABYAI_VOCAB = ("a", *BABYAI_COLORS, *BABYAI_STATES, *BABYAI_TYPES)
BABYAI_HOLDOUT = ("green locked door", "blue locked door", "red locked door", "blue ball",
                  "green ball", "yellow key", "grey wall", "blue box", "grey floor")


def babyai_combos() -> list[tuple[str, str, str | None]]:
    combos = []
    for obj in BABYAI_TYPES:
        for color in BABYAI_COLORS:
            states = list(BABYAI_STATES) if obj == "door" else [None]
            combos.extend((obj, color, s) for s in states)
    return combos


def babyai_example(obj: str, color: str, state: str | None) -> Example:
    feats = [BABYAI_TYPES[obj], BABYAI_COLORS[color], BABYAI_STATES[state] if state else 0]
    tokens = ["a", color] + ([state] if state else []) + [obj]
    return Example(np.array(feats, dtype=np.float64), tokens)


def gen_babyai(rng: Rng, n: int = 9000) -> list[Example]:
    """Sample ``n`` objects uniformly over (type, color, state) combinations."""
    if n < 1:
        raise ConfigError("n must be >= 1")
    combos = babyai_combos()
    picks = rng.integers(0, len(combos), size=n)
    return [babyai_example(*combos[i]) for i in picks]


# -- AI2Thor -------------------------------------------------------------------------

AI2THOR_SHAPES = ("apple", "countertop", "bottle", "creditcard", "bowl", "mug", "laptop", "cup")
AI2THOR_ATTRS = ("light", "heavy", "cold", "room-temperature", "hot", "toggled", "untoggled",
                 "broken", "unbroken", "dirty", "clean")
AI2THOR_VOCAB = ("a", *AI2THOR_ATTRS, *AI2THOR_SHAPES)
AI2THOR_HOLDOUT = ("a cold apple", "a unbroken countertop", "a hot bottle",
                   "a light creditcard", "a dirty bowl")


def ai2thor_words(f: Sequence[float]) -> list[str]:
    """The attribute words that truthfully describe vector ``f`` (one per attribute)."""
    mass, temp, toggled, broken, dirty = f[:5]
    if temp < 0.3:
        tword = "cold"
    elif temp < 0.6:
        tword = "room-temperature"
    else:
        tword = "hot"
    return ["light" if mass < 0.4 else "heavy", tword,
            "toggled" if toggled else "untoggled",
            "broken" if broken else "unbroken",
            "dirty" if dirty else "clean"]


def gen_ai2thor(rng: Rng, n: int = 9000) -> list[Example]:
    if n < 1:
        raise ConfigError("n must be >= 1")
    out = []
    for _ in range(n):
        shape = int(rng.integers(0, len(AI2THOR_SHAPES)))
        mass, temp = rng.random(2)
        flags = rng.integers(0, 2, size=3)
        f = np.array([mass, temp, *flags, shape], dtype=np.float64)
        words = ai2thor_words(f)
        word = words[int(rng.integers(0, len(words)))]
        out.append(Example(f, ["a", word, AI2THOR_SHAPES[shape]]))
    return out


# -- procedural scenes --------------------------------------------------------------

SCENE_COLORS = {"red": (0.9, 0.1, 0.1), "green": (0.1, 0.8, 0.1), "blue": (0.1, 0.1, 0.9)}
SCENE_SHAPES = ("sphere", "cube", "cylinder")
SCENE_VOCAB = (*SCENE_COLORS, *SCENE_SHAPES)
SCENE_HOLDOUT = ("red cube", "blue cylinder", "green sphere")
BACKGROUND = 0.5
MARGIN = 2


def shape_mask(shape: str, size: int, center: tuple[int, int], half: int) -> np.ndarray:
    """Boolean raster of one object; no anti-aliasing."""
    rr, cc = np.mgrid[0:size, 0:size]
    dr, dc = rr - center[0], cc - center[1]
    if shape == "sphere":
        return dr * dr + dc * dc <= half * half
    if shape == "cube":
        return (np.abs(dr) <= half) & (np.abs(dc) <= half)
    if shape == "cylinder":
        # vertical capsule: a rectangle capped by two half-discs
        w = capsule_half_width(half)
        body = (np.abs(dr) <= half - w) & (np.abs(dc) <= w)
        top = (dr + (half - w)) ** 2 + dc * dc <= w * w
        bottom = (dr - (half - w)) ** 2 + dc * dc <= w * w
        return body | top | bottom
    raise ConfigError(f"unknown shape {shape!r}")


def capsule_half_width(half: int) -> int:
    return max(2, int(round(0.6 * half)))


def render_scene(color: str, shape: str, center: tuple[int, int], half: int,
                 size: int = 64, noise: float = 0.0, rng: Rng | None = None) -> SceneImage:
    mask = shape_mask(shape, size, center, half)
    img = np.full((size, size, 3), BACKGROUND)
    img[mask] = SCENE_COLORS[color]
    if noise > 0:
        img = np.clip(img + rng.normal(0.0, noise, size=img.shape), 0.0, 1.0)
    rows, cols = np.nonzero(mask)
    truth = {
        "color": color, "shape": shape,
        "center": [int(center[0]), int(center[1])],
        "half_extent": int(half),
        "bbox": [int(rows.min()), int(rows.max()), int(cols.min()), int(cols.max())],
    }
    return SceneImage(img, truth)


def gen_scenes(rng: Rng, per_description: int = 50, size: int = 64,
               noise: float = 0.01, half_range: tuple[int, int] = (6, 12)) -> list[SceneImage]:
    if per_description < 1:
        raise ConfigError("per_description must be >= 1")
    if 2 * (half_range[1] + MARGIN) >= size:
        raise ConfigError("image too small for the largest object")
    out = []
    for color, shape in itertools.product(SCENE_COLORS, SCENE_SHAPES):
        for _ in range(per_description):
            half = int(rng.integers(half_range[0], half_range[1] + 1))
            lo, hi = MARGIN + half, size - 1 - MARGIN - half
            center = (int(rng.integers(lo, hi + 1)), int(rng.integers(lo, hi + 1)))
            out.append(render_scene(color, shape, center, half, size, noise, rng))
    return out


# -- splits and controls ----------------------------------------------------------

DEFAULT_HOLDOUT = {
    "toy": TOY_HOLDOUT, "babyai": BABYAI_HOLDOUT,
    "ai2thor": AI2THOR_HOLDOUT, "scenes": SCENE_HOLDOUT,
}
VOCABS = {"toy": TOY_VOCAB, "babyai": BABYAI_VOCAB, "ai2thor": AI2THOR_VOCAB, "scenes": SCENE_VOCAB}
FEATURE_DIMS = {"toy": 5, "babyai": 3, "ai2thor": 6}


def apply_leave_out(dataset: Sequence, holdout_keys: Iterable[str]) -> Split:
    keys = {description_key(k.split()) for k in holdout_keys}
    if not keys:
        raise ConfigError("holdout_keys must be nonempty")
    present = {x.key for x in dataset}
    missing = sorted(keys - present)
    if missing:
        raise ConfigError(f"holdout keys match no example: {missing}")
    train = [x for x in dataset if x.key not in keys]
    holdout = [x for x in dataset if x.key in keys]
    return Split(train, holdout, frozenset(keys))


def givens(features: np.ndarray, theta_deg: float, planes: Sequence[tuple[int, int]]) -> np.ndarray:
    """Rotate each listed coordinate pair by ``theta_deg``; works on [d] or [n, d]."""
    flat = [i for p in planes for i in p]
    if len(set(flat)) != len(flat):
        raise ConfigError(f"rotation planes overlap: {list(planes)}")
    x = np.array(features, dtype=np.float64)
    d = x.shape[-1]
    if any(i < 0 or i >= d for i in flat):
        raise ConfigError(f"rotation plane index out of range for d={d}")
    t = math.radians(theta_deg)
    c, s = math.cos(t), math.sin(t)
    for a, b in planes:
        xa, xb = x[..., a].copy(), x[..., b].copy()
        x[..., a] = c * xa - s * xb
        x[..., b] = s * xa + c * xb
    return x


def rotate_features(example: Example, theta_deg: float,
                    planes: Sequence[tuple[int, int]] = ((3, 4),)) -> Example:
    return Example(givens(example.features, theta_deg, planes), list(example.tokens),
                   example.key, dict(example.meta))


def rotate_split(split: Split, theta_deg: float, planes) -> Split:
    return Split([rotate_features(x, theta_deg, planes) for x in split.train],
                 [rotate_features(x, theta_deg, planes) for x in split.holdout],
                 split.holdout_keys)


def drop_attribute(tokens: Sequence[str], rng: Rng) -> list[str]:
    """Delete one of the first two attribute words, each with probability 1/2."""
    if len(tokens) < 3:
        raise UsageError(f"need at least 3 attribute words, got {list(tokens)}")
    drop = int(rng.integers(0, 2))
    return [t for i, t in enumerate(tokens) if i != drop]


def check_vocab(dataset: Iterable, vocab: Iterable[str]) -> None:
    allowed = set(vocab)
    for x in dataset:
        extra = set(x.tokens) - allowed
        if extra:
            raise ConfigError(f"tokens outside the declared vocabulary: {sorted(extra)}")
