"""Object-selection tasks, accuracy reports and the experiment drivers."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy.stats import binomtest

from . import datagen as dg
from .fileio import write_ppm_array
from .gradcore import atomic_write_text, make_rng
from .gradcore.rng import Rng
from .ide import (DEFAULT_BASE_ENTROPY, DEFAULT_TAU, DensityModel, IDEConfig, IDESelector, Vocab,
                  gain_matrix, train_ide)

Selector = Callable[[Sequence[str], Sequence], int]


@dataclass
class SelectionTask:
    tokens: list[str]
    candidates: list
    answer: int
    keys: list[str]

    def __post_init__(self):
        if len(set(self.keys)) != len(self.keys):
            raise ValueError("candidate descriptions must be pairwise distinct")
        if not 0 <= self.answer < len(self.candidates):
            raise ValueError("answer index out of range")
        if self.keys[self.answer] != dg.description_key(self.tokens):
            raise ValueError("answer candidate does not match the prompt")

    @property
    def key(self) -> str:
        return self.keys[self.answer]


def _features(item):
    return item.features if isinstance(item, dg.Example) else item


def build_tasks(holdout, n: int = 3000, rng: Rng | None = None, raw: bool = False
                ) -> list[SelectionTask]:
    """Sample ``n`` tasks: a random held-out prompt and one fresh candidate per held-out key.

    ``holdout`` is a :class:`Split` (its holdout part is used) or a plain list
    of examples/scenes. With ``raw=True`` candidates are the records
    themselves (e.g. SceneImages); otherwise their feature vectors.
    """
    items = holdout.holdout if isinstance(holdout, dg.Split) else list(holdout)
    rng = rng if rng is not None else make_rng(0, "tasks")
    pools: dict[str, list] = {}
    for x in items:
        pools.setdefault(x.key, []).append(x)
    keys = sorted(pools)
    if len(keys) < 2:
        raise dg.ConfigError("object selection needs at least 2 distinct descriptions")
    tasks = []
    for _ in range(n):
        prompt = int(rng.integers(0, len(keys)))
        picks = [pools[k][int(rng.integers(0, len(pools[k])))] for k in keys]
        order = rng.permutation(len(keys))
        cands = [picks[i] if raw else _features(picks[i]) for i in order]
        answer = int(np.nonzero(order == prompt)[0][0])
        tasks.append(SelectionTask(list(picks[prompt].tokens), cands, answer,
                                   [keys[i] for i in order]))
    return tasks


def binomial_ci(k: int, n: int, level: float = 0.99) -> tuple[float, float]:
    if n == 0:
        return 0.0, 1.0
    ci = binomtest(k, n).proportion_ci(confidence_level=level, method="exact")
    return float(ci.low), float(ci.high)


def fingerprint(config) -> str:
    doc = asdict(config) if hasattr(config, "__dataclass_fields__") else config
    blob = json.dumps(doc, sort_keys=True, default=str).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class EvalReport:
    n_tasks: int
    n_correct: int
    accuracy: float
    ci99: tuple[float, float]
    per_prompt: dict = field(default_factory=dict)
    n_failed: int = 0
    failures: list = field(default_factory=list)
    fingerprint: str = ""
    wall_clock: float = 0.0

    def summary_line(self) -> str:
        lo, hi = self.ci99
        return f"accuracy={self.accuracy:.6f} n={self.n_tasks} ci99=[{lo:.6f},{hi:.6f}]"

    def to_json(self) -> str:
        doc = asdict(self)
        doc["ci99"] = list(self.ci99)
        return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def evaluate(selector: Selector, tasks: Sequence[SelectionTask], config=None) -> EvalReport:
    """Run ``selector`` on every task; exceptions count as failed (and wrong)."""
    t0 = time.perf_counter()
    per: dict[str, list[int]] = {}
    n_correct = 0
    failures = []
    for i, task in enumerate(tasks):
        stats = per.setdefault(task.key, [0, 0])
        stats[0] += 1
        try:
            pred = selector(task.tokens, task.candidates)
        except Exception as err:  # selector is a black box
            failures.append({"task": i, "error": repr(err)})
            continue
        if pred == task.answer:
            n_correct += 1
            stats[1] += 1
    n = len(tasks)
    per_prompt = {k: {"n": v[0], "correct": v[1], "accuracy": v[1] / v[0]}
                  for k, v in sorted(per.items())}
    return EvalReport(
        n_tasks=n, n_correct=n_correct, accuracy=n_correct / n if n else 0.0,
        ci99=binomial_ci(n_correct, n), per_prompt=per_prompt, n_failed=len(failures),
        failures=failures, fingerprint=fingerprint(config) if config is not None else "",
        wall_clock=time.perf_counter() - t0)


# -- experiments ----------------------------------------------------------------------

@dataclass
class SweepPoint:
    theta: float
    accuracy: float
    ci_low: float
    ci_high: float


def rotate_tasks(tasks: Sequence[SelectionTask], theta: float, planes) -> list[SelectionTask]:
    return [replace(t, candidates=[dg.givens(c, theta, planes) for c in t.candidates])
            for t in tasks]


def rotation_sweep(split: dg.Split, angles: Sequence[float], planes=((3, 4),),
                   config: IDEConfig | None = None, n_tasks: int = 3000, seed: int = 0,
                   E: float = DEFAULT_BASE_ENTROPY, tau: float = DEFAULT_TAU,
                   on_point: Callable[[SweepPoint], None] | None = None) -> list[SweepPoint]:
    """Retrain from scratch on rotated features for every angle and evaluate.

    The same task draws are used at every angle (candidates rotated along
    with the training data), so the curve isolates the effect of rotation.
    """
    if not angles:
        raise ValueError("angles must be nonempty")
    config = config or IDEConfig()
    base_tasks = build_tasks(split, n_tasks, make_rng(seed, "sweep-tasks"))
    points = []
    for theta in angles:
        rotated = dg.rotate_split(split, theta, planes)
        model = train_ide(rotated.train, config)
        report = evaluate(IDESelector(model, E, tau), rotate_tasks(base_tasks, theta, planes))
        point = SweepPoint(float(theta), report.accuracy, *report.ci99)
        points.append(point)
        if on_point is not None:
            on_point(point)
    return points


def partial_descriptions(examples: Sequence[dg.Example], rng: Rng) -> list[dg.Example]:
    return [dg.Example(x.features, dg.drop_attribute(x.tokens, rng), meta=dict(x.meta))
            for x in examples]


@dataclass
class ABResult:
    acc_a: float
    acc_b: float
    report_a: EvalReport
    report_b: EvalReport
    model_a: DensityModel
    model_b: DensityModel


def setting_ab_compare(split: dg.Split, config: IDEConfig | None = None, n_tasks: int = 3000,
                       seed: int = 0, E: float = DEFAULT_BASE_ENTROPY,
                       tau: float = DEFAULT_TAU) -> ABResult:
    """Train on full (A) and attribute-dropped (B) descriptions; test both on full prompts."""
    config = config or IDEConfig()
    partial = partial_descriptions(split.train, make_rng(seed, "drop-attribute"))
    vocab = Vocab.from_examples(split.train)
    model_a = train_ide(split.train, config, vocab)
    model_b = train_ide(partial, config, vocab)
    tasks = build_tasks(split, n_tasks, make_rng(seed, "ab-tasks"))
    rep_a = evaluate(IDESelector(model_a, E, tau), tasks)
    rep_b = evaluate(IDESelector(model_b, E, tau), tasks)
    return ABResult(rep_a.accuracy, rep_b.accuracy, rep_a, rep_b, model_a, model_b)


# -- artifact writers -------------------------------------------------------------

def _num(x: float) -> str:
    return format(float(x), ".17g")


def write_sweep_csv(points: Sequence[SweepPoint], path) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["theta", "accuracy", "ci_low", "ci_high"])
    for p in points:
        w.writerow([_num(p.theta), _num(p.accuracy), _num(p.ci_low), _num(p.ci_high)])
    atomic_write_text(path, buf.getvalue())


def heatmap_csv(words: Sequence[str], gains: np.ndarray) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["word", *range(gains.shape[1])])
    for word, row in zip(words, gains):
        w.writerow([word, *(_num(v) for v in row)])
    return buf.getvalue()


def read_heatmap_csv(path) -> tuple[list[str], np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    words = [r[0] for r in rows[1:]]
    return words, np.array([[float(v) for v in r[1:]] for r in rows[1:]])


def export_heatmap(model: DensityModel, vocab: Vocab | None, E: float, path,
                   cell: int = 16) -> dict:
    """Write the gain matrix as CSV plus a PPM rendering (blue = low, red = high)."""
    path = Path(path)
    words = list(vocab or model.vocab)
    gains = gain_matrix(model, Vocab(words), E)
    atomic_write_text(path, heatmap_csv(words, gains))
    lo, hi = float(gains.min()), float(gains.max())
    t = (gains - lo) / (hi - lo) if hi > lo else np.zeros_like(gains)
    rgb = np.stack([t, np.zeros_like(t), 1.0 - t], axis=-1)
    img = np.kron(rgb, np.ones((cell, cell, 1)))
    ppm = path.with_suffix(".ppm")
    write_ppm_array(img, ppm)
    info = {"csv": str(path), "ppm": str(ppm), "rows": words, "lo": lo, "hi": hi,
            "base_entropy": E, "colormap": "rgb = (t, 0, 1 - t), t = (g - lo) / (hi - lo)",
            "cell_px": cell}
    atomic_write_text(ppm.with_suffix(".json"), json.dumps(info, sort_keys=True, indent=2) + "\n")
    return info
