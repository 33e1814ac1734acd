"""Independent density estimation.

Every word is mapped, on its own, to a diagonal Gaussian over the feature
dimensions. At inference the per-word means are blended dimension by
dimension, weighting each word by how much it lowers the entropy of that
dimension (its information gain), sharpened by a softmax temperature.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass
from typing import Iterable, Sequence

import numpy as np

from .gradcore import (ParamSet, Tensor, UsageError, adam_step, add_dense, check_finite_loss,
                       dense, leaky_relu, load_checkpoint, make_rng, no_grad, save_checkpoint)

log = logging.getLogger(__name__)

LOG_2PI = math.log(2.0 * math.pi)
DEFAULT_BASE_ENTROPY = 3.0
DEFAULT_TAU = 0.1


class VocabError(KeyError):
    pass


class DomainError(ValueError):
    pass


class Vocab:
    """Dense word <-> index mapping in first-seen order."""

    def __init__(self, words: Iterable[str]):
        self.words: list[str] = []
        self.index: dict[str, int] = {}
        for w in words:
            if w not in self.index:
                self.index[w] = len(self.words)
                self.words.append(w)

    @classmethod
    def from_examples(cls, examples: Iterable, extra: Iterable[str] = ()) -> "Vocab":
        words = [t for x in examples for t in x.tokens]
        return cls([*extra, *words])

    def __len__(self) -> int:
        return len(self.words)

    def __contains__(self, word: str) -> bool:
        return word in self.index

    def __iter__(self):
        return iter(self.words)

    def ids(self, tokens: Sequence[str]) -> np.ndarray:
        try:
            return np.array([self.index[t] for t in tokens], dtype=np.intp)
        except KeyError as err:
            raise VocabError(f"unknown word {err.args[0]!r}") from None

    def manifest(self) -> dict[str, int]:
        return dict(self.index)


@dataclass
class IDEConfig:
    epochs: int = 200
    batch: int = 64
    lr: float = 1e-3
    seed: int = 0
    hidden: int = 32
    embed_dim: int = 4
    logvar_min: float = -10.0
    logvar_max: float = 10.0
    slope: float = 0.1


class DensityModel:
    """Word embeddings plus a shared two-layer net emitting (mean, log-variance)."""

    def __init__(self, vocab: Vocab, d: int, config: IDEConfig | None = None,
                 params: ParamSet | None = None):
        self.vocab = vocab
        self.d = d
        self.config = config or IDEConfig()
        cfg = self.config
        if not cfg.logvar_min < cfg.logvar_max:
            raise ValueError("log-variance clamp needs lo < hi")
        if params is None:
            rng = make_rng(cfg.seed, "ide-init")
            params = ParamSet()
            params.add_uniform("embed", (len(vocab), cfg.embed_dim), rng)
            add_dense(params, "fc1", cfg.embed_dim, cfg.hidden, rng)
            add_dense(params, "fc2", cfg.hidden, 2 * d, rng)
        self.params = params
        self.loss_history: list[float] = []
        self._table: tuple[np.ndarray, np.ndarray] | None = None

    def forward_all(self) -> tuple[Tensor, Tensor]:
        """(mean, clamped log-variance) for every vocabulary word, ``[V, d]`` each."""
        p = self.params
        h = leaky_relu(dense(p, "fc1", p["embed"]), self.config.slope)
        out = dense(p, "fc2", h)
        mu = out[:, :self.d]
        logvar = out[:, self.d:].clamp(self.config.logvar_min, self.config.logvar_max)
        return mu, logvar

    def table(self) -> tuple[np.ndarray, np.ndarray]:
        """Cached (mean, variance) arrays for the whole vocabulary."""
        if self._table is None:
            with no_grad():
                mu, logvar = self.forward_all()
            self._table = (mu.data.copy(), np.exp(logvar.data))
        return self._table

    def invalidate(self) -> None:
        self._table = None

    # -- persistence --------------------------------------------------------

    def save(self, path) -> None:
        meta = {"kind": "ide", "d": self.d, "vocab": self.vocab.manifest(),
                "config": asdict(self.config), "loss_history": self.loss_history}
        save_checkpoint(self.params, path, meta)

    @classmethod
    def load(cls, path) -> "DensityModel":
        values, meta = load_checkpoint(path)
        vocab = Vocab(sorted(meta["vocab"], key=meta["vocab"].get))
        model = cls(vocab, meta["d"], IDEConfig(**meta["config"]))
        model.params.load_values(values)
        model.loss_history = list(meta.get("loss_history", []))
        return model


def predict_word_density(model: DensityModel, word: str) -> tuple[np.ndarray, np.ndarray]:
    i = model.vocab.ids([word])[0]
    mu, var = model.table()
    return mu[i].copy(), var[i].copy()


def nll_loss(mu, var, f) -> float:
    """Gaussian negative log-likelihood summed over dimensions (constant dropped)."""
    mu, var, f = (np.asarray(a, dtype=np.float64) for a in (mu, var, f))
    if mu.shape != var.shape or mu.shape != f.shape:
        raise ValueError(f"shape mismatch: {mu.shape}, {var.shape}, {f.shape}")
    assert np.all(var > 0), "variance must be positive"
    return float(0.5 * np.sum(np.log(var) + (f - mu) ** 2 / var))


def description_nll(mu: np.ndarray, var: np.ndarray, f: np.ndarray) -> float:
    """Loss of one description: every word is charged the full feature vector."""
    return sum(nll_loss(m, v, f) for m, v in zip(mu, var))


def pair_arrays(examples: Sequence, vocab: Vocab) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Flatten examples into (word id, example id) pairs plus the feature matrix."""
    feats = np.stack([x.features for x in examples])
    word_ids, ex_ids = [], []
    for i, x in enumerate(examples):
        ids = vocab.ids(x.tokens)
        word_ids.extend(ids)
        ex_ids.extend([i] * len(ids))
    return np.array(word_ids, dtype=np.intp), np.array(ex_ids, dtype=np.intp), feats


def batch_loss(model: DensityModel, word_ids: np.ndarray, feats: np.ndarray) -> Tensor:
    """Mean over (word, feature) pairs of the per-pair NLL summed over dims."""
    mu_all, logvar_all = model.forward_all()
    mu = mu_all.take_rows(word_ids)
    logvar = logvar_all.take_rows(word_ids)
    diff = Tensor(feats) - mu
    per = (logvar + diff * diff * (-logvar).exp()) * 0.5
    return per.sum() * (1.0 / len(word_ids))


def train_ide(train: Sequence, config: IDEConfig | None = None, vocab: Vocab | None = None,
              d: int | None = None) -> DensityModel:
    """Fit a :class:`DensityModel` by minibatch Adam on the Gaussian NLL.

    Batches are drawn over examples; each example contributes one pair per
    word. Deterministic for a fixed ``config.seed``.
    """
    config = config or IDEConfig()
    if not train:
        raise ValueError("empty training set")
    vocab = vocab or Vocab.from_examples(train)
    d = d or len(train[0].features)
    model = DensityModel(vocab, d, config)
    word_ids, ex_ids, feats = pair_arrays(train, vocab)
    # pair index ranges per example so example-level batches map to pairs
    starts = np.searchsorted(ex_ids, np.arange(len(train)))
    ends = np.append(starts[1:], len(ex_ids))
    rng = make_rng(config.seed, "ide-shuffle")
    params = model.params
    n = len(train)
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        total, count = 0.0, 0
        for lo in range(0, n, config.batch):
            chunk = order[lo:lo + config.batch]
            pidx = np.concatenate([np.arange(starts[i], ends[i]) for i in chunk])
            params.zero_grad()
            loss = batch_loss(model, word_ids[pidx], feats[ex_ids[pidx]])
            check_finite_loss(loss.item(), params.step)
            loss.backward()
            adam_step(params, config.lr)
            total += loss.item() * len(pidx)
            count += len(pidx)
        model.loss_history.append(total / count)
    model.invalidate()
    return model


# -- entropy-weighted composition ------------------------------------------------

def gaussian_entropy(var):
    """Differential entropy of N(mu, var), in nats."""
    v = np.asarray(var, dtype=np.float64)
    if np.any(v <= 0):
        raise DomainError("variance must be positive")
    e = 0.5 * (LOG_2PI + np.log(v)) + 0.5
    return float(e) if np.ndim(e) == 0 else e


def information_gain(e, E: float = DEFAULT_BASE_ENTROPY):
    g = E - np.asarray(e, dtype=np.float64)
    if np.any(g < 0):
        log.warning("negative information gain (base entropy E=%s is below some entropy)", E)
    return float(g) if np.ndim(g) == 0 else g


@dataclass
class GainProfile:
    words: list[str]
    mu: np.ndarray
    var: np.ndarray
    entropy: np.ndarray
    gain: np.ndarray
    base_entropy: float
    tau: float

    def weights(self) -> np.ndarray:
        """Per-dimension softmax over words of gain / tau, ``[n_words, d]``."""
        z = self.gain / self.tau
        z = z - z.max(axis=0, keepdims=True)
        w = np.exp(z)
        return w / w.sum(axis=0, keepdims=True)


def gain_profile(model: DensityModel, tokens: Sequence[str], E: float = DEFAULT_BASE_ENTROPY,
                 tau: float = DEFAULT_TAU) -> GainProfile:
    ids = model.vocab.ids(tokens)
    mu, var = model.table()
    ent = gaussian_entropy(var[ids])
    return GainProfile(list(tokens), mu[ids], var[ids], ent, information_gain(ent, E), E, tau)


def compose(model: DensityModel, tokens: Sequence[str], E: float = DEFAULT_BASE_ENTROPY,
            tau: float = DEFAULT_TAU) -> np.ndarray:
    """Blend per-word means into one predicted feature vector."""
    if len(tokens) == 0:
        raise UsageError("compose needs at least one token")
    if tau <= 0:
        raise ValueError("temperature must be positive")
    prof = gain_profile(model, tokens, E, tau)
    return (prof.weights() * prof.mu).sum(axis=0)


def score(f_hat, f) -> float:
    """Negated L2 distance, so larger is better."""
    f_hat, f = np.asarray(f_hat, dtype=np.float64), np.asarray(f, dtype=np.float64)
    if f_hat.shape != f.shape:
        raise ValueError(f"dimension mismatch {f_hat.shape} vs {f.shape}")
    return -float(np.linalg.norm(f - f_hat))


def argmax_first(scores: Sequence[float]) -> int:
    """Index of the maximum; ties go to the lowest index."""
    return int(np.argmax(np.asarray(scores, dtype=np.float64)))


def select(model: DensityModel, tokens: Sequence[str], candidates: Sequence,
           E: float = DEFAULT_BASE_ENTROPY, tau: float = DEFAULT_TAU) -> int:
    if len(candidates) == 0:
        raise UsageError("select needs at least one candidate")
    cands = [np.asarray(c, dtype=np.float64) for c in candidates]
    if any(c.shape != (model.d,) for c in cands):
        raise ValueError("candidate dimension mismatch")
    f_hat = compose(model, tokens, E, tau)
    return argmax_first([score(f_hat, c) for c in cands])


def gain_matrix(model: DensityModel, vocab: Vocab | None = None,
                E: float = DEFAULT_BASE_ENTROPY) -> np.ndarray:
    """Information gain for every (word, dimension), ``[V, d]``."""
    words = list(vocab or model.vocab)
    _, var = model.table()
    ids = model.vocab.ids(words)
    return information_gain(gaussian_entropy(var[ids]), E)


class IDESelector:
    """Adapter so evaluation code can call a trained model as ``selector(tokens, cands)``."""

    def __init__(self, model: DensityModel, E: float = DEFAULT_BASE_ENTROPY,
                 tau: float = DEFAULT_TAU):
        self.model, self.E, self.tau = model, E, tau

    def __call__(self, tokens, candidates) -> int:
        return select(self.model, tokens, candidates, self.E, self.tau)
