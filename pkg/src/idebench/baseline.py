"""Toy-CLIP: a contrastive dual encoder over disentangled features and token lists."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from .gradcore import (ParamSet, Tensor, UsageError, adam_step, add_dense, add_lstm,
                       check_finite_loss, dense, l2_normalize, leaky_relu, load_checkpoint,
                       log_softmax, lstm_step, make_rng, no_grad, save_checkpoint)
from .ide import Vocab, argmax_first


class ConfigError(ValueError):
    pass


@dataclass
class BaselineConfig:
    epochs: int = 200
    batch: int = 64
    lr: float = 1e-3
    temp: float = 0.07
    seed: int = 0
    feat_hidden: int = 32
    embed_dim: int = 8
    lstm_hidden: int = 16
    out_dim: int = 16
    slope: float = 0.1


class ClipToyModel:
    def __init__(self, vocab: Vocab, d: int, config: BaselineConfig | None = None):
        self.vocab = vocab
        self.d = d
        self.config = cfg = config or BaselineConfig()
        rng = make_rng(cfg.seed, "baseline-init")
        p = self.params = ParamSet()
        add_dense(p, "feat.fc1", d, cfg.feat_hidden, rng)
        add_dense(p, "feat.fc2", cfg.feat_hidden, cfg.feat_hidden, rng)
        add_dense(p, "feat.proj", cfg.feat_hidden, cfg.out_dim, rng)
        p.add_uniform("text.embed", (len(vocab), cfg.embed_dim), rng)
        add_lstm(p, "text.lstm", cfg.embed_dim, cfg.lstm_hidden, rng)
        add_dense(p, "text.proj", cfg.lstm_hidden, cfg.out_dim, rng)
        self.loss_history: list[float] = []

    # -- encoders (batched) ---------------------------------------------------

    def features_forward(self, feats: np.ndarray) -> Tensor:
        p, s = self.params, self.config.slope
        h = leaky_relu(dense(p, "feat.fc1", Tensor(np.atleast_2d(feats))), s)
        h = leaky_relu(dense(p, "feat.fc2", h), s)
        return l2_normalize(dense(p, "feat.proj", h))

    def text_forward(self, token_lists: Sequence[Sequence[str]]) -> Tensor:
        """Final LSTM state per sequence; shorter sequences hold their last state."""
        p = self.params
        n = len(token_lists)
        if any(len(t) == 0 for t in token_lists):
            raise UsageError("empty token list")
        lengths = np.array([len(t) for t in token_lists])
        ids = np.zeros((n, lengths.max()), dtype=np.intp)
        for i, toks in enumerate(token_lists):
            ids[i, :len(toks)] = self.vocab.ids(toks)
        hid = self.config.lstm_hidden
        h = Tensor(np.zeros((n, hid)))
        c = Tensor(np.zeros((n, hid)))
        emb = p["text.embed"]
        for t in range(lengths.max()):
            x = emb.take_rows(ids[:, t])
            h_new, c_new = lstm_step((h, c), x, p, prefix="text.lstm")
            if np.all(lengths > t):
                h, c = h_new, c_new
            else:
                m = (lengths > t).astype(np.float64)[:, None]
                h = h_new * m + h * (1.0 - m)
                c = c_new * m + c * (1.0 - m)
        return l2_normalize(dense(p, "text.proj", h))

    def save(self, path) -> None:
        meta = {"kind": "baseline", "d": self.d, "vocab": self.vocab.manifest(),
                "config": asdict(self.config), "loss_history": self.loss_history}
        save_checkpoint(self.params, path, meta)

    @classmethod
    def load(cls, path) -> "ClipToyModel":
        values, meta = load_checkpoint(path)
        vocab = Vocab(sorted(meta["vocab"], key=meta["vocab"].get))
        model = cls(vocab, meta["d"], BaselineConfig(**meta["config"]))
        model.params.load_values(values)
        model.loss_history = list(meta.get("loss_history", []))
        return model


def encode_features(model: ClipToyModel, f) -> np.ndarray:
    with no_grad():
        return model.features_forward(np.asarray(f, dtype=np.float64)).data[0].copy()


def encode_text(model: ClipToyModel, tokens: Sequence[str]) -> np.ndarray:
    with no_grad():
        return model.text_forward([list(tokens)]).data[0].copy()


def cosine_score(u, v) -> float:
    u, v = np.asarray(u, dtype=np.float64), np.asarray(v, dtype=np.float64)
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0 or nv == 0:
        raise ValueError("cosine similarity of a zero vector")
    return float(np.clip(u @ v / (nu * nv), -1.0, 1.0))


def info_nce(text: Tensor, feats: Tensor, temp: float) -> Tensor:
    """Symmetric in-batch cross-entropy on the cosine similarity matrix."""
    logits = (text @ feats.T) * (1.0 / temp)
    n = logits.shape[0]
    diag = (np.arange(n), np.arange(n))
    rows = log_softmax(logits, axis=1)[diag]
    cols = log_softmax(logits, axis=0)[diag]
    return (rows.sum() + cols.sum()) * (-0.5 / n)


def train_baseline(train: Sequence, config: BaselineConfig | None = None,
                   vocab: Vocab | None = None) -> ClipToyModel:
    config = config or BaselineConfig()
    if config.batch < 2:
        raise ConfigError("contrastive training needs batch >= 2 for in-batch negatives")
    if not train:
        raise ValueError("empty training set")
    vocab = vocab or Vocab.from_examples(train)
    model = ClipToyModel(vocab, len(train[0].features), config)
    feats = np.stack([x.features for x in train])
    tokens = [list(x.tokens) for x in train]
    rng = make_rng(config.seed, "baseline-shuffle")
    params = model.params
    n = len(train)
    for _ in range(config.epochs):
        order = rng.permutation(n)
        total, count = 0.0, 0
        for lo in range(0, n, config.batch):
            idx = order[lo:lo + config.batch]
            if len(idx) < 2:
                continue
            params.zero_grad()
            loss = info_nce(model.text_forward([tokens[i] for i in idx]),
                            model.features_forward(feats[idx]), config.temp)
            check_finite_loss(loss.item(), params.step)
            loss.backward()
            adam_step(params, config.lr)
            total += loss.item() * len(idx)
            count += len(idx)
        model.loss_history.append(total / count)
    return model


def select_baseline(model: ClipToyModel, tokens: Sequence[str], candidates: Sequence) -> int:
    if len(candidates) == 0:
        raise UsageError("select needs at least one candidate")
    cands = np.stack([np.asarray(c, dtype=np.float64) for c in candidates])
    if cands.shape[1] != model.d:
        raise ValueError("candidate dimension mismatch")
    with no_grad():
        t = model.text_forward([list(tokens)]).data[0]
        f = model.features_forward(cands).data
    return argmax_first(f @ t)


class BaselineSelector:
    def __init__(self, model: ClipToyModel):
        self.model = model

    def __call__(self, tokens, candidates) -> int:
        return select_baseline(self.model, tokens, candidates)
