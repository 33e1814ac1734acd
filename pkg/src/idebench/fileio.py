"""JSONL datasets, binary PPM rasters and their JSON sidecars.

JSONL lines hold ``{features, tokens, key, meta, split}``; floats are written
with 17 significant digits so a read-back is bit-exact. PPM files are P6 with
maxval 255, quantised as ``byte = round(255 * v)``.
"""

from __future__ import annotations

import json
import re
from pathlib import Path
from typing import Sequence

import numpy as np

from .datagen import Example, SceneImage, Split
from .gradcore.params import atomic_write_text


class ParseError(ValueError):
    def __init__(self, message: str, path=None, line: int | None = None, offset: int | None = None):
        where = []
        if path is not None:
            where.append(str(path))
        if line is not None:
            where.append(f"line {line}")
        if offset is not None:
            where.append(f"byte {offset}")
        super().__init__(f"{': '.join([', '.join(where), message]) if where else message}")
        self.line = line
        self.offset = offset


def _num(x: float) -> str:
    return format(float(x), ".17g")


def example_line(ex: Example, split: str | None = None) -> str:
    feats = "[" + ", ".join(_num(v) for v in ex.features) + "]"
    parts = [f'"features": {feats}', f'"tokens": {json.dumps(ex.tokens)}',
             f'"key": {json.dumps(ex.key)}', f'"meta": {json.dumps(ex.meta, sort_keys=True)}']
    if split is not None:
        parts.append(f'"split": {json.dumps(split)}')
    return "{" + ", ".join(parts) + "}"


def write_jsonl(data: Split | Sequence[Example], path) -> None:
    if isinstance(data, Split):
        lines = [example_line(x, "train") for x in data.train]
        lines += [example_line(x, "holdout") for x in data.holdout]
    else:
        lines = [example_line(x) for x in data]
    atomic_write_text(path, "".join(line + "\n" for line in lines))


def read_examples(path) -> list[tuple[Example, str | None]]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                doc = json.loads(line)
                ex = Example(np.array(doc["features"], dtype=np.float64), list(doc["tokens"]),
                             doc["key"], dict(doc.get("meta", {})))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as err:
                raise ParseError(f"bad record ({err})", path, line=lineno) from None
            out.append((ex, doc.get("split")))
    return out


def read_jsonl(path) -> Split:
    """Read a file written by :func:`write_jsonl` from a Split."""
    records = read_examples(path)
    train = [ex for ex, s in records if s != "holdout"]
    holdout = [ex for ex, s in records if s == "holdout"]
    return Split(train, holdout, frozenset(x.key for x in holdout))


# -- PPM -----------------------------------------------------------------------

def to_bytes(values: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(np.asarray(values) * 255.0), 0, 255).astype(np.uint8)


def write_ppm_array(pixels: np.ndarray, path) -> None:
    """Write ``[H, W, 3]`` floats in [0, 1] as binary P6."""
    h, w, c = pixels.shape
    if c != 3:
        raise ValueError("PPM needs 3 channels")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(f"P6\n{w} {h}\n255\n".encode("ascii") + to_bytes(pixels).tobytes())


_TOKEN = re.compile(rb"\s*(?:#[^\n]*\n\s*)*(\S+)")


def read_ppm_array(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    pos = 0
    fields = []
    for _ in range(4):
        m = _TOKEN.match(raw, pos)
        if m is None:
            raise ParseError("truncated header", path, offset=pos)
        fields.append(m.group(1))
        pos = m.end()
    if fields[0] != b"P6":
        raise ParseError(f"not a binary PPM (magic {fields[0]!r})", path, offset=0)
    try:
        w, h, maxval = (int(f) for f in fields[1:])
    except ValueError:
        raise ParseError("non-integer header field", path, offset=pos) from None
    if maxval != 255 or w <= 0 or h <= 0:
        raise ParseError(f"unsupported header w={w} h={h} maxval={maxval}", path, offset=pos)
    if pos >= len(raw) or not raw[pos:pos + 1].isspace():
        raise ParseError("missing whitespace after header", path, offset=pos)
    pos += 1
    need = w * h * 3
    body = raw[pos:pos + need]
    if len(body) < need:
        raise ParseError(f"truncated pixel data: {len(body)} of {need} bytes", path,
                         offset=pos + len(body))
    return np.frombuffer(body, dtype=np.uint8).reshape(h, w, 3).astype(np.float64) / 255.0


def sidecar_path(path) -> Path:
    return Path(path).with_suffix(".json")


def write_ppm(image: SceneImage, path) -> None:
    write_ppm_array(image.pixels, path)
    atomic_write_text(sidecar_path(path), json.dumps(image.truth, sort_keys=True) + "\n")


def read_ppm(path) -> SceneImage:
    pixels = read_ppm_array(path)
    side = sidecar_path(path)
    truth = json.loads(side.read_text()) if side.exists() else {}
    return SceneImage(pixels, truth)


def write_gray_ppm(values: np.ndarray, path, lo: float | None = None,
                   hi: float | None = None) -> dict:
    """Affinely map a 2-D array to [0, 255] gray; returns the mapping used."""
    v = np.asarray(values, dtype=np.float64)
    lo = float(v.min()) if lo is None else lo
    hi = float(v.max()) if hi is None else hi
    scale = 1.0 / (hi - lo) if hi > lo else 0.0
    g = np.clip((v - lo) * scale, 0.0, 1.0)
    write_ppm_array(np.repeat(g[:, :, None], 3, axis=2), path)
    return {"lo": lo, "hi": hi, "byte": "round(255 * clip((v - lo) / (hi - lo), 0, 1))"}
