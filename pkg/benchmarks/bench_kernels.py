"""Compare the compiled kernels against the NumPy fallback.

    python benchmarks/bench_kernels.py [--repeat N] [--json out.json]

Times im2col, col2im and saliency at the shapes the VAE and the scene
pipeline actually use, plus one full VAE Adam step (batch 200) with each
backend swapped in.
"""

from __future__ import annotations

import argparse
import json
import platform
import timeit
from contextlib import contextmanager

import numpy as np

from idebench import kernels
from idebench.gradcore import adam_step, make_rng
from idebench.vision import VAEConfig, VaeModel, elbo_loss

try:
    from idebench import _kernels
except ImportError:
    _kernels = None


def compiled_funcs():
    def im2col(x, k, s, p):
        return _kernels.im2col(np.ascontiguousarray(x), k, s, p)

    def col2im(cols, c, h, w, k, s, p):
        return _kernels.col2im(np.ascontiguousarray(cols), c, h, w, k, s, p)

    def sal(img, base):
        return _kernels.saliency(np.ascontiguousarray(img), float(base))
    return {"im2col": im2col, "col2im": col2im, "saliency": sal}


PURE = {"im2col": kernels.im2col_py, "col2im": kernels.col2im_py,
        "saliency": kernels.saliency_py}


@contextmanager
def backend(funcs):
    saved = {k: getattr(kernels, k) for k in funcs}
    for k, f in funcs.items():
        setattr(kernels, k, f)
    try:
        yield
    finally:
        for k, f in saved.items():
            setattr(kernels, k, f)


def best_of(fn, repeat: int) -> float:
    number = 1
    while timeit.timeit(fn, number=number) < 0.05:
        number *= 2
    return min(timeit.repeat(fn, number=number, repeat=repeat)) / number


def cases(rng):
    x1 = rng.random((200, 3, 32, 32))
    x2 = rng.random((200, 16, 16, 16))
    c1 = kernels.im2col_py(x1, 4, 2, 1)
    c2 = kernels.im2col_py(x2, 4, 2, 1)
    img = rng.random((64, 64, 3))
    return {
        "im2col 200x3x32x32": lambda f: f["im2col"](x1, 4, 2, 1),
        "im2col 200x16x16x16": lambda f: f["im2col"](x2, 4, 2, 1),
        "col2im 200x3x32x32": lambda f: f["col2im"](c1, 3, 32, 32, 4, 2, 1),
        "col2im 200x16x16x16": lambda f: f["col2im"](c2, 16, 16, 16, 4, 2, 1),
        "saliency 64x64": lambda f: f["saliency"](img, 8.0),
    }


def vae_step(rng):
    model = VaeModel(VAEConfig(seed=0))
    patches = rng.random((200, 32, 32, 3))
    step_rng = make_rng(0, "bench")

    def run():
        model.params.zero_grad()
        elbo_loss(model, patches, step_rng).backward()
        adam_step(model.params, 1e-3)
    return run


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json", help="also write results to this file")
    args = ap.parse_args(argv)
    if _kernels is None:
        raise SystemExit("compiled kernels are not built; run `pip install -e .` first")
    rng = np.random.default_rng(0)
    fast = compiled_funcs()
    rows = []
    for name, call in cases(rng).items():
        t_py = best_of(lambda: call(PURE), args.repeat)
        t_cy = best_of(lambda: call(fast), args.repeat)
        rows.append((name, t_py, t_cy))
    step_times = []
    for funcs in (PURE, fast):
        with backend(funcs):
            step = vae_step(np.random.default_rng(1))
            step()  # warm-up
            step_times.append(best_of(step, max(2, args.repeat // 2)))
    rows.append(("VAE step batch 200", *step_times))

    print(f"{'kernel':<24}{'numpy ms':>12}{'cython ms':>12}{'speedup':>10}")
    for name, a, b in rows:
        print(f"{name:<24}{a * 1e3:>12.3f}{b * 1e3:>12.3f}{a / b:>10.2f}")
    if args.json:
        doc = {"python": platform.python_version(), "machine": platform.machine(),
               "results": [{"kernel": n, "numpy_s": a, "cython_s": b} for n, a, b in rows]}
        with open(args.json, "w") as fh:
            json.dump(doc, fh, indent=2)


if __name__ == "__main__":
    main()
