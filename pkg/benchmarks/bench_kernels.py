"""Benchmark the compiled kernel core against the numpy fallback.

Usage:
    python3 benchmarks/bench_kernels.py [--repeats 2000]

Measures the per-call cost of each grid kernel at pipeline-realistic sizes
(16x16 attention maps, 17-token stacks, 3x16x16 latents) plus one full
synthetic edit per backend.
"""

import argparse
import time

import numpy as np

from instmask._kernels import _fallback

try:
    from instmask._kernels import _core
except ImportError:
    _core = None


def bench(fn, args, repeats):
    fn(*args)  # warm up
    t0 = time.perf_counter()
    for _ in range(repeats):
        fn(*args)
    return (time.perf_counter() - t0) / repeats


def kernel_cases(rng):
    grid_a = rng.random((16, 16))
    grid_b = rng.random((16, 16))
    flat_a, flat_b = grid_a.ravel().copy(), grid_b.ravel().copy()
    rows = np.ascontiguousarray(rng.random((17, 256)))
    logits = rng.normal(size=(256, 17))
    kernel = np.array([0.004, 0.054, 0.242, 0.399, 0.242, 0.054, 0.004])
    kernel /= kernel.sum()
    mask = (rng.random((16, 16)) > 0.5).astype(np.uint8)
    mask_f = mask.astype(np.float64)
    lat_a = rng.normal(size=(3, 16, 16))
    lat_b = rng.normal(size=(3, 16, 16))
    return [
        ("cosine_sim", (flat_a, flat_b)),
        ("cosine_sim_many", (rows, flat_a)),
        ("softmax_rows", (logits, 2.83)),
        ("gaussian_blur", (grid_a, kernel)),
        ("resize_nearest", (mask, 64, 64)),
        ("blend_masked", (lat_a, lat_b, mask_f)),
    ]


def bench_full_edit(kernels_env):
    """One synthetic edit end to end with the given backend forced.

    Runs in a subprocess so the selection env var takes effect at import.
    """
    import os
    import subprocess
    import sys

    script = r"""
import sys, time, tempfile
from instmask import fileio
from instmask.attention import TokenSequence
from instmask.editor import EditConfig, edit
from instmask.schedule import build_schedule
from instmask.synthetic import SyntheticBackend, generate_corpus
import instmask._kernels as k

out = tempfile.mkdtemp()
man = generate_corpus(1, seed=7, out_dir=out)
s = build_schedule(steps=50)
image = fileio.load_rgb_png(f"{out}/sample0000.png")
backend = SyntheticBackend.from_files(f"{out}/sample0000.png", s)
tokens = TokenSequence.from_text(man["samples"][0]["edit_text"])
edit(image, tokens, EditConfig(seed=0), backend, s)  # warm up
t0 = time.perf_counter()
for i in range(5):
    edit(image, tokens, EditConfig(seed=i), backend, s)
print((time.perf_counter() - t0) / 5, k.BACKEND)
"""
    env = {**os.environ, "INSTMASK_KERNELS": kernels_env}
    out = subprocess.run([sys.executable, "-c", script], env=env,
                         capture_output=True, text=True, check=True)
    seconds, backend = out.stdout.split()
    assert backend == kernels_env, f"wanted {kernels_env}, ran {backend}"
    return float(seconds)


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeats", type=int, default=2000)
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    cases = kernel_cases(rng)

    print(f"{'kernel':<18}{'numpy':>12}{'compiled':>12}{'speedup':>10}")
    print("-" * 52)
    for name, call_args in cases:
        t_py = bench(getattr(_fallback, name), call_args, args.repeats)
        if _core is None:
            print(f"{name:<18}{t_py * 1e6:>10.1f}us{'n/a':>12}{'':>10}")
            continue
        t_cy = bench(getattr(_core, name), call_args, args.repeats)
        print(f"{name:<18}{t_py * 1e6:>10.1f}us{t_cy * 1e6:>10.1f}us"
              f"{t_py / t_cy:>9.1f}x")

    print()
    t_py = bench_full_edit("py")
    line = f"{'full edit':<18}{t_py * 1e3:>10.1f}ms"
    if _core is not None:
        t_cy = bench_full_edit("cy")
        line += f"{t_cy * 1e3:>10.1f}ms{t_py / t_cy:>9.1f}x"
    print(f"{'':<18}{'numpy':>12}{'compiled':>12}{'speedup':>10}")
    print("-" * 52)
    print(line)


if __name__ == "__main__":
    main()
