"""Time the numpy and numba backends of each hot kernel, plus one full training step.

    python benchmarks/bench_kernels.py [--repeat 5] [--quick]

The first numba call compiles (or loads from cache) and is excluded from
timing.  Results also go to benchmarks/results.json.
"""

import argparse
import json
import time
from pathlib import Path

import numpy as np

from h2oformer import _kernels


def _best(fn, repeat):
    fn()  # warm up / compile
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def _max_rel_diff(ref, alt):
    if isinstance(ref, tuple):
        return max(_max_rel_diff(a, b) for a, b in zip(ref, alt))
    return float(np.max(np.abs(ref - alt)) / max(1.0, float(np.max(np.abs(ref)))))


def kernel_cases(d, quick):
    rng = np.random.default_rng(0)
    n, t, v, heads = (4, 32, 22, 3) if quick else (16, 52, 22, 9)
    k, width = 5, d // 3
    xpad = rng.standard_normal((n, t + k - 1, v, d))
    w = rng.standard_normal((k, d, width))
    g = rng.standard_normal((n, t, v, width))
    dh = d // heads
    q = rng.standard_normal((n * t, heads, v, dh))
    r = rng.standard_normal((heads, v, v, dh))
    gs = rng.standard_normal((n * t, heads, v, v))
    gr = rng.standard_normal((v * v, heads * dh))
    idx = rng.integers(0, 8, size=v * v)
    return {
        "conv_time_forward": (xpad, w, 1, t),
        "conv_time_backward": (xpad, w, g, 1),
        "relpos_forward": (q, r),
        "relpos_backward": (q, r, gs),
        "scatter_rows": (gr, idx, 8),
    }


def train_step_time(backend, repeat):
    from h2oformer.data import SynthSpec, generate_synthetic
    from h2oformer.model import H2OFormer, ModelConfig
    from h2oformer.numerics import SGD, Tape
    from h2oformer.topology import load_topology
    from h2oformer.training import combined_loss, loss_cls, loss_rec

    prev = _kernels.set_backend(backend)
    try:
        top = load_topology("imigue22")
        x, y = generate_synthetic(SynthSpec(num_subjects=1, sequences_per_subject=8, length=52), top).to_arrays(52, top)
        cfg = ModelConfig(d_model=24, num_heads=3, encoder_blocks=2, decoder_blocks=1)
        model = H2OFormer(cfg, top, seed=0)
        opt = SGD(model.parameters(), lr=1e-3)

        def step():
            with Tape() as tape:
                out = model(x)
                loss = combined_loss(loss_rec(out.reconstruction, x), loss_cls(out.probability, y), 1.0, 1.0)
            tape.backward(loss)
            opt.step()
            opt.zero_grad()

        return _best(step, repeat)
    finally:
        _kernels.set_backend(prev)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--quick", action="store_true")
    ap.add_argument("--out", default=str(Path(__file__).with_name("results.json")))
    args = ap.parse_args()

    rows = []
    for d in ((24,) if args.quick else (24, 216)):
        for name, inputs in kernel_cases(d, args.quick).items():
            err = _max_rel_diff(_kernels.get(name, "numpy")(*inputs), _kernels.get(name, "numba")(*inputs))
            t_np = _best(lambda: _kernels.get(name, "numpy")(*inputs), args.repeat)
            t_nb = _best(lambda: _kernels.get(name, "numba")(*inputs), args.repeat)
            rows.append({"kernel": name, "d": d, "numpy_s": t_np, "numba_s": t_nb,
                         "speedup_numba": t_np / t_nb, "max_rel_diff": err})
            print(f"{name:<20} D={d:<4} numpy {t_np * 1e3:9.3f} ms  numba {t_nb * 1e3:9.3f} ms  "
                  f"numba speedup {t_np / t_nb:5.2f}x  diff {err:.1e}")
    steps = {b: train_step_time(b, max(1, args.repeat // 2)) for b in ("numpy", "numba")}
    print(f"{'train step (D=24)':<20}        numpy {steps['numpy']:9.3f} s   numba {steps['numba']:9.3f} s")
    Path(args.out).write_text(json.dumps({"kernels": rows, "train_step_s": steps}, indent=2) + "\n")


if __name__ == "__main__":
    main()
