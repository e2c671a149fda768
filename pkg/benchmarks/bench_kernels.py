#!/usr/bin/env python3
"""Throughput comparison of the generation backends.

Measures the per-sample trunk step for the compiled Cython kernel and
the numpy fallback at desk and full-scale channel widths, then times
end-to-end generation of one second of audio with each backend.

Usage: python benchmarks/bench_kernels.py [--seconds 1.0]
"""

import argparse
import time

import numpy as np

from lpwavenet.features import extract_features
from lpwavenet.kernels import HAVE_FAST, make_stepper
from lpwavenet.net import WaveNetModel, desk_config, full_config
from lpwavenet.synth import extract_gen_weights, generate
from lpwavenet.synthetic import synthetic_utterance


def bench_step(pack, cond, backend, steps=3000):
    stepper = make_stepper(pack, cond, backend)
    h = np.random.default_rng(0).standard_normal(pack.residual_channels)
    for t in range(200):
        stepper.step(h, t)
    stepper.reset()
    t0 = time.perf_counter()
    for t in range(steps):
        stepper.step(h, t % len(cond))
    return (time.perf_counter() - t0) / steps


def bench_generate(model, track, backend):
    rng = np.random.default_rng(1)
    t0 = time.perf_counter()
    out = generate(model, track, rng=rng, backend=backend)
    dt = time.perf_counter() - t0
    return dt, len(out)


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--seconds", type=float, default=1.0)
    args = parser.parse_args()

    backends = ["fallback"] + (["fast"] if HAVE_FAST else [])
    if not HAVE_FAST:
        print("note: compiled extension not built; benchmarking fallback only")

    print("== per-step kernel time ==")
    for label, cfg in [("desk (14 blocks, 32 ch)", desk_config("wn_lp")),
                       ("full (30 blocks, 128 ch)", full_config("wn_lp"))]:
        model = WaveNetModel(cfg, rng=np.random.default_rng(7))
        pack = extract_gen_weights(model).pack
        cond = np.random.default_rng(1).standard_normal((4000, cfg.feature_dim))
        times = {b: bench_step(pack, cond, b,
                               steps=3000 if "desk" in label else 300)
                 for b in backends}
        line = f"{label:28s} " + "  ".join(
            f"{b}: {times[b] * 1e6:8.1f} us/step" for b in backends)
        if len(backends) == 2:
            line += f"  speedup: {times['fallback'] / times['fast']:.1f}x"
        print(line)

    print("== end-to-end generation (desk config) ==")
    cfg = desk_config("wn_lp")
    model = WaveNetModel(cfg, rng=np.random.default_rng(7))
    buf = synthetic_utterance(duration_s=args.seconds, seed=3)
    track = extract_features(buf, order=cfg.lpc_order, win_ms=25.0, hop_ms=5.0)
    from lpwavenet.features import compute_norm_stats

    track.stats = compute_norm_stats([track])
    for b in backends:
        dt, n = bench_generate(model, track, b)
        print(f"{b:10s} {n} samples in {dt:6.2f} s "
              f"({n / dt / 1000.0:6.1f} ksamples/s)")


if __name__ == "__main__":
    main()
