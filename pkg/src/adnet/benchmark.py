"""Timing comparison of the compiled and numpy kernel backends.

Measures the dilated convolution forward/backward in isolation and a full
training step (forward, loss, backward, Adam) at the default W64 geometry.
Run with `python -m adnet.benchmark`.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from . import kernels, model, numerics, training
from .windowing import Window


def _best_of(fn, repeats: int, inner: int) -> float:
    """Seconds per call, best of `repeats` timed batches of `inner` calls."""
    fn()  # warm up
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        for _ in range(inner):
            fn()
        best = min(best, (time.perf_counter() - start) / inner)
    return best


def _conv_cases(width: int, channels: int):
    rng = np.random.default_rng(0)
    x = rng.normal(size=(channels, width))
    w = rng.normal(size=(channels, channels, 3))
    b = rng.normal(size=channels)
    gy = rng.normal(size=(channels, width))
    return x, w, b, gy


def _training_step_fn(width: int, channels: int, input_dim: int):
    config = model.ADNetConfig(window_width=width, num_stages=2,
                               num_layers=model.max_layers(width, 3),
                               input_dim=input_dim, hidden_channels=channels)
    params = model.build(config, seed=0)
    adam = numerics.init_adam(params.tensor_list(), lr=5e-4)
    rng = np.random.default_rng(1)
    window = Window(features=rng.normal(size=(input_dim, width)),
                    mask=np.ones(width), video_id="bench", start_clip=0)
    targets = (rng.random(width) < 0.3).astype(np.float64)
    train_config = training.TrainConfig(seed=0, epochs=1)

    def step():
        tape = numerics.Tape()
        outputs = model.forward(params, window, tape)
        loss = training.total_loss(outputs, targets, window.mask, train_config, tape)
        tape.backward(loss.total)
        numerics.adam_step(params.tensor_list(), adam)
        numerics.zero_grads(params.tensor_list())

    return step


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=5)
    parser.add_argument("--width", type=int, default=64)
    parser.add_argument("--channels", type=int, default=64)
    parser.add_argument("--input-dim", type=int, default=16)
    args = parser.parse_args(argv)

    x, w, b, gy = _conv_cases(args.width, args.channels)
    rows = []
    original = kernels.backend()
    try:
        for backend in kernels.available_backends():
            kernels.set_backend(backend)
            for dilation in (1, 8, 32):
                fwd = _best_of(lambda: kernels.conv1d_dilated_fwd(x, w, b, dilation),
                               args.repeats, 20)
                bwd = _best_of(lambda: kernels.conv1d_dilated_bwd(x, w, gy, dilation),
                               args.repeats, 20)
                rows.append((backend, f"conv d={dilation}", fwd, bwd))
            step = _training_step_fn(args.width, args.channels, args.input_dim)
            step_time = _best_of(step, args.repeats, 3)
            rows.append((backend, "train step", step_time, None))
    finally:
        kernels.set_backend(original)

    print(f"{'backend':<10} {'case':<12} {'forward':>12} {'backward':>12}")
    for backend, case, fwd, bwd in rows:
        bwd_text = f"{bwd * 1e6:10.1f} us" if bwd is not None else f"{'-':>12}"
        print(f"{backend:<10} {case:<12} {fwd * 1e6:10.1f} us {bwd_text}")
    if len(kernels.available_backends()) == 2:
        py_step = next(r[2] for r in rows if r[0] == "python" and r[1] == "train step")
        c_step = next(r[2] for r in rows if r[0] == "compiled" and r[1] == "train step")
        print(f"\ntrain-step speedup compiled vs python: {py_step / c_step:.2f}x")
    else:
        print("\ncompiled backend not built; only numpy timings shown")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
