"""Compare the compiled kernel extension against the numpy fallback.

Times every kernel on the default-model shapes (batch 64) and reports
per-call milliseconds plus the speedup. Run from the repo root:

    python3 benchmarks/bench_kernels.py [--batch 64] [--repeats 5]

Also verifies on the spot that the two backends agree bitwise (exactly
for everything except conv2d_bwd_params, which has a documented
float32-rounding tolerance).
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from fpsim._kernels import load_compiled, numpy_backend


def _cases(batch: int):
    rng = np.random.default_rng(7)
    f32 = lambda *shape: rng.standard_normal(shape).astype(np.float32)
    cases = []

    for ci, co, h in ((3, 8, 32), (8, 16, 16)):
        x = f32(batch, ci, h, h)
        w = f32(co, ci, 3, 3)
        b = f32(co)
        gy = f32(batch, co, h, h)
        cases.append((f"conv2d_fwd {ci}->{co} {h}x{h}", "conv2d_fwd",
                      (x, w, b, 1)))
        cases.append((f"conv2d_bwd_input {ci}->{co} {h}x{h}",
                      "conv2d_bwd_input", (gy, w, 1, h, h)))
        cases.append((f"conv2d_bwd_params {ci}->{co} {h}x{h}",
                      "conv2d_bwd_params", (x, gy, 1, 3, 3)))

    for k, j in ((1024, 64), (64, 8)):
        a = f32(batch, k)
        w = f32(j, k)
        b = f32(j)
        gy = f32(batch, j)
        cases.append((f"dense_fwd {k}->{j}", "dense_fwd", (a, w, b)))
        cases.append((f"dense_bwd_input {k}->{j}", "dense_bwd_input",
                      (gy, w)))
        cases.append((f"dense_bwd_params {k}->{j}", "dense_bwd_params",
                      (a, gy)))

    x = f32(batch, 8, 32, 32)
    cases.append(("maxpool2d_fwd 8x32x32", "maxpool2d_fwd", (x, 2)))
    y, idx = numpy_backend.maxpool2d_fwd(x, 2)
    cases.append(("maxpool2d_scatter 8x32x32", "maxpool2d_scatter",
                  (np.asarray(y) * 0.5, np.asarray(idx), 32, 32)))
    return cases


def _time(fn, args, repeats: int) -> float:
    fn(*args)  # warm up
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best * 1000.0


def _first_output(result):
    if isinstance(result, tuple):
        return np.asarray(result[0])
    return np.asarray(result)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--batch", type=int, default=64)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    compiled = load_compiled()
    if compiled is None:
        raise SystemExit(
            "compiled extension not importable; build it first "
            "(pip install -e . --no-build-isolation)"
        )

    rows = []
    for label, name, call_args in _cases(args.batch):
        ref = getattr(numpy_backend, name)
        fast = getattr(compiled, name)
        out_ref = _first_output(ref(*call_args))
        out_fast = _first_output(fast(*call_args))
        if name == "conv2d_bwd_params":
            ok = np.allclose(out_ref, out_fast, rtol=1e-6, atol=1e-6)
            tag = "close" if ok else "MISMATCH"
        else:
            ok = np.array_equal(out_ref, out_fast)
            tag = "exact" if ok else "MISMATCH"
        t_ref = _time(ref, call_args, args.repeats)
        t_fast = _time(fast, call_args, args.repeats)
        rows.append((label, t_ref, t_fast, t_ref / t_fast, tag))

    width = max(len(r[0]) for r in rows)
    print(f"{'kernel':<{width}}  {'numpy ms':>9}  {'compiled ms':>11}  "
          f"{'speedup':>7}  parity")
    for label, t_ref, t_fast, speed, tag in rows:
        print(f"{label:<{width}}  {t_ref:9.3f}  {t_fast:11.3f}  "
              f"{speed:6.1f}x  {tag}")
    total_ref = sum(r[1] for r in rows)
    total_fast = sum(r[2] for r in rows)
    print(f"{'TOTAL':<{width}}  {total_ref:9.3f}  {total_fast:11.3f}  "
          f"{total_ref / total_fast:6.1f}x")


if __name__ == "__main__":
    main()
