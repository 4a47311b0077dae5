"""Compiled vs pure-numpy kernels.

Run with ``python3 benchmarks/bench_kernels.py``.  The script times each
kernel in-process for both implementations, checks that they agree, and then
times one acceptable-link-loss search in a fresh interpreter per backend
(the backend is chosen at import time).
"""

from __future__ import annotations

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from uplinknl import kernels
from uplinknl.shaping import QamConstellation

END_TO_END = """
import time
from uplinknl import kernels
from uplinknl.harness import LinkConfig, acceptable_link_loss
cfg = LinkConfig.from_dict({"mc": {"symbols": 4096, "bursts": 2}})
t0 = time.perf_counter()
acceptable_link_loss(cfg, 40.0)
print(kernels.HAVE_EXTENSION, time.perf_counter() - t0)
"""


def best_of(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def gmi_args(n, order=64, seed=0):
    rng = np.random.default_rng(seed)
    c = QamConstellation(order)
    idx = rng.integers(0, order, n)
    y = c.points[idx] + 0.5 * (rng.standard_normal(n) + 1j * rng.standard_normal(n))
    ti, tq = np.divmod(idx, c.side)
    prior = np.full((c.side, c.side), 1.0 / order)
    return (np.ascontiguousarray(y.real), np.ascontiguousarray(y.imag), ti, tq, c.pam, prior,
            c.pam_labels.astype(np.uint8), 1 / 0.5)


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--samples", type=int, default=1 << 18)
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--skip-end-to-end", action="store_true")
    args = p.parse_args(argv)

    if not kernels.HAVE_EXTENSION:
        print("compiled extension not available; only the fallback can be timed")
    rng = np.random.default_rng(1)
    x = rng.standard_normal((2, args.samples)) + 1j * rng.standard_normal((2, args.samples))
    g = gmi_args(args.samples // 4)

    rows = []
    t_py = best_of(lambda: kernels.py_spm_rotate(x, -1.1), args.repeat)
    t_c = best_of(lambda: kernels.spm_rotate(x, -1.1), args.repeat) if kernels.HAVE_EXTENSION else None
    if t_c is not None:
        assert np.allclose(kernels.spm_rotate(x, -1.1), kernels.py_spm_rotate(x, -1.1), atol=1e-12)
    rows.append((f"spm_rotate 2x{args.samples}", t_py, t_c))

    t_py = best_of(lambda: kernels.py_qam_bit_log_posteriors(*g), args.repeat)
    t_c = best_of(lambda: kernels.qam_bit_log_posteriors(*g), args.repeat) if kernels.HAVE_EXTENSION else None
    if t_c is not None:
        assert np.allclose(kernels.qam_bit_log_posteriors(*g), kernels.py_qam_bit_log_posteriors(*g),
                           atol=1e-9)
    rows.append((f"bit posteriors 64QAM {len(g[0])}", t_py, t_c))

    if not args.skip_end_to_end:
        times = {}
        for pure in (True, False):
            env = dict(os.environ)
            env.pop("UPLINKNL_PURE_PYTHON", None)
            if pure:
                env["UPLINKNL_PURE_PYTHON"] = "1"
            out = subprocess.run([sys.executable, "-c", END_TO_END], env=env, capture_output=True,
                                 text=True, check=True).stdout.split()
            times[out[0] == "True"] = float(out[1])
        rows.append(("acceptable_link_loss (8192 symbols)", times[False], times.get(True)))

    print(f"{'kernel':40s} {'numpy [s]':>10s} {'compiled [s]':>13s} {'speedup':>8s}")
    for name, tp, tc in rows:
        if tc is None:
            print(f"{name:40s} {tp:10.4f} {'-':>13s} {'-':>8s}")
        else:
            print(f"{name:40s} {tp:10.4f} {tc:13.4f} {tp / tc:7.1f}x")


if __name__ == "__main__":
    main()
