"""Time the compiled interval kernels against the pure-Python fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--json out.json]

Inputs mirror one synthetic video (T_fpn = 180 positions, a few ground
truths) and one evaluation pass (a few thousand scored detections).
"""

import argparse
import json
import sys
import timeit

import numpy as np

from mgca.kernels import available_backends


def make_inputs(seed=0):
    rng = np.random.default_rng(seed)
    t_fpn = 180
    times = np.sort(rng.uniform(0, 96, t_fpn))
    units = rng.choice([1.0, 2.0, 4.0, 8.0], t_fpn)
    ps = times - rng.uniform(0, 10, t_fpn)
    pe = times + rng.uniform(0, 10, t_fpn)
    gs = np.array([5.0, 30.0, 70.0])
    ge = np.array([15.0, 48.0, 80.0])
    gc = np.array([0, 1, 2])

    n_det = 2000
    ds = rng.uniform(0, 90, n_det)
    de = ds + rng.uniform(1, 20, n_det)
    sc = rng.random(n_det)
    lab = rng.integers(0, 5, n_det)
    n_vid = 50
    dv = rng.integers(0, n_vid, n_det)
    n_gt = 150
    gv = rng.integers(0, n_vid, n_gt)
    g2s = rng.uniform(0, 90, n_gt)
    g2e = g2s + rng.uniform(4, 20, n_gt)
    return {
        "aps_targets": lambda k: k.aps_targets(times, ps, pe, gs, ge),
        "assign_targets": lambda k: k.assign_targets(times, units, gs, ge, gc),
        "tiou_matrix": lambda k: k.tiou_matrix(ps, pe, ps, pe),
        "nms_200": lambda k: k.nms(ds[:200], de[:200], sc[:200], lab[:200], 0.5, 200),
        "nms_2000": lambda k: k.nms(ds, de, sc, lab, 0.5, 200),
        "match_detections": lambda k: k.match_detections(dv, ds, de, gv, g2s, g2e, 0.5),
    }


def main(argv=None):
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json", default=None)
    args = ap.parse_args(argv)

    backends = available_backends()
    if "cython" not in backends:
        print("compiled backend not built; only timing the fallback", file=sys.stderr)
    cases = make_inputs()
    rows = []
    print(f"{'kernel':<18}" + "".join(f"{b:>14}" for b in backends) + ("     speedup" if len(backends) > 1 else ""))
    for name, fn in cases.items():
        times = {}
        for b, mod in backends.items():
            number = 3 if name in ("nms_2000", "match_detections") and b == "python" else 20
            best = min(timeit.repeat(lambda: fn(mod), number=number, repeat=args.repeat)) / number
            times[b] = best
        line = f"{name:<18}" + "".join(f"{times[b] * 1e3:>12.3f}ms" for b in backends)
        if "cython" in times:
            line += f"{times['python'] / times['cython']:>11.1f}x"
        print(line)
        rows.append({"kernel": name, **{f"{b}_s": t for b, t in times.items()}})
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=1)


if __name__ == "__main__":
    main()
