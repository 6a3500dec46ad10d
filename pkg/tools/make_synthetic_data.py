"""Regenerate the bundled Solomon-layout customer files in src/doprd/data.

Three 25-customer layouts on the [0, 100] square mirror the Solomon classes:
clustered (c), uniformly random (r) and half clustered, half random (rc).
Coordinates are integers and pairwise distinct.
"""

from pathlib import Path

import numpy as np

from doprd.instance import SolomonData, write_solomon

OUT = Path(__file__).resolve().parents[1] / "src" / "doprd" / "data"
N = 25


def _distinct(points, rng, sampler):
    seen = set()
    out = []
    for p in points:
        while p in seen:
            p = sampler(rng)
        seen.add(p)
        out.append(p)
    return out


def uniform(rng):
    return tuple(int(v) for v in rng.integers(0, 101, size=2))


def clustered(rng, n, centers):
    pts = []
    for k in range(n):
        cx, cy = centers[k % len(centers)]
        x, y = rng.normal((cx, cy), 6.0)
        pts.append((int(np.clip(round(x), 0, 100)), int(np.clip(round(y), 0, 100))))
    return pts


def main():
    rng = np.random.default_rng(20240601)
    OUT.mkdir(parents=True, exist_ok=True)
    centers = [(20, 80), (75, 75), (25, 20), (80, 25), (50, 90)]
    layouts = {
        "syn_c1": ((40, 50), clustered(rng, N, centers), 230),
        "syn_r1": ((35, 35), [uniform(rng) for _ in range(N)], 230),
        "syn_rc1": ((40, 50), clustered(rng, N // 2, centers[:3]) + [uniform(rng) for _ in range(N - N // 2)], 240),
    }
    for name, (depot, pts, horizon) in layouts.items():
        pts = _distinct([p for p in pts if p != depot], rng, uniform)
        custs = tuple((k + 1, x, y) for k, (x, y) in enumerate(pts))
        data = SolomonData(depot=depot, customers=custs, horizon=horizon, name=name.upper())
        (OUT / f"{name}.txt").write_text(write_solomon(data))
        print("wrote", name, len(custs))


if __name__ == "__main__":
    main()
