#!/usr/bin/env python3
"""Time the pure NumPy kernels against the compiled extension.

Runs thinning, component labeling, and parity fill on matched inputs and
prints a per-kernel table with the speedup. Outputs are cross-checked so a
backend can never look fast by being wrong.

Usage: python bench/bench_kernels.py [--size N] [--repeats R]
"""

import argparse
import time

import numpy as np

from coroseg._kernels import available_backends, get_backend


def _tube(dims, p0, p1, radius):
    grid = np.stack(
        np.meshgrid(*[np.arange(n, dtype=np.float64) for n in dims], indexing="ij"),
        axis=-1,
    )
    p0 = np.asarray(p0, dtype=np.float64)
    d = np.asarray(p1, dtype=np.float64) - p0
    t = np.clip(((grid - p0) @ d) / float(d @ d), 0.0, 1.0)
    dist = np.linalg.norm(grid - (p0 + t[..., None] * d), axis=-1)
    return (dist <= radius).astype(np.uint8)


def _phantom(n):
    """A few crossing tubes plus salt noise: busy enough to bite."""
    rng = np.random.default_rng(3)
    dims = (n, n, n)
    m = np.zeros(dims, dtype=np.uint8)
    for _ in range(4):
        p0 = rng.uniform(0.2 * n, 0.8 * n, 3)
        p1 = rng.uniform(0.2 * n, 0.8 * n, 3)
        m |= _tube(dims, p0, p1, rng.uniform(1.5, 3.5))
    noise = rng.random(dims) < 0.001
    return (m | noise).astype(np.uint8)


def _sphere_tris(center, radius, nlat=32, nlon=48):
    cx, cy, cz = center
    ring = lambda i: np.pi * i / nlat  # noqa: E731
    verts = [(cx, cy, cz + radius)]
    for i in range(1, nlat):
        for j in range(nlon):
            th, ph = ring(i), 2 * np.pi * j / nlon
            verts.append(
                (
                    cx + radius * np.sin(th) * np.cos(ph),
                    cy + radius * np.sin(th) * np.sin(ph),
                    cz + radius * np.cos(th),
                )
            )
    verts.append((cx, cy, cz - radius))
    at = lambda i, j: 1 + (i - 1) * nlon + (j % nlon)  # noqa: E731
    tris = []
    for j in range(nlon):
        tris.append((0, at(1, j), at(1, j + 1)))
        tris.append((len(verts) - 1, at(nlat - 1, j + 1), at(nlat - 1, j)))
    for i in range(1, nlat - 1):
        for j in range(nlon):
            a, b = at(i, j), at(i, j + 1)
            c, d = at(i + 1, j), at(i + 1, j + 1)
            tris.append((a, b, d))
            tris.append((a, d, c))
    v = np.asarray(verts, dtype=np.float64)
    return np.ascontiguousarray(v[np.asarray(tris, dtype=np.int64)])


def _time(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--size", type=int, default=96, help="phantom edge length (voxels)")
    ap.add_argument("--repeats", type=int, default=3, help="best-of-N timing")
    args = ap.parse_args()

    backends = available_backends()
    print(f"backends: {', '.join(backends)}")
    if len(backends) < 2:
        print("compiled extension unavailable; timing the pure backend only")

    mask = _phantom(args.size)
    n = args.size
    tris = _sphere_tris((n / 2 + 0.37, n / 2 + 0.11, n / 2 + 0.23), 0.35 * n)
    cases = [
        ("thin", lambda impl: impl.thin(mask)),
        ("label_components", lambda impl: impl.label_components(mask, 26)[0]),
        ("parity_fill", lambda impl: impl.parity_fill(tris, (n, n, n))[0]),
    ]

    print(f"phantom {n}^3, {int(mask.sum())} foreground voxels, {len(tris)} triangles")
    header = f"{'kernel':<18}" + "".join(f"{b:>12}" for b in backends)
    if len(backends) == 2:
        header += f"{'speedup':>10}"
    print(header)
    for name, call in cases:
        times, outs = [], []
        for b in backends:
            impl = get_backend(b)
            t, out = _time(lambda: call(impl), args.repeats)
            times.append(t)
            outs.append(np.asarray(out))
        row = f"{name:<18}" + "".join(f"{t * 1000:>10.1f}ms" for t in times)
        if len(outs) == 2:
            if not np.array_equal(outs[0], outs[1]):
                print(f"{name}: BACKEND OUTPUTS DISAGREE")
                return 1
            row += f"{times[0] / times[1]:>9.1f}x"
        print(row)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
