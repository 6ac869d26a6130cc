# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Cython implementations of the voxel kernels.

Mirrors ``pure`` exactly — same candidate ordering, same tie-breaking, same
epsilons — so both backends produce bit-identical outputs.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport ceil, floor

cnp.import_array()

BACKEND = "compiled"

# ---------------------------------------------------------------------------
# neighborhood tables (flat 27-cell indexing, C order of (dx, dy, dz))

def _build_tables():
    offsets = [(dx, dy, dz) for dx in (-1, 0, 1) for dy in (-1, 0, 1) for dz in (-1, 0, 1)]
    n26 = [i for i in range(27) if i != 13]
    n18 = [i for i in n26 if sum(abs(c) for c in offsets[i]) <= 2]
    n6 = [i for i in n26 if sum(abs(c) for c in offsets[i]) == 1]
    adj26 = [
        [j for j in n26 if j != i and max(abs(offsets[i][a] - offsets[j][a]) for a in range(3)) == 1]
        if i in n26 else []
        for i in range(27)
    ]
    adj6 = [
        [j for j in n18 if sum(abs(offsets[i][a] - offsets[j][a]) for a in range(3)) == 1]
        if i in n18 else []
        for i in range(27)
    ]

    def flatten(lists):
        start = np.zeros(28, dtype=np.int32)
        flat = []
        for i in range(27):
            start[i] = len(flat)
            flat.extend(lists[i])
        start[27] = len(flat)
        return np.array(flat, dtype=np.int32), start

    a26, s26 = flatten(adj26)
    a6, s6 = flatten(adj6)
    return (
        np.array(n26, dtype=np.int32),
        np.array(n6, dtype=np.int32),
        a26, s26, a6, s6,
        np.array(offsets, dtype=np.int32),
    )

_N26_ARR, _N6_ARR, _A26, _S26, _A6, _S6, _OFF = _build_tables()

cdef int[:] N26_V = _N26_ARR
cdef int[:] N6_V = _N6_ARR
cdef int[:] A26_V = _A26
cdef int[:] S26_V = _S26
cdef int[:] A6_V = _A6
cdef int[:] S6_V = _S6
cdef int[:, :] OFF_V = _OFF


cdef bint _is_simple(unsigned char* nb) noexcept nogil:
    cdef int comps, i, c, j, t, top
    cdef unsigned char seen[27]
    cdef int stack[27]

    comps = 0
    for i in range(27):
        seen[i] = 0
    for t in range(26):
        i = N26_V[t]
        if nb[i] and not seen[i]:
            comps += 1
            if comps > 1:
                return False
            top = 0
            stack[top] = i
            top += 1
            seen[i] = 1
            while top:
                top -= 1
                c = stack[top]
                for j in range(S26_V[c], S26_V[c + 1]):
                    if nb[A26_V[j]] and not seen[A26_V[j]]:
                        seen[A26_V[j]] = 1
                        stack[top] = A26_V[j]
                        top += 1
    if comps != 1:
        return False

    comps = 0
    for i in range(27):
        seen[i] = 0
    for t in range(6):
        i = N6_V[t]
        if not nb[i] and not seen[i]:
            comps += 1
            if comps > 1:
                return False
            top = 0
            stack[top] = i
            top += 1
            seen[i] = 1
            while top:
                top -= 1
                c = stack[top]
                for j in range(S6_V[c], S6_V[c + 1]):
                    if not nb[A6_V[j]] and not seen[A6_V[j]]:
                        seen[A6_V[j]] = 1
                        stack[top] = A6_V[j]
                        top += 1
    return comps == 1


cdef void _fill_slab(unsigned char[:, :, :] pad, Py_ssize_t i, Py_ssize_t j, Py_ssize_t k,
                     unsigned char* slab) noexcept nogil:
    cdef Py_ssize_t a, b, c, n = 0
    for a in range(3):
        for b in range(3):
            for c in range(3):
                slab[n] = pad[i + a, j + b, k + c]
                n += 1


def thin(mask):
    """Directional simple-point thinning; see the pure backend docstring."""
    cdef Py_ssize_t nx = mask.shape[0], ny = mask.shape[1], nz = mask.shape[2]
    pad_arr = np.zeros((nx + 2, ny + 2, nz + 2), dtype=np.uint8)
    pad_arr[1:-1, 1:-1, 1:-1] = np.asarray(mask) != 0
    cdef unsigned char[:, :, :] pad = pad_arr
    snap_arr = np.empty_like(pad_arr)
    cdef unsigned char[:, :, :] snap = snap_arr
    cdef int[:, :] dirs = np.array(
        [[0, 0, 1], [0, 0, -1], [0, 1, 0], [0, -1, 0], [1, 0, 0], [-1, 0, 0]],
        dtype=np.int32,
    )
    cdef Py_ssize_t i, j, k, d
    cdef int dx, dy, dz, deleted, nnb, a, b, c
    cdef unsigned char slab[27]

    while True:
        deleted = 0
        for d in range(6):
            dx = dirs[d, 0]; dy = dirs[d, 1]; dz = dirs[d, 2]
            snap_arr[:, :, :] = pad_arr
            with nogil:
                for i in range(1, nx + 1):
                    for j in range(1, ny + 1):
                        for k in range(1, nz + 1):
                            if not snap[i, j, k]:
                                continue
                            if snap[i + dx, j + dy, k + dz]:
                                continue
                            _fill_slab(snap, i - 1, j - 1, k - 1, slab)
                            nnb = 0
                            for a in range(27):
                                if slab[a]:
                                    nnb += 1
                            nnb -= 1  # center
                            if nnb < 2:
                                continue
                            if not _is_simple(slab):
                                continue
                            # live re-check on the mutating array
                            _fill_slab(pad, i - 1, j - 1, k - 1, slab)
                            nnb = 0
                            for a in range(27):
                                if slab[a]:
                                    nnb += 1
                            nnb -= 1
                            if nnb < 2:
                                continue
                            if not _is_simple(slab):
                                continue
                            pad[i, j, k] = 0
                            deleted += 1
        if deleted == 0:
            break
    return pad_arr[1:-1, 1:-1, 1:-1].copy()


def label_components(mask, int connectivity=26):
    """Scan-order BFS labeling; labels 1..count by first-visited order."""
    if connectivity not in (6, 26):
        raise ValueError(f"connectivity must be 6 or 26, got {connectivity}")
    cdef Py_ssize_t nx = mask.shape[0], ny = mask.shape[1], nz = mask.shape[2]
    fg_arr = np.ascontiguousarray(np.asarray(mask) != 0).astype(np.uint8)
    out_arr = np.zeros((nx, ny, nz), dtype=np.int32)
    cdef unsigned char[:, :, :] fg = fg_arr
    cdef int[:, :, :] out = out_arr
    cdef cnp.intp_t[:, :] queue = np.empty((nx * ny * nz if nx * ny * nz else 1, 3), dtype=np.intp)
    cdef Py_ssize_t i, j, k, qi, qn, ci, cj, ck, ni, nj, nk
    cdef int label = 0, t
    cdef int dx, dy, dz
    cdef bint use26 = connectivity == 26

    with nogil:
        for i in range(nx):
            for j in range(ny):
                for k in range(nz):
                    if not fg[i, j, k] or out[i, j, k]:
                        continue
                    label += 1
                    out[i, j, k] = label
                    queue[0, 0] = i; queue[0, 1] = j; queue[0, 2] = k
                    qi = 0; qn = 1
                    while qi < qn:
                        ci = queue[qi, 0]; cj = queue[qi, 1]; ck = queue[qi, 2]
                        qi += 1
                        for t in range(26):
                            dx = OFF_V[N26_V[t], 0]
                            dy = OFF_V[N26_V[t], 1]
                            dz = OFF_V[N26_V[t], 2]
                            if not use26 and (dx != 0) + (dy != 0) + (dz != 0) != 1:
                                continue
                            ni = ci + dx; nj = cj + dy; nk = ck + dz
                            if ni < 0 or nj < 0 or nk < 0 or ni >= nx or nj >= ny or nk >= nz:
                                continue
                            if fg[ni, nj, nk] and not out[ni, nj, nk]:
                                out[ni, nj, nk] = label
                                queue[qn, 0] = ni; queue[qn, 1] = nj; queue[qn, 2] = nk
                                qn += 1
    return out_arr, int(label)


cdef double DEGEN_EPS = 1e-9
cdef double PLANE_EPS = 1e-12


def parity_fill(tris, dims):
    """Ray-parity interior fill; see the pure backend docstring."""
    cdef Py_ssize_t nx = int(dims[0]), ny = int(dims[1]), nz = int(dims[2])
    mask_arr = np.zeros((nx, ny, nz), dtype=np.uint8)
    tris_arr = np.ascontiguousarray(np.asarray(tris, dtype=np.float64))
    cdef Py_ssize_t m = tris_arr.shape[0]
    if m == 0:
        return mask_arr, True
    cdef double[:, :, :] T = tris_arr
    cdef unsigned char[:, :, :] mask = mask_arr

    # generous capacity: per-triangle bbox cells, grown on demand
    cdef Py_ssize_t cap = 1024
    js_arr = np.empty(cap, dtype=np.intp)
    ks_arr = np.empty(cap, dtype=np.intp)
    xs_arr = np.empty(cap, dtype=np.float64)
    cdef Py_ssize_t n_hits = 0

    cdef Py_ssize_t t, j, k, jlo, jhi, klo, khi, eidx
    cdef double x0, y0, z0, x1, y1, z1, x2, y2, z2, den, u, v, w, lo, x, jj, kk, r
    cdef double ymin, ymax, zmin, zmax
    cdef double ay, az, ey, ez, dy, dz, seg2, tt, px, py, d2

    for t in range(m):
        x0 = T[t, 0, 0]; y0 = T[t, 0, 1]; z0 = T[t, 0, 2]
        x1 = T[t, 1, 0]; y1 = T[t, 1, 1]; z1 = T[t, 1, 2]
        x2 = T[t, 2, 0]; y2 = T[t, 2, 1]; z2 = T[t, 2, 2]
        den = (y1 - y0) * (z2 - z0) - (y2 - y0) * (z1 - z0)
        ymin = min(y0, y1, y2); ymax = max(y0, y1, y2)
        zmin = min(z0, z1, z2); zmax = max(z0, z1, z2)
        jlo = <Py_ssize_t>ceil(ymin - DEGEN_EPS)
        if jlo < 0:
            jlo = 0
        jhi = <Py_ssize_t>floor(ymax + DEGEN_EPS)
        if jhi > ny - 1:
            jhi = ny - 1
        klo = <Py_ssize_t>ceil(zmin - DEGEN_EPS)
        if klo < 0:
            klo = 0
        khi = <Py_ssize_t>floor(zmax + DEGEN_EPS)
        if khi > nz - 1:
            khi = nz - 1
        if jlo > jhi or klo > khi:
            continue
        if den < PLANE_EPS and den > -PLANE_EPS:
            # Ray-parallel triangle: contributes no crossings. Only ambiguous
            # when a lattice point sits within eps of a projected edge.
            for eidx in range(3):
                if eidx == 0:
                    ay = y0; az = z0; ey = y1; ez = z1
                elif eidx == 1:
                    ay = y1; az = z1; ey = y2; ez = z2
                else:
                    ay = y2; az = z2; ey = y0; ez = z0
                dy = ey - ay
                dz = ez - az
                seg2 = dy * dy + dz * dz
                for j in range(jlo, jhi + 1):
                    for k in range(klo, khi + 1):
                        jj = <double>j
                        kk = <double>k
                        if seg2 == 0.0:
                            tt = 0.0
                        else:
                            tt = ((jj - ay) * dy + (kk - az) * dz) / seg2
                            if tt < 0.0:
                                tt = 0.0
                            elif tt > 1.0:
                                tt = 1.0
                        px = ay + tt * dy
                        py = az + tt * dz
                        d2 = (jj - px) * (jj - px) + (kk - py) * (kk - py)
                        if d2 < DEGEN_EPS * DEGEN_EPS:
                            return mask_arr, False
            continue
        for j in range(jlo, jhi + 1):
            for k in range(klo, khi + 1):
                jj = <double>j
                kk = <double>k
                u = ((jj - y0) * (z2 - z0) - (y2 - y0) * (kk - z0)) / den
                v = ((y1 - y0) * (kk - z0) - (jj - y0) * (z1 - z0)) / den
                w = 1.0 - u - v
                lo = u
                if v < lo:
                    lo = v
                if w < lo:
                    lo = w
                if lo > -DEGEN_EPS and lo < DEGEN_EPS:
                    return mask_arr, False
                if lo <= 0:
                    continue
                x = x0 + u * (x1 - x0) + v * (x2 - x0)
                r = floor(x + 0.5)
                if x - r < DEGEN_EPS and x - r > -DEGEN_EPS:
                    if r >= 0 and r <= nx - 1:
                        return mask_arr, False
                if n_hits >= cap:
                    cap *= 2
                    js_arr = np.resize(js_arr, cap)
                    ks_arr = np.resize(ks_arr, cap)
                    xs_arr = np.resize(xs_arr, cap)
                js_arr[n_hits] = j
                ks_arr[n_hits] = k
                xs_arr[n_hits] = x
                n_hits += 1

    if n_hits == 0:
        return mask_arr, True
    js = js_arr[:n_hits]
    ks = ks_arr[:n_hits]
    xs = xs_arr[:n_hits]
    order = np.lexsort((xs, ks, js))
    js = np.ascontiguousarray(js[order])
    ks = np.ascontiguousarray(ks[order])
    xs = np.ascontiguousarray(xs[order])
    cdef cnp.intp_t[:] jv = js
    cdef cnp.intp_t[:] kv = ks
    cdef double[:] xv = xs
    cdef Py_ssize_t s = 0, e, a, xa, xb, n_total = n_hits
    while s < n_total:
        e = s
        while e < n_total and jv[e] == jv[s] and kv[e] == kv[s]:
            e += 1
        if (e - s) % 2:
            return mask_arr, False  # open surface along this ray
        a = s
        while a < e:
            xa = <Py_ssize_t>floor(xv[a]) + 1
            xb = <Py_ssize_t>ceil(xv[a + 1]) - 1
            if xa < 0:
                xa = 0
            if xb > nx - 1:
                xb = nx - 1
            while xa <= xb:
                mask[xa, jv[s], kv[s]] = 1
                xa += 1
            a += 2
        s = e
    return mask_arr, True
