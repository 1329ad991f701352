"""One-sided normal-gradient extraction at the interface (Johansen-Colella).

For every cut cell a ray is cast from the interface centroid into the phase
along the normal.  It crosses two cell-center lines; on each, the field is
interpolated by a one-dimensional quadratic from three same-phase values,
and the two samples combine with the interface value into a second-order
one-sided derivative:

    G = [ (dB/dA) (T_D - T*_A) - (dA/dB) (T_D - T*_B) ] / (dB - dA)

G equals the derivative of T toward the interface from inside the phase,
i.e. the outward-normal derivative of the phase region.  The construction
is exact for fields quadratic along the ray.

Stencils are purely geometric: build once per geometry, then apply to any
cell field (forward temperature, adjoint temperature, fresh-cell fill).
"""

from dataclasses import dataclass

import numpy as np

from .geometry import CellGeometry

_N_ENTRIES = 6
_MIN_RAY = 0.1  # minimum first-crossing distance, in units of h

QUADRATIC, LINEAR, ONE_POINT, NO_STENCIL = 0, 1, 2, 3


@dataclass
class JCStencils:
    """Per-cut-cell linear forms G = c_td * T_D + sum coef * T[cols]."""

    c_td: np.ndarray           # (ncut,)
    cols: np.ndarray           # (ncut, 6) flat cell indices, -1 padding
    coef: np.ndarray           # (ncut, 6)
    fallback: np.ndarray       # (ncut,) quality level per cell

    def apply(self, field_flat, t_d):
        vals = np.where(self.cols >= 0,
                        field_flat[np.maximum(self.cols, 0)], 0.0)
        return self.c_td * t_d + (self.coef * vals).sum(axis=1)


def _line_samples(valid, grid, col_index, along_y, coord, h):
    """Three consecutive valid cells on a center line bracketing `coord`.

    Returns (indices, weights) for quadratic interpolation, or shorter
    lists for the linear / nearest fallbacks, or (None, None).
    """
    n_along = grid.ny if along_y else grid.nx
    o = grid.origin[1] if along_y else grid.origin[0]
    jc = int(round((coord - o) / h - 0.5))

    def ok(j):
        if j < 0 or j >= n_along:
            return False
        return valid[col_index, j] if along_y else valid[j, col_index]

    for s in (0, 1, -1, 2, -2):
        j0 = jc + s - 1
        if all(ok(j) for j in (j0, j0 + 1, j0 + 2)):
            t = (coord - o) / h - 0.5 - (j0 + 1)
            w = (0.5 * t * (t - 1.0), 1.0 - t * t, 0.5 * t * (t + 1.0))
            return (j0, j0 + 1, j0 + 2), w
    # linear fallback on the best bracketing pair
    for s in (0, 1, -1):
        j0 = jc + s
        if ok(j0) and ok(j0 + 1):
            t = (coord - o) / h - 0.5 - j0
            return (j0, j0 + 1), (1.0 - t, t)
        if ok(j0 - 1) and ok(j0):
            t = (coord - o) / h - 0.5 - (j0 - 1)
            return (j0 - 1, j0), (1.0 - t, t)
    for s in (0, 1, -1, 2, -2):
        if ok(jc + s):
            return (jc + s,), (1.0,)
    return None, None


def build_jc_stencils(geom: CellGeometry, phase):
    """Geometric stencils for the phase's interface-normal derivative."""
    grid = geom.grid
    cut = geom.cut
    h = grid.h
    ncut = len(cut)
    valid = geom.valid_mask(phase)
    c_td = np.zeros(ncut)
    cols = np.full((ncut, _N_ENTRIES), -1, dtype=np.int64)
    coef = np.zeros((ncut, _N_ENTRIES))
    fallback = np.full(ncut, NO_STENCIL, dtype=np.int8)

    sgn = -1.0 if phase == 1 else 1.0  # ray direction: into the phase
    ox, oy = grid.origin
    for k in range(ncut):
        dx = sgn * cut.nx[k]
        dy = sgn * cut.ny[k]
        cx, cy = cut.cx[k], cut.cy[k]
        if abs(dx) >= abs(dy):
            along_y, d_dom, c_dom, c_tr = True, dx, cx, cy
            o_dom, d_tr = ox, dy
        else:
            along_y, d_dom, c_dom, c_tr = False, dy, cy, cx
            o_dom, d_tr = oy, dx
        if abs(d_dom) < 1e-12:
            continue
        s = 1 if d_dom > 0 else -1
        # first center line strictly beyond _MIN_RAY * h along the ray
        m = int(np.floor((c_dom - o_dom) / h - 0.5)) + (1 if s > 0 else 0)
        while (o_dom + (m + 0.5) * h - c_dom) / d_dom <= _MIN_RAY * h:
            m += s
        t1 = (o_dom + (m + 0.5) * h - c_dom) / d_dom
        m2 = m + s
        n_dom = grid.nx if along_y else grid.ny
        if not (0 <= m < n_dom and 0 <= m2 < n_dom):
            continue
        t2 = (o_dom + (m2 + 0.5) * h - c_dom) / d_dom
        pa = c_tr + t1 * d_tr
        pb = c_tr + t2 * d_tr
        ia, wa = _line_samples(valid, grid, m, along_y, pa, h)
        ib, wb = _line_samples(valid, grid, m2, along_y, pb, h)
        dA, dB = t1, t2

        def flat(col, jl):
            return grid.flat(col, jl) if along_y else grid.flat(jl, col)

        if ia is not None and ib is not None and len(ia) >= 2 and len(ib) >= 2:
            den = dB - dA
            rab = dB / dA
            rba = dA / dB
            c_td[k] = (rab - rba) / den
            e = 0
            for jl, w in zip(ia, wa):
                cols[k, e] = flat(m, jl)
                coef[k, e] = -rab * w / den
                e += 1
            for jl, w in zip(ib, wb):
                cols[k, e] = flat(m2, jl)
                coef[k, e] = rba * w / den
                e += 1
            fallback[k] = QUADRATIC if (len(ia) == 3 and len(ib) == 3) else LINEAR
        elif ia is not None:
            c_td[k] = 1.0 / dA
            for e, (jl, w) in enumerate(zip(ia, wa)):
                cols[k, e] = flat(m, jl)
                coef[k, e] = -w / dA
            fallback[k] = ONE_POINT
        # else: no usable stencil; G treated as zero and flagged

    return JCStencils(c_td=c_td, cols=cols, coef=coef, fallback=fallback)


def normal_gradient_jc(geom, phase, T, t_d, stencils=None):
    """Outward-normal derivative of T at every cut cell for one phase.

    T is the phase temperature on the grid; t_d the per-cut-cell interface
    value.  Returns (gradients, stencils) so callers can reuse the
    geometric stencils for other fields on the same geometry.
    """
    if stencils is None:
        stencils = build_jc_stencils(geom, phase)
    return stencils.apply(T.ravel(), t_d), stencils
