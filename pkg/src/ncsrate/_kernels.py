"""Compiled inner loops for time-domain simulation of the coding loop."""

from __future__ import annotations

import numpy as np
from numba import njit

DIVERGENCE = 1e12

MODE_AWGN = 0
MODE_DITHER = 1


@njit(cache=True)
def simulate_loop(
    Ap, Bpw, Bpu, Cz, Cy, Dzw, Dzu, Dyw,
    e_ptr, e_idx, e_val, be_r, be_y, ce, de_y,
    Aj, bj, cj, dj,
    h, w, noise, mode, delta, burn,
    z_out, y_out, t_out, r_out, u_out, sym_out,
):
    """Run the loop; returns -1 on success or the step index of divergence.

    ``noise`` holds unit-variance Gaussians scaled by sigma (AWGN mode) or
    dither samples on [-delta/2, delta/2) (dither mode).
    """
    steps = w.shape[0]
    nx = Ap.shape[0]
    ne = be_r.shape[0]
    nj = Aj.shape[0]
    nz = Cz.shape[0]
    xp = np.zeros(nx)
    xe = np.zeros(ne)
    xj = np.zeros(nj)
    ring = np.zeros(max(h, 1))
    xp_new = np.zeros(nx)
    xe_new = np.zeros(ne)
    xj_new = np.zeros(nj)
    z = np.zeros(nz)
    for k in range(steps):
        wk = w[k]
        # measurement (no feedthrough from u)
        y = 0.0
        for i in range(nx):
            y += Cy[0, i] * xp[i]
        for i in range(wk.shape[0]):
            y += Dyw[0, i] * wk[i]
        # encoder output
        t = de_y * y
        for i in range(ne):
            t += ce[i] * xe[i]
        # channel
        if mode == MODE_AWGN:
            r = t + noise[k]
            sym = 0
        else:
            d = noise[k]
            sym = np.int64(np.floor((t + d) / delta + 0.5))
            r = delta * sym - d
        # decoder
        up = dj * r
        for i in range(nj):
            up += cj[i] * xj[i]
        if h == 0:
            p = up
        else:
            slot = k % h
            p = ring[slot]
            ring[slot] = up
        # performance output
        for i in range(nz):
            s = Dzu[i, 0] * p
            for j in range(nx):
                s += Cz[i, j] * xp[j]
            for j in range(wk.shape[0]):
                s += Dzw[i, j] * wk[j]
            z[i] = s
        # state updates
        for i in range(nx):
            s = Bpu[i, 0] * p
            for j in range(nx):
                s += Ap[i, j] * xp[j]
            for j in range(wk.shape[0]):
                s += Bpw[i, j] * wk[j]
            xp_new[i] = s
        for i in range(ne):
            s = be_r[i] * r + be_y[i] * y
            for kk in range(e_ptr[i], e_ptr[i + 1]):
                s += e_val[kk] * xe[e_idx[kk]]
            xe_new[i] = s
        for i in range(nj):
            s = bj[i] * r
            for j in range(nj):
                s += Aj[i, j] * xj[j]
            xj_new[i] = s
        big = 0.0
        for i in range(nx):
            xp[i] = xp_new[i]
            big = max(big, abs(xp[i]))
        for i in range(ne):
            xe[i] = xe_new[i]
            big = max(big, abs(xe[i]))
        for i in range(nj):
            xj[i] = xj_new[i]
            big = max(big, abs(xj[i]))
        if not big < DIVERGENCE:
            return k
        if k >= burn:
            j = k - burn
            for i in range(nz):
                z_out[j, i] = z[i]
            y_out[j] = y
            t_out[j] = t
            r_out[j] = r
            u_out[j] = p
            sym_out[j] = sym
    return -1


@njit(cache=True)
def dither_quantize(x, dither, delta, sym_out, rec_out):
    """Open-loop subtractive dithered quantizer."""
    for k in range(x.shape[0]):
        s = np.int64(np.floor((x[k] + dither[k]) / delta + 0.5))
        sym_out[k] = s
        rec_out[k] = delta * s - dither[k]
