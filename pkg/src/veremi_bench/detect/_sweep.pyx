# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled threshold sweep over one receiver's beacons.

Must stay line-for-line equivalent to ``_sweep_py.sweep``.
"""

import numpy as np

from libc.math cimport fabs, sqrt


def sweep(const double[:, ::1] rx_pos, const double[:, ::1] pos, const double[::1] spd,
          const double[::1] send_time, const long long[::1] sender, Py_ssize_t n_senders,
          const double[::1] art, const double[::1] saw, const double[::1] ssc,
          const double[::1] dmv):
    cdef Py_ssize_t n = pos.shape[0]
    cdef Py_ssize_t na = art.shape[0], nw = saw.shape[0], ns = ssc.shape[0], nd = dmv.shape[0]
    cdef Py_ssize_t c_saw = na, c_ssc = na + nw, c_dmv = na + nw + ns
    out_arr = np.zeros((n, na + nw + ns + nd), dtype=np.uint8)
    last_arr = np.full(n_senders, -1, dtype=np.int64)
    cdef unsigned char[:, ::1] out = out_arr
    cdef long long[::1] last = last_arr
    cdef Py_ssize_t i, k, p
    cdef long long s
    cdef double dx, dy, dz, d_rx, d_prev, dt, implied, dev
    cdef Py_ssize_t bad_dt = 0

    for i in range(n):
        dx = rx_pos[i, 0] - pos[i, 0]
        dy = rx_pos[i, 1] - pos[i, 1]
        dz = rx_pos[i, 2] - pos[i, 2]
        d_rx = sqrt(dx * dx + dy * dy + dz * dz)
        for k in range(na):
            out[i, k] = d_rx > art[k]
        s = sender[i]
        p = last[s]
        if p < 0:
            for k in range(nw):
                out[i, c_saw + k] = d_rx < saw[k]
        else:
            dx = pos[i, 0] - pos[p, 0]
            dy = pos[i, 1] - pos[p, 1]
            dz = pos[i, 2] - pos[p, 2]
            d_prev = sqrt(dx * dx + dy * dy + dz * dz)
            dt = send_time[i] - send_time[p]
            if dt <= 0.0:
                bad_dt += 1
                for k in range(ns):
                    out[i, c_ssc + k] = 1
            else:
                implied = d_prev / dt
                dev = fabs(implied - spd[i])
                for k in range(ns):
                    out[i, c_ssc + k] = dev > ssc[k]
            for k in range(nd):
                out[i, c_dmv + k] = d_prev < dmv[k]
        last[s] = i
    return out_arr, bad_dt
