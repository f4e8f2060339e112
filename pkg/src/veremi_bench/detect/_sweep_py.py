"""Pure-Python threshold sweep; the fallback when the Cython build is absent.

Mirrors ``_sweep.pyx`` operation for operation so both produce identical
verdict matrices.
"""

from math import sqrt

import numpy as np


def sweep(rx_pos, pos, spd, send_time, sender, n_senders, art, saw, ssc, dmv):
    n = len(pos)
    art, saw, ssc, dmv = (list(map(float, a)) for a in (art, saw, ssc, dmv))
    na, nw, ns = len(art), len(saw), len(ssc)
    c_saw, c_ssc, c_dmv = na, na + nw, na + nw + ns
    out = np.zeros((n, na + nw + ns + len(dmv)), dtype=np.uint8)
    last = [-1] * n_senders
    rx_pos, pos = rx_pos.tolist(), pos.tolist()
    spd, send_time, sender = spd.tolist(), send_time.tolist(), sender.tolist()
    bad_dt = 0
    for i in range(n):
        row = [0] * out.shape[1]
        rx, p_i = rx_pos[i], pos[i]
        dx = rx[0] - p_i[0]
        dy = rx[1] - p_i[1]
        dz = rx[2] - p_i[2]
        d_rx = sqrt(dx * dx + dy * dy + dz * dz)
        for k, t in enumerate(art):
            row[k] = d_rx > t
        s = sender[i]
        p = last[s]
        if p < 0:
            for k, t in enumerate(saw):
                row[c_saw + k] = d_rx < t
        else:
            q = pos[p]
            dx = p_i[0] - q[0]
            dy = p_i[1] - q[1]
            dz = p_i[2] - q[2]
            d_prev = sqrt(dx * dx + dy * dy + dz * dz)
            dt = send_time[i] - send_time[p]
            if dt <= 0.0:
                bad_dt += 1
                for k in range(ns):
                    row[c_ssc + k] = 1
            else:
                dev = abs(d_prev / dt - spd[i])
                for k, t in enumerate(ssc):
                    row[c_ssc + k] = dev > t
            for k, t in enumerate(dmv):
                row[c_dmv + k] = d_prev < t
        out[i] = row
        last[s] = i
    return out, bad_dt
