"""Numba kernels: RK4 propagation of the truncated amplitude equations.

Everything here works on the flat complex state vector laid out exactly as
in state.Layout, in units of the cavity halfwidth (kappa = 1).  The segment
runner integrates many steps with a frozen atom set: per-step couplings from
ballistic positions (midpoint sampling for the RK4 stages), per-step
renormalization, stochastic jump draws, and an optional jump veto.

Atom positions are carried in SI metres; the per-step displacements are
precomputed by the caller so the kernel never needs the time unit.
"""

import numpy as np
from numba import njit

SQ2 = np.sqrt(2.0)
SQ3 = np.sqrt(3.0)

# status codes returned by run_segment
STATUS_OK = 0
STATUS_PROB_OVERFLOW = 1

# event kinds
EV_CAVITY = 0
EV_SIDE = 1


@njit(cache=True)
def seed_rng(seed):
    np.random.seed(seed)


@njit(cache=True)
def pidx(a, b, n):
    # canonical flat index of pair (a, b), a < b
    return a * n - a * (a + 1) // 2 + (b - a - 1)


@njit(cache=True)
def tidx(a, b, c, n):
    # canonical flat index of triple (a, b, c), a < b < c
    head = (n * (n - 1) * (n - 2) - (n - a) * (n - a - 1) * (n - a - 2)) // 6
    m = n - a - 1
    jj = b - a - 1
    kk = c - a - 1
    return head + jj * m - jj * (jj + 1) // 2 + (kk - jj - 1)


@njit(cache=True)
def deriv(y, out, level, n, g, cg, e, ck, ca, rowsum, pairsum):
    """out <- dy/dt for the non-Hermitian flow (kappa = 1)."""
    g0 = y[0]
    al = y[1]
    if level == 1:
        ob = 2
        s = 0.0j
        for j in range(n):
            s += g[j] * y[ob + j]
        out[0] = -e * al
        out[1] = e * g0 + s - ck * al
        for j in range(n):
            out[ob + j] = -cg[j] * al - ca * y[ob + j]
        return
    if level == 2:
        ob = 3
        oz = 3 + n
        ot = 3 + 2 * n
        et = y[2]
        sb = 0.0j
        sz = 0.0j
        for j in range(n):
            sb += g[j] * y[ob + j]
            sz += g[j] * y[oz + j]
            rowsum[j] = 0.0j
        p = ot
        for j in range(n):
            for k in range(j + 1, n):
                th = y[p]
                rowsum[j] += g[k] * th
                rowsum[k] += g[j] * th
                out[p] = -(cg[j] * y[oz + k] + cg[k] * y[oz + j]) - 2.0 * ca * th
                p += 1
        out[0] = -e * al
        out[1] = e * (g0 - SQ2 * et) + sb - ck * al
        out[2] = SQ2 * e * al + SQ2 * sz - 2.0 * ck * et
        for j in range(n):
            out[ob + j] = -e * y[oz + j] - cg[j] * al - ca * y[ob + j]
            out[oz + j] = (e * y[ob + j] + rowsum[j] - SQ2 * cg[j] * et
                           - (ck + ca) * y[oz + j])
        return
    # level 3
    npair = n * (n - 1) // 2
    ob = 4
    oz = 4 + n
    oz2 = 4 + 2 * n
    ot = 4 + 3 * n
    ot1 = ot + npair
    oi = ot1 + npair
    et = y[2]
    et3 = y[3]
    sb = 0.0j
    sz = 0.0j
    sz2 = 0.0j
    for j in range(n):
        sb += g[j] * y[ob + j]
        sz += g[j] * y[oz + j]
        sz2 += g[j] * y[oz2 + j]
        rowsum[j] = 0.0j
    for p in range(npair):
        pairsum[p] = 0.0j
    # iota sector: derivatives plus its couplings into theta1
    t = 0
    for j in range(n):
        for k in range(j + 1, n):
            pjk = pidx(j, k, n)
            for l in range(k + 1, n):
                io = y[oi + t]
                pjl = pidx(j, l, n)
                pkl = pidx(k, l, n)
                pairsum[pjk] += g[l] * io
                pairsum[pjl] += g[k] * io
                pairsum[pkl] += g[j] * io
                out[oi + t] = -(cg[j] * y[ot1 + pkl] + cg[k] * y[ot1 + pjl]
                                + cg[l] * y[ot1 + pjk]) - 3.0 * ca * io
                t += 1
    # pair sectors
    rowsum1 = np.zeros(n, dtype=np.complex128)
    p = 0
    for j in range(n):
        for k in range(j + 1, n):
            th = y[ot + p]
            t1 = y[ot1 + p]
            rowsum[j] += g[k] * th
            rowsum[k] += g[j] * th
            rowsum1[j] += g[k] * t1
            rowsum1[k] += g[j] * t1
            out[ot + p] = (-e * t1 - (cg[j] * y[oz + k] + cg[k] * y[oz + j])
                           - 2.0 * ca * th)
            out[ot1 + p] = (e * th + pairsum[p]
                            - SQ2 * (cg[j] * y[oz2 + k] + cg[k] * y[oz2 + j])
                            - (ck + 2.0 * ca) * t1)
            p += 1
    out[0] = -e * al
    out[1] = e * (g0 - SQ2 * et) + sb - ck * al
    out[2] = SQ2 * e * al - SQ3 * e * et3 + SQ2 * sz - 2.0 * ck * et
    out[3] = SQ3 * e * et + SQ3 * sz2 - 3.0 * ck * et3
    for j in range(n):
        out[ob + j] = -e * y[oz + j] - cg[j] * al - ca * y[ob + j]
        out[oz + j] = (e * (y[ob + j] - SQ2 * y[oz2 + j]) + rowsum[j]
                       - SQ2 * cg[j] * et - (ck + ca) * y[oz + j])
        out[oz2 + j] = (SQ2 * e * y[oz + j] + SQ2 * rowsum1[j]
                        - SQ3 * cg[j] * et3 - (2.0 * ck + ca) * y[oz2 + j])


@njit(cache=True)
def expectations(y, level, n, sig, want_sig):
    """Returns (norm2, unnormalized <a^dag a>); fills sig unnormalized."""
    norm2 = 0.0
    for i in range(y.shape[0]):
        norm2 += y[i].real ** 2 + y[i].imag ** 2
    if level == 1:
        ob = 2
        nph = abs(y[1]) ** 2
        if want_sig:
            for j in range(n):
                sig[j] = abs(y[ob + j]) ** 2
        return norm2, nph
    if level == 2:
        ob = 3
        oz = 3 + n
        ot = 3 + 2 * n
        nph = abs(y[1]) ** 2 + 2.0 * abs(y[2]) ** 2
        for j in range(n):
            nph += abs(y[oz + j]) ** 2
        if want_sig:
            for j in range(n):
                sig[j] = abs(y[ob + j]) ** 2 + abs(y[oz + j]) ** 2
            p = ot
            for j in range(n):
                for k in range(j + 1, n):
                    w = abs(y[p]) ** 2
                    sig[j] += w
                    sig[k] += w
                    p += 1
        return norm2, nph
    npair = n * (n - 1) // 2
    ob = 4
    oz = 4 + n
    oz2 = 4 + 2 * n
    ot = 4 + 3 * n
    ot1 = ot + npair
    oi = ot1 + npair
    nph = abs(y[1]) ** 2 + 2.0 * abs(y[2]) ** 2 + 3.0 * abs(y[3]) ** 2
    for j in range(n):
        nph += abs(y[oz + j]) ** 2 + 2.0 * abs(y[oz2 + j]) ** 2
    for p in range(npair):
        nph += abs(y[ot1 + p]) ** 2
    if want_sig:
        for j in range(n):
            sig[j] = (abs(y[ob + j]) ** 2 + abs(y[oz + j]) ** 2
                      + abs(y[oz2 + j]) ** 2)
        p = 0
        for j in range(n):
            for k in range(j + 1, n):
                w = abs(y[ot + p]) ** 2 + abs(y[ot1 + p]) ** 2
                sig[j] += w
                sig[k] += w
                p += 1
        t = 0
        for j in range(n):
            for k in range(j + 1, n):
                for l in range(k + 1, n):
                    w = abs(y[oi + t]) ** 2
                    sig[j] += w
                    sig[k] += w
                    sig[l] += w
                    t += 1
    return norm2, nph


@njit(cache=True)
def apply_cavity(y, tmp, level, n):
    """In-place annihilation-operator collapse followed by renormalization."""
    for i in range(y.shape[0]):
        tmp[i] = 0.0j
    if level == 1:
        tmp[0] = y[1]
    elif level == 2:
        ob = 3
        oz = 3 + n
        tmp[0] = y[1]
        tmp[1] = SQ2 * y[2]
        for j in range(n):
            tmp[ob + j] = y[oz + j]
    else:
        npair = n * (n - 1) // 2
        ob = 4
        oz = 4 + n
        oz2 = 4 + 2 * n
        ot = 4 + 3 * n
        ot1 = ot + npair
        tmp[0] = y[1]
        tmp[1] = SQ2 * y[2]
        tmp[2] = SQ3 * y[3]
        for j in range(n):
            tmp[ob + j] = y[oz + j]
            tmp[oz + j] = SQ2 * y[oz2 + j]
        for p in range(npair):
            tmp[ot + p] = y[ot1 + p]
    norm2 = 0.0
    for i in range(y.shape[0]):
        norm2 += tmp[i].real ** 2 + tmp[i].imag ** 2
    inv = 1.0 / np.sqrt(norm2)
    for i in range(y.shape[0]):
        y[i] = tmp[i] * inv


@njit(cache=True)
def apply_side(y, tmp, level, n, j):
    """In-place sigma_- collapse of atom slot j, then renormalization."""
    for i in range(y.shape[0]):
        tmp[i] = 0.0j
    if level == 1:
        tmp[0] = y[2 + j]
    elif level == 2:
        ob = 3
        oz = 3 + n
        ot = 3 + 2 * n
        tmp[0] = y[ob + j]
        tmp[1] = y[oz + j]
        for k in range(n):
            if k != j:
                a, b = (j, k) if j < k else (k, j)
                tmp[ob + k] = y[ot + pidx(a, b, n)]
    else:
        npair = n * (n - 1) // 2
        ob = 4
        oz = 4 + n
        oz2 = 4 + 2 * n
        ot = 4 + 3 * n
        ot1 = ot + npair
        oi = ot1 + npair
        tmp[0] = y[ob + j]
        tmp[1] = y[oz + j]
        tmp[2] = y[oz2 + j]
        for k in range(n):
            if k != j:
                a, b = (j, k) if j < k else (k, j)
                p = pidx(a, b, n)
                tmp[ob + k] = y[ot + p]
                tmp[oz + k] = y[ot1 + p]
        for k in range(n):
            for l in range(k + 1, n):
                if k == j or l == j:
                    continue
                a = min(j, k)
                c = max(j, l)
                b = j + k + l - a - c
                tmp[ot + pidx(k, l, n)] = y[oi + tidx(a, b, c, n)]
    norm2 = 0.0
    for i in range(y.shape[0]):
        norm2 += tmp[i].real ** 2 + tmp[i].imag ** 2
    inv = 1.0 / np.sqrt(norm2)
    for i in range(y.shape[0]):
        y[i] = tmp[i] * inv


@njit(cache=True)
def _coupling(xj, zj, ey, kwave, inv_w0sq, gmax_k, is_ring):
    env = np.exp(-xj * xj * inv_w0sq) * ey
    if is_ring:
        ph = kwave * zj
        return (gmax_k / SQ2) * (np.cos(ph) + 1j * np.sin(ph)) * env
    return gmax_k * np.cos(kwave * zj) * env + 0.0j


@njit(cache=True)
def run_segment(y, level, n, n_steps, dt,
                xs, zs, dxs, dzs, eys,
                kwave, inv_w0sq, gmax_k, is_ring,
                e, ck, ca, gamma_k,
                do_jumps,
                veto_on, veto_window, veto_times,
                t0,
                n_out, events):
    """Integrate n_steps RK4 steps with a frozen atom set.

    n_out[i] receives the normalized photon expectation at the start of step
    i (after any jump of the previous step).  events rows are
    (time, kind, slot, vetoed).  Returns (n_events, status).
    """
    size = y.shape[0]
    k1 = np.empty(size, dtype=np.complex128)
    k2 = np.empty(size, dtype=np.complex128)
    k3 = np.empty(size, dtype=np.complex128)
    k4 = np.empty(size, dtype=np.complex128)
    yt = np.empty(size, dtype=np.complex128)
    tmp = np.empty(size, dtype=np.complex128)
    npair = n * (n - 1) // 2 if level >= 2 else 0
    rowsum = np.empty(max(n, 1), dtype=np.complex128)
    pairsum = np.empty(max(npair, 1), dtype=np.complex128)
    sig = np.empty(max(n, 1), dtype=np.float64)
    g_a = np.empty(max(n, 1), dtype=np.complex128)
    g_m = np.empty(max(n, 1), dtype=np.complex128)
    g_b = np.empty(max(n, 1), dtype=np.complex128)
    cg_a = np.empty(max(n, 1), dtype=np.complex128)
    cg_m = np.empty(max(n, 1), dtype=np.complex128)
    cg_b = np.empty(max(n, 1), dtype=np.complex128)
    for j in range(n):
        g_a[j] = _coupling(xs[j], zs[j], eys[j], kwave, inv_w0sq, gmax_k, is_ring)
        cg_a[j] = np.conj(g_a[j])
    veto_max = veto_times.shape[0]
    ev_cap = events.shape[0]
    n_ev = 0
    h = 0.5 * dt
    sixth = dt / 6.0
    for i in range(n_steps):
        norm2, nph = expectations(y, level, n, sig, False)
        n_out[i] = nph / norm2
        inv = 1.0 / np.sqrt(norm2)
        for idx in range(size):
            y[idx] *= inv
        for j in range(n):
            g_m[j] = _coupling(xs[j] + 0.5 * dxs[j], zs[j] + 0.5 * dzs[j],
                               eys[j], kwave, inv_w0sq, gmax_k, is_ring)
            cg_m[j] = np.conj(g_m[j])
            xs[j] += dxs[j]
            zs[j] += dzs[j]
            g_b[j] = _coupling(xs[j], zs[j], eys[j], kwave, inv_w0sq,
                               gmax_k, is_ring)
            cg_b[j] = np.conj(g_b[j])
        deriv(y, k1, level, n, g_a, cg_a, e, ck, ca, rowsum, pairsum)
        for idx in range(size):
            yt[idx] = y[idx] + h * k1[idx]
        deriv(yt, k2, level, n, g_m, cg_m, e, ck, ca, rowsum, pairsum)
        for idx in range(size):
            yt[idx] = y[idx] + h * k2[idx]
        deriv(yt, k3, level, n, g_m, cg_m, e, ck, ca, rowsum, pairsum)
        for idx in range(size):
            yt[idx] = y[idx] + dt * k3[idx]
        deriv(yt, k4, level, n, g_b, cg_b, e, ck, ca, rowsum, pairsum)
        for idx in range(size):
            y[idx] += sixth * (k1[idx] + 2.0 * (k2[idx] + k3[idx]) + k4[idx])
        for j in range(n):
            g_a[j] = g_b[j]
            cg_a[j] = cg_b[j]
        if not do_jumps:
            continue
        norm2, nph = expectations(y, level, n, sig, True)
        t = t0 + (i + 1) * dt
        p_cav = 2.0 * (nph / norm2) * dt
        p_tot = p_cav
        for j in range(n):
            sig[j] = gamma_k * (sig[j] / norm2) * dt
            p_tot += sig[j]
        if p_tot >= 1.0:
            return n_ev, STATUS_PROB_OVERFLOW
        if np.random.random() < p_cav:
            apply_cavity(y, tmp, level, n)
            if n_ev < ev_cap:
                events[n_ev, 0] = t
                events[n_ev, 1] = EV_CAVITY
                events[n_ev, 2] = -1.0
                events[n_ev, 3] = 0.0
            n_ev += 1
            for m in range(veto_max - 1):
                veto_times[m] = veto_times[m + 1]
            if veto_max > 0:
                veto_times[veto_max - 1] = t
        else:
            for j in range(n):
                if np.random.random() < sig[j]:
                    vetoed = veto_on and veto_max > 0 and \
                        veto_times[0] > t - veto_window
                    if not vetoed:
                        apply_side(y, tmp, level, n, j)
                        for m in range(veto_max - 1):
                            veto_times[m] = veto_times[m + 1]
                        if veto_max > 0:
                            veto_times[veto_max - 1] = t
                    if n_ev < ev_cap:
                        events[n_ev, 0] = t
                        events[n_ev, 1] = EV_SIDE
                        events[n_ev, 2] = float(j)
                        events[n_ev, 3] = 1.0 if vetoed else 0.0
                    n_ev += 1
    return n_ev, STATUS_OK
