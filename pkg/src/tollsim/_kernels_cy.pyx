# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled stepping kernels.

Twin of _kernels_py.py: the same floating-point operations in the same
order (the extension is built with -ffp-contract=off), so trajectories
are bit-identical to the pure-Python kernel.  Any change there must be
mirrored here.
"""

from libc.stdint cimport int64_t
from libc.stdlib cimport free, malloc

DEF NEG_TOL = 1e-9
DEF PRIORITY_DEMAND = 1


cdef int _step_single(int K, double F0, double v0,
                      const double[::1] Fs, const double[::1] Fd,
                      const double[::1] N, const double[::1] v,
                      const double[::1] w, const double[::1] beta_f,
                      const double[::1] s_ratio, const double[::1] R,
                      const double[::1] vr, const double[::1] pf,
                      const double[::1] pr, int priority_mode,
                      double[::1] n, double[::1] q,
                      double dem0, const double[:] dem,
                      double[:] f, double[:] r, double[:] s,
                      double* fdem, double* fsup, double* rdem) noexcept nogil:
    cdef int nl = K + 2
    cdef int i
    cdef double x, up, rd, sup, pfi, pri, fi, ri, tot

    x = v0 * n[0]
    if x > F0:
        x = F0
    fdem[0] = x
    for i in range(1, nl):
        x = w[i] * (N[i] - n[i])
        if x > Fs[i]:
            x = Fs[i]
        fsup[i] = x
        x = beta_f[i] * v[i] * n[i]
        if x > Fd[i]:
            x = Fd[i]
        fdem[i] = x
    rdem[K + 1] = 0.0
    for i in range(1, K + 1):
        x = vr[i] * q[i]
        if x > R[i]:
            x = R[i]
        rdem[i] = x

    for i in range(1, nl):
        up = fdem[i - 1]
        rd = rdem[i]
        sup = fsup[i]
        if priority_mode == PRIORITY_DEMAND:
            tot = up + rd
            if tot > 0.0:
                pfi = up / tot
                pri = rd / tot
            else:
                pfi = 1.0
                pri = 0.0
        else:
            pfi = pf[i]
            pri = pr[i]
        if up + rd <= sup:
            fi = up
            ri = rd
        elif up <= pfi * sup:
            fi = up
            ri = sup - up
        elif rd <= pri * sup:
            ri = rd
            fi = sup - rd
        else:
            fi = pfi * sup
            ri = pri * sup
        f[i - 1] = fi
        r[i] = ri
    f[K + 1] = fdem[K + 1]
    r[0] = 0.0
    s[0] = 0.0
    s[K + 1] = 0.0
    for i in range(1, K + 1):
        s[i] = s_ratio[i] * f[i]

    n[0] = n[0] + dem0 - f[0]
    for i in range(1, K + 1):
        n[i] = n[i] + f[i - 1] + r[i] - f[i] - s[i]
        q[i] = q[i] + dem[i] - r[i]
    n[K + 1] = n[K + 1] + f[K] - f[K + 1]

    for i in range(nl):
        x = n[i]
        if x < 0.0:
            if x < -NEG_TOL:
                return i + 1
            n[i] = 0.0
        elif i > 0 and x > N[i]:
            if x > N[i] + NEG_TOL:
                return i + 1
            n[i] = N[i]
        x = q[i]
        if x < 0.0:
            if x < -NEG_TOL:
                return i + 1
            q[i] = 0.0
    return 0


cdef int _step_dual(int K, const double[:, ::1] Fs, const double[:, ::1] Fd,
                    const double[:, ::1] N, const double[::1] v,
                    const double[::1] w, const double[::1] beta_f,
                    const double[::1] s_ratio, const double[::1] R,
                    const double[::1] vr, const double[:, ::1] pf,
                    const double[::1] pr, int priority_mode,
                    double[:, ::1] n, double[::1] q,
                    const double[:] dem, const double[:] alpha1,
                    double[:, :] f, double[:, :] r, double[:, :] s,
                    double* fdem, double* fsup, double* rdem) noexcept nogil:
    cdef int nl = K + 2
    cdef int i, g
    cdef double x, rd, a1, a2, ag, lam, pfg, prg, fsg, denom, psi, t2, t3
    cdef double lg, r1, r2, rg, up

    for g in range(2):
        for i in range(1, nl):
            x = w[i] * (N[g, i] - n[g, i])
            if x > Fs[g, i]:
                x = Fs[g, i]
            fsup[g * nl + i] = x
            x = beta_f[i] * v[i] * n[g, i]
            if x > Fd[g, i]:
                x = Fd[g, i]
            fdem[g * nl + i] = x
        fdem[g * nl] = 0.0
        fsup[g * nl] = 0.0
    rdem[K + 1] = 0.0
    for i in range(1, K + 1):
        x = vr[i] * q[i]
        if x > R[i]:
            x = R[i]
        rdem[i] = x

    for i in range(1, nl):
        rd = rdem[i]
        if R[i] > 0.0 and rd > 0.0:
            a1 = alpha1[i]
            a2 = 1.0 - a1
            lam = 1.0
            for g in range(2):
                ag = a1 if g == 0 else a2
                if ag == 0.0:
                    continue
                if priority_mode == PRIORITY_DEMAND:
                    pfg = fdem[g * nl + i - 1]
                    prg = rd
                else:
                    pfg = pf[g, i]
                    prg = pr[i]
                fsg = fsup[g * nl + i]
                denom = ag * prg + pfg
                if denom > 0.0:
                    psi = fsg * (ag * prg) / denom
                else:
                    psi = fsg
                t2 = fsg - fdem[g * nl + i - 1]
                if t2 > psi:
                    psi = t2
                t3 = ag * rd
                if t3 < psi:
                    psi = t3
                lg = psi / (ag * rd)
                if lg < lam:
                    lam = lg
            r1 = lam * a1 * rd
            r2 = lam * a2 * rd
        else:
            r1 = 0.0
            r2 = 0.0
        r[0, i] = r1
        r[1, i] = r2
        for g in range(2):
            rg = r1 if g == 0 else r2
            x = fsup[g * nl + i] - rg
            up = fdem[g * nl + i - 1]
            if up < x:
                x = up
            f[g, i - 1] = x
    for g in range(2):
        f[g, K + 1] = fdem[g * nl + K + 1]
        r[g, 0] = 0.0
        s[g, 0] = 0.0
        s[g, K + 1] = 0.0
        for i in range(1, K + 1):
            s[g, i] = s_ratio[i] * f[g, i]

    for g in range(2):
        for i in range(1, K + 1):
            n[g, i] = n[g, i] + f[g, i - 1] + r[g, i] - f[g, i] - s[g, i]
        n[g, K + 1] = n[g, K + 1] + f[g, K] - f[g, K + 1]
    for i in range(1, K + 1):
        q[i] = q[i] + dem[i] - r[0, i] - r[1, i]

    for g in range(2):
        for i in range(1, nl):
            x = n[g, i]
            if x < 0.0:
                if x < -NEG_TOL:
                    return i + 1
                n[g, i] = 0.0
            elif x > N[g, i]:
                if x > N[g, i] + NEG_TOL:
                    return i + 1
                n[g, i] = N[g, i]
    for i in range(1, K + 1):
        if q[i] < 0.0:
            if q[i] < -NEG_TOL:
                return i + 1
            q[i] = 0.0
    return 0


def step_single(int K, double F0, double v0, const double[::1] Fs,
                const double[::1] Fd, const double[::1] N,
                const double[::1] v, const double[::1] w,
                const double[::1] beta_f, const double[::1] s_ratio,
                const double[::1] R, const double[::1] vr,
                const double[::1] pf, const double[::1] pr,
                int priority_mode, double[::1] n, double[::1] q,
                double dem0, const double[:] dem,
                double[:] f, double[:] r, double[:] s):
    cdef int nl = K + 2
    cdef double* buf = <double*> malloc(3 * nl * sizeof(double))
    if buf == NULL:
        raise MemoryError()
    cdef int st
    try:
        st = _step_single(K, F0, v0, Fs, Fd, N, v, w, beta_f, s_ratio, R, vr,
                          pf, pr, priority_mode, n, q, dem0, dem, f, r, s,
                          buf, buf + nl, buf + 2 * nl)
    finally:
        free(buf)
    return st


def run_single(int K, double F0, double v0, const double[::1] Fs,
               const double[::1] Fd, const double[::1] N,
               const double[::1] v, const double[::1] w,
               const double[::1] beta_f, const double[::1] s_ratio,
               const double[::1] R, const double[::1] vr,
               const double[::1] pf, const double[::1] pr,
               int priority_mode, double[::1] n, double[::1] q,
               const double[::1] dem0_series, const double[:, ::1] dem_series,
               int T, double[:, ::1] f_out, double[:, ::1] r_out,
               double[:, ::1] s_out, double[:, ::1] n_out,
               double[:, ::1] q_out, int64_t[::1] err):
    cdef int nl = K + 2
    cdef double* buf = <double*> malloc(3 * nl * sizeof(double))
    if buf == NULL:
        raise MemoryError()
    cdef int t, i, st
    cdef int rc = 0
    try:
        with nogil:
            for t in range(T):
                st = _step_single(K, F0, v0, Fs, Fd, N, v, w, beta_f, s_ratio,
                                  R, vr, pf, pr, priority_mode, n, q,
                                  dem0_series[t], dem_series[t],
                                  f_out[t], r_out[t], s_out[t],
                                  buf, buf + nl, buf + 2 * nl)
                if st != 0:
                    err[0] = t
                    err[1] = st - 1
                    rc = 1
                    break
                for i in range(nl):
                    n_out[t + 1, i] = n[i]
                    q_out[t + 1, i] = q[i]
    finally:
        free(buf)
    return rc


def step_dual(int K, const double[:, ::1] Fs, const double[:, ::1] Fd,
              const double[:, ::1] N, const double[::1] v,
              const double[::1] w, const double[::1] beta_f,
              const double[::1] s_ratio, const double[::1] R,
              const double[::1] vr, const double[:, ::1] pf,
              const double[::1] pr, int priority_mode,
              double[:, ::1] n, double[::1] q,
              const double[:] dem, const double[:] alpha1,
              double[:, :] f, double[:, :] r, double[:, :] s):
    cdef int nl = K + 2
    cdef double* buf = <double*> malloc(5 * nl * sizeof(double))
    if buf == NULL:
        raise MemoryError()
    cdef int st
    try:
        st = _step_dual(K, Fs, Fd, N, v, w, beta_f, s_ratio, R, vr, pf, pr,
                        priority_mode, n, q, dem, alpha1, f, r, s,
                        buf, buf + 2 * nl, buf + 4 * nl)
    finally:
        free(buf)
    return st


def run_dual(int K, const double[:, ::1] Fs, const double[:, ::1] Fd,
             const double[:, ::1] N, const double[::1] v,
             const double[::1] w, const double[::1] beta_f,
             const double[::1] s_ratio, const double[::1] R,
             const double[::1] vr, const double[:, ::1] pf,
             const double[::1] pr, int priority_mode,
             double[:, ::1] n, double[::1] q,
             const double[:, ::1] dem_series, const double[:, ::1] alpha1_series,
             int T, double[:, :, ::1] f_out, double[:, :, ::1] r_out,
             double[:, :, ::1] s_out, double[:, :, ::1] n_out,
             double[:, ::1] q_out, int64_t[::1] err):
    cdef int nl = K + 2
    cdef double* buf = <double*> malloc(5 * nl * sizeof(double))
    if buf == NULL:
        raise MemoryError()
    cdef int t, i, g, st
    cdef int rc = 0
    try:
        with nogil:
            for t in range(T):
                st = _step_dual(K, Fs, Fd, N, v, w, beta_f, s_ratio, R, vr,
                                pf, pr, priority_mode, n, q, dem_series[t],
                                alpha1_series[t], f_out[t], r_out[t], s_out[t],
                                buf, buf + 2 * nl, buf + 4 * nl)
                if st != 0:
                    err[0] = t
                    err[1] = st - 1
                    rc = 1
                    break
                for g in range(2):
                    for i in range(nl):
                        n_out[t + 1, g, i] = n[g, i]
                for i in range(nl):
                    q_out[t + 1, i] = q[i]
    finally:
        free(buf)
    return rc
