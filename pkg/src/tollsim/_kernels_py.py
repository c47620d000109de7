"""Pure-Python stepping kernels.

Reference implementation of the hot per-step dynamics.  The compiled twin
(_kernels_cy.pyx) performs the exact same floating-point operations in the
same order, so both kernels produce bit-identical trajectories; keep any
change here mirrored there.

Array layout (length K+2, float64, C-contiguous):
  index 0      entrance queue (single mode only; dual mode folds it into
               the on-ramp of link 1)
  index 1..K   mainline links
  index K+1    exit link

Per-step flow records: f[i] is the flow out of link i into link i+1
(f[K+1] leaves the system), r[i] the on-ramp flow into link i, s[i] the
off-ramp flow out of link i.

Step functions return 0 on success or 1 + the index of a corrupted
link; run functions return 0 or 1 and report (step, link) through the
err array.
"""

NEG_TOL = 1e-9
PRIORITY_STATIC = 0
PRIORITY_DEMAND = 1


def step_single(K, F0, v0, Fs, Fd, N, v, w, beta_f, s_ratio, R, vr, pf, pr,
                priority_mode, n, q, dem0, dem, f, r, s):
    """Advance a single-lane-group corridor by one step (in place).

    Returns 0, or the index + 1 of a link whose post-step count left
    [0, N] by more than the corruption tolerance.
    """
    nl = K + 2
    fdem = [0.0] * nl
    fsup = [0.0] * nl
    rdem = [0.0] * nl

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
        # 4-case merge rule
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


def run_single(K, F0, v0, Fs, Fd, N, v, w, beta_f, s_ratio, R, vr, pf, pr,
               priority_mode, n, q, dem0_series, dem_series, T,
               f_out, r_out, s_out, n_out, q_out, err):
    """Run T steps, recording flows and the state after every step.

    n_out[t] / q_out[t] hold the state after step t-1 (row 0 is the
    initial state, filled by the caller).  Returns 0 or 1; on failure err
    holds (step, link).
    """
    for t in range(T):
        st = step_single(K, F0, v0, Fs, Fd, N, v, w, beta_f, s_ratio, R, vr,
                         pf, pr, priority_mode, n, q,
                         dem0_series[t], dem_series[t],
                         f_out[t], r_out[t], s_out[t])
        if st != 0:
            err[0] = t
            err[1] = st - 1
            return 1
        nr = n_out[t + 1]
        qr = q_out[t + 1]
        for i in range(K + 2):
            nr[i] = n[i]
            qr[i] = q[i]
    return 0


def step_dual(K, Fs, Fd, N, v, w, beta_f, s_ratio, R, vr, pf, pr,
              priority_mode, n, q, dem, alpha1, f, r, s):
    """Advance a dual-lane-group corridor by one step (in place).

    Group arrays have shape (2, K+2); alpha1[i] is the requested toll-lane
    share of ramp i's flow.  Entrance demand arrives via ramp 1.
    """
    nl = K + 2
    fdem = [[0.0] * nl, [0.0] * nl]
    fsup = [[0.0] * nl, [0.0] * nl]
    rdem = [0.0] * nl

    for g in range(2):
        Ng = N[g]
        Fsg = Fs[g]
        Fdg = Fd[g]
        ng = n[g]
        dg = fdem[g]
        sg = fsup[g]
        for i in range(1, nl):
            x = w[i] * (Ng[i] - ng[i])
            if x > Fsg[i]:
                x = Fsg[i]
            sg[i] = x
            x = beta_f[i] * v[i] * ng[i]
            if x > Fdg[i]:
                x = Fdg[i]
            dg[i] = x
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
                    pfg = fdem[g][i - 1]
                    prg = rd
                else:
                    pfg = pf[g][i]
                    prg = pr[i]
                fsg = fsup[g][i]
                denom = ag * prg + pfg
                if denom > 0.0:
                    psi = fsg * (ag * prg) / denom
                else:
                    psi = fsg
                t2 = fsg - fdem[g][i - 1]
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
        r[0][i] = r1
        r[1][i] = r2
        for g in range(2):
            rg = r1 if g == 0 else r2
            x = fsup[g][i] - rg
            up = fdem[g][i - 1]
            if up < x:
                x = up
            f[g][i - 1] = x
    for g in range(2):
        f[g][K + 1] = fdem[g][K + 1]
        r[g][0] = 0.0
        s[g][0] = 0.0
        s[g][K + 1] = 0.0
        for i in range(1, K + 1):
            s[g][i] = s_ratio[i] * f[g][i]

    for g in range(2):
        ng = n[g]
        fg = f[g]
        rg = r[g]
        sg = s[g]
        for i in range(1, K + 1):
            ng[i] = ng[i] + fg[i - 1] + rg[i] - fg[i] - sg[i]
        ng[K + 1] = ng[K + 1] + fg[K] - fg[K + 1]
    for i in range(1, K + 1):
        q[i] = q[i] + dem[i] - r[0][i] - r[1][i]

    for g in range(2):
        ng = n[g]
        Ng = N[g]
        for i in range(1, nl):
            x = ng[i]
            if x < 0.0:
                if x < -NEG_TOL:
                    return i + 1
                ng[i] = 0.0
            elif x > Ng[i]:
                if x > Ng[i] + NEG_TOL:
                    return i + 1
                ng[i] = Ng[i]
    for i in range(1, K + 1):
        if q[i] < 0.0:
            if q[i] < -NEG_TOL:
                return i + 1
            q[i] = 0.0
    return 0


def run_dual(K, Fs, Fd, N, v, w, beta_f, s_ratio, R, vr, pf, pr,
             priority_mode, n, q, dem_series, alpha1_series, T,
             f_out, r_out, s_out, n_out, q_out, err):
    """Run T dual-mode steps, recording per-group flows and states."""
    for t in range(T):
        st = step_dual(K, Fs, Fd, N, v, w, beta_f, s_ratio, R, vr, pf, pr,
                       priority_mode, n, q, dem_series[t], alpha1_series[t],
                       f_out[t], r_out[t], s_out[t])
        if st != 0:
            err[0] = t
            err[1] = st - 1
            return 1
        nr = n_out[t + 1]
        qr = q_out[t + 1]
        for g in range(2):
            for i in range(K + 2):
                nr[g][i] = n[g][i]
        for i in range(K + 2):
            qr[i] = q[i]
    return 0
