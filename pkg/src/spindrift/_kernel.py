"""Compiled stepping loop for wristband runs with built-in fields.

One projected-Euler step: add the Gaussian increment, clamp the transverse
coordinate back into the strip, count the overshoot as boundary local time,
apply the tangential push from the projected point, advance the spin through
its exact exponential flow, wrap the periodic coordinate.  The loop streams
optional accumulators (occupancy histogram, excursion counts, decay-bound
residual) so that long runs never materialise full paths.

The same function runs un-jitted when numba is missing; semantics are
identical, only slower.  State is carried across increment blocks through
the mutable ``fstate``/``istate`` arrays.
"""

import math

try:
    from numba import njit
except ImportError:  # pragma: no cover - numba is a declared dependency
    njit = None

# fstate layout
F_X, F_Y, F_L, F_LTOP, F_LBOT = 0, 1, 2, 3, 4
F_DAMP, F_S0SQ, F_MINSPIN, F_EXCDEPTH = 5, 6, 7, 8
F_SIZE = 9

# istate layout
I_ERR, I_EXC_OPEN, I_EXC_WALL, I_EXC_INTER, I_EXC_START = 0, 1, 2, 3, 4
I_NCONTACT, I_FIRST, I_LAST, I_NCOMPLETE, I_SUMSTEPS = 5, 6, 7, 8, 9
I_SIZE = 10

# geometry/field parameter pack (float)
P_HALF, P_PERIOD, P_SIG, P_ALPHA, P_ALPHA0, P_GRATIO_SQ, P_TAU_AMP = 0, 1, 2, 3, 4, 5, 6
P_DT, P_HLO1, P_HHI1, P_HLO2, P_HHI2, P_HWEIGHT = 7, 8, 9, 10, 11, 12
P_SIZE = 13

# integer parameter pack
C_TAU_KIND, C_TAU_TOP, C_TAU_BOT, C_NBURN, C_STRIDE = 0, 1, 2, 3, 4
C_RECORD, C_HIST, C_EXC, C_HC1, C_HC2, C_HN1, C_HN2 = 5, 6, 7, 8, 9, 10, 11
C_SIZE = 12


def _block(db, k0, fstate, istate, s,
           gt_kind, gt_amp, gb_kind, gb_amp,
           par, codes,
           rec_x, rec_y, rec_s, rec_l, rec_lt, rec_lb,
           hist, overflow, eps_grid, exc_top, exc_bot):
    half = par[P_HALF]
    period = par[P_PERIOD]
    sig = par[P_SIG]
    alpha = par[P_ALPHA]
    alpha0 = par[P_ALPHA0]
    gratio_sq = par[P_GRATIO_SQ]
    tau_amp = par[P_TAU_AMP]
    dt = par[P_DT]
    tau_kind = codes[C_TAU_KIND]
    n_burn = codes[C_NBURN]
    stride = codes[C_STRIDE]
    do_rec = codes[C_RECORD] != 0
    do_hist = codes[C_HIST] != 0
    do_exc = codes[C_EXC] != 0

    x = fstate[F_X]
    y = fstate[F_Y]
    L = fstate[F_L]
    p = s.shape[0]
    n = db.shape[0]
    n_rec = rec_x.shape[0]
    n_eps = eps_grid.shape[0]
    limit = 3.0 * half

    for i in range(n):
        k = k0 + i + 1
        dbx = db[i, 0] * sig
        dby = db[i, 1] * sig
        yt = y + dby
        # A single projected step cannot represent a path that would cross
        # the full strip: fold the overshoot at the hit wall and, if even the
        # folded point lies beyond the opposite wall, shrink the increment.
        nh = 0
        while (yt > limit or yt < -limit) and nh < 40:
            dbx *= 0.5
            dby *= 0.5
            yt = y + dby
            nh += 1
        xt = x + dbx
        if not (math.isfinite(xt) and math.isfinite(yt)) or yt > limit or yt < -limit:
            istate[I_ERR] = k
            break

        dl = 0.0
        wall = 0
        if yt > half:
            dl = yt - half
            y = half
            wall = 1
        elif yt < -half:
            dl = -half - yt
            y = -half
            wall = -1
        else:
            y = yt

        if wall != 0:
            # tangential push, evaluated at the projected point and the
            # pre-update spin
            active = (wall == 1 and codes[C_TAU_TOP] != 0) or (
                wall == -1 and codes[C_TAU_BOT] != 0)
            if active and tau_kind != 0:
                if tau_kind == 1:
                    v = tau_amp
                else:
                    s2 = 0.0
                    for j in range(p):
                        s2 += s[j] * s[j]
                    v = tau_amp * (1.0 - s2)
            else:
                v = 0.0
            # exact spin flow at the projected point (pre-push abscissa)
            e = math.exp(-alpha * dl)
            om = 1.0 - e
            for j in range(p):
                if wall == 1:
                    kind = gt_kind[j]
                    amp = gt_amp[j]
                else:
                    kind = gb_kind[j]
                    amp = gb_amp[j]
                if kind == 0:
                    gj = amp
                elif kind == 1:
                    gj = amp * math.cos(xt)
                else:
                    gj = amp * math.sin(xt)
                s[j] = e * s[j] + om * (gj / alpha)
            xt = xt + v * dl
            L += dl
            if wall == 1:
                fstate[F_LTOP] += dl
            else:
                fstate[F_LBOT] += dl
            ssq = 0.0
            for j in range(p):
                ssq += s[j] * s[j]
            if not math.isfinite(ssq):
                istate[I_ERR] = k
                break
            resid = ssq - fstate[F_S0SQ] * math.exp(-alpha0 * L) - gratio_sq
            if resid > fstate[F_DAMP]:
                fstate[F_DAMP] = resid
            if ssq < fstate[F_MINSPIN]:
                fstate[F_MINSPIN] = ssq

        x = xt % period

        if do_exc:
            if wall != 0:
                if istate[I_EXC_OPEN] == 1 and istate[I_EXC_INTER] > 0:
                    istate[I_NCOMPLETE] += 1
                    istate[I_SUMSTEPS] += k - istate[I_EXC_START]
                    md = fstate[F_EXCDEPTH]
                    for j in range(n_eps):
                        if md > eps_grid[j]:
                            if istate[I_EXC_WALL] == 1:
                                exc_top[j] += 1
                            else:
                                exc_bot[j] += 1
                istate[I_EXC_OPEN] = 1
                istate[I_EXC_WALL] = wall
                istate[I_EXC_INTER] = 0
                istate[I_EXC_START] = k
                fstate[F_EXCDEPTH] = 0.0
                istate[I_NCONTACT] += 1
                if istate[I_FIRST] < 0:
                    istate[I_FIRST] = k
                istate[I_LAST] = k
            elif istate[I_EXC_OPEN] == 1:
                istate[I_EXC_INTER] += 1
                depth = half - abs(y)
                if depth > fstate[F_EXCDEPTH]:
                    fstate[F_EXCDEPTH] = depth

        if (do_rec or do_hist) and k > n_burn and (k - n_burn) % stride == 0:
            if do_rec:
                idx = (k - n_burn) // stride - 1
                if 0 <= idx < n_rec:
                    rec_x[idx] = x
                    rec_y[idx] = y
                    rec_l[idx] = L
                    rec_lt[idx] = fstate[F_LTOP]
                    rec_lb[idx] = fstate[F_LBOT]
                    for j in range(p):
                        rec_s[idx, j] = s[j]
            if do_hist:
                w = par[P_HWEIGHT]
                c1 = codes[C_HC1]
                c2 = codes[C_HC2]
                if c1 == 0:
                    v1 = x
                elif c1 == 1:
                    v1 = y
                else:
                    v1 = s[c1 - 2]
                if c2 == 0:
                    v2 = x
                elif c2 == 1:
                    v2 = y
                else:
                    v2 = s[c2 - 2]
                lo1 = par[P_HLO1]
                hi1 = par[P_HHI1]
                lo2 = par[P_HLO2]
                hi2 = par[P_HHI2]
                n1 = codes[C_HN1]
                n2 = codes[C_HN2]
                i1 = int((v1 - lo1) / (hi1 - lo1) * n1)
                if i1 == n1 and v1 <= hi1:
                    i1 -= 1
                i2 = int((v2 - lo2) / (hi2 - lo2) * n2)
                if i2 == n2 and v2 <= hi2:
                    i2 -= 1
                if 0 <= i1 < n1 and 0 <= i2 < n2 and v1 >= lo1 and v2 >= lo2:
                    hist[i1, i2] += w
                else:
                    overflow[0] += w

    fstate[F_X] = x
    fstate[F_Y] = y
    fstate[F_L] = L


if njit is not None:
    wristband_block = njit(cache=True, nogil=True)(_block)
else:  # pragma: no cover
    wristband_block = _block
