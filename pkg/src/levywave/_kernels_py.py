"""Pure-numpy batch path simulator; reference for the compiled kernel.

Paths advance in lockstep over their event index, so every numpy call acts on
all replicas at once.  The state is split as ``X = Y + C`` where ``C`` is the
deterministic response to the control (precomputed on its step edges) and
``Y`` is driven by the jumps through the free semigroup only.

Argument conventions (shared with ``_kernels.pyx``)
---------------------------------------------------
kind, param, inj
    Mode table (see ``operators.LinearModes``).
x0 : (P, 2N)
offsets, times, marks, signs
    Events of path ``p`` are ``offsets[p]:offsets[p+1]``, time-sorted.
sig : (mode, c0, floor, cap)
    ``mode`` 0 is constant ``c0``; 1 is ``log(2 + |u|_L2)``; both clipped to
    ``[floor, cap]``.
ctrl_mode
    0 no control, 1 additive control, 2 control realised by mark transformation.
ctrl, ctrl_dt, cgrid
    Piecewise-constant control values, step, and the controlled response
    from 0 at each step edge, shape ``(n_steps + 1, 2N)``.
w_tab, K_tab, prof
    Escort table and profile parameters
    ``(r1, beta1, nu, gamma2, beta2, buffer, C_cont, small_k_amplitude)``.
obs_times
    Increasing observation times.

Status codes: 0 ok, 1 non-finite state, 2 intensity beyond the escort
table, 3 non-positive density factor.
"""

import numpy as np

OK, NONFINITE, KAPPA_RANGE, BAD_DENSITY = 0, 1, 2, 3


def _coeffs(kind, param, dt):
    """Per-mode propagator entries for per-path steps ``dt`` of shape (P, 1)."""
    osc = kind == 0
    p = np.where(osc, param, 0.0)
    x = dt * np.sqrt(np.abs(p))
    C = np.where(p > 0, np.cos(x), np.where(p < 0, np.cosh(x), 1.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        S1 = np.where(p > 0, np.sin(x) / np.sqrt(np.abs(p)),
                      np.where(p < 0, np.sinh(x) / np.sqrt(np.abs(p)), dt))
    dec = np.exp(-param * dt)
    m11 = np.where(osc, C, dec)
    m12 = np.where(osc, S1, 0.0)
    m21 = np.where(osc, -param * S1, 0.0)
    m22 = np.where(osc, C, 0.0)
    return m11, m12, m21, m22


def _propagate(kind, param, Y, dt):
    N = len(kind)
    m11, m12, m21, m22 = _coeffs(kind, param, dt[:, None])
    a, b = Y[:, :N], Y[:, N:]
    return np.concatenate([m11 * a + m12 * b, m21 * a + m22 * b], axis=1)


def _forced(kind, param, inj, x, dt, v):
    """Exact update of ``x`` (P, 2N) over ``dt`` (P,) under constant inputs ``v`` (P,)."""
    N = len(kind)
    out = _propagate(kind, param, x, dt)
    osc = kind == 0
    p = np.where(osc, param, 0.0)
    d = dt[:, None]
    w = np.sqrt(np.abs(p))
    with np.errstate(divide="ignore", invalid="ignore"):
        S1 = np.where(p > 0, np.sin(w * d) / w, np.where(p < 0, np.sinh(w * d) / w, d))
        S2 = np.where(p > 0, 2 * np.sin(0.5 * w * d) ** 2 / p,
                      np.where(p < 0, 2 * np.sinh(0.5 * w * d) ** 2 / -p, 0.5 * d * d))
        g = np.where(param > 0, -np.expm1(-param * d) / param, d)
    Ba, Bb = inj[:N], inj[N:]
    fa = np.where(osc, Ba * S1 + Bb * S2, Ba * g)
    fb = np.where(osc, -param * S2 * Ba + Bb * S1, 0.0)
    out[:, :N] += fa * v[:, None]
    out[:, N:] += fb * v[:, None]
    return out


def _control_state(kind, param, inj, ctrl, ctrl_dt, cgrid, t):
    """Controlled response from 0 at times ``t`` (P,)."""
    n = len(ctrl)
    k = np.clip(np.floor(t / ctrl_dt).astype(np.int64), 0, n)
    tau = t - k * ctrl_dt
    v = np.where(k < n, ctrl[np.minimum(k, n - 1)], 0.0)
    return _forced(kind, param, inj, cgrid[k], tau, v)


def _ctrl_at(ctrl, ctrl_dt, t):
    """Left-continuous control value seen by an event at ``t``."""
    n = len(ctrl)
    k = np.ceil(t / ctrl_dt).astype(np.int64) - 1
    k = np.maximum(k, 0)
    return np.where(k < n, ctrl[np.minimum(k, n - 1)], 0.0)


def _sigma(sig, a):
    mode, c0, lo, hi = sig
    if mode == 0:
        s = np.full(a.shape[0], c0)
    else:
        s = np.log(2.0 + np.sqrt(np.sum(a * a, axis=1)))
    return np.clip(s, lo, hi)


def profile_hz(prof, K, z):
    """Vectorised ``(h, h_z)`` for per-element ``K`` and ``z``."""
    r1, beta1, nu, gamma2, beta2, buf, C_cont, small = prof
    K = np.asarray(K, float)
    z = np.asarray(z, float)
    big = K >= 1.0
    Ks = np.where(K > 0, K, 1.0)
    s = Ks**nu * r1
    lo = np.where(big, s, r1)
    hi = np.where(big, 2.0 * s, r1 * (1.0 + Ks**gamma2))
    A = np.where(big, K, C_cont * (K if small else 1.0))
    e = np.where(big, beta1, beta2)
    bl = np.minimum(buf, 0.5 * lo)
    br = np.maximum(buf, 2.0 * A * hi ** (-e))
    g = A * z ** (-e)
    gz = -e * A * z ** (-e - 1.0)
    tl = np.clip((z - lo + bl) / bl, 0.0, 1.0)
    tr = np.clip((hi + br - z) / br, 0.0, 1.0)
    left = (z > lo - bl) & (z < lo)
    right = (z > hi) & (z < hi + br)
    mid = (z >= lo) & (z <= hi)
    h = np.where(mid, g, 0.0)
    hz = np.where(mid, gz, 0.0)
    Sl, Sr = tl * tl * (3 - 2 * tl), tr * tr * (3 - 2 * tr)
    gl, gr = A * lo ** (-e), A * hi ** (-e)
    h = np.where(left, Sl * gl, np.where(right, Sr * gr, h))
    hz = np.where(left, 6 * tl * (1 - tl) / bl * gl,
                  np.where(right, -6 * tr * (1 - tr) / br * gr, hz))
    pos = K > 0
    return np.where(pos, h, 0.0), np.where(pos, hz, 0.0)


def simulate_batch(kind, param, inj, x0, offsets, times, marks, signs,
                   delta0, alpha, sig, ctrl_mode, ctrl, ctrl_dt, cgrid,
                   w_tab, K_tab, prof, obs_times):
    kind = np.asarray(kind)
    P = x0.shape[0]
    D = x0.shape[1]
    n_obs = len(obs_times)
    counts = np.diff(offsets)
    states = np.empty((P, n_obs, D))
    G = np.ones(P)
    G_obs = np.empty((P, n_obs))
    status = np.zeros(P, dtype=np.int8)
    Y = np.array(x0, dtype=float, copy=True)
    cur = np.zeros(P)
    nxt = np.zeros(P, dtype=np.int64)  # next unprocessed event index per path
    inv_a = 1.0 / alpha
    w_max = w_tab[-1] if len(w_tab) else 0.0
    rows = np.arange(P)
    for j, t_obs in enumerate(obs_times):
        while True:
            rem = nxt < counts
            idx = offsets[:-1] + nxt
            te = np.full(P, np.inf)
            te[rem] = times[idx[rem]]
            act = te <= t_obs
            if not np.any(act):
                break
            p = rows[act]
            e = idx[act]
            t = te[act]
            Yp = _propagate(kind, param, Y[p], t - cur[p])
            if ctrl_mode == 1 and sig[0] != 0:
                Xa = Yp + _control_state(kind, param, inj, ctrl, ctrl_dt, cgrid, t)
            else:
                Xa = Yp
            s = _sigma(sig, Xa[:, : len(kind)])
            z = marks[e]
            sg = signs[e].astype(float)
            if ctrl_mode == 2:
                vt = -_ctrl_at(ctrl, ctrl_dt, t) / s
                moved = (vt != 0) & (np.sign(vt) == sg)
                over = moved & (np.abs(vt) > w_max)
                status[p[over]] = np.maximum(status[p[over]], KAPPA_RANGE)
                K = np.where(moved & ~over, np.interp(np.abs(vt), w_tab, K_tab), 0.0)
                h, hz = profile_hz(prof, K, z)
                f = 1.0 + hz
                bad = f <= 0
                status[p[bad]] = np.maximum(status[p[bad]], BAD_DENSITY)
                G[p] *= f
                z = z + h
            jump = sg * delta0 * z ** (-inv_a) * s
            Y[p] = Yp + jump[:, None] * inj[None, :]
            cur[p] = t
            nxt[p] += 1
        Y = _propagate(kind, param, Y, t_obs - cur)
        cur[:] = t_obs
        X = Y
        if ctrl_mode == 1:
            X = Y + _control_state(kind, param, inj, ctrl, ctrl_dt, cgrid, np.full(P, t_obs))
        states[:, j, :] = X
        G_obs[:, j] = G
    bad = ~np.all(np.isfinite(states.reshape(P, -1)), axis=1)
    status[bad] = np.maximum(status[bad], NONFINITE)
    return states, G_obs, status
