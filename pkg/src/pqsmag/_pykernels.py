"""NumPy implementation of the inner loops (fallback when the extension is absent).

Every function mirrors the compiled version in ``_ckernels.pyx`` argument for
argument, including in-place updates of state arrays and the returned status
tuples. Loops over time stay in Python; work across blocks is vectorized.
"""
from __future__ import annotations

import math

import numpy as np

OK, UNDERFLOW, NONFINITE, DESYNC = 0, 1, 2, 3
_INV_SQRT2 = 1 / math.sqrt(2)
_INV_SQRT2PI = 1 / math.sqrt(2 * math.pi)


def _poly(s, y):
    # s: (M, 3, 4, 4), y: (M,) -> (M, 4, 4)
    return s[:, 0] + y[:, None, None] * s[:, 1] + (y * y)[:, None, None] * s[:, 2]


def sample_chain(n0, up, down, dt, u, out):
    n = int(n0)
    pu = np.asarray(up) * dt
    pd = np.asarray(down) * dt
    for t in range(u.shape[0]):
        out[t] = n
        if u[t] < pu[n]:
            n += 1
        elif u[t] < pu[n] + pd[n]:
            n -= 1
    return n


def predictive_z(c0, b, c, z0):
    """Quantile transform of a standard normal ``z0`` to the density
    ``phi(z) (c0 + b z + c z^2) / (c0 + c)``.

    Newton iteration on the CDF, or on the survival function for ``z0 > 0``
    so that the upper tail keeps its precision.
    """
    tot = c0 + c
    z = z0 + b / tot
    upper = z0 > 0.0
    target = 0.5 * math.erfc((z0 if upper else -z0) * _INV_SQRT2)
    for _ in range(60):
        pdf = _INV_SQRT2PI * math.exp(-0.5 * z * z)
        dens = pdf * (c0 + b * z + c * z * z) / tot
        if upper:
            g = (tot * 0.5 * math.erfc(z * _INV_SQRT2) + (b + c * z) * pdf) / tot - target
            step = g / dens
        else:
            g = (tot * 0.5 * math.erfc(-z * _INV_SQRT2) - (b + c * z) * pdf) / tot - target
            step = -g / dens
        z += step
        if abs(step) < 1e-14 * (1.0 + abs(z)):
            break
    return z


def simulate_truth(states, s, a, dt, dw, v0, dy_out, stride, v_ckpt):
    v = np.array(v0, dtype=float)
    steps = states.shape[0]
    rdt = math.sqrt(dt)
    for t in range(steps):
        if t % stride == 0:
            v_ckpt[t // stride] = v
        n = states[t]
        c0, c1, c2 = (s[n, :, 0] + s[n, :, 1]) @ v
        y = rdt * predictive_z(c0, c1 * rdt, c2 * dt, dw[t] / rdt)
        dy_out[t] = y + 2.0 * a[n] * dt
        nv = (s[n, 0] + y * s[n, 1] + y * y * s[n, 2]) @ v
        tr = nv[0] + nv[1]
        if not (tr > 0.0 and math.isfinite(tr)):
            v0[:] = v
            return NONFINITE, t
        v = nv / tr
    if steps % stride == 0:
        v_ckpt[steps // stride] = v
    v0[:] = v
    return OK, -1


def _mix_forward(tmp, up, down, dt):
    out = tmp * (1.0 - (up + down) * dt)[:, None]
    out[1:] += (up[:-1] * dt)[:, None] * tmp[:-1]
    out[:-1] += (down[1:] * dt)[:, None] * tmp[1:]
    return out


def _mix_backward(e, up, down, dt):
    out = e * (1.0 - (up + down) * dt)[:, None]
    out[:-1] += (up[:-1] * dt)[:, None] * e[1:]
    out[1:] += (down[1:] * dt)[:, None] * e[:-1]
    return out


def forward_pass(dy, s, a, up, down, dt, v, stride, prob_out, e_ckpt, pqs_out, rho_ckpt, lognorm_out):
    steps = dy.shape[0]
    do_pqs = e_ckpt.shape[0] > 0
    do_rho = rho_ckpt.shape[0] > 0
    up = np.asarray(up)
    down = np.asarray(down)
    a = np.asarray(a)
    weights = np.array([1.0, 1.0, 2.0, 2.0])
    lognorm = 0.0
    cur = np.array(v, dtype=float)
    for t in range(steps + 1):
        if t % stride == 0:
            k = t // stride
            lognorm_out[k] = lognorm
            tr = cur[:, 0] + cur[:, 1]
            prob_out[k] = tr / tr.sum()
            if do_rho:
                rho_ckpt[k] = cur
            if do_pqs:
                x = np.maximum((cur * e_ckpt[k] * weights).sum(axis=1), 0.0)
                tot = x.sum()
                if not (tot > 0.0 and math.isfinite(tot)):
                    v[:] = cur
                    return DESYNC, t, lognorm
                pqs_out[k] = x / tot
        if t == steps:
            break
        y = dy[t] - 2.0 * a * dt
        w = np.exp(2.0 * a * dy[t] - 2.0 * a * a * dt)
        tmp = w[:, None] * np.einsum("nij,nj->ni", _poly(s, y), cur)
        nxt = _mix_forward(tmp, up, down, dt)
        tot = float(nxt[:, 0].sum() + nxt[:, 1].sum())
        if not (tot > 0.0 and math.isfinite(tot)):
            v[:] = cur
            return UNDERFLOW, t, lognorm
        cur = nxt / tot
        lognorm += math.log(tot)
    v[:] = cur
    return OK, -1, lognorm


def backward_pass(dy, s_adj, a, up, down, dt, e, stride, e_ckpt):
    steps = dy.shape[0]
    up = np.asarray(up)
    down = np.asarray(down)
    a = np.asarray(a)
    lognorm = 0.0
    cur = np.array(e, dtype=float)
    if steps % stride == 0:
        e_ckpt[steps // stride] = cur
    for t in range(steps - 1, -1, -1):
        tmp = _mix_backward(cur, up, down, dt)
        y = dy[t] - 2.0 * a * dt
        w = np.exp(2.0 * a * dy[t] - 2.0 * a * a * dt)
        nxt = w[:, None] * np.einsum("nij,nj->ni", _poly(s_adj, y), tmp)
        tot = float(nxt[:, 0].sum() + nxt[:, 1].sum())
        if not (tot > 0.0 and math.isfinite(tot)):
            e[:] = cur
            return UNDERFLOW, t, lognorm
        cur = nxt / tot
        lognorm += math.log(tot)
        if t % stride == 0:
            e_ckpt[t // stride] = cur
    e[:] = cur
    return OK, -1, lognorm
