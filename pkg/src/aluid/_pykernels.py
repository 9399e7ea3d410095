"""Pure-Python reference kernels.

These mirror ``_ckernels.pyx`` operation for operation and are used when the
compiled extension is unavailable or ``ALUID_PURE_PYTHON=1`` is set.

Parameter vector layout: ``p[0:19] = k0..k18``, ``p[19] = alpha``,
``p[20] = beta``, ``p[21] = c_x2_crit``.
"""
import math

import numpy as np

from .errors import DomainError, IntegrationError, SingularityError

EPS_DENOM = 1e-12

ACT_IDENTITY, ACT_TANH, ACT_RELU, ACT_SIGMOID = 0, 1, 2, 3


def _check(d, what):
    if not abs(d) >= EPS_DENOM:  # also catches NaN
        raise SingularityError(f"vanishing denominator in {what}: {d!r}")
    return d


def bath(x, u, p):
    """Return ``(g1, g2, g3, g4, g5, c_x2, c_x3)`` for one state/input."""
    bath_mass = _check(x[1] + x[2] + x[3], "total bath mass x2+x3+x4")
    cx2 = x[1] / bath_mass
    cx3 = x[2] / bath_mass
    if cx3 < 0.0:
        raise DomainError(f"negative AlF3 ratio c_x3={cx3!r}")
    den1 = _check(-23.0 * cx2 * cx3 - 17.0 * cx3 * cx3 + 9.36 * cx3 + 1.0,
                  "liquidus temperature")
    g1 = (991.2 + 112.0 * cx3 + 61.0 * cx3 ** 1.5 - 3265.5 * cx3 ** 2.2
          - 793.0 * cx2 / den1)
    t_abs = 273.0 + x[5]
    if not t_abs > 0.0:
        raise DomainError(f"bath temperature below absolute zero: {x[5]!r}")
    g2 = math.exp(2.496 - 2068.4 / t_abs - 2.07 * cx2)
    u1 = u[0]
    dc = cx2 - p[21]
    den3 = _check(735.3 * dc + 1.0, "bubble coverage")
    g3 = (0.531 + 3.06e-18 * u1 * u1 * u1 - 2.51e-12 * u1 * u1 + 6.96e-7 * u1
          - (14.37 * dc - 0.431) / den3)
    u2 = u[1]
    g4 = (0.5517 + 3.8168e-6 * u2) / (1.0 + 8.271e-6 * u2)
    den5 = _check(g2 * (1.0 - g3), "bubble voltage (g3 == 1)")
    g5 = 3.8168e-6 * g3 * g4 * u2 / den5
    return g1, g2, g3, g4, g5, cx2, cx3


def rhs(x, u, p):
    """Right-hand side of the cell ODE as a list of 8 floats."""
    # plain floats: faster than numpy scalars and overflow quietly to inf
    x = [float(v) for v in x]
    u = [float(v) for v in u]
    p = p.tolist() if hasattr(p, "tolist") else p
    g1, g2, _, _, g5, _, _ = bath(x, u, p)
    k = p
    x1, x2, x3, x4, x5, x6, x7, x8 = x
    u1, u2, u3, u4, u5 = u
    ledge = _check(k[0] * x1, "ledge thickness k0*x1")
    bath_mass = x2 + x3 + x4
    superheat = x6 - g1
    dt_ledge = g1 - x7
    freeze = k[1] * dt_ledge / ledge - k[2] * superheat
    r_bath = _check(k[10] + k[11] * ledge, "k10 + k11*k0*x1")
    r_wall = _check(k[14] + k[15] * ledge, "k14 + k15*k0*x1")
    r_kl = _check(k[15] * ledge, "k15*k0*x1")
    r_out = _check(k[14] + k[18], "k14 + k18")
    cond = _check(2620.0 * g2, "2620*g2")
    x1d = _check(x1, "side-ledge mass x1")
    wall_flux = (x7 - x8) / r_wall
    out = [
        freeze,
        u1 - k[3] * u2,
        u3 - k[4] * u1,
        -freeze + k[5] * u1,
        k[6] * u2 - u4,
        p[19] / bath_mass * (
            u2 * g5 + u2 * u2 * u5 / cond - k[7] * superheat * superheat
            + k[8] * superheat * dt_ledge / ledge
            - k[9] * (x6 - x7) / r_bath),
        p[20] / x1d * (
            k[9] * dt_ledge / r_kl - k[12] * superheat * dt_ledge
            + k[13] * dt_ledge * dt_ledge / ledge - wall_flux),
        k[17] * k[9] * (wall_flux - (x8 - k[16]) / r_out),
    ]
    for i, v in enumerate(out):
        if not math.isfinite(v):
            raise IntegrationError(f"nonfinite derivative in component {i}",
                                   component=i)
    return out


def rk4_step(x, u, h, p):
    k1 = rhs(x, u, p)
    k2 = rhs([xi + 0.5 * h * di for xi, di in zip(x, k1)], u, p)
    k3 = rhs([xi + 0.5 * h * di for xi, di in zip(x, k2)], u, p)
    k4 = rhs([xi + h * di for xi, di in zip(x, k3)], u, p)
    out = [xi + h / 6.0 * (a + 2.0 * b + 2.0 * c + d)
           for xi, a, b, c, d in zip(x, k1, k2, k3, k4)]
    for i, v in enumerate(out):
        if not math.isfinite(v):
            raise IntegrationError(f"nonfinite state in component {i}",
                                   component=i)
    return out


def control_law(x, nominal, gains, setpoints, lo, hi, p):
    """Clamped proportional law on the tracked vector
    ``[x1, c_x2, c_x3, x4, x5, x6, x7, x8]``."""
    bath_mass = _check(x[1] + x[2] + x[3], "total bath mass x2+x3+x4")
    tracked = (x[0], x[1] / bath_mass, x[2] / bath_mass, x[3], x[4], x[5],
               x[6], x[7])
    u = []
    for c in range(5):
        acc = nominal[c]
        row = gains[c]
        for j in range(8):
            acc += row[j] * (setpoints[j] - tracked[j])
        u.append(min(max(acc, lo[c]), hi[c]))
    return u


def perturb_input(u, r, lo, hi):
    out = []
    for c in range(5):
        v = min(max(u[c] + r[c], lo[c]), hi[c])
        if c in (0, 2, 3) and v < 0.0:
            v = 0.0
        out.append(v)
    return out


def simulate_closed_loop(x0, perturb, nominal, gains, setpoints, lo, hi,
                         h, p):
    """RK4 rollout under the perturbed proportional controller.

    Returns ``(states, inputs)`` with shapes ``(steps+1, 8)`` and
    ``(steps, 5)``.
    """
    steps = perturb.shape[0]
    states = np.empty((steps + 1, 8))
    inputs = np.empty((steps, 5))
    p = [float(v) for v in p]
    nominal = [float(v) for v in nominal]
    gains = [[float(v) for v in row] for row in gains]
    setpoints = [float(v) for v in setpoints]
    lo = [float(v) for v in lo]
    hi = [float(v) for v in hi]
    x = [float(v) for v in x0]
    states[0] = x
    for k in range(steps):
        try:
            u = control_law(x, nominal, gains, setpoints, lo, hi, p)
            u = perturb_input(u, perturb[k].tolist(), lo, hi)
            inputs[k] = u
            x = rk4_step(x, u, h, p)
        except (IntegrationError, DomainError) as exc:
            component = getattr(exc, "component", None)
            raise IntegrationError(f"step {k}: {exc}", component=component,
                                   step=k, partial=states[:k + 1].copy()
                                   ) from exc
        states[k + 1] = x
    return states, inputs


def simulate_open_loop(x0, inputs, h, p):
    steps = inputs.shape[0]
    states = np.empty((steps + 1, 8))
    p = [float(v) for v in p]
    x = [float(v) for v in x0]
    states[0] = x
    for k in range(steps):
        try:
            x = rk4_step(x, inputs[k].tolist(), h, p)
        except (IntegrationError, DomainError) as exc:
            component = getattr(exc, "component", None)
            raise IntegrationError(f"step {k}: {exc}", component=component,
                                   step=k, partial=states[:k + 1].copy()
                                   ) from exc
        states[k + 1] = x
    return states


def _activate(a, code):
    if code == ACT_TANH:
        return np.tanh(a)
    if code == ACT_RELU:
        return np.maximum(a, 0.0)
    if code == ACT_SIGMOID:
        return 1.0 / (1.0 + np.exp(-a))
    return a


def rollout_mlp(weights, biases, skip, act, x0, inputs, n, h,
                z_mean, z_std, y_mean, y_std):
    """Forward-Euler rolling forecast of a standardized MLP.

    Returns ``(states, divergence_step)``; ``states`` holds the finite rows
    only and ``divergence_step`` is -1 when the rollout stayed finite.
    """
    states = np.empty((n + 1, 8))
    states[0] = x0
    x = np.array(x0, dtype=float)
    n_layers = len(weights)
    with np.errstate(all="ignore"):
        for k in range(n):
            z0 = (np.concatenate((x, inputs[k])) - z_mean) / z_std
            a = z0
            for i in range(n_layers):
                if skip and i > 0:
                    a = np.concatenate((a, z0))
                a = weights[i] @ a + biases[i]
                if i < n_layers - 1:
                    a = _activate(a, act)
            x = x + h * (y_mean + y_std * a)
            if not np.all(np.isfinite(x)):
                return states[:k + 1].copy(), k + 1
            states[k + 1] = x
    return states, -1
