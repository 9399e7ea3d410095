# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the hot loops in ``_pykernels``.

Same signatures and error semantics as the pure-Python module.
"""
import numpy as np

cimport cython
from libc.math cimport exp, fabs, isfinite, pow, tanh
from libc.stdlib cimport free, malloc

from .errors import DomainError, IntegrationError, SingularityError

DEF EPS_DENOM = 1e-12

cdef int ACT_IDENTITY = 0
cdef int ACT_TANH = 1
cdef int ACT_RELU = 2
cdef int ACT_SIGMOID = 3


cdef inline double _check(double d, str what) except? -1.2345e300:
    if not fabs(d) >= EPS_DENOM:
        raise SingularityError(f"vanishing denominator in {what}: {d!r}")
    return d


cdef int _bath(const double* x, const double* u, const double* p,
               double* g) except -1:
    cdef double bath_mass, cx2, cx3, den1, t_abs, u1, u2, dc, den3, den5
    bath_mass = _check(x[1] + x[2] + x[3], "total bath mass x2+x3+x4")
    cx2 = x[1] / bath_mass
    cx3 = x[2] / bath_mass
    if cx3 < 0.0:
        raise DomainError(f"negative AlF3 ratio c_x3={cx3!r}")
    den1 = _check(-23.0 * cx2 * cx3 - 17.0 * cx3 * cx3 + 9.36 * cx3 + 1.0,
                  "liquidus temperature")
    g[0] = (991.2 + 112.0 * cx3 + 61.0 * pow(cx3, 1.5)
            - 3265.5 * pow(cx3, 2.2) - 793.0 * cx2 / den1)
    t_abs = 273.0 + x[5]
    if not t_abs > 0.0:
        raise DomainError(f"bath temperature below absolute zero: {x[5]!r}")
    g[1] = exp(2.496 - 2068.4 / t_abs - 2.07 * cx2)
    u1 = u[0]
    dc = cx2 - p[21]
    den3 = _check(735.3 * dc + 1.0, "bubble coverage")
    g[2] = (0.531 + 3.06e-18 * u1 * u1 * u1 - 2.51e-12 * u1 * u1
            + 6.96e-7 * u1 - (14.37 * dc - 0.431) / den3)
    u2 = u[1]
    g[3] = (0.5517 + 3.8168e-6 * u2) / (1.0 + 8.271e-6 * u2)
    den5 = _check(g[1] * (1.0 - g[2]), "bubble voltage (g3 == 1)")
    g[4] = 3.8168e-6 * g[2] * g[3] * u2 / den5
    g[5] = cx2
    g[6] = cx3
    return 0


cdef int _rhs(const double* x, const double* u, const double* k,
              double* out) except -1:
    cdef double g[7]
    cdef double ledge, bath_mass, superheat, dt_ledge, freeze
    cdef double r_bath, r_wall, r_kl, r_out, cond, x1d, wall_flux
    cdef int i
    _bath(x, u, k, g)
    ledge = _check(k[0] * x[0], "ledge thickness k0*x1")
    bath_mass = x[1] + x[2] + x[3]
    superheat = x[5] - g[0]
    dt_ledge = g[0] - x[6]
    freeze = k[1] * dt_ledge / ledge - k[2] * superheat
    r_bath = _check(k[10] + k[11] * ledge, "k10 + k11*k0*x1")
    r_wall = _check(k[14] + k[15] * ledge, "k14 + k15*k0*x1")
    r_kl = _check(k[15] * ledge, "k15*k0*x1")
    r_out = _check(k[14] + k[18], "k14 + k18")
    cond = _check(2620.0 * g[1], "2620*g2")
    x1d = _check(x[0], "side-ledge mass x1")
    wall_flux = (x[6] - x[7]) / r_wall
    out[0] = freeze
    out[1] = u[0] - k[3] * u[1]
    out[2] = u[2] - k[4] * u[0]
    out[3] = -freeze + k[5] * u[0]
    out[4] = k[6] * u[1] - u[3]
    out[5] = k[19] / bath_mass * (
        u[1] * g[4] + u[1] * u[1] * u[4] / cond - k[7] * superheat * superheat
        + k[8] * superheat * dt_ledge / ledge
        - k[9] * (x[5] - x[6]) / r_bath)
    out[6] = k[20] / x1d * (
        k[9] * dt_ledge / r_kl - k[12] * superheat * dt_ledge
        + k[13] * dt_ledge * dt_ledge / ledge - wall_flux)
    out[7] = k[17] * k[9] * (wall_flux - (x[7] - k[16]) / r_out)
    for i in range(8):
        if not isfinite(out[i]):
            raise IntegrationError(f"nonfinite derivative in component {i}",
                                   component=i)
    return 0


cdef int _rk4(double* x, const double* u, double h, const double* p) except -1:
    cdef double k1[8]
    cdef double k2[8]
    cdef double k3[8]
    cdef double k4[8]
    cdef double tmp[8]
    cdef int i
    _rhs(x, u, p, k1)
    for i in range(8):
        tmp[i] = x[i] + 0.5 * h * k1[i]
    _rhs(tmp, u, p, k2)
    for i in range(8):
        tmp[i] = x[i] + 0.5 * h * k2[i]
    _rhs(tmp, u, p, k3)
    for i in range(8):
        tmp[i] = x[i] + h * k3[i]
    _rhs(tmp, u, p, k4)
    for i in range(8):
        x[i] = x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
    for i in range(8):
        if not isfinite(x[i]):
            raise IntegrationError(f"nonfinite state in component {i}",
                                   component=i)
    return 0


def _as_c(a, shape=None):
    arr = np.ascontiguousarray(a, dtype=np.float64)
    if shape is not None and arr.shape != shape:
        raise ValueError(f"expected shape {shape}, got {arr.shape}")
    return arr


def bath(x, u, p):
    cdef double[::1] xv = _as_c(x, (8,))
    cdef double[::1] uv = _as_c(u, (5,))
    cdef double[::1] pv = _as_c(p, (22,))
    cdef double g[7]
    _bath(&xv[0], &uv[0], &pv[0], g)
    return g[0], g[1], g[2], g[3], g[4], g[5], g[6]


def rhs(x, u, p):
    cdef double[::1] xv = _as_c(x, (8,))
    cdef double[::1] uv = _as_c(u, (5,))
    cdef double[::1] pv = _as_c(p, (22,))
    cdef double out[8]
    _rhs(&xv[0], &uv[0], &pv[0], out)
    return [out[i] for i in range(8)]


def rk4_step(x, u, double h, p):
    cdef double[::1] xv = _as_c(x, (8,)).copy()
    cdef double[::1] uv = _as_c(u, (5,))
    cdef double[::1] pv = _as_c(p, (22,))
    _rk4(&xv[0], &uv[0], h, &pv[0])
    return [xv[i] for i in range(8)]


cdef int _control(const double* x, const double* nominal, const double* gains,
                  const double* setpoints, const double* lo, const double* hi,
                  double* u) except -1:
    cdef double tracked[8]
    cdef double bath_mass, acc
    cdef int c, j
    bath_mass = _check(x[1] + x[2] + x[3], "total bath mass x2+x3+x4")
    for j in range(8):
        tracked[j] = x[j]
    tracked[1] = x[1] / bath_mass
    tracked[2] = x[2] / bath_mass
    for c in range(5):
        acc = nominal[c]
        for j in range(8):
            acc += gains[c * 8 + j] * (setpoints[j] - tracked[j])
        u[c] = min(max(acc, lo[c]), hi[c])
    return 0


cdef void _perturb(double* u, const double* r, const double* lo,
                   const double* hi) noexcept:
    cdef int c
    cdef double v
    for c in range(5):
        v = min(max(u[c] + r[c], lo[c]), hi[c])
        if (c == 0 or c == 2 or c == 3) and v < 0.0:
            v = 0.0
        u[c] = v


def control_law(x, nominal, gains, setpoints, lo, hi, p):
    cdef double[::1] xv = _as_c(x, (8,))
    cdef double[::1] nv = _as_c(nominal, (5,))
    cdef double[:, ::1] gv = _as_c(gains, (5, 8))
    cdef double[::1] sv = _as_c(setpoints, (8,))
    cdef double[::1] lv = _as_c(lo, (5,))
    cdef double[::1] hv = _as_c(hi, (5,))
    cdef double u[5]
    _control(&xv[0], &nv[0], &gv[0, 0], &sv[0], &lv[0], &hv[0], u)
    return [u[i] for i in range(5)]


def perturb_input(u, r, lo, hi):
    cdef double[::1] uv = _as_c(u, (5,)).copy()
    cdef double[::1] rv = _as_c(r, (5,))
    cdef double[::1] lv = _as_c(lo, (5,))
    cdef double[::1] hv = _as_c(hi, (5,))
    _perturb(&uv[0], &rv[0], &lv[0], &hv[0])
    return [uv[i] for i in range(5)]


def simulate_closed_loop(x0, perturb, nominal, gains, setpoints, lo, hi,
                         double h, p):
    cdef double[:, ::1] rv = _as_c(perturb)
    cdef Py_ssize_t steps = rv.shape[0]
    cdef double[::1] nv = _as_c(nominal, (5,))
    cdef double[:, ::1] gv = _as_c(gains, (5, 8))
    cdef double[::1] sv = _as_c(setpoints, (8,))
    cdef double[::1] lv = _as_c(lo, (5,))
    cdef double[::1] hv = _as_c(hi, (5,))
    cdef double[::1] pv = _as_c(p, (22,))
    states_arr = np.empty((steps + 1, 8))
    inputs_arr = np.empty((steps, 5))
    cdef double[:, ::1] st = states_arr
    cdef double[:, ::1] inp = inputs_arr
    cdef double x[8]
    cdef double u[5]
    cdef Py_ssize_t k
    cdef int i
    x0v = _as_c(x0, (8,))
    for i in range(8):
        x[i] = x0v[i]
        st[0, i] = x[i]
    for k in range(steps):
        try:
            _control(x, &nv[0], &gv[0, 0], &sv[0], &lv[0], &hv[0], u)
            _perturb(u, &rv[k, 0], &lv[0], &hv[0])
            for i in range(5):
                inp[k, i] = u[i]
            _rk4(x, u, h, &pv[0])
        except (IntegrationError, DomainError) as exc:
            component = getattr(exc, "component", None)
            raise IntegrationError(f"step {k}: {exc}", component=component,
                                   step=k,
                                   partial=states_arr[:k + 1].copy()) from exc
        for i in range(8):
            st[k + 1, i] = x[i]
    return states_arr, inputs_arr


def simulate_open_loop(x0, inputs, double h, p):
    cdef double[:, ::1] uv = _as_c(inputs)
    cdef Py_ssize_t steps = uv.shape[0]
    cdef double[::1] pv = _as_c(p, (22,))
    states_arr = np.empty((steps + 1, 8))
    cdef double[:, ::1] st = states_arr
    cdef double x[8]
    cdef Py_ssize_t k
    cdef int i
    x0v = _as_c(x0, (8,))
    for i in range(8):
        x[i] = x0v[i]
        st[0, i] = x[i]
    for k in range(steps):
        try:
            _rk4(x, &uv[k, 0], h, &pv[0])
        except (IntegrationError, DomainError) as exc:
            component = getattr(exc, "component", None)
            raise IntegrationError(f"step {k}: {exc}", component=component,
                                   step=k,
                                   partial=states_arr[:k + 1].copy()) from exc
        for i in range(8):
            st[k + 1, i] = x[i]
    return states_arr


cdef inline double _act(double a, int code) noexcept:
    if code == ACT_TANH:
        return tanh(a)
    if code == ACT_RELU:
        return a if a > 0.0 else 0.0
    if code == ACT_SIGMOID:
        return 1.0 / (1.0 + exp(-a))
    return a


def rollout_mlp(weights, biases, bint skip, int act, x0, inputs,
                Py_ssize_t n, double h, z_mean, z_std, y_mean, y_std):
    cdef Py_ssize_t n_layers = len(weights)
    cdef Py_ssize_t i, j, c, k, width, max_width = 0, n_in
    cdef double[:, ::1] uv = _as_c(inputs)
    cdef double[::1] zm = _as_c(z_mean, (13,))
    cdef double[::1] zs = _as_c(z_std, (13,))
    cdef double[::1] ym = _as_c(y_mean, (8,))
    cdef double[::1] ys = _as_c(y_std, (8,))
    ws = [_as_c(w) for w in weights]
    bs = [_as_c(b) for b in biases]
    cdef double** wp = <double**> malloc(n_layers * sizeof(double*))
    cdef double** bp = <double**> malloc(n_layers * sizeof(double*))
    cdef Py_ssize_t* rows = <Py_ssize_t*> malloc(n_layers * sizeof(Py_ssize_t))
    cdef Py_ssize_t* cols = <Py_ssize_t*> malloc(n_layers * sizeof(Py_ssize_t))
    cdef double[:, ::1] wv
    cdef double[::1] bv
    for i in range(n_layers):
        wv = ws[i]
        bv = bs[i]
        wp[i] = &wv[0, 0]
        bp[i] = &bv[0]
        rows[i] = wv.shape[0]
        cols[i] = wv.shape[1]
        if rows[i] + 13 > max_width:
            max_width = rows[i] + 13
        if cols[i] > max_width:
            max_width = cols[i]
    n_in = 13
    for i in range(n_layers):
        if skip and i > 0:
            n_in += 13
        if cols[i] != n_in or bs[i].shape[0] != rows[i]:
            free(wp)
            free(bp)
            free(rows)
            free(cols)
            raise ValueError(f"layer {i} shape mismatch")
        n_in = rows[i]
    if n_in != 8:
        free(wp)
        free(bp)
        free(rows)
        free(cols)
        raise ValueError("output layer must have 8 rows")
    cdef double* a_in = <double*> malloc(max_width * sizeof(double))
    cdef double* a_out = <double*> malloc(max_width * sizeof(double))
    cdef double* swap
    cdef double z0[13]
    cdef double x[8]
    cdef double acc
    cdef bint finite
    cdef Py_ssize_t diverged = -1
    states_arr = np.empty((n + 1, 8))
    cdef double[:, ::1] st = states_arr
    x0v = _as_c(x0, (8,))
    try:
        for i in range(8):
            x[i] = x0v[i]
            st[0, i] = x[i]
        for k in range(n):
            for i in range(8):
                z0[i] = (x[i] - zm[i]) / zs[i]
            for i in range(5):
                z0[8 + i] = (uv[k, i] - zm[8 + i]) / zs[8 + i]
            for i in range(13):
                a_in[i] = z0[i]
            n_in = 13
            for i in range(n_layers):
                if skip and i > 0:
                    for j in range(13):
                        a_in[n_in + j] = z0[j]
                    n_in += 13
                width = rows[i]
                for c in range(width):
                    acc = bp[i][c]
                    for j in range(cols[i]):
                        acc += wp[i][c * cols[i] + j] * a_in[j]
                    a_out[c] = _act(acc, act) if i < n_layers - 1 else acc
                swap = a_in
                a_in = a_out
                a_out = swap
                n_in = width
            finite = True
            for i in range(8):
                x[i] = x[i] + h * (ym[i] + ys[i] * a_in[i])
                if not isfinite(x[i]):
                    finite = False
            if not finite:
                diverged = k + 1
                break
            for i in range(8):
                st[k + 1, i] = x[i]
    finally:
        free(wp)
        free(bp)
        free(rows)
        free(cols)
        free(a_in)
        free(a_out)
    if diverged >= 0:
        return states_arr[:diverged].copy(), diverged
    return states_arr, -1
