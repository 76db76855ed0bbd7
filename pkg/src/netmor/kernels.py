"""Cellwise quadrature kernels for the nonlinear integrals.

Every cell carries a constant density and a linear mass flux given by its
endpoint values ``mL``/``mR``. Integrals are evaluated with 3-point
Gauss-Legendre on the reference interval, which is exact for the polynomial
integrands (flux up to degree 3 per cell).

Column layout of ``vals`` (and first axis of ``jac[:, k, :]``):

=====  ==========================================================
0, 1   ``wt dx sum_g w_g (m/rho) phi_{L,R}``           (alpha term)
2      ``sum_g w_g (P'(rho) + m^2 / (2 rho^2))``       (cell mean, beta)
3, 4   ``-wt dx sum_g w_g r(rho, m) m phi_{L,R}``      (gamma term)
=====  ==========================================================

``jac[:, k, :]`` holds the derivatives with respect to ``(rho, mL, mR)``.
The numba loop and the numpy vectorization compute identical quantities;
:data:`netmor._accel.USE_NUMBA` picks one.
"""
import numpy as np

from ._accel import USE_NUMBA, njit

GAUSS_S = np.array([0.5 - 0.5 * np.sqrt(0.6), 0.5, 0.5 + 0.5 * np.sqrt(0.6)])
GAUSS_W = np.array([5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0])


@njit
def _potential_terms(rho, RT, alpha, rho_ref):
    b = RT * alpha * rho
    lg = np.log(rho / ((1.0 - b) * rho_ref))
    P = RT * rho * lg
    dP = RT * (lg + 1.0 / (1.0 - b))
    ra = RT * alpha
    d2P = RT * (1.0 / rho + ra / (1.0 - b) + ra / (1.0 - b) ** 2)
    return P, dP, d2P


@njit
def _first_bad(rho, rho_max):
    for i in range(rho.shape[0]):
        if not (rho[i] > 0.0 and rho[i] < rho_max):
            return i
    return -1


@njit
def _cell_terms_loop(rho, mL, mR, dx, wt, fc, laminar, RT, alpha, rho_ref, rho_max, gs, gw):
    n = rho.shape[0]
    vals = np.zeros((n, 5))
    jac = np.zeros((n, 5, 3))
    bad = _first_bad(rho, rho_max)
    if bad >= 0:
        return bad, vals, jac
    for i in range(n):
        r = rho[i]
        ir = 1.0 / r
        _, dPv, d2Pv = _potential_terms(r, RT, alpha, rho_ref)
        scale = wt[i] * dx[i]
        c = fc[i]
        g = dPv
        g_r = d2Pv
        for q in range(3):
            s = gs[q]
            w = gw[q]
            pl = 1.0 - s
            pr = s
            m = mL[i] * pl + mR[i] * pr
            # alpha term: m / rho
            vals[i, 0] += scale * w * m * ir * pl
            vals[i, 1] += scale * w * m * ir * pr
            jac[i, 0, 1] += scale * w * pl * pl * ir
            jac[i, 0, 2] += scale * w * pr * pl * ir
            jac[i, 1, 1] += scale * w * pl * pr * ir
            jac[i, 1, 2] += scale * w * pr * pr * ir
            # beta cell mean: P' + m^2 / (2 rho^2)
            g += w * 0.5 * m * m * ir * ir
            g_r -= w * m * m * ir * ir * ir
            jac[i, 2, 1] += w * m * ir * ir * pl
            jac[i, 2, 2] += w * m * ir * ir * pr
            # gamma term: -r(rho, m) m
            if laminar:
                f = c * m * ir * ir
                fm = c * ir * ir
            else:
                f = c * abs(m) * m * ir * ir
                fm = 2.0 * c * abs(m) * ir * ir
            vals[i, 3] -= scale * w * f * pl
            vals[i, 4] -= scale * w * f * pr
            jac[i, 3, 1] -= scale * w * fm * pl * pl
            jac[i, 3, 2] -= scale * w * fm * pr * pl
            jac[i, 4, 1] -= scale * w * fm * pl * pr
            jac[i, 4, 2] -= scale * w * fm * pr * pr
        vals[i, 2] = g
        jac[i, 2, 0] = g_r
        jac[i, 0, 0] = -vals[i, 0] * ir
        jac[i, 1, 0] = -vals[i, 1] * ir
        jac[i, 3, 0] = -2.0 * vals[i, 3] * ir
        jac[i, 4, 0] = -2.0 * vals[i, 4] * ir
    return -1, vals, jac


def _cell_terms_vec(rho, mL, mR, dx, wt, fc, laminar, RT, alpha, rho_ref, rho_max, gs, gw):
    n = rho.shape[0]
    vals = np.zeros((n, 5))
    jac = np.zeros((n, 5, 3))
    bad = np.flatnonzero(~((rho > 0.0) & (rho < rho_max)))
    if bad.size:
        return int(bad[0]), vals, jac
    ir = 1.0 / rho
    b = RT * alpha * rho
    ra = RT * alpha
    dPv = RT * (np.log(rho / ((1.0 - b) * rho_ref)) + 1.0 / (1.0 - b))
    d2Pv = RT * (ir + ra / (1.0 - b) + ra / (1.0 - b) ** 2)
    pl = 1.0 - gs
    pr = gs
    m = np.outer(mL, pl) + np.outer(mR, pr)  # (n, 3)
    scale = (wt * dx)[:, None]
    phi = (pl, pr)
    mir = m * ir[:, None]
    for k in range(2):
        vals[:, k] = (scale * gw * mir * phi[k]).sum(axis=1)
        for j in range(2):
            jac[:, k, 1 + j] = (scale * gw * phi[j] * phi[k]).sum(axis=1) * ir
        jac[:, k, 0] = -vals[:, k] * ir
    ir2 = (ir * ir)[:, None]
    vals[:, 2] = dPv + (gw * 0.5 * m * m * ir2).sum(axis=1)
    jac[:, 2, 0] = d2Pv - (gw * m * m * ir2).sum(axis=1) * ir
    for j in range(2):
        jac[:, 2, 1 + j] = (gw * m * ir2 * phi[j]).sum(axis=1)
    c = fc[:, None]
    if laminar:
        f = c * m * ir2
        fm = c * ir2 * np.ones_like(m)
    else:
        f = c * np.abs(m) * m * ir2
        fm = 2.0 * c * np.abs(m) * ir2
    for k in range(2):
        vals[:, 3 + k] = -(scale * gw * f * phi[k]).sum(axis=1)
        for j in range(2):
            jac[:, 3 + k, 1 + j] = -(scale * gw * fm * phi[j] * phi[k]).sum(axis=1)
        jac[:, 3 + k, 0] = -2.0 * vals[:, 3 + k] * ir
    return -1, vals, jac


@njit
def _cell_energy_loop(rho, mL, mR, dx, wt, fc, laminar, RT, alpha, rho_ref, rho_max, gs, gw):
    n = rho.shape[0]
    out = np.zeros((n, 2))
    bad = _first_bad(rho, rho_max)
    if bad >= 0:
        return bad, out
    for i in range(n):
        r = rho[i]
        P, _, _ = _potential_terms(r, RT, alpha, rho_ref)
        kin = 0.0
        dis = 0.0
        for q in range(3):
            m = mL[i] * (1.0 - gs[q]) + mR[i] * gs[q]
            kin += gw[q] * 0.5 * m * m / r
            if laminar:
                dis += gw[q] * fc[i] * m * m / (r * r)
            else:
                dis += gw[q] * fc[i] * abs(m) * m * m / (r * r)
        out[i, 0] = wt[i] * dx[i] * (P + kin)
        out[i, 1] = wt[i] * dx[i] * dis
    return -1, out


def _cell_energy_vec(rho, mL, mR, dx, wt, fc, laminar, RT, alpha, rho_ref, rho_max, gs, gw):
    n = rho.shape[0]
    out = np.zeros((n, 2))
    bad = np.flatnonzero(~((rho > 0.0) & (rho < rho_max)))
    if bad.size:
        return int(bad[0]), out
    b = RT * alpha * rho
    P = RT * rho * np.log(rho / ((1.0 - b) * rho_ref))
    m = np.outer(mL, 1.0 - gs) + np.outer(mR, gs)
    r = rho[:, None]
    kin = (gw * 0.5 * m * m / r).sum(axis=1)
    if laminar:
        dis = (gw * fc[:, None] * m * m / (r * r)).sum(axis=1)
    else:
        dis = (gw * fc[:, None] * np.abs(m) * m * m / (r * r)).sum(axis=1)
    out[:, 0] = wt * dx * (P + kin)
    out[:, 1] = wt * dx * dis
    return -1, out


def _args(cfg, rho, mL, mR, dx, wt, fc):
    return (np.ascontiguousarray(rho, dtype=float), np.ascontiguousarray(mL, dtype=float),
            np.ascontiguousarray(mR, dtype=float), np.ascontiguousarray(dx, dtype=float),
            np.ascontiguousarray(wt, dtype=float), np.ascontiguousarray(fc, dtype=float),
            bool(cfg.laminar), float(cfg.RT), float(cfg.alpha), float(cfg.rho_ref),
            float(cfg.rho_max), GAUSS_S, GAUSS_W)


def cell_terms(cfg, rho, mL, mR, dx, wt, fc, use_numba=None):
    """Return ``(bad, vals, jac)``; ``bad`` is the first inadmissible cell or -1."""
    use = USE_NUMBA if use_numba is None else use_numba
    fn = _cell_terms_loop if use else _cell_terms_vec
    return fn(*_args(cfg, rho, mL, mR, dx, wt, fc))


def cell_energy(cfg, rho, mL, mR, dx, wt, fc, use_numba=None):
    """Return ``(bad, out)`` with Hamiltonian density and dissipation per cell."""
    use = USE_NUMBA if use_numba is None else use_numba
    fn = _cell_energy_loop if use else _cell_energy_vec
    return fn(*_args(cfg, rho, mL, mR, dx, wt, fc))
