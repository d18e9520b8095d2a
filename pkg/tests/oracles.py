"""Independent reference computations used by the tests.

Nothing here imports the solver code paths it is used to check.
"""

import math

import numpy as np


# --- cones -----------------------------------------------------------------

def soc_grid_projection(v, n_r=201, n_t=401, n_ang=120):
    """Brute-force nearest point of the second-order cone (dim 2 or 3) on a grid.

    Points are parametrized as ``t * (rad * dir, 1)`` with ``rad`` in [0, 1],
    so every grid point lies in the cone.  Returns the best grid point.
    """
    v = np.asarray(v, dtype=float)
    m = v.size
    tmax = max(2.0 * np.linalg.norm(v), 1.0)
    ts = np.linspace(0.0, tmax, n_t)
    rads = np.linspace(0.0, 1.0, n_r)
    if m == 2:
        dirs = np.array([[-1.0], [1.0]])
    else:
        ang = np.linspace(0.0, 2 * np.pi, n_ang, endpoint=False)
        # refine the angle around the direction of z for accuracy
        phi = math.atan2(v[1], v[0])
        ang = np.concatenate([ang, phi + np.linspace(-0.01, 0.01, 41)])
        dirs = np.stack([np.cos(ang), np.sin(ang)], axis=1)
    best, best_d = None, np.inf
    for d in dirs:
        # z = t * rad * d, last = t
        Z = ts[:, None, None] * rads[None, :, None] * d[None, None, :]
        T = np.broadcast_to(ts[:, None], (n_t, n_r))
        dist = ((Z - v[:-1]) ** 2).sum(axis=2) + (T - v[-1]) ** 2
        idx = np.unravel_index(np.argmin(dist), dist.shape)
        if dist[idx] < best_d:
            best_d = dist[idx]
            best = np.append(Z[idx], T[idx])
    return best, tmax / (n_t - 1)


def soc_kkt_holds(v, w, tol=1e-9):
    """KKT check for ``w = proj_SOC(v)``: w in cone, v - w in polar, <w, v - w> = 0."""
    r = v - w
    in_cone = np.linalg.norm(w[:-1]) <= w[-1] + tol
    in_polar = np.linalg.norm(r[:-1]) <= -r[-1] + tol
    return in_cone and in_polar and abs(w @ r) <= tol


# --- statistics --------------------------------------------------------------

def chi2_cdf_even(x, dof):
    """Closed-form chi-square CDF for an even number of degrees of freedom."""
    assert dof % 2 == 0
    h = x / 2.0
    term, total = 1.0, 1.0
    for k in range(1, dof // 2):
        term *= h / k
        total += term
    return 1.0 - math.exp(-h) * total


def chi2_quantile_even(prob, dof, tol=1e-12):
    lo, hi = 0.0, 10.0 * dof + 100.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if chi2_cdf_even(mid, dof) < prob:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


# --- optimization oracles (cvxpy) --------------------------------------------

def _cvx_cone_constraint(cp, expr, kind, m):
    if kind == "zero":
        return [expr == 0]
    if kind == "nonneg":
        return [expr >= 0]
    if kind == "soc":
        return [cp.SOC(expr[m - 1], expr[: m - 1])]
    raise ValueError(kind)


def centralized_quadratic(Ps, qs, As, bs, kind):
    """Solve ``min sum x'P x/2 + q'x  s.t.  sum (A x - b) in K`` centrally.

    Returns ``(xs, value)``.  ``kind`` in {"zero", "nonneg", "soc"}.
    """
    import cvxpy as cp

    xs = [cp.Variable(P.shape[0]) for P in Ps]
    obj = sum(0.5 * cp.quad_form(x, cp.psd_wrap(P)) + q @ x for x, P, q in zip(xs, Ps, qs))
    total = sum(A @ x - b for x, A, b in zip(xs, As, bs))
    m = As[0].shape[0]
    prob = cp.Problem(cp.Minimize(obj), _cvx_cone_constraint(cp, total, kind, m))
    prob.solve(solver=cp.CLARABEL, tol_gap_abs=1e-10, tol_gap_rel=1e-10, tol_feas=1e-10)
    assert prob.status == cp.OPTIMAL, prob.status
    return [np.asarray(x.value) for x in xs], float(prob.value)


def _own_projection(kind, y):
    # written out independently of the package's cone module
    if kind == "nonneg":
        return np.maximum(y, 0.0)
    if kind == "free":
        return y
    z, t = y[:-1], y[-1]
    nz = math.sqrt(float(z @ z))
    if nz <= t:
        return y
    if nz <= -t:
        return np.zeros_like(y)
    a = 0.5 * (nz + t)
    return np.append(z * (a / nz), a)


def direct_dual_prox(P, q, E, C_kind, z, gamma, iters=100000):
    """``argmin_y g*(-E'y) + I_C(y) + gamma/2 ||y - z||^2`` for ``g = x'Px/2 + q'x``.

    ``g*(u) = (u - q)' P^{-1} (u - q) / 2``, so the objective is the strongly
    convex quadratic ``y'Hy/2 - c'y`` with ``H = E P^{-1} E' + gamma I`` and
    ``c = gamma z - E P^{-1} q``; minimized over ``C`` by accelerated
    projected gradient to machine precision.  ``C_kind`` in
    {"nonneg", "soc", "free"}.
    """
    Pinv = np.linalg.inv(P)
    H = E @ Pinv @ E.T + gamma * np.eye(E.shape[0])
    c = gamma * z - E @ Pinv @ q
    L = np.linalg.eigvalsh(H).max()
    y = _own_projection(C_kind, z)
    yk, t = y, 1.0
    for _ in range(iters):
        y_new = _own_projection(C_kind, yk - (H @ yk - c) / L)
        if np.linalg.norm(y_new - y) <= 1e-16 * (1 + np.linalg.norm(y)):
            return y_new
        t_new = 0.5 * (1 + math.sqrt(1 + 4 * t * t))
        yk = y_new + (t - 1) / t_new * (y_new - y)
        y, t = y_new, t_new
    return y


def direct_dual_prox_cvxpy(P, q, E, C_kind, z, gamma):
    """Same problem through a conic solver (about 1e-6 accurate); validates the oracle."""
    import cvxpy as cp

    m = E.shape[0]
    Pinv = np.linalg.inv(P)
    Pinv = 0.5 * (Pinv + Pinv.T)
    y = cp.Variable(m)
    u = -E.T @ y - q
    obj = 0.5 * cp.quad_form(u, cp.psd_wrap(Pinv)) + 0.5 * gamma * cp.sum_squares(y - z)
    cons = []
    if C_kind == "nonneg":
        cons = [y >= 0]
    elif C_kind == "soc":
        cons = [cp.SOC(y[m - 1], y[: m - 1])]
    prob = cp.Problem(cp.Minimize(obj), cons)
    prob.solve(solver=cp.CLARABEL, tol_gap_abs=1e-10, tol_gap_rel=1e-10, tol_feas=1e-10)
    assert prob.status == cp.OPTIMAL, prob.status
    return np.asarray(y.value)


def grid_min_1d(fn, lo, hi, n=200001):
    xs = np.linspace(lo, hi, n)
    vals = np.array([fn(x) for x in xs])
    i = int(np.argmin(vals))
    return xs[i], vals[i], (hi - lo) / (n - 1)


def equality_kkt(Ps, qs, As, bs):
    """Equality-coupled quadratic program via its KKT linear system."""
    ns = [P.shape[0] for P in Ps]
    m = As[0].shape[0]
    n = sum(ns)
    K = np.zeros((n + m, n + m))
    rhs = np.zeros(n + m)
    off = 0
    for P, q, A in zip(Ps, qs, As):
        k = P.shape[0]
        K[off:off + k, off:off + k] = P
        K[off:off + k, n:] = A.T
        K[n:, off:off + k] = A
        rhs[off:off + k] = -q
        off += k
    rhs[n:] = sum(bs)
    sol = np.linalg.solve(K, rhs)
    out, off = [], 0
    for k in ns:
        out.append(sol[off:off + k])
        off += k
    return out, sol[n:]
