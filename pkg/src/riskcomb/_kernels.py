"""Compiled inner loops: variance filters, CAViaR recursions, joint losses and
a Nelder-Mead simplex that dispatches on an integer objective code.

Objectives share one calling convention so that a single cached simplex
routine serves every model::

    objective(kind, theta, data, iparams, fparams) -> float

``data`` is a 2-D float array whose rows are the series the objective needs,
``iparams``/``fparams`` carry integer and float settings.  Infeasible
parameter vectors return ``inf``.
"""
import math

import numpy as np
from numba import njit

# objective codes
VARIANCE_NLL = 0
CAVIAR_AL = 1
JOINT_FZ0 = 2

# variance families
FAM_RISKMETRICS = 0
FAM_GARCH = 1
FAM_GJR = 2
FAM_RGARCH = 3

# CAViaR forms
FORM_SAV = 0
FORM_AS = 1
FORM_IG = 2
FORM_X = 3

NU_LOW = 2.1
NU_SPAN = 97.9
LOG_2PI = math.log(2.0 * math.pi)


@njit(cache=True)
def _logistic(x):
    if x >= 0.0:
        return 1.0 / (1.0 + math.exp(-x))
    z = math.exp(x)
    return z / (1.0 + z)


@njit(cache=True)
def nu_from_theta(x):
    return NU_LOW + NU_SPAN * _logistic(x)


# ---------------------------------------------------------------------------
# variance models
# ---------------------------------------------------------------------------

@njit(cache=True)
def garch_params(family, theta, scale):
    """Map unconstrained ``theta`` to (omega, alpha, gamma, beta)."""
    omega = scale * math.exp(theta[0])
    p = _logistic(theta[1])
    if family == FAM_GARCH:
        share = _logistic(theta[2])
        return omega, p * share, 0.0, p * (1.0 - share)
    # GJR: split persistence alpha + gamma/2 + beta across three parts
    a = theta[2]
    g = theta[3]
    m = max(a, max(g, 0.0))
    ea = math.exp(a - m)
    eg = math.exp(g - m)
    eb = math.exp(-m)
    tot = ea + eg + eb
    return omega, p * ea / tot, 2.0 * p * eg / tot, p * eb / tot


@njit(cache=True)
def garch_filter(omega, alpha, gamma, beta, r, h0):
    n = r.size
    h = np.empty(n + 1)
    h[0] = h0
    for i in range(1, n + 1):
        r2 = r[i - 1] * r[i - 1]
        a = alpha + gamma if r[i - 1] < 0.0 else alpha
        h[i] = omega + a * r2 + beta * h[i - 1]
    return h


@njit(cache=True)
def riskmetrics_filter(zeta, r, h0):
    n = r.size
    h = np.empty(n + 1)
    h[0] = h0
    for i in range(1, n + 1):
        h[i] = zeta * h[i - 1] + (1.0 - zeta) * r[i - 1] * r[i - 1]
    return h


@njit(cache=True)
def rgarch_params(theta, scale):
    """(const, beta, alpha, xi, delta, tau1, tau2, sigma_u)."""
    const = scale * math.exp(theta[0])
    beta = _logistic(theta[1])
    alpha = math.exp(theta[2])
    xi = scale * theta[3]
    delta = math.exp(theta[4])
    tau1 = scale * theta[5]
    tau2 = scale * theta[6]
    sigma_u = scale * math.exp(theta[7])
    return const, beta, alpha, xi, delta, tau1, tau2, sigma_u


@njit(cache=True)
def rgarch_filter(const, beta, alpha, x, h0):
    n = x.size
    h = np.empty(n + 1)
    h[0] = h0
    for i in range(1, n + 1):
        h[i] = const + beta * h[i - 1] + alpha * x[i - 1]
    return h


@njit(cache=True)
def _std_t_logpdf_const(nu):
    return (math.lgamma(0.5 * (nu + 1.0)) - math.lgamma(0.5 * nu)
            - 0.5 * math.log((nu - 2.0) * math.pi))


@njit(cache=True)
def _return_nll(r, h, dist, nu):
    # log-sums are accumulated as running products, renormalized before they
    # leave the floating-point range, to avoid one log per day
    n = r.size
    quad = 0.0
    log_h = 0.0
    prod_h = 1.0
    log_t = 0.0
    prod_t = 1.0
    for i in range(n):
        if not h[i] > 0.0:
            return np.inf
        prod_h *= h[i]
        if prod_h > 1e200 or prod_h < 1e-200:
            log_h += math.log(prod_h)
            prod_h = 1.0
        if dist == 0:
            quad += r[i] * r[i] / h[i]
        else:
            prod_t *= 1.0 + r[i] * r[i] / (h[i] * (nu - 2.0))
            if prod_t > 1e200:
                log_t += math.log(prod_t)
                prod_t = 1.0
    log_h += math.log(prod_h)
    if dist == 0:
        return 0.5 * (n * LOG_2PI + log_h + quad)
    log_t += math.log(prod_t)
    return -n * _std_t_logpdf_const(nu) + 0.5 * log_h + 0.5 * (nu + 1.0) * log_t


@njit(cache=True)
def variance_nll(theta, data, ip, fp):
    """Negative log-likelihood of a GARCH / GJR / Realized GARCH window.

    ip = [family, dist]; fp = [scale, h0]; data rows = [returns, realized].
    """
    family = ip[0]
    dist = ip[1]
    scale = fp[0]
    h0 = fp[1]
    r = data[0]
    n = r.size
    if family == FAM_RGARCH:
        const, beta, alpha, xi, delta, tau1, tau2, sigma_u = rgarch_params(theta, scale)
        if beta + alpha * delta >= 0.9999:
            return np.inf
        nu = nu_from_theta(theta[8]) if dist == 1 else 0.0
        x = data[1]
        h = rgarch_filter(const, beta, alpha, x, h0)
        ll = _return_nll(r, h[:n], dist, nu)
        if not np.isfinite(ll):
            return np.inf
        s2 = sigma_u * sigma_u
        tot = 0.0
        for i in range(n):
            eta = r[i] / math.sqrt(h[i])
            u = x[i] - xi - delta * h[i] - tau1 * eta - tau2 * (eta * eta - 1.0)
            tot += LOG_2PI + math.log(s2) + u * u / s2
        return ll + 0.5 * tot
    omega, alpha, gamma, beta = garch_params(family, theta, scale)
    nu = nu_from_theta(theta[theta.size - 1]) if dist == 1 else 0.0
    h = garch_filter(omega, alpha, gamma, beta, r, h0)
    return _return_nll(r, h[:n], dist, nu)


# ---------------------------------------------------------------------------
# CAViaR
# ---------------------------------------------------------------------------

@njit(cache=True)
def caviar_step(form, b, v_prev, r_prev, x_prev):
    if form == FORM_SAV:
        return b[0] + b[1] * v_prev + b[2] * abs(r_prev)
    if form == FORM_AS:
        if r_prev > 0.0:
            slope = b[2]
        elif r_prev < 0.0:
            slope = b[3]
        else:
            slope = 0.0
        return b[0] + b[1] * v_prev + slope * abs(r_prev)
    if form == FORM_IG:
        rad = b[0] + b[1] * v_prev * v_prev + b[2] * r_prev * r_prev
        if rad < 0.0:
            return np.nan
        return -math.sqrt(rad)
    return b[0] + b[1] * v_prev + b[2] * x_prev


@njit(cache=True)
def caviar_path(form, b, r, x, v0):
    """In-sample VaR path; entry i uses information up to i-1, last entry is
    the one-step-ahead forecast (length n + 1)."""
    n = r.size
    v = np.empty(n + 1)
    v[0] = v0
    for i in range(1, n + 1):
        v[i] = caviar_step(form, b, v[i - 1], r[i - 1], x[i - 1])
    return v


@njit(cache=True)
def caviar_al(theta, data, ip, fp):
    """AL loss sum of a CAViaR path with the multiplicative ES link.

    theta = [betas..., gamma0]; ip = [form, n_beta]; fp = [tau, v0].
    """
    form = ip[0]
    nb = ip[1]
    tau = fp[0]
    r = data[0]
    x = data[1]
    k = 1.0 + math.exp(min(theta[nb], 50.0))
    n = r.size
    v = fp[1]
    log_sum = 0.0
    prod = 1.0
    check = 0.0
    for i in range(n):
        if i > 0:
            v = caviar_step(form, theta, v, r[i - 1], x[i - 1])
        if not v < 0.0:
            return np.inf
        # one log per block of days instead of one per day
        prod *= -v
        if prod > 1e200 or prod < 1e-200:
            log_sum += math.log(prod)
            prod = 1.0
        u = r[i] - v
        check += u * (tau - (1.0 if u <= 0.0 else 0.0)) / v
    log_sum += math.log(prod)
    if not math.isfinite(log_sum):
        return np.inf
    # sum of log(-k v_i) - log(1 - tau) - (r_i - v_i)(tau - hit_i) / (tau k v_i)
    return n * (math.log(k) - math.log(1.0 - tau)) + log_sum - check / (tau * k)


@njit(cache=True)
def caviar_screen(form, betas, r, x, tau, v0):
    """Profile AL loss for many candidate betas with gamma0 concentrated out.

    For a fixed VaR path the AL loss in k = 1 + exp(gamma0) is
    n log k - A / k + const, minimized at k = -A / n.
    Returns (loss, gamma0) per candidate.
    """
    m = betas.shape[0]
    n = r.size
    out = np.empty(m)
    g0 = np.empty(m)
    c = -math.log(1.0 - tau)
    for j in range(m):
        b = betas[j]
        v = v0
        slog = 0.0
        a = 0.0
        ok = True
        for i in range(n):
            if i > 0:
                v = caviar_step(form, b, v, r[i - 1], x[i - 1])
            if not v < 0.0:
                ok = False
                break
            hit = 1.0 if r[i] <= v else 0.0
            slog += math.log(-v)
            a += (r[i] - v) * (tau - hit) / (tau * v)
        if not ok:
            out[j] = np.inf
            g0[j] = 0.0
            continue
        k = -a / n
        if k <= 1.0 + 1e-10:
            k = 1.0 + math.exp(-20.0)
        g0[j] = math.log(k - 1.0)
        out[j] = slog + n * math.log(k) + n * c - a / k
    return out, g0


# ---------------------------------------------------------------------------
# joint (VaR, ES) regression under FZ0
# ---------------------------------------------------------------------------

@njit(cache=True)
def joint_fz0(theta, data, ip, fp):
    """FZ0 loss sum of linear quantile / ES regressions.

    data rows = [returns, regressors...]; ip = [kq, ke] regressor counts
    (quantile regressors are rows 1..kq, ES regressors rows 1+kq..kq+ke);
    fp = [tau].
    """
    kq = ip[0]
    ke = ip[1]
    tau = fp[0]
    r = data[0]
    total = 0.0
    for i in range(r.size):
        q = 0.0
        for a in range(kq):
            q += theta[a] * data[1 + a, i]
        e = 0.0
        for a in range(ke):
            e += theta[kq + a] * data[1 + kq + a, i]
        if not e < 0.0:
            return np.inf
        hit = 1.0 if r[i] <= q else 0.0
        total += hit * (r[i] - q) / (tau * e) + q / e + math.log(-e) - 1.0
    return total


# ---------------------------------------------------------------------------
# minimum-score combination: AL loss and gradient in softmax logits
# ---------------------------------------------------------------------------

@njit(cache=True)
def _softmax_tail_zero(z, m):
    w = np.empty(m)
    mx = 0.0
    for k in range(m - 1):
        if z[k] > mx:
            mx = z[k]
    tot = 0.0
    for k in range(m - 1):
        w[k] = math.exp(z[k] - mx)
        tot += w[k]
    w[m - 1] = math.exp(-mx)
    tot += w[m - 1]
    for k in range(m):
        w[k] /= tot
    return w


@njit(cache=True)
def ms_loss_grad(theta, var, es, r, tau, use_fz0):
    """AL (or FZ0) loss of the minimum-score combination and its gradient.

    theta holds 2 (m - 1) logits; the last member's logit is pinned at 0.
    """
    n, m = var.shape
    wq = _softmax_tail_zero(theta[: m - 1], m)
    ws = _softmax_tail_zero(theta[m - 1:], m)
    gq = np.zeros(m)
    gs = np.zeros(m)
    total = 0.0
    c = -math.log(1.0 - tau)
    for i in range(n):
        v = 0.0
        d = 0.0
        for k in range(m):
            v += wq[k] * var[i, k]
            d += ws[k] * (es[i, k] - var[i, k])
        e = v + d
        if not e < 0.0:
            return np.inf, np.zeros(theta.size)
        hit = 1.0 if r[i] <= v else 0.0
        if use_fz0:
            total += hit * (r[i] - v) / (tau * e) + v / e + math.log(-e) - 1.0
            dv = (1.0 - hit / tau) / e
            de = -(hit * (r[i] - v) / tau + v) / (e * e) + 1.0 / e
        else:
            total += math.log(-e) + c - (r[i] - v) * (tau - hit) / (tau * e)
            dv = (tau - hit) / (tau * e)
            de = 1.0 / e + (r[i] - v) * (tau - hit) / (tau * e * e)
        # e = v + d, so de/dv = 1
        dv_tot = dv + de
        for k in range(m):
            gq[k] += dv_tot * var[i, k]
            gs[k] += de * (es[i, k] - var[i, k])
    grad = np.empty(theta.size)
    sq = 0.0
    ss = 0.0
    for k in range(m):
        sq += wq[k] * gq[k]
        ss += ws[k] * gs[k]
    for k in range(m - 1):
        grad[k] = wq[k] * (gq[k] - sq)
        grad[m - 1 + k] = ws[k] * (gs[k] - ss)
    return total, grad


# ---------------------------------------------------------------------------
# Nelder-Mead
# ---------------------------------------------------------------------------

@njit(cache=True)
def objective(kind, theta, data, ip, fp):
    if kind == VARIANCE_NLL:
        return variance_nll(theta, data, ip, fp)
    if kind == CAVIAR_AL:
        return caviar_al(theta, data, ip, fp)
    if kind == JOINT_FZ0:
        return joint_fz0(theta, data, ip, fp)
    return np.inf


@njit(cache=True)
def nelder_mead(kind, x0, data, ip, fp, step, xtol, ftol, maxfev):
    """Standard Nelder-Mead (reflection 1, expansion 2, contraction 1/2,
    shrink 1/2).  Returns (x, f, nfev, converged)."""
    n = x0.size
    sim = np.empty((n + 1, n))
    fs = np.empty(n + 1)
    sim[0] = x0
    fs[0] = objective(kind, x0, data, ip, fp)
    for i in range(n):
        x = x0.copy()
        x[i] += step[i]
        sim[i + 1] = x
        fs[i + 1] = objective(kind, x, data, ip, fp)
    nfev = n + 1
    converged = False
    while nfev < maxfev:
        order = np.argsort(fs)
        sim = sim[order]
        fs = fs[order]
        if np.isfinite(fs[n]):
            spread_x = 0.0
            for i in range(1, n + 1):
                for k in range(n):
                    d = abs(sim[i, k] - sim[0, k])
                    if d > spread_x:
                        spread_x = d
            if spread_x <= xtol and abs(fs[n] - fs[0]) <= ftol * (1.0 + abs(fs[0])):
                converged = True
                break
        c = np.zeros(n)
        for i in range(n):
            c += sim[i]
        c /= n
        xr = 2.0 * c - sim[n]
        fr = objective(kind, xr, data, ip, fp)
        nfev += 1
        if fr < fs[0]:
            xe = 3.0 * c - 2.0 * sim[n]
            fe = objective(kind, xe, data, ip, fp)
            nfev += 1
            if fe < fr:
                sim[n] = xe
                fs[n] = fe
            else:
                sim[n] = xr
                fs[n] = fr
        elif fr < fs[n - 1]:
            sim[n] = xr
            fs[n] = fr
        else:
            if fr < fs[n]:
                xc = c + 0.5 * (xr - c)
            else:
                xc = c + 0.5 * (sim[n] - c)
            fc = objective(kind, xc, data, ip, fp)
            nfev += 1
            if fc < min(fr, fs[n]):
                sim[n] = xc
                fs[n] = fc
            else:
                for i in range(1, n + 1):
                    sim[i] = sim[0] + 0.5 * (sim[i] - sim[0])
                    fs[i] = objective(kind, sim[i], data, ip, fp)
                    nfev += 1
    k = np.argmin(fs)
    return sim[k].copy(), fs[k], nfev, converged


@njit(cache=True)
def _es_obj(b, xe, a, c):
    n, k = xe.shape
    f = 0.0
    for i in range(n):
        if c[i] == 0.0:
            continue
        e = 0.0
        for j in range(k):
            e += xe[i, j] * b[j]
        if not e < 0.0:
            return np.inf
        f += c[i] * (a[i] / e + math.log(-e))
    return f


@njit(cache=True)
def _solve_pd(h, g):
    """h^{-1} g for k <= 2; a zero-length result flags a non-PD h."""
    k = g.size
    out = np.empty(k)
    if k == 1:
        if not h[0, 0] > 0.0:
            return np.empty(0)
        out[0] = g[0] / h[0, 0]
        return out
    det = h[0, 0] * h[1, 1] - h[0, 1] * h[1, 0]
    if not (h[0, 0] > 0.0 and det > 0.0):
        return np.empty(0)
    out[0] = (h[1, 1] * g[0] - h[0, 1] * g[1]) / det
    out[1] = (h[0, 0] * g[1] - h[1, 0] * g[0]) / det
    return out


@njit(cache=True)
def es_regression_wald(b0, xe, a, c, target, maxit, tol):
    """Solve the weighted ES part of the FZ0 regression with the quantile
    part held fixed (pseudo-responses ``a``), by damped Newton from ``b0``.

    Returns (b, W, converged) where W = (b - target)' V^{-1} (b - target)
    and V is the sandwich covariance under weights ``c`` (counts summing to
    the sample size).  Only one or two regressors are supported.
    """
    n, k = xe.shape
    b = b0.copy()
    f = _es_obj(b, xe, a, c)
    conv = False
    if not np.isfinite(f):
        return b, np.nan, False
    g = np.zeros(k)
    h = np.zeros((k, k))
    for _ in range(maxit):
        g[:] = 0.0
        h[:, :] = 0.0
        for i in range(n):
            if c[i] == 0.0:
                continue
            e = 0.0
            for j in range(k):
                e += xe[i, j] * b[j]
            gi = c[i] * (1.0 / e - a[i] / (e * e))
            hi = c[i] * (2.0 * a[i] / (e * e * e) - 1.0 / (e * e))
            for j in range(k):
                g[j] += gi * xe[i, j]
                for l in range(k):
                    h[j, l] += hi * xe[i, j] * xe[i, l]
        step = _solve_pd(h, g)
        if step.size == 0:
            # fall back to a short gradient step
            gmax = np.max(np.abs(g))
            step = g * (1e-3 * (1.0 + np.max(np.abs(b))) / gmax) if gmax > 0 else g
        t = 1.0
        moved = False
        for _ in range(50):
            cand = b - t * step
            fc = _es_obj(cand, xe, a, c)
            if fc <= f:
                moved = True
                break
            t *= 0.5
        if not moved:
            conv = True
            break
        delta = np.max(np.abs(cand - b))
        b = cand
        f = fc
        if delta < tol * (1.0 + np.max(np.abs(b))):
            conv = True
            break
    # sandwich covariance under the weights
    tot = 0.0
    m = np.zeros(k)
    lam = np.zeros((k, k))
    for i in range(n):
        if c[i] == 0.0:
            continue
        e = 0.0
        for j in range(k):
            e += xe[i, j] * b[j]
        s = (e - a[i]) / (e * e)
        tot += c[i]
        for j in range(k):
            m[j] += c[i] * s * xe[i, j]
            for l in range(k):
                lam[j, l] += c[i] * xe[i, j] * xe[i, l] / (e * e)
    m /= tot
    lam /= tot
    cm = np.zeros((k, k))
    for i in range(n):
        if c[i] == 0.0:
            continue
        e = 0.0
        for j in range(k):
            e += xe[i, j] * b[j]
        s = (e - a[i]) / (e * e)
        for j in range(k):
            for l in range(k):
                cm[j, l] += c[i] * (s * xe[i, j] - m[j]) * (s * xe[i, l] - m[l])
    cm /= tot * tot
    # W = d' lam cm^{-1} lam d
    d = b - target
    ld = lam @ d
    sol = _solve_pd(cm, ld)
    if sol.size == 0:
        return b, np.nan, False
    return b, float(ld @ sol), conv


@njit(cache=True)
def es_regression_boot(b_hat, xe, a, counts, maxit, tol):
    """Bootstrap replicates of :func:`es_regression_wald` centred at the
    full-sample estimate.  Returns (betas, W*, converged)."""
    nb = counts.shape[0]
    k = xe.shape[1]
    betas = np.empty((nb, k))
    w = np.empty(nb)
    conv = np.zeros(nb, dtype=np.bool_)
    for r in range(nb):
        bb, ww, cc = es_regression_wald(b_hat, xe, a, counts[r], b_hat, maxit, tol)
        betas[r] = bb
        w[r] = ww
        conv[r] = cc and np.isfinite(ww)
    return betas, w, conv
