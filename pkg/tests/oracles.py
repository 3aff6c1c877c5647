"""Independent slow reference computations used only by the tests.

Everything here is written from the textbook formulas, deliberately
avoiding the production engine's closed forms and caching: a discretized
product construction for the likelihood (delta-grid Riemann survival,
exact geometric and sojourn factors), and quadrature helpers.
"""

import math

import numpy as np

from epitrace.population import Channel


def pressure_on_grid(pop, params, ip, rec, j, times, cts=None):
    """lambda_j(t) on an array of times by direct summation; with cts
    given, frequency-network streams into j are dropped while t lies in
    j's tracing window."""
    times = np.asarray(times, dtype=float)
    lam = np.full(times.shape, params.epsilon)
    s_j = params.eta[pop.production_type[j] - 1]
    outside_window = np.ones(times.shape, dtype=bool)
    if cts is not None:
        w = cts.windows.get(j)
        if w is not None:
            outside_window = ~((times >= w[0]) & (times < w[1]))
    for i in range(pop.size):
        if i == j or not np.isfinite(rec.I[i]):
            continue
        rho = math.hypot(pop.xy[i, 0] - pop.xy[j, 0], pop.xy[i, 1] - pop.xy[j, 1])
        kern = math.exp(-params.psi * (rho - 5.0))
        growing = (times > rec.I[i]) & (times < min(rec.N[i], rec.R[i]))
        if growing.any():
            tau = np.where(growing, times - rec.I[i], 0.0)
            q = np.exp(ip.nu * tau) / (ip.mu + np.exp(ip.nu * tau))
            dense = params.beta[1] * kern
            if pop.networks.company.has_edge(i, j):
                dense += params.beta[0]
            net = (params.p[0] * pop.networks.feedmill.rate_of(i, j)
                   + params.p[1] * pop.networks.slaughterhouse.rate_of(i, j))
            lam += np.where(growing, q * s_j * dense, 0.0)
            if net:
                lam += np.where(growing & outside_window, q * s_j * net, 0.0)
        noted = (times >= rec.N[i]) & (times < rec.R[i])
        if noted.any():
            lam += np.where(noted, params.gamma * s_j * params.beta[1] * kern, 0.0)
    return lam


def pointwise_pressure(pop, params, ip, rec, j, t, cts=None):
    return float(pressure_on_grid(pop, params, ip, rec, j, np.array([t]), cts)[0])


def _sojourn_logterms(sp, rec):
    total = 0.0
    for j in range(rec.size):
        if not np.isfinite(rec.I[j]):
            continue
        if rec.N[j] <= rec.T_obs:
            d = rec.N[j] - rec.I[j]
            total += (math.log(sp.a * sp.b) + sp.b * d
                      - sp.a * (math.exp(sp.b * d) - 1.0))
        else:
            total += -sp.a * math.expm1(sp.b * (rec.T_obs - rec.I[j]))
    return total


def _geometric_logterms(pop, params, ip, rec, cts, kappa):
    """Escape/infection factors for in-window inbound contacts; returns
    (logterm, attributed) with attributed the set of contact-infected js."""
    total = 0.0
    attributed = set()
    if cts is None:
        return total, attributed
    for j, (lo, hi) in cts.windows.items():
        if j == kappa:
            continue
        s_j = params.eta[pop.production_type[j] - 1]
        for e in cts.events:
            if e.dest != j or not lo <= e.time < hi:
                continue
            src = e.source
            if not rec.I[src] < e.time < min(rec.N[src], rec.R[src]):
                continue
            q = math.exp(ip.nu * (e.time - rec.I[src])) / (
                ip.mu + math.exp(ip.nu * (e.time - rec.I[src])))
            k = 0 if e.channel is Channel.FM else 1
            ptilde = q * s_j * params.p[k]
            if e.time == rec.I[j]:
                total += math.log(ptilde)
                attributed.add(j)
            elif e.time < rec.I[j]:
                total += math.log1p(-ptilde)
    return total, attributed


def discretized_loglik(pop, params, ip, sp, rec, cts, delta):
    """Left-Riemann discretized product construction of the likelihood.

    Exposure integrals use a delta grid; the pressure factor at each
    rate-driven infection is evaluated exactly at I_j^-; geometric and
    sojourn factors are exact.
    """
    inf_idx = [j for j in range(rec.size) if np.isfinite(rec.I[j])]
    if not inf_idx:
        return 0.0
    kappa = min(inf_idx, key=lambda j: rec.I[j])
    t0 = rec.I[kappa]
    total = 0.0
    geo, attributed = _geometric_logterms(pop, params, ip, rec, cts, kappa)
    total += geo
    for j in range(rec.size):
        end = min(rec.I[j], rec.T_obs)
        if end > t0:
            grid = np.arange(t0, end, delta)
            lam = pressure_on_grid(pop, params, ip, rec, j, grid, cts)
            widths = np.minimum(grid + delta, end) - grid
            total -= float(np.sum(lam * widths))
        if np.isfinite(rec.I[j]) and j != kappa and j not in attributed:
            lam_at = pointwise_pressure(pop, params, ip, rec, j, rec.I[j], cts)
            if lam_at <= 0:
                return -np.inf
            total += math.log(lam_at)
    total += _sojourn_logterms(sp, rec)
    return total


def richardson_loglik(pop, params, ip, sp, rec, cts, delta):
    """First-order Richardson extrapolation of the discretized construction."""
    coarse = discretized_loglik(pop, params, ip, sp, rec, cts, delta)
    fine = discretized_loglik(pop, params, ip, sp, rec, cts, delta / 2.0)
    return 2.0 * fine - coarse
