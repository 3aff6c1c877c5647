"""Model kernels: infectivity, susceptibility, sojourn law, channel rates,
and the total/integrated infectious pressure on a susceptible individual.

All functions are pure given immutable inputs. The closed forms here are
the single source of truth; the fast likelihood engine vectorizes the
same expressions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, InvalidInterval, ValidationError
from .population import Channel, N_PRODUCTION_TYPES, Population

SPATIAL_KERNEL_CENTER_KM = 5.0


@dataclass
class TransmissionParams:
    """Transmission parameter vector.

    p[0]/p[1] are per-contact infection probabilities for the feedmill and
    slaughterhouse networks, beta[0] the company-association rate, beta[1]
    the spatial rate at the 5 km kernel center, gamma the modulation of
    pressure from notified individuals, psi the spatial decay, and eta the
    per-production-type susceptibilities with eta[0] fixed to 1.
    """

    epsilon: float
    p: np.ndarray
    beta: np.ndarray
    gamma: float
    psi: float
    eta: np.ndarray

    def __post_init__(self):
        self.p = np.asarray(self.p, dtype=np.float64)
        self.beta = np.asarray(self.beta, dtype=np.float64)
        self.eta = np.asarray(self.eta, dtype=np.float64)
        if self.p.shape != (2,) or self.beta.shape != (2,):
            raise ValidationError("p and beta must each have 2 components")
        if self.eta.shape != (N_PRODUCTION_TYPES,):
            raise ValidationError(f"eta must have {N_PRODUCTION_TYPES} components")
        if min(self.epsilon, self.gamma, self.psi, self.beta.min()) < 0:
            raise ValidationError("rates must be non-negative")
        if self.p.min() < 0 or self.p.max() > 1:
            raise ValidationError("p components must lie in [0, 1]")
        if self.eta.min() < 0 or self.eta.max() > 1:
            raise ValidationError("eta components must lie in [0, 1]")
        if self.eta[0] != 1.0:
            raise ValidationError("eta[0] is the reference type and must be 1")

    def copy(self):
        return TransmissionParams(self.epsilon, self.p.copy(), self.beta.copy(),
                                  self.gamma, self.psi, self.eta.copy())


@dataclass(frozen=True)
class InfectivityParams:
    """Logistic infectivity growth: rate nu (per day), scale mu."""

    nu: float = 1.3
    mu: float = 60.0

    def __post_init__(self):
        if self.nu <= 0 or self.mu <= 0:
            raise ValidationError("nu and mu must be positive")


@dataclass(frozen=True)
class SojournParams:
    """Infection-to-notification law f_D(t) = a b exp[bt - a(e^{bt}-1)]."""

    a: float = 0.015
    b: float = 0.8

    def __post_init__(self):
        if self.a <= 0 or self.b <= 0:
            raise ValidationError("a and b must be positive")


@dataclass
class EpidemicRecord:
    """Per-individual event times with censoring at T_obs.

    Times are days; +inf marks events that never happened (or are censored
    beyond T_obs in an observed record). Culled individuals are encoded
    with N == R (detection and removal coincide).
    """

    I: np.ndarray
    N: np.ndarray
    R: np.ndarray
    T_obs: float

    def __post_init__(self):
        self.I = np.asarray(self.I, dtype=np.float64)
        self.N = np.asarray(self.N, dtype=np.float64)
        self.R = np.asarray(self.R, dtype=np.float64)

    @classmethod
    def empty(cls, n, T_obs):
        inf = np.full(n, np.inf)
        return cls(inf.copy(), inf.copy(), inf.copy(), float(T_obs))

    @property
    def size(self):
        return self.I.shape[0]

    @property
    def infected_mask(self):
        return np.isfinite(self.I)

    @property
    def detected_mask(self):
        return self.N <= self.T_obs

    @property
    def occult_mask(self):
        return (self.I <= self.T_obs) & (self.N > self.T_obs) & np.isfinite(self.I)

    @property
    def kappa(self):
        """Index case: earliest infection, or None for an empty epidemic."""
        if not self.infected_mask.any():
            return None
        return int(np.argmin(self.I))

    def copy(self):
        return EpidemicRecord(self.I.copy(), self.N.copy(), self.R.copy(), self.T_obs)

    def validate(self):
        both = np.isfinite(self.I) & np.isfinite(self.N)
        if not (self.I[both] < self.N[both]).all():
            raise ValidationError("I < N violated")
        both = np.isfinite(self.N) & np.isfinite(self.R)
        if not (self.N[both] <= self.R[both]).all():
            raise ValidationError("N <= R violated")
        if np.isfinite(self.R[~np.isfinite(self.N)]).any():
            raise ValidationError("removal without notification")


# ---------------------------------------------------------------------------
# Infectivity and susceptibility

def infectivity_growth(ip: InfectivityParams, tau):
    """Logistic infectivity e^{nu tau} / (mu + e^{nu tau}) of an individual
    infected tau days ago (pre-notification phase). Stable for large tau."""
    tau = np.asarray(tau, dtype=np.float64)
    # expit form: 1 / (1 + mu e^{-nu tau})
    out = 1.0 / (1.0 + ip.mu * np.exp(-ip.nu * tau))
    return out if out.ndim else float(out)


def infectivity(ip: InfectivityParams, rec: EpidemicRecord, i: int, t: float) -> float:
    """Infectivity of individual i at absolute time t, in [0, 1]."""
    Ii, Ni, Ri = rec.I[i], rec.N[i], rec.R[i]
    if not np.isfinite(Ii) or t <= Ii or t >= Ri:
        return 0.0
    if t < Ni:
        return float(infectivity_growth(ip, t - Ii))
    return 1.0


def integrated_infectivity_growth(ip: InfectivityParams, tau0, tau1):
    """Exact integral of the logistic infectivity over [tau0, tau1].

    (1/nu) [log(mu + e^{nu tau})] evaluated via logaddexp for stability.
    """
    tau0 = np.asarray(tau0, dtype=np.float64)
    tau1 = np.asarray(tau1, dtype=np.float64)
    logmu = math.log(ip.mu)
    val = (np.logaddexp(logmu, ip.nu * tau1) -
           np.logaddexp(logmu, ip.nu * tau0)) / ip.nu
    return val if val.ndim else float(val)


def susceptibility(params: TransmissionParams, pop: Population, j: int) -> float:
    """Susceptibility of j: table lookup on production type."""
    return float(params.eta[pop.production_type[j] - 1])


# ---------------------------------------------------------------------------
# Sojourn (infection-to-notification) law

def _check_sojourn_arg(t):
    if np.any(np.asarray(t) < 0):
        raise DomainError("sojourn times must be non-negative")


def sojourn_pdf(sp: SojournParams, t):
    _check_sojourn_arg(t)
    t = np.asarray(t, dtype=np.float64)
    out = np.exp(log_sojourn_pdf(sp, t))
    return out if out.ndim else float(out)


def log_sojourn_pdf(sp: SojournParams, t):
    _check_sojourn_arg(t)
    t = np.asarray(t, dtype=np.float64)
    out = math.log(sp.a * sp.b) + sp.b * t - sp.a * np.expm1(sp.b * t)
    return out if out.ndim else float(out)


def sojourn_cdf(sp: SojournParams, t):
    _check_sojourn_arg(t)
    t = np.asarray(t, dtype=np.float64)
    out = -np.expm1(-sp.a * np.expm1(sp.b * t))
    return out if out.ndim else float(out)


def log_sojourn_survival(sp: SojournParams, t):
    """log(1 - F_D(t)), exact for large t where the survival underflows."""
    _check_sojourn_arg(t)
    t = np.asarray(t, dtype=np.float64)
    out = -sp.a * np.expm1(sp.b * t)
    return out if out.ndim else float(out)


def sojourn_ppf(sp: SojournParams, u):
    """Inverse CDF, for inverse-transform sampling. u in [0, 1)."""
    u = np.asarray(u, dtype=np.float64)
    if np.any(u < 0) or np.any(u >= 1):
        raise DomainError("u must lie in [0, 1)")
    out = np.log1p(-np.log1p(-u) / sp.a) / sp.b
    return out if out.ndim else float(out)


def sojourn_median(sp: SojournParams) -> float:
    return sojourn_ppf(sp, 0.5)


# ---------------------------------------------------------------------------
# Channel rates and pressure

def spatial_kernel(psi: float, rho):
    """Exponential distance kernel centred at 5 km."""
    rho = np.asarray(rho, dtype=np.float64)
    out = np.exp(-psi * (rho - SPATIAL_KERNEL_CENTER_KM))
    return out if out.ndim else float(out)


def pairwise_rate(pop, params, ip, rec, i, j, channel, t) -> float:
    """Rate of transmission from i to j through one channel at time t.

    The gamma modulation of notified individuals is applied by
    total_pressure, not here. Absent network edges yield 0.
    """
    pop.check_id(i)
    pop.check_id(j)
    if i == j:
        raise DomainError("no self-transmission")
    q = infectivity(ip, rec, i, t)
    if q == 0.0:
        return 0.0
    s = susceptibility(params, pop, j)
    notified = rec.N[i] <= t  # network modes stop at notification
    if channel in (Channel.FM, Channel.SH):
        if notified:
            return 0.0
        k = 0 if channel is Channel.FM else 1
        r = pop.networks.frequency_layer(channel).rate_of(i, j)
        return q * s * params.p[k] * r
    if channel is Channel.CP:
        if notified:
            return 0.0
        c = 1.0 if pop.networks.company.has_edge(i, j) else 0.0
        return q * s * params.beta[0] * c
    if channel is Channel.SPATIAL:
        rho = float(np.hypot(*(pop.xy[i] - pop.xy[j])))
        return q * s * params.beta[1] * spatial_kernel(params.psi, rho)
    raise DomainError(f"{channel} has no pairwise rate")


def total_pressure(pop, params, ip, rec, j, t) -> float:
    """Instantaneous infectious pressure on susceptible j at time t."""
    pop.check_id(j)
    lam = params.epsilon
    channels = (Channel.FM, Channel.SH, Channel.CP, Channel.SPATIAL)
    for i in np.flatnonzero(rec.infected_mask):
        i = int(i)
        if i == j or t <= rec.I[i] or t >= rec.R[i]:
            continue
        contrib = sum(pairwise_rate(pop, params, ip, rec, i, j, ch, t)
                      for ch in channels)
        if rec.N[i] <= t:
            contrib *= params.gamma
        lam += contrib
    return lam


def integrated_pressure(pop, params, ip, rec, j, interval) -> float:
    """Exact integral of total_pressure(j, .) over [t0, t1).

    Between event times, only the logistic infectivity varies; its
    antiderivative is closed-form, so the result is exact.
    """
    t0, t1 = interval
    if t1 < t0:
        raise InvalidInterval(f"t1 ={t1} < t0 ={t0}")
    pop.check_id(j)
    s = susceptibility(params, pop, j)
    total = params.epsilon * (t1 - t0)
    networks = pop.networks
    for i in np.flatnonzero(rec.infected_mask):
        i = int(i)
        if i == j:
            continue
        rho = float(np.hypot(*(pop.xy[i] - pop.xy[j])))
        kern = spatial_kernel(params.psi, rho)
        coeff = s * (params.p[0] * networks.feedmill.rate_of(i, j)
                     + params.p[1] * networks.slaughterhouse.rate_of(i, j)
                     + params.beta[0] * (1.0 if networks.company.has_edge(i, j) else 0.0)
                     + params.beta[1] * kern)
        # growth phase: I_i < t < N_i
        lo = max(t0, rec.I[i])
        hi = min(t1, rec.N[i], rec.R[i])
        if hi > lo and coeff > 0.0:
            total += coeff * integrated_infectivity_growth(
                ip, lo - rec.I[i], hi - rec.I[i])
        # notified phase: N_i <= t < R_i, spatial only, q = 1, gamma applied
        lo = max(t0, rec.N[i])
        hi = min(t1, rec.R[i])
        if hi > lo:
            total += params.gamma * s * params.beta[1] * kern * (hi - lo)
    return float(total)
