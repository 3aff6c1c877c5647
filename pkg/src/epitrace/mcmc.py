"""Adaptive reversible-jump MCMC over transmission parameters, augmented
infection times, and the occult-infection set.

One outer iteration = one adaptive multisite Metropolis-Hastings update of
the whole parameter block (log/logit-transformed, Gaussian proposal with
running-covariance adaptation) followed by z event updates, each chosen
among: moving one infection time (four kernels: contact->contact,
non-contact->non-contact, and the two transdimensional switches), adding
an occult infection, or deleting one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import ndtr, ndtri

from .engine import NO_ATTRIB, LikelihoodEngine
from .errors import ConfigError, EmptyPosterior, NumericalError
from .likelihood import PriorSpec, log_prior
from .model import (EpidemicRecord, InfectivityParams, SojournParams,
                    TransmissionParams, log_sojourn_pdf, sojourn_median,
                    sojourn_ppf)

PARAM_NAMES = ["epsilon", "p1", "p2", "beta1", "beta2", "gamma", "psi"] + [
    f"eta{k}" for k in range(2, 11)]
N_PARAMS = len(PARAM_NAMES)
_LOGIT_IDX = (1, 2)


def pack_params(params: TransmissionParams) -> np.ndarray:
    return np.concatenate([[params.epsilon], params.p, params.beta,
                           [params.gamma, params.psi], params.eta[1:]])


def unpack_params(vec) -> TransmissionParams:
    vec = np.asarray(vec, dtype=float)
    return TransmissionParams(
        epsilon=float(vec[0]), p=vec[1:3].copy(), beta=vec[3:5].copy(),
        gamma=float(vec[5]), psi=float(vec[6]),
        eta=np.concatenate([[1.0], vec[7:]]))


def to_transformed(theta):
    y = np.log(theta)
    for k in _LOGIT_IDX:
        y[k] = math.log(theta[k]) - math.log1p(-theta[k])
    return y


def from_transformed(y):
    theta = np.exp(y)
    for k in _LOGIT_IDX:
        theta[k] = 1.0 / (1.0 + math.exp(-y[k]))
    return theta


def log_jacobian(theta):
    """log |d theta / d y| of the log/logit transform at theta."""
    out = float(np.sum(np.log(theta))) - sum(math.log(theta[k]) for k in _LOGIT_IDX)
    for k in _LOGIT_IDX:
        out += math.log(theta[k]) + math.log1p(-theta[k])
    return out


# ---------------------------------------------------------------------------
# Occult infection-time proposal: second-order expansion of the censored
# sojourn, truncated to positive support.

def _gtilde_loc_scale(sp: SojournParams):
    return -1.0 / sp.b, 1.0 / math.sqrt(sp.a) / sp.b


def occult_proposal_density(sp: SojournParams, t) -> float:
    """Density of the occult time-before-observation proposal at t.

    Normal(-1/b, 1/(a b^2)) truncated to t > 0 and renormalized.
    """
    loc, scale = _gtilde_loc_scale(sp)
    t = np.asarray(t, dtype=float)
    z = (t - loc) / scale
    norm = 1.0 - ndtr((0.0 - loc) / scale)
    dens = np.where(t > 0,
                    np.exp(-0.5 * z * z) / (scale * math.sqrt(2 * math.pi)) / norm,
                    0.0)
    return float(dens) if dens.ndim == 0 else dens


def _gtilde_logpdf(sp, t):
    if t <= 0:
        return -np.inf
    loc, scale = _gtilde_loc_scale(sp)
    z = (t - loc) / scale
    lognorm = math.log(1.0 - ndtr((0.0 - loc) / scale))
    return -0.5 * z * z - math.log(scale) - 0.5 * math.log(2 * math.pi) - lognorm


def _gtilde_sample(sp, rng):
    loc, scale = _gtilde_loc_scale(sp)
    u0 = ndtr((0.0 - loc) / scale)
    u = u0 + rng.random() * (1.0 - u0)
    return loc + scale * ndtri(u)


# ---------------------------------------------------------------------------
# Adaptive multisite proposal

class AdaptiveProposal:
    """Running-moment Gaussian proposal on the transformed scale."""

    def __init__(self, dim=N_PARAMS, adapt_start=1000, scale=None,
                 jitter=1e-8, init_step=0.1):
        self.dim = dim
        self.adapt_start = adapt_start
        self.scale = (2.38 ** 2 / dim) if scale is None else scale
        self.jitter = jitter
        self.init_cov = (init_step ** 2 / dim) * np.eye(dim)
        self.reset_moments()

    def reset_moments(self):
        self.count = 0
        self.mean = np.zeros(self.dim)
        self._m2 = np.zeros((self.dim, self.dim))

    def update(self, y):
        self.count += 1
        delta = y - self.mean
        self.mean += delta / self.count
        self._m2 += np.outer(delta, y - self.mean)

    def covariance(self):
        if self.count <= max(self.adapt_start, 2):
            return self.init_cov
        emp = self._m2 / (self.count - 1)
        return self.scale * emp + self.jitter * np.eye(self.dim)

    def draw(self, y, rng):
        try:
            chol = np.linalg.cholesky(self.covariance())
        except np.linalg.LinAlgError:
            # non-PD after accumulation problems: restart from the initial
            # diagonal (adaptation resumes once moments rebuild)
            self.reset_moments()
            chol = np.linalg.cholesky(self.init_cov)
        return y + chol @ rng.standard_normal(self.dim)


# ---------------------------------------------------------------------------
# Chain state

class ChainState:
    """Current parameters plus the augmented epidemic inside the engine."""

    def __init__(self, pop, params, ip, sp, rec, cts, prior_spec, attrib=None):
        self.pop = pop
        self.ip = ip
        self.sp = sp
        self.prior_spec = prior_spec
        self.params = params
        self.engine = LikelihoodEngine(pop, params, ip, sp, rec, cts, attrib=attrib)
        self.log_prior = log_prior(params, prior_spec)

    @property
    def loglik(self):
        return self.engine.total

    @property
    def log_posterior(self):
        return self.log_prior + self.loglik

    @property
    def T_obs(self):
        return self.engine.T_obs

    def occult_ids(self):
        eng = self.engine
        return np.flatnonzero(np.isfinite(eng.I) & (eng.N > eng.T_obs))

    def susceptible_ids(self):
        return np.flatnonzero(~np.isfinite(self.engine.I))

    def infected_ids(self):
        return np.flatnonzero(np.isfinite(self.engine.I))

    def record_view(self):
        return EpidemicRecord(self.engine.I.copy(), self.engine.N.copy(),
                              self.engine.R.copy(), self.engine.T_obs)

    def validate(self):
        """Debug invariants: attribution consistency and occult bookkeeping."""
        self.engine._check_attrib()
        m = len(self.occult_ids())
        assert m == int(np.sum((np.isfinite(self.engine.I))
                               & (self.engine.N > self.engine.T_obs)))


# ---------------------------------------------------------------------------
# Move kernels; each returns (name, accepted)

def update_params(state: ChainState, proposal: AdaptiveProposal, rng):
    theta = pack_params(state.params)
    y = to_transformed(theta)
    y_star = proposal.draw(y, rng)
    theta_star = from_transformed(y_star)
    accepted = False
    # eta components live in (0, 1]: out-of-range proposals are rejected
    # (truncated prior support)
    if (theta_star[7:] <= 1.0).all():
        params_star = unpack_params(theta_star)
        lp_star = log_prior(params_star, state.prior_spec)
        if lp_star > -np.inf:
            ll_old = state.loglik
            ll_star = state.engine.propose_params(params_star)
            log_alpha = ((lp_star + ll_star + log_jacobian(theta_star))
                         - (state.log_prior + ll_old + log_jacobian(theta)))
            if math.log(rng.random()) < log_alpha:
                state.engine.accept_params()
                state.params = params_star
                state.log_prior = lp_star
                accepted = True
            else:
                state.engine.reject_params()
    proposal.update(to_transformed(pack_params(state.params)))
    return "theta", accepted


def _accept_event(state, s, I_new, attrib_new, log_prop_ratio, rng):
    ll_old = state.loglik
    ll_new = state.engine.propose_event(s, I_new, attrib_new)
    log_alpha = ll_new - ll_old + log_prop_ratio
    if log_alpha >= 0 or math.log(rng.random()) < log_alpha:
        state.engine.accept()
        return True
    state.engine.reject()
    return False


def move_infection(state: ChainState, rng):
    """One infection-time update: kernels (contact/non-contact) x
    (cis/trans), chosen per the 0.5 switch rule."""
    eng = state.engine
    infected = state.infected_ids()
    if not len(infected):
        return "move_none", False
    s = int(infected[rng.integers(len(infected))])
    cands = eng.candidate_events(s)
    at_contact = eng.attrib[s] != NO_ATTRIB
    occult = eng.N[s] > eng.T_obs
    trans = rng.random() < 0.5

    if at_contact:
        # cands can be empty here only when s is the (conditioned-on) index
        # case, whose attribution carries no likelihood factor; both kernels
        # then auto-reject: (a) has no target, (d) has a zero-probability
        # reverse proposal.
        if not len(cands):
            return ("move_d" if trans else "move_a"), False
        if trans:  # (d) contact -> non-contact
            d = sojourn_ppf(state.sp, rng.random())
            I_new = eng.N[s] - d
            lpr = -math.log(len(cands)) - log_sojourn_pdf(state.sp, d)
            return "move_d", _accept_event(state, s, I_new, NO_ATTRIB, lpr, rng)
        # (a) contact -> contact; candidate set is unchanged by the move
        e_new = int(cands[rng.integers(len(cands))])
        I_new = eng.trace.ev_time[e_new]
        return "move_a", _accept_event(state, s, I_new, e_new, 0.0, rng)

    if trans and len(cands) and not occult:  # (c) non-contact -> contact
        e_new = int(cands[rng.integers(len(cands))])
        I_new = eng.trace.ev_time[e_new]
        d_old = eng.N[s] - eng.I[s]
        lpr = log_sojourn_pdf(state.sp, d_old) + math.log(len(cands))
        return "move_c", _accept_event(state, s, I_new, e_new, lpr, rng)

    # (b) non-contact -> non-contact (the only move for occults and for
    # individuals with no candidate contacts)
    if occult:
        d = _gtilde_sample(state.sp, rng)
        I_new = state.T_obs - d
        lpr = (_gtilde_logpdf(state.sp, state.T_obs - eng.I[s])
               - _gtilde_logpdf(state.sp, d))
    else:
        d = sojourn_ppf(state.sp, rng.random())
        I_new = eng.N[s] - d
        lpr = (log_sojourn_pdf(state.sp, eng.N[s] - eng.I[s])
               - log_sojourn_pdf(state.sp, d))
    return "move_b", _accept_event(state, s, I_new, NO_ATTRIB, lpr, rng)


def add_occult(state: ChainState, rng):
    sus = state.susceptible_ids()
    if not len(sus):
        return "add", False
    s = int(sus[rng.integers(len(sus))])
    m = len(state.occult_ids())
    d = _gtilde_sample(state.sp, rng)
    I_new = state.T_obs - d
    lpr = (math.log(len(sus)) - math.log(m + 1)
           - _gtilde_logpdf(state.sp, d))
    return "add", _accept_event(state, s, I_new, NO_ATTRIB, lpr, rng)


def delete_occult(state: ChainState, rng):
    occ = state.occult_ids()
    if not len(occ):
        return "delete", False
    s = int(occ[rng.integers(len(occ))])
    n_sus = len(state.susceptible_ids())
    d_cur = state.T_obs - state.engine.I[s]
    lpr = (math.log(len(occ)) + _gtilde_logpdf(state.sp, d_cur)
           - math.log(n_sus + 1))
    return "delete", _accept_event(state, s, np.inf, NO_ATTRIB, lpr, rng)


# ---------------------------------------------------------------------------
# Chain driver

@dataclass
class ChainConfig:
    iterations: int = 20000
    burn_in: int = 5000
    thin: int = 10
    z: int | None = None  # event updates per iteration; None = max(10, n/5)
    move_weights: tuple = (0.8, 0.1, 0.1)  # move / add / delete
    prior_spec: PriorSpec = field(default_factory=PriorSpec)
    ip: InfectivityParams = field(default_factory=InfectivityParams)
    sp: SojournParams = field(default_factory=SojournParams)
    init_params: TransmissionParams | None = None
    adapt_start: int = 1000
    adapt_scale: float | None = None
    adapt_jitter: float = 1e-8
    init_step: float = 0.1
    recompute_interval: int = 200

    def validate(self):
        if self.iterations <= 0 or self.burn_in < 0 or self.thin < 1:
            raise ConfigError("iterations/burn_in/thin out of range")
        if self.burn_in >= self.iterations:
            raise ConfigError("burn_in must be smaller than iterations")
        if len(self.move_weights) != 3 or min(self.move_weights) < 0:
            raise ConfigError("move_weights must be 3 non-negative numbers")


@dataclass
class PosteriorSet:
    theta: np.ndarray           # (n_samples, N_PARAMS)
    m: np.ndarray               # occult counts
    log_posterior: np.ndarray
    occults: list               # per sample: (ids array, times array)
    sample_iterations: np.ndarray
    acceptance: dict            # move name -> (accepted, attempted)
    max_drift: float
    T_obs: float
    n_individuals: int
    param_names: tuple = tuple(PARAM_NAMES)

    def __len__(self):
        return self.theta.shape[0]

    def component(self, name):
        return self.theta[:, self.param_names.index(name)]

    def final_params(self):
        return unpack_params(self.theta[-1])


def default_initial_params(prior_spec: PriorSpec) -> TransmissionParams:
    """Prior-mean start (probabilities at 1/2)."""
    return TransmissionParams(
        epsilon=prior_spec.epsilon.mean(), p=[0.5, 0.5],
        beta=[prior_spec.beta1.mean(), prior_spec.beta2.mean()],
        gamma=prior_spec.gamma.mean(), psi=prior_spec.psi.mean(),
        eta=np.concatenate([[1.0],
                            np.full(9, min(prior_spec.eta_rest.mean(), 1.0))]))


def initial_record(rec_observed: EpidemicRecord, sp: SojournParams):
    """Feasible augmented start: detected cases get I = N - median sojourn;
    the observed record's I entries are deliberately ignored."""
    n = rec_observed.size
    I = np.full(n, np.inf)
    med = sojourn_median(sp)
    detected = rec_observed.N <= rec_observed.T_obs
    I[detected] = rec_observed.N[detected] - med
    return EpidemicRecord(I, rec_observed.N.copy(), rec_observed.R.copy(),
                          rec_observed.T_obs)


def run_chain(pop, cts, rec_observed, config: ChainConfig, rng,
              start_state=None, proposal=None) -> PosteriorSet:
    """Run the sampler and return retained samples plus diagnostics.

    Deterministic given the rng state. Infection times in rec_observed are
    ignored; the chain builds its own augmentation from N and R.
    """
    config.validate()
    if start_state is None:
        params0 = config.init_params or default_initial_params(config.prior_spec)
        rec0 = initial_record(rec_observed, config.sp)
        state = ChainState(pop, params0, config.ip, config.sp, rec0, cts,
                           config.prior_spec)
    else:
        state = start_state
    if proposal is None:
        proposal = AdaptiveProposal(N_PARAMS, adapt_start=config.adapt_start,
                                    scale=config.adapt_scale,
                                    jitter=config.adapt_jitter,
                                    init_step=config.init_step)
    n_detected = int(np.sum(rec_observed.N <= rec_observed.T_obs))
    z = config.z if config.z is not None else max(10, n_detected // 5)
    weights = np.asarray(config.move_weights, dtype=float)
    wsum = weights.sum()

    thetas, ms, logposts, occults, iters = [], [], [], [], []
    acceptance = {}
    max_drift = 0.0

    def tally(name, ok):
        a, t = acceptance.get(name, (0, 0))
        acceptance[name] = (a + int(ok), t + 1)

    for it in range(config.iterations):
        name, ok = update_params(state, proposal, rng)
        tally(name, ok)
        if wsum > 0:
            for _ in range(z):
                u = rng.random() * wsum
                if u < weights[0]:
                    name, ok = move_infection(state, rng)
                elif u < weights[0] + weights[1]:
                    name, ok = add_occult(state, rng)
                else:
                    name, ok = delete_occult(state, rng)
                tally(name, ok)
        if config.recompute_interval and (it + 1) % config.recompute_interval == 0:
            max_drift = max(max_drift, state.engine.drift_check())
        if it >= config.burn_in and (it - config.burn_in) % config.thin == 0:
            thetas.append(pack_params(state.params))
            occ = state.occult_ids()
            ms.append(len(occ))
            occults.append((occ.copy(), state.engine.I[occ].copy()))
            logposts.append(state.log_posterior)
            iters.append(it)

    return PosteriorSet(
        theta=np.asarray(thetas), m=np.asarray(ms, dtype=int),
        log_posterior=np.asarray(logposts), occults=occults,
        sample_iterations=np.asarray(iters, dtype=int),
        acceptance=acceptance, max_drift=max_drift,
        T_obs=rec_observed.T_obs, n_individuals=pop.size)


def occult_risk_ranking(samples: PosteriorSet, pop):
    """(id, posterior occult probability) for every individual, sorted by
    descending probability with deterministic id tie-break."""
    if len(samples) == 0:
        raise EmptyPosterior("no retained samples")
    counts = np.zeros(pop.size)
    for ids, _ in samples.occults:
        counts[ids] += 1
    probs = counts / len(samples)
    order = np.lexsort((np.arange(pop.size), -probs))
    return [(int(j), float(probs[j])) for j in order]
