"""Log posterior kernel: contact-tracing-embedded and plain likelihoods,
contact-trace data containers, and the independent prior.

Where a tracing window observes the frequency-network contact streams
into an individual, those streams contribute geometric (per-contact)
factors and are removed from the Poisson exposure; everything else
(company network, spatial kernel, background, and untraced periods)
contributes Poisson rate and survival factors. An infection time lying
on an observed inbound contact is a contact-caused infection; any other
infection time is rate-driven, including times inside the window, since
the unobserved channels stay active there.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .engine import NO_ATTRIB, LikelihoodEngine
from .errors import UnknownId, ValidationError
from .model import (EpidemicRecord, InfectivityParams, SojournParams,
                    TransmissionParams, infectivity_growth)
from .population import Channel, N_PRODUCTION_TYPES, Population

DEFAULT_WINDOW_DAYS = 21.0


@dataclass(frozen=True)
class ContactEvent:
    """One traced contact. Only frequency networks are ever traced."""

    source: int
    dest: int
    channel: Channel
    time: float

    def __post_init__(self):
        if self.channel not in (Channel.FM, Channel.SH):
            raise ValidationError(
                f"contact events must be FM or SH, got {self.channel}")
        if self.source == self.dest:
            raise ValidationError("self-contact")


class ContactTraceSet:
    """Tracing windows plus the observed contacts.

    ``windows`` maps a traced individual j to [N_j - w, N_j); only
    individuals notified by T_obs are ever traced, so occults never have
    windows. Every stored event must fall inside at least one window of
    its source or destination.
    """

    def __init__(self, windows, events, window_length=DEFAULT_WINDOW_DAYS):
        self.window_length = float(window_length)
        self.windows = {int(j): (float(lo), float(hi))
                        for j, (lo, hi) in windows.items()}
        self.events = sorted(set(events), key=lambda e: (e.time, e.source, e.dest))
        for e in self.events:
            if not (self._covers(e.source, e.time) or self._covers(e.dest, e.time)):
                raise ValidationError(
                    f"contact {e} lies in no window of its endpoints")

    def _covers(self, j, t):
        w = self.windows.get(j)
        return w is not None and w[0] <= t < w[1]

    @classmethod
    def empty(cls, window_length=DEFAULT_WINDOW_DAYS):
        return cls({}, [], window_length)

    @classmethod
    def for_record(cls, rec, traced_ids, events, window_length=DEFAULT_WINDOW_DAYS):
        """Build windows [N_j - w, N_j) for the given traced individuals."""
        windows = {}
        for j in traced_ids:
            if not rec.N[j] <= rec.T_obs:
                raise ValidationError(
                    f"individual {j} is not notified by T_obs; cannot be traced")
            windows[j] = (rec.N[j] - window_length, rec.N[j])
        return cls(windows, events, window_length)

    def __len__(self):
        return len(self.events)

    def is_empty(self):
        return not self.windows and not self.events

    def inbound(self, j):
        return [e for e in self.events
                if e.dest == j and self._covers(j, e.time)]


def window_of(cts: ContactTraceSet, j: int):
    """Tracing window [N_j - w, N_j) of j, or None if j is untraced
    (occults and untraced notified cases have no window)."""
    if j < 0:
        raise UnknownId(f"no individual with id {j}")
    return cts.windows.get(int(j))


def geometric_window_logterm(cts, pop, params, ip, rec, j) -> float:
    """Log-probability of the observed contact outcomes in j's window.

    Inbound contacts from sources infectious at contact time contribute
    log(1 - ptilde) before I_j and log(ptilde) at I_j exactly; contacts
    after I_j, and contacts from non-infectious sources, contribute 0.
    An in-window infection time lying on no contact is rate-driven and
    carries no geometric infection factor (the Poisson part owns it).
    """
    pop.check_id(j)
    total = 0.0
    Ij = rec.I[j]
    kappa = rec.kappa
    if j == kappa:
        return 0.0
    for e in cts.inbound(j):
        src = e.source
        if not rec.I[src] < e.time < min(rec.N[src], rec.R[src]):
            continue
        k = 0 if e.channel is Channel.FM else 1
        ptilde = (infectivity_growth(ip, e.time - rec.I[src])
                  * params.eta[pop.production_type[j] - 1] * params.p[k])
        if e.time == Ij:
            total += math.log(ptilde) if ptilde > 0 else -np.inf
        elif e.time < Ij:
            total += math.log1p(-ptilde)
    return total


def log_lik_ct(pop, params, ip, sp, rec, cts, attrib=None) -> float:
    """Log-likelihood embedding contact-tracing data where observed.

    With an empty ContactTraceSet this reduces exactly to
    log_lik_vanilla. Returns -inf for zero-probability configurations;
    use log_lik_ct_explained for the reason.
    """
    eng = LikelihoodEngine(pop, params, ip, sp, rec, cts, attrib=attrib)
    return eng.loglik()


def log_lik_ct_explained(pop, params, ip, sp, rec, cts, attrib=None):
    """(value, reason) pair; reason is None for finite values."""
    eng = LikelihoodEngine(pop, params, ip, sp, rec, cts, attrib=attrib)
    val = eng.loglik()
    reason = None
    if val == -np.inf:
        reason = "; ".join(eng.reasons) if eng.reasons else "zero-probability state"
    return val, reason


def log_lik_vanilla(pop, params, ip, sp, rec) -> float:
    """Plain partially-observed epidemic log-likelihood (no tracing data).

    Evaluated through the same engine with no windows, which short-circuits
    every tracing branch; the two entry points agree bitwise on shared
    inputs by construction.
    """
    eng = LikelihoodEngine(pop, params, ip, sp, rec, cts=None)
    return eng.loglik()


# ---------------------------------------------------------------------------
# Priors

@dataclass(frozen=True)
class GammaPrior:
    shape: float
    rate: float

    def logpdf(self, x):
        if x <= 0:
            return -np.inf
        return (self.shape * math.log(self.rate) - math.lgamma(self.shape)
                + (self.shape - 1.0) * math.log(x) - self.rate * x)

    def mean(self):
        return self.shape / self.rate

    def var(self):
        return self.shape / self.rate ** 2


@dataclass(frozen=True)
class BetaPrior:
    a: float
    b: float

    def logpdf(self, x):
        if not 0.0 <= x <= 1.0:
            return -np.inf
        out = (math.lgamma(self.a + self.b) - math.lgamma(self.a)
               - math.lgamma(self.b))
        if self.a != 1.0:
            if x == 0.0:
                return np.inf if self.a < 1 else -np.inf
            out += (self.a - 1.0) * math.log(x)
        if self.b != 1.0:
            if x == 1.0:
                return np.inf if self.b < 1 else -np.inf
            out += (self.b - 1.0) * math.log1p(-x)
        return out

    def mean(self):
        return self.a / (self.a + self.b)

    def var(self):
        s = self.a + self.b
        return self.a * self.b / (s * s * (s + 1.0))


@dataclass(frozen=True)
class FixedPrior:
    value: float

    def logpdf(self, x):
        return 0.0 if x == self.value else -np.inf


@dataclass(frozen=True)
class PriorSpec:
    """Independent priors per transmission-parameter component.

    Gamma for rates, Beta for probabilities; the reference
    susceptibility eta_1 is fixed at 1 and contributes nothing.
    """

    epsilon: GammaPrior = GammaPrior(0.15, 5000.0)
    p1: BetaPrior = BetaPrior(1.0, 1.0)
    p2: BetaPrior = BetaPrior(1.0, 1.0)
    beta1: GammaPrior = GammaPrior(2.048, 256.0)
    beta2: GammaPrior = GammaPrior(2.0, 111.0)
    gamma: GammaPrior = GammaPrior(1.5, 3.0)
    psi: GammaPrior = GammaPrior(10.0, 50.0)
    eta1: FixedPrior = FixedPrior(1.0)
    eta_rest: GammaPrior = GammaPrior(1.0, 10.0)

    def components(self):
        """(name, prior, getter) triples for the free components."""
        out = [("epsilon", self.epsilon, lambda q: q.epsilon),
               ("p1", self.p1, lambda q: q.p[0]),
               ("p2", self.p2, lambda q: q.p[1]),
               ("beta1", self.beta1, lambda q: q.beta[0]),
               ("beta2", self.beta2, lambda q: q.beta[1]),
               ("gamma", self.gamma, lambda q: q.gamma),
               ("psi", self.psi, lambda q: q.psi)]
        for k in range(2, N_PRODUCTION_TYPES + 1):
            out.append((f"eta{k}", self.eta_rest,
                        lambda q, _k=k: q.eta[_k - 1]))
        return out


def log_prior(params: TransmissionParams, prior_spec: PriorSpec) -> float:
    """Sum of independent log prior densities; -inf outside supports."""
    total = 0.0
    for _, prior, get in prior_spec.components():
        total += prior.logpdf(float(get(params)))
        if total == -np.inf:
            return total
    return float(total)
