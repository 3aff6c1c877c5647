import numpy as np
import pytest

from epitrace.model import (EpidemicRecord, InfectivityParams, SojournParams,
                            TransmissionParams)
from epitrace.population import (AssociativeLayer, FrequencyLayer, Individual,
                                 NetworkSet, Population)


def make_population(coords, types=None, fm_edges=(), sh_edges=(), cp_pairs=()):
    """Build a population from raw pieces.

    fm_edges / sh_edges are (src, dst, rate_per_day) triples, cp_pairs are
    undirected (i, j) pairs.
    """
    n = len(coords)
    if types is None:
        types = [1] * n
    inds = [Individual(i, float(x), float(y), int(t))
            for i, ((x, y), t) in enumerate(zip(coords, types))]
    fm = FrequencyLayer([e[0] for e in fm_edges], [e[1] for e in fm_edges],
                        [e[2] for e in fm_edges], n)
    sh = FrequencyLayer([e[0] for e in sh_edges], [e[1] for e in sh_edges],
                        [e[2] for e in sh_edges], n)
    cp = AssociativeLayer(set((min(i, j), max(i, j)) for i, j in cp_pairs), n)
    return Population(inds, NetworkSet(fm, sh, cp))


def default_params(**overrides):
    kw = dict(epsilon=1e-4, p=[0.3, 0.9], beta=[0.008, 0.009], gamma=0.5,
              psi=0.2, eta=[1.0, 0.6] + [0.3] * 8)
    kw.update(overrides)
    return TransmissionParams(**kw)


@pytest.fixture
def ip():
    return InfectivityParams()


@pytest.fixture
def sp():
    return SojournParams()


def record(I, N, R, t_obs):
    return EpidemicRecord(np.asarray(I, float), np.asarray(N, float),
                          np.asarray(R, float), float(t_obs))


def random_instance(rng, n=5, t_obs=14.0, trace_prob=0.6):
    """Random small epidemic with mixed tracing coverage.

    Returns (pop, params, rec, cts). Includes rate-driven infections both
    inside and outside windows and, where possible, one contact-caused
    infection.
    """
    from epitrace.likelihood import ContactEvent, ContactTraceSet
    from epitrace.population import Channel

    coords = rng.uniform(0, 10, size=(n, 2))
    types = rng.integers(1, 11, size=n)
    fm, sh, cp = [], [], []
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            if rng.random() < 0.3:
                fm.append((i, j, rng.uniform(0.05, 0.6)))
            if rng.random() < 0.2:
                sh.append((i, j, rng.uniform(0.02, 0.3)))
            if i < j and rng.random() < 0.2:
                cp.append((i, j))
    pop = make_population(coords, types, fm, sh, cp)
    params = TransmissionParams(
        epsilon=rng.uniform(1e-4, 1e-3),
        p=rng.uniform(0.1, 0.9, size=2),
        beta=rng.uniform(0.002, 0.05, size=2),
        gamma=rng.uniform(0.2, 1.0),
        psi=rng.uniform(0.05, 0.4),
        eta=np.concatenate([[1.0], rng.uniform(0.2, 1.0, size=9)]))

    I = np.full(n, np.inf)
    N = np.full(n, np.inf)
    R = np.full(n, np.inf)
    I[0] = 0.0
    N[0] = rng.uniform(2.0, 10.0)
    R[0] = N[0] + rng.uniform(0.5, 2.0)
    for j in range(1, n):
        if rng.random() < 0.7:
            I[j] = rng.uniform(0.5, 12.0)
            N[j] = I[j] + rng.uniform(2.0, 10.0)
            R[j] = N[j] + rng.uniform(0.5, 2.0)
    # censor at t_obs: undetected infections become occult
    occ = N > t_obs
    N[occ] = np.inf
    R[occ] = np.inf
    R[R > t_obs] = np.inf
    rec = record(I, N, R, t_obs)

    w = rng.uniform(3.0, 8.0)
    traced = [j for j in range(n)
              if N[j] <= t_obs and rng.random() < trace_prob]
    windows = {j: (N[j] - w, N[j]) for j in traced}
    events = []
    for j in traced:
        lo, hi = windows[j]
        for _ in range(rng.integers(0, 4)):
            src = int(rng.integers(0, n))
            if src == j:
                continue
            t = rng.uniform(max(lo, 0.0), hi)
            ch = Channel.FM if rng.random() < 0.6 else Channel.SH
            events.append(ContactEvent(src, j, ch, t))
    # try to convert one traced infection into a contact-caused one
    for j in traced:
        lo, hi = windows[j]
        if not np.isfinite(I[j]):
            continue
        sources = [i for i in range(n)
                   if i != j and np.isfinite(I[i]) and I[i] < min(N[j], hi)]
        if not sources or rng.random() < 0.5:
            continue
        src = int(rng.choice(sources))
        t_lo = max(lo, I[src], 0.0)
        t_hi = min(hi, N[src], R[src], N[j])
        if t_hi <= t_lo:
            continue
        t = rng.uniform(t_lo, t_hi)
        rec.I[j] = t
        events.append(ContactEvent(src, j, Channel.FM, t))
        break
    cts = ContactTraceSet(windows, events, w)
    return pop, params, rec, cts
