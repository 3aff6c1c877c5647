"""Vectorized log-likelihood engine with incremental event updates.

The likelihood decomposes per individual j into
  - exposure integrals (background, unobserved-channel, and
    frequency-network parts, the latter clipped out of tracing windows),
  - a pressure factor at the infection time for rate-driven infections,
  - geometric contact terms (escapes and the infecting contact) for
    contacts observed inside j's own tracing window,
  - a sojourn term (density for detected, survival for occult).

The engine caches these per-individual terms so that moving one infection
time (or adding/deleting an occult) costs O(P) vector work instead of a
full O(P * n_inf) recomputation. A full recomputation runs whenever the
parameters change, the index case changes, or the drift guard fires.

Summations are fixed-order, so likelihood values are reproducible.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import InconsistentState
from .model import (
    SPATIAL_KERNEL_CENTER_KM,
    integrated_infectivity_growth,
    log_sojourn_pdf,
    log_sojourn_survival,
)

NO_ATTRIB = -1


class TraceData:
    """Contact-trace data unpacked into flat arrays for the engine.

    ``used`` marks events that enter the likelihood: events lying inside
    their *destination's* tracing window. Outbound-only observations stay
    stored but carry no likelihood weight.
    """

    def __init__(self, n, cts):
        self.w_start = np.full(n, np.inf)
        self.w_end = np.full(n, np.inf)
        self.traced = np.zeros(n, dtype=bool)
        events = [] if cts is None else list(cts.events)
        if cts is not None:
            for j, (lo, hi) in cts.windows.items():
                self.traced[j] = True
                self.w_start[j] = lo
                self.w_end[j] = hi
        m = len(events)
        self.ev_src = np.fromiter((e.source for e in events), np.int64, m)
        self.ev_dst = np.fromiter((e.dest for e in events), np.int64, m)
        self.ev_time = np.fromiter((e.time for e in events), np.float64, m)
        # channel index 0 = feedmill, 1 = slaughterhouse
        self.ev_chan = np.fromiter((0 if e.channel.value == "FM" else 1
                                    for e in events), np.int64, m)
        if m:
            in_dst_window = (self.traced[self.ev_dst]
                             & (self.ev_time >= self.w_start[self.ev_dst])
                             & (self.ev_time < self.w_end[self.ev_dst]))
        else:
            in_dst_window = np.zeros(0, dtype=bool)
        self.used = np.flatnonzero(in_dst_window)
        self.by_dst = [[] for _ in range(n)]
        self.by_src = [[] for _ in range(n)]
        for e in self.used:
            self.by_dst[self.ev_dst[e]].append(e)
            self.by_src[self.ev_src[e]].append(e)
        self.by_dst = [np.asarray(v, dtype=np.int64) for v in self.by_dst]
        self.by_src = [np.asarray(v, dtype=np.int64) for v in self.by_src]


class LikelihoodEngine:
    """Owns a mutable augmented-infection state and its cached likelihood."""

    def __init__(self, pop, params, ip, sp, rec, cts=None, attrib=None):
        self.pop = pop
        self.n = pop.size
        self.ip = ip
        self.sp = sp
        self.T_obs = float(rec.T_obs)
        self.N = rec.N.copy()
        self.R = rec.R.copy()
        self.I = rec.I.copy()
        self.trace = TraceData(self.n, cts)
        if attrib is None:
            attrib = self._derive_attrib()
        self.attrib = np.asarray(attrib, dtype=np.int64).copy()
        self._check_attrib()
        self.D = pop.distance_matrix()
        self.ptype = pop.production_type
        nets = pop.networks
        # flat directed frequency edges, channel-tagged
        self.net_src = np.concatenate([nets.feedmill.src, nets.slaughterhouse.src])
        self.net_dst = np.concatenate([nets.feedmill.dst, nets.slaughterhouse.dst])
        self.net_rate = np.concatenate([nets.feedmill.rate, nets.slaughterhouse.rate])
        self.net_chan = np.concatenate([
            np.zeros(len(nets.feedmill), dtype=np.int64),
            np.ones(len(nets.slaughterhouse), dtype=np.int64)])
        out = [[] for _ in range(self.n)]
        for e, s in enumerate(self.net_src):
            out[s].append(e)
        self.net_out = [np.asarray(v, dtype=np.int64) for v in out]
        self.cp_neighbors = [nets.company.neighbors(i) for i in range(self.n)]
        self._pending = None
        self.set_params(params)

    # -- attribution ------------------------------------------------------

    def _derive_attrib(self):
        """Attribute infections to observed contacts by exact time match."""
        attrib = np.full(self.n, NO_ATTRIB, dtype=np.int64)
        tr = self.trace
        for j in range(self.n):
            if not np.isfinite(self.I[j]):
                continue
            for e in tr.by_dst[j]:
                if tr.ev_time[e] == self.I[j] and self._source_infectious(e):
                    attrib[j] = e
                    break
        return attrib

    def _source_infectious(self, e):
        s = self.trace.ev_src[e]
        t = self.trace.ev_time[e]
        return self.I[s] < t < min(self.N[s], self.R[s])

    def _check_attrib(self):
        tr = self.trace
        for j in range(self.n):
            e = self.attrib[j]
            if e == NO_ATTRIB:
                continue
            if not np.isfinite(self.I[j]):
                raise InconsistentState(f"attribution on uninfected individual {j}")
            if e < 0 or e >= len(tr.ev_time) or tr.ev_dst[e] != j:
                raise InconsistentState(f"attributed event {e} is not inbound to {j}")
            if tr.ev_time[e] != self.I[j]:
                raise InconsistentState(
                    f"individual {j}: I={self.I[j]} does not match attributed "
                    f"contact time {tr.ev_time[e]}")

    # -- parameter-dependent coefficients ---------------------------------

    def set_params(self, params):
        """Install a parameter vector and fully recompute. Returns loglik."""
        self.params = params
        self.s_vec = params.eta[self.ptype - 1]
        self.K = np.exp(-params.psi * (self.D - SPATIAL_KERNEL_CENTER_KM))
        np.fill_diagonal(self.K, 0.0)
        # per-edge frequency-network weights s_j p_k r_ij
        self.net_w = self.s_vec[self.net_dst] * params.p[self.net_chan] * self.net_rate
        return self.recompute()

    def propose_params(self, params):
        """Trial parameter vector; revert with reject_params."""
        self._params_snap = (self.params, self.s_vec, self.K, self.net_w,
                             self.exp_eps, self.exp_dense, self.exp_net,
                             self.rate_dense, self.rate_net, self.geo, self.soj,
                             self.kappa, self.t_kappa, self.total)
        return self.set_params(params)

    def accept_params(self):
        self._params_snap = None

    def reject_params(self):
        (self.params, self.s_vec, self.K, self.net_w,
         self.exp_eps, self.exp_dense, self.exp_net,
         self.rate_dense, self.rate_net, self.geo, self.soj,
         self.kappa, self.t_kappa, self.total) = self._params_snap
        self._params_snap = None

    def _dense_row(self, i):
        """s_j (beta2 K_ij + beta1 c_ij) for all j, growth-phase coefficient."""
        row = self.params.beta[1] * self.K[i] * self.s_vec
        nb = self.cp_neighbors[i]
        if len(nb):
            row[nb] += self.params.beta[0] * self.s_vec[nb]
        return row

    def _notified_row(self, i):
        """gamma s_j beta2 K_ij, notified-phase coefficient (spatial only)."""
        return self.params.gamma * self.params.beta[1] * self.K[i] * self.s_vec

    # -- derived state vectors ---------------------------------------------

    def _exposure_bounds(self):
        e_vec = np.minimum(self.I, self.T_obs)
        fmsh_end = np.minimum(e_vec, self.trace.w_start)
        return e_vec, fmsh_end

    def _q_at(self, src, tau):
        """Infectivity of src at time-since-infection tau (tau > 0 assumed)."""
        return 1.0 / (1.0 + self.ip.mu * np.exp(-self.ip.nu * np.asarray(tau)))

    # -- full recomputation -------------------------------------------------

    def recompute(self):
        n = self.n
        self.exp_eps = np.zeros(n)
        self.exp_dense = np.zeros(n)
        self.exp_net = np.zeros(n)
        self.rate_dense = np.zeros(n)
        self.rate_net = np.zeros(n)
        self.geo = np.zeros(n)
        self.soj = np.zeros(n)
        self.reasons = []

        inf_idx = np.flatnonzero(np.isfinite(self.I))
        self.kappa = int(inf_idx[np.argmin(self.I[inf_idx])]) if len(inf_idx) else None
        self.t_kappa = self.I[self.kappa] if self.kappa is not None else np.inf
        if self.kappa is None:
            self.total = 0.0
            return self.total

        e_vec, fmsh_end = self._exposure_bounds()
        self.exp_eps = self.params.epsilon * np.maximum(0.0, e_vec - self.t_kappa)
        for i in inf_idx:
            self._apply_source(int(i), e_vec, fmsh_end, sign=+1.0)
        for j in range(n):
            self.geo[j] = self._geo_term(j)
            self.soj[j] = self._sojourn_term(j)
        return self._assemble()

    def _apply_source(self, i, e_vec, fmsh_end, sign):
        """Add (sign=+1) or remove (sign=-1) all source-side contributions
        of individual i: exposure integrals and pressure-at-infection terms
        onto every other individual."""
        Ii = self.I[i]
        if not np.isfinite(Ii):
            return
        inf_j = np.flatnonzero(np.isfinite(self.I))
        inf_j = inf_j[inf_j != i]
        tj = self.I[inf_j] if len(inf_j) else None

        growth_end = min(self.N[i], self.R[i], self.T_obs)
        dense = self._dense_row(i)
        if growth_end > Ii:
            hi = np.minimum(e_vec, growth_end)
            mask = hi > Ii
            mask[i] = False
            if mask.any():
                dq = integrated_infectivity_growth(self.ip, 0.0,
                                                   np.where(mask, hi - Ii, 0.0))
                self.exp_dense += sign * np.where(mask, dense * dq, 0.0)
            edges = self.net_out[i]
            if len(edges):
                dsts = self.net_dst[edges]
                hi_e = np.minimum(fmsh_end[dsts], growth_end)
                m = hi_e > Ii
                if m.any():
                    dq = integrated_infectivity_growth(
                        self.ip, 0.0, np.where(m, hi_e - Ii, 0.0))
                    np.add.at(self.exp_net, dsts[m],
                              sign * (self.net_w[edges] * dq)[m])
        # notified phase: spatial only, q = 1, gamma modulated
        lo = self.N[i]
        hi_cap = min(self.R[i], self.T_obs)
        noted = None
        if hi_cap > lo:
            noted = self._notified_row(i)
            dur = np.maximum(0.0, np.minimum(e_vec, hi_cap) - lo)
            dur[i] = 0.0
            if dur.any():
                self.exp_dense += sign * noted * dur

        # pressure contributions at other infecteds' infection instants
        if tj is None:
            return
        growing = (tj > Ii) & (tj < min(self.N[i], self.R[i]))
        if growing.any():
            sel = inf_j[growing]
            q = self._q_at(i, tj[growing] - Ii)
            np.add.at(self.rate_dense, sel, sign * dense[sel] * q)
        in_notified = (tj >= self.N[i]) & (tj < self.R[i])
        if in_notified.any():
            if noted is None:
                noted = self._notified_row(i)
            sel = inf_j[in_notified]
            np.add.at(self.rate_dense, sel, sign * noted[sel])
        edges = self.net_out[i]
        if len(edges):
            dsts = self.net_dst[edges]
            td = self.I[dsts]
            m = (np.isfinite(td) & (td < self.trace.w_start[dsts])  # outside window
                 & (td > Ii) & (td < min(self.N[i], self.R[i])))
            if m.any():
                q = self._q_at(i, td[m] - Ii)
                np.add.at(self.rate_net, dsts[m], sign * self.net_w[edges][m] * q)

    def _receiver_refresh(self, s, e_vec, fmsh_end):
        """Recompute all receiver-side terms of s (exposure into s and the
        pressure at s's infection instant)."""
        self.exp_eps[s] = self.params.epsilon * max(0.0, e_vec[s] - self.t_kappa)
        exp_d = exp_n = rate_d = rate_n = 0.0
        Is = self.I[s]
        s_inf = np.isfinite(Is)
        gate_open = Is < self.trace.w_start[s]
        for i in np.flatnonzero(np.isfinite(self.I)):
            i = int(i)
            if i == s:
                continue
            Ii = self.I[i]
            growth_end = min(self.N[i], self.R[i], self.T_obs)
            dense_is = None
            if growth_end > Ii:
                hi = min(e_vec[s], growth_end)
                if hi > Ii:
                    dense_is = self._dense_row(i)[s]
                    exp_d += dense_is * integrated_infectivity_growth(
                        self.ip, 0.0, hi - Ii)
            lo = self.N[i]
            hi_cap = min(self.R[i], self.T_obs)
            if hi_cap > lo:
                dur = max(0.0, min(e_vec[s], hi_cap) - lo)
                if dur > 0:
                    exp_d += self._notified_row(i)[s] * dur
            w_is = 0.0
            edges = self.net_out[i]
            if len(edges):
                sel = edges[self.net_dst[edges] == s]
                if len(sel):
                    w_is = float(np.sum(self.net_w[sel]))
            if w_is:
                hi = min(fmsh_end[s], growth_end)
                if hi > Ii:
                    exp_n += w_is * integrated_infectivity_growth(
                        self.ip, 0.0, hi - Ii)
            if s_inf:
                if Ii < Is < min(self.N[i], self.R[i]):
                    q = float(self._q_at(i, Is - Ii))
                    if dense_is is None:
                        dense_is = self._dense_row(i)[s]
                    rate_d += dense_is * q
                    if w_is and gate_open:
                        rate_n += w_is * q
                elif self.N[i] <= Is < self.R[i]:
                    rate_d += self._notified_row(i)[s]
        self.exp_dense[s] = exp_d
        self.exp_net[s] = exp_n
        self.rate_dense[s] = rate_d
        self.rate_net[s] = rate_n

    def _geo_term(self, j):
        """Escape and infection log-factors for contacts in j's window."""
        tr = self.trace
        evs = tr.by_dst[j]
        if not len(evs) or j == self.kappa:
            return 0.0
        total = 0.0
        Ij = self.I[j]
        att = self.attrib[j]
        for e in evs:
            t = tr.ev_time[e]
            src = tr.ev_src[e]
            if not self.I[src] < t < min(self.N[src], self.R[src]):
                if e == att:
                    self.reasons.append(
                        f"individual {j}: attributed contact source {src} "
                        f"not infectious at t={t}")
                    return -np.inf
                continue
            ptilde = (float(self._q_at(src, t - self.I[src])) * self.s_vec[j]
                      * self.params.p[tr.ev_chan[e]])
            if e == att:
                if ptilde <= 0.0:
                    self.reasons.append(
                        f"individual {j}: zero infection probability at "
                        f"attributed contact")
                    return -np.inf
                total += math.log(ptilde)
            elif t < Ij:
                total += math.log1p(-ptilde)
        return total

    def _sojourn_term(self, j):
        Ij = self.I[j]
        if not np.isfinite(Ij):
            return 0.0
        if self.N[j] <= self.T_obs:
            d = self.N[j] - Ij
            if d <= 0:
                self.reasons.append(f"individual {j}: I >= N")
                return -np.inf
            return log_sojourn_pdf(self.sp, d)
        if Ij > self.T_obs:
            self.reasons.append(f"individual {j}: occult infected after T_obs")
            return -np.inf
        return log_sojourn_survival(self.sp, self.T_obs - Ij)

    def _assemble(self):
        inf_mask = np.isfinite(self.I)
        need_rate = inf_mask & (self.attrib == NO_ATTRIB)
        if self.kappa is not None:
            need_rate[self.kappa] = False
        lam = self.params.epsilon + self.rate_dense + self.rate_net
        rate_logs = 0.0
        idx = np.flatnonzero(need_rate)
        if len(idx):
            vals = lam[idx]
            if (vals <= 0.0).any():
                bad = idx[vals <= 0.0]
                self.reasons.append(
                    f"zero pressure at infection time of {bad.tolist()}")
                rate_logs = -np.inf
            else:
                rate_logs = float(np.sum(np.log(vals)))
        self.total = float(
            -(np.sum(self.exp_eps) + np.sum(self.exp_dense) + np.sum(self.exp_net))
            + rate_logs + np.sum(self.geo) + np.sum(self.soj))
        return self.total

    # -- incremental updates ------------------------------------------------

    def loglik(self):
        return self.total

    def propose_event(self, s, I_new, attrib_new=NO_ATTRIB):
        """Set I[s] (+inf deletes, finite adds/moves) and return the new
        log-likelihood. Call accept() or reject() before the next proposal.
        """
        if self._pending is not None:
            raise InconsistentState("previous proposal not resolved")
        self._pending = (
            s, self.I[s], self.attrib[s], self.total, self.kappa, self.t_kappa,
            self.exp_eps.copy(), self.exp_dense.copy(), self.exp_net.copy(),
            self.rate_dense.copy(), self.rate_net.copy(),
            self.geo.copy(), self.soj.copy())

        trial = self.I.copy()
        trial[s] = I_new
        fin = np.isfinite(trial)
        if fin.any():
            k_new = int(np.argmin(np.where(fin, trial, np.inf)))
            t_new = trial[k_new]
        else:
            k_new, t_new = None, np.inf
        if k_new != self.kappa or t_new != self.t_kappa:
            # index case changed: every exposure origin shifts
            self.I[s] = I_new
            self.attrib[s] = attrib_new
            return self.recompute()

        e_vec, fmsh_end = self._exposure_bounds()
        self._apply_source(s, e_vec, fmsh_end, sign=-1.0)
        geo_dirty = {int(self.trace.ev_dst[e]) for e in self.trace.by_src[s]}
        geo_dirty.add(s)

        self.I[s] = I_new
        self.attrib[s] = attrib_new

        e_vec, fmsh_end = self._exposure_bounds()
        self._apply_source(s, e_vec, fmsh_end, sign=+1.0)
        self._receiver_refresh(s, e_vec, fmsh_end)
        for j in geo_dirty:
            self.geo[j] = self._geo_term(j)
        self.soj[s] = self._sojourn_term(s)
        return self._assemble()

    def accept(self):
        self._pending = None

    def reject(self):
        (s, I_old, attrib_old, self.total, self.kappa, self.t_kappa,
         self.exp_eps, self.exp_dense, self.exp_net,
         self.rate_dense, self.rate_net, self.geo, self.soj) = self._pending
        self.I[s] = I_old
        self.attrib[s] = attrib_old
        self._pending = None

    def drift_check(self):
        """Fresh full recomputation; returns |cached - fresh| and refreshes."""
        cached = self.total
        fresh = self.recompute()
        return abs(cached - fresh)

    # -- candidate contacts --------------------------------------------------

    def candidate_events(self, s):
        """Indices of s's in-window inbound contacts from currently
        infectious sources (the transdimensional proposal set)."""
        evs = self.trace.by_dst[s]
        return np.asarray(
            [e for e in evs if self._source_infectious(e)], dtype=np.int64)
