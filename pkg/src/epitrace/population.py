"""Static population: individual attributes, coordinates, contact-network layers.

Everything here is immutable after load and safe for shared concurrent
reads. Frequency-network rates are stored in contacts/day; input files
carry contacts/week and are divided by 7 on load.
"""

from __future__ import annotations

import csv
import enum
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import ParseError, UnknownId, ValidationError

N_PRODUCTION_TYPES = 10

POPULATION_HEADER = ["id", "x_km", "y_km", "production_type"]
FREQUENCY_HEADER = ["src", "dst", "contacts_per_week"]
ASSOCIATIVE_HEADER = ["src", "dst"]

POPULATION_FILE = "population.csv"
FEEDMILL_FILE = "feedmill.csv"
SLAUGHTERHOUSE_FILE = "slaughterhouse.csv"
COMPANY_FILE = "company.csv"


class Channel(enum.Enum):
    """Transmission channel tags.

    FM and SH are frequency networks (per-edge contact rates), CP is the
    associative network, SPATIAL and BACKGROUND are dense channels that
    are never enumerated edge-wise.
    """

    FM = "FM"
    SH = "SH"
    CP = "CP"
    SPATIAL = "SPATIAL"
    BACKGROUND = "BACKGROUND"


FREQUENCY_CHANNELS = (Channel.FM, Channel.SH)


@dataclass(frozen=True)
class Individual:
    id: int
    x_km: float
    y_km: float
    production_type: int


class FrequencyLayer:
    """Sparse directed rate map (i, j) -> contacts/day, with in/out indexes."""

    def __init__(self, src, dst, rate_per_day, n):
        self.src = np.asarray(src, dtype=np.int64)
        self.dst = np.asarray(dst, dtype=np.int64)
        self.rate = np.asarray(rate_per_day, dtype=np.float64)
        self.n = n
        self._in_index = _bucket_edges(self.dst, n)
        self._out_index = _bucket_edges(self.src, n)
        self._lookup = {(int(s), int(d)): float(r)
                        for s, d, r in zip(self.src, self.dst, self.rate)}

    def __len__(self):
        return len(self.src)

    def rate_of(self, i, j):
        return self._lookup.get((i, j), 0.0)

    def in_edges(self, j):
        """(sources, rates) of edges pointing into j."""
        idx = self._in_index[j]
        return self.src[idx], self.rate[idx]

    def out_edges(self, i):
        """(destinations, rates) of edges leaving i."""
        idx = self._out_index[i]
        return self.dst[idx], self.rate[idx]


class AssociativeLayer:
    """Symmetric 0/1 adjacency; stored once per unordered pair."""

    def __init__(self, pairs, n):
        self.n = n
        self._pairs = set()
        neigh = [[] for _ in range(n)]
        for i, j in pairs:
            key = (min(i, j), max(i, j))
            self._pairs.add(key)
        for i, j in self._pairs:
            neigh[i].append(j)
            neigh[j].append(i)
        self._neighbors = [np.array(sorted(v), dtype=np.int64) for v in neigh]

    def __len__(self):
        return len(self._pairs)

    def has_edge(self, i, j):
        return (min(i, j), max(i, j)) in self._pairs

    def neighbors(self, i):
        return self._neighbors[i]


@dataclass
class NetworkSet:
    feedmill: FrequencyLayer
    slaughterhouse: FrequencyLayer
    company: AssociativeLayer

    def frequency_layer(self, channel):
        if channel is Channel.FM:
            return self.feedmill
        if channel is Channel.SH:
            return self.slaughterhouse
        raise ValueError(f"{channel} is not a frequency network")


class Population:
    """Individuals plus network layers; validated and densely re-indexed."""

    def __init__(self, individuals, networks, source_ids=None):
        self.individuals = list(individuals)
        self.networks = networks
        n = len(self.individuals)
        self.source_ids = (np.arange(n, dtype=np.int64) if source_ids is None
                           else np.asarray(source_ids, dtype=np.int64))
        self.xy = np.array([[ind.x_km, ind.y_km] for ind in self.individuals],
                           dtype=np.float64).reshape(n, 2)
        self.production_type = np.array(
            [ind.production_type for ind in self.individuals], dtype=np.int64)
        self._dist = None

    def __len__(self):
        return len(self.individuals)

    @property
    def size(self):
        return len(self.individuals)

    def check_id(self, i):
        if not (isinstance(i, (int, np.integer)) and 0 <= i < self.size):
            raise UnknownId(f"no individual with id {i!r}")

    def distance_matrix(self):
        """Full pairwise Euclidean distance matrix (km), cached."""
        if self._dist is None:
            diff = self.xy[:, None, :] - self.xy[None, :, :]
            self._dist = np.sqrt((diff ** 2).sum(axis=2))
        return self._dist


def _bucket_edges(endpoint, n):
    buckets = [[] for _ in range(n)]
    for e, v in enumerate(endpoint):
        buckets[v].append(e)
    return [np.array(b, dtype=np.int64) for b in buckets]


def euclidean_distance(pop: Population, i: int, j: int) -> float:
    """Planar distance in km between individuals i and j."""
    pop.check_id(i)
    pop.check_id(j)
    return float(np.hypot(*(pop.xy[i] - pop.xy[j])))


def potential_infectors(pop: Population, j: int) -> set:
    """All (i, channel) with a nonzero network edge into j.

    Spatial and background channels are dense and deliberately not
    enumerated here.
    """
    pop.check_id(j)
    out = set()
    for channel in FREQUENCY_CHANNELS:
        layer = pop.networks.frequency_layer(channel)
        srcs, _ = layer.in_edges(j)
        out.update((int(i), channel) for i in srcs)
    out.update((int(i), Channel.CP) for i in pop.networks.company.neighbors(j))
    return out


# ---------------------------------------------------------------------------
# Loading

def load_population(path: str) -> Population:
    """Load a population directory.

    Expects ``population.csv`` plus optional ``feedmill.csv``,
    ``slaughterhouse.csv`` and ``company.csv``; missing or empty edge
    files yield empty layers.
    """
    if not os.path.isdir(path):
        raise ParseError(path, 0, "population directory does not exist")
    pop_csv = os.path.join(path, POPULATION_FILE)
    if not os.path.isfile(pop_csv):
        raise ParseError(pop_csv, 0, "missing population file")
    individuals, id_map, source_ids = _read_individuals(pop_csv)
    n = len(individuals)

    fm = _read_frequency_layer(os.path.join(path, FEEDMILL_FILE), id_map, n)
    sh = _read_frequency_layer(os.path.join(path, SLAUGHTERHOUSE_FILE), id_map, n)
    cp = _read_associative_layer(os.path.join(path, COMPANY_FILE), id_map, n)

    return Population(individuals, NetworkSet(fm, sh, cp), source_ids=source_ids)


def _open_rows(path, header):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            first = next(reader)
        except StopIteration:
            return
        if [c.strip() for c in first] != header:
            raise ParseError(path, 1, f"expected header {','.join(header)}")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            yield lineno, [c.strip() for c in row]


def _read_individuals(path):
    individuals = []
    id_map = {}
    source_ids = []
    for lineno, row in _open_rows(path, POPULATION_HEADER):
        if len(row) != 4:
            raise ParseError(path, lineno, f"expected 4 fields, got {len(row)}")
        try:
            raw_id = int(row[0])
            x, y = float(row[1]), float(row[2])
            ptype = int(row[3])
        except ValueError as exc:
            raise ParseError(path, lineno, str(exc)) from None
        if raw_id in id_map:
            raise ValidationError(f"{path}:{lineno}: duplicate id {raw_id}")
        if not 1 <= ptype <= N_PRODUCTION_TYPES:
            raise ValidationError(
                f"{path}:{lineno}: production_type {ptype} outside 1..{N_PRODUCTION_TYPES}")
        dense = len(individuals)
        id_map[raw_id] = dense
        source_ids.append(raw_id)
        individuals.append(Individual(dense, x, y, ptype))
    return individuals, id_map, source_ids


def _map_endpoint(path, lineno, id_map, raw):
    try:
        raw_id = int(raw)
    except ValueError as exc:
        raise ParseError(path, lineno, str(exc)) from None
    if raw_id not in id_map:
        raise ValidationError(f"{path}:{lineno}: dangling edge id {raw_id}")
    return id_map[raw_id]


def _read_frequency_layer(path, id_map, n):
    # duplicate directed edges superpose: Poisson rates add
    rates = {}
    if os.path.isfile(path):
        for lineno, row in _open_rows(path, FREQUENCY_HEADER):
            if len(row) != 3:
                raise ParseError(path, lineno, f"expected 3 fields, got {len(row)}")
            i = _map_endpoint(path, lineno, id_map, row[0])
            j = _map_endpoint(path, lineno, id_map, row[1])
            try:
                per_week = float(row[2])
            except ValueError as exc:
                raise ParseError(path, lineno, str(exc)) from None
            if i == j:
                raise ValidationError(f"{path}:{lineno}: self-edge ({i}, {j})")
            if not per_week > 0:
                raise ValidationError(
                    f"{path}:{lineno}: non-positive rate {per_week}")
            rates[(i, j)] = rates.get((i, j), 0.0) + per_week / 7.0
    src = [k[0] for k in rates]
    dst = [k[1] for k in rates]
    return FrequencyLayer(src, dst, list(rates.values()), n)


def _read_associative_layer(path, id_map, n):
    pairs = set()
    if os.path.isfile(path):
        for lineno, row in _open_rows(path, ASSOCIATIVE_HEADER):
            if len(row) != 2:
                raise ParseError(path, lineno, f"expected 2 fields, got {len(row)}")
            i = _map_endpoint(path, lineno, id_map, row[0])
            j = _map_endpoint(path, lineno, id_map, row[1])
            if i == j:
                raise ValidationError(f"{path}:{lineno}: self-edge ({i}, {j})")
            key = (min(i, j), max(i, j))
            if key in pairs:
                raise ValidationError(
                    f"{path}:{lineno}: duplicate association {key}")
            pairs.add(key)
    return AssociativeLayer(pairs, n)


# ---------------------------------------------------------------------------
# Writing (round-trip support for generated populations)

def save_population(pop: Population, path: str) -> None:
    """Write a population back out in the directory layout load expects."""
    os.makedirs(path, exist_ok=True)
    with open(os.path.join(path, POPULATION_FILE), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(POPULATION_HEADER)
        for ind in pop.individuals:
            w.writerow([ind.id, repr(ind.x_km), repr(ind.y_km), ind.production_type])
    for fname, layer in ((FEEDMILL_FILE, pop.networks.feedmill),
                         (SLAUGHTERHOUSE_FILE, pop.networks.slaughterhouse)):
        with open(os.path.join(path, fname), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(FREQUENCY_HEADER)
            for s, d, r in zip(layer.src, layer.dst, layer.rate):
                w.writerow([int(s), int(d), repr(float(r) * 7.0)])
    with open(os.path.join(path, COMPANY_FILE), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(ASSOCIATIVE_HEADER)
        for i, j in sorted(pop.networks.company._pairs):
            w.writerow([i, j])
