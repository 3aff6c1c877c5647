import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from epitrace.errors import ParseError, UnknownId, ValidationError
from epitrace.population import (Channel, euclidean_distance, load_population,
                                 potential_infectors, save_population)

from conftest import default_params, make_population, record
from epitrace.model import InfectivityParams, pairwise_rate


def write_pop_dir(tmp_path, pop_rows, fm_rows=(), sh_rows=(), cp_rows=()):
    (tmp_path / "population.csv").write_text(
        "id,x_km,y_km,production_type\n" + "".join(f"{r}\n" for r in pop_rows))
    (tmp_path / "feedmill.csv").write_text(
        "src,dst,contacts_per_week\n" + "".join(f"{r}\n" for r in fm_rows))
    (tmp_path / "slaughterhouse.csv").write_text(
        "src,dst,contacts_per_week\n" + "".join(f"{r}\n" for r in sh_rows))
    (tmp_path / "company.csv").write_text(
        "src,dst\n" + "".join(f"{r}\n" for r in cp_rows))
    return tmp_path


def test_load_empty_networks(tmp_path):
    pop = load_population(write_pop_dir(
        tmp_path, ["0,0.0,0.0,1", "1,3.0,4.0,2", "2,1.0,1.0,10"]))
    assert pop.size == 3
    assert len(pop.networks.feedmill) == 0
    assert len(pop.networks.slaughterhouse) == 0
    assert len(pop.networks.company) == 0


def test_load_self_edge_rejected(tmp_path):
    d = write_pop_dir(tmp_path, ["5,0,0,1", "6,1,1,1"], fm_rows=["5,5,1.0"])
    with pytest.raises(ValidationError, match="self-edge"):
        load_population(d)


def test_duplicate_frequency_edges_sum(tmp_path):
    # two parallel contact streams superpose: rates add
    d = write_pop_dir(tmp_path, ["1,0,0,1", "2,1,0,1"],
                      fm_rows=["1,2,0.5", "1,2,0.25"])
    pop = load_population(d)
    assert len(pop.networks.feedmill) == 1
    assert pop.networks.feedmill.rate_of(0, 1) == pytest.approx(0.75 / 7.0)


def test_duplicate_association_rejected(tmp_path):
    d = write_pop_dir(tmp_path, ["0,0,0,1", "1,1,0,1"],
                      cp_rows=["0,1", "1,0"])
    with pytest.raises(ValidationError, match="duplicate association"):
        load_population(d)


def test_dangling_edge_rejected(tmp_path):
    d = write_pop_dir(tmp_path, ["0,0,0,1", "1,1,0,1"], fm_rows=["0,9,1.0"])
    with pytest.raises(ValidationError, match="dangling"):
        load_population(d)


def test_nonpositive_rate_rejected(tmp_path):
    d = write_pop_dir(tmp_path, ["0,0,0,1", "1,1,0,1"], fm_rows=["0,1,0.0"])
    with pytest.raises(ValidationError, match="non-positive"):
        load_population(d)


def test_bad_header_and_bad_row(tmp_path):
    (tmp_path / "population.csv").write_text("id,x,y\n0,0,0\n")
    with pytest.raises(ParseError):
        load_population(tmp_path)
    write_pop_dir(tmp_path, ["0,0,zero,1"])
    with pytest.raises(ParseError, match="population.csv:2"):
        load_population(tmp_path)


def test_production_type_range(tmp_path):
    d = write_pop_dir(tmp_path, ["0,0,0,11"])
    with pytest.raises(ValidationError, match="production_type"):
        load_population(d)


def test_ids_reindexed_densely(tmp_path):
    pop = load_population(write_pop_dir(
        tmp_path, ["10,0,0,1", "20,1,0,2"], fm_rows=["20,10,7.0"]))
    assert [ind.id for ind in pop.individuals] == [0, 1]
    assert list(pop.source_ids) == [10, 20]
    assert pop.networks.feedmill.rate_of(1, 0) == pytest.approx(1.0)


def test_euclidean_345():
    pop = make_population([(0, 0), (3, 4)])
    assert euclidean_distance(pop, 0, 1) == 5.0
    assert euclidean_distance(pop, 0, 0) == 0.0


def test_colocated_distinct_individuals_finite_hazard(ip):
    pop = make_population([(1, 1), (1, 1)])
    assert euclidean_distance(pop, 0, 1) == 0.0
    params = default_params()
    rec = record([0.0, np.inf], [10.0, np.inf], [11.0, np.inf], 20.0)
    rate = pairwise_rate(pop, params, ip, rec, 0, 1, Channel.SPATIAL, 5.0)
    assert np.isfinite(rate) and rate > 0


def test_unknown_id():
    pop = make_population([(0, 0), (1, 1)])
    with pytest.raises(UnknownId):
        euclidean_distance(pop, 0, 7)
    with pytest.raises(UnknownId):
        potential_infectors(pop, -1)


def test_potential_infectors_examples():
    pop = make_population([(0, 0), (1, 0), (2, 0)],
                          fm_edges=[(0, 1, 1.0)], cp_pairs=[(0, 1)])
    assert potential_infectors(pop, 1) == {(0, Channel.FM), (0, Channel.CP)}
    assert potential_infectors(pop, 2) == set()


def test_potential_infectors_brute_force():
    rng = np.random.default_rng(7)
    n = 1000
    coords = rng.uniform(0, 100, size=(n, 2))
    fm = [(int(a), int(b), float(r)) for a, b, r in
          zip(rng.integers(0, n, 3000), rng.integers(0, n, 3000),
              rng.uniform(0.1, 2.0, 3000)) if a != b]
    sh = [(int(a), int(b), float(r)) for a, b, r in
          zip(rng.integers(0, n, 1000), rng.integers(0, n, 1000),
              rng.uniform(0.1, 2.0, 1000)) if a != b]
    cp = [(int(a), int(b)) for a, b in
          zip(rng.integers(0, n, 800), rng.integers(0, n, 800)) if a != b]
    pop = make_population(coords, None, fm, sh, cp)
    for j in rng.integers(0, n, size=25):
        j = int(j)
        expected = set()
        for i, d, _ in fm:
            if d == j:
                expected.add((i, Channel.FM))
        for i, d, _ in sh:
            if d == j:
                expected.add((i, Channel.SH))
        for a, b in cp:
            lo, hi = min(a, b), max(a, b)
            if lo == j:
                expected.add((hi, Channel.CP))
            elif hi == j:
                expected.add((lo, Channel.CP))
        assert potential_infectors(pop, j) == expected


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3)),
                min_size=3, max_size=3))
def test_distance_symmetry_and_triangle(coords):
    pop = make_population(coords)
    d01 = euclidean_distance(pop, 0, 1)
    d10 = euclidean_distance(pop, 1, 0)
    d02 = euclidean_distance(pop, 0, 2)
    d12 = euclidean_distance(pop, 1, 2)
    assert d01 == d10
    assert d01 <= d02 + d12 + 1e-9


def test_save_load_roundtrip(tmp_path):
    rng = np.random.default_rng(3)
    pop = make_population(rng.uniform(0, 50, size=(20, 2)),
                          rng.integers(1, 11, size=20),
                          fm_edges=[(0, 1, 0.37), (4, 2, 1.25)],
                          sh_edges=[(3, 0, 0.11)],
                          cp_pairs=[(1, 2), (5, 6)])
    out = tmp_path / "popdir"
    save_population(pop, out)
    back = load_population(out)
    assert back.size == pop.size
    np.testing.assert_allclose(back.xy, pop.xy)
    np.testing.assert_array_equal(back.production_type, pop.production_type)
    for j in range(pop.size):
        assert potential_infectors(back, j) == potential_infectors(pop, j)
    assert back.networks.feedmill.rate_of(0, 1) == pytest.approx(0.37)
