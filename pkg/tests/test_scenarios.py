import os

import numpy as np
import pytest

from commonatoms.model import ValidationError
from commonatoms.scenarios import (SCENARIO1_MEANS, gen_scenario1,
                                   gen_scenario2, gen_scenario3, generate,
                                   load_abundance_table, read_dataset,
                                   read_truth, scenario3_class_of,
                                   write_dataset, write_truth)


# ---------------------------------------------------------------------------
# scenario 1


def test_scenario1_case_a_shape():
    data, dc, oc = gen_scenario1("A", 75, seed=7)
    assert data.n_units == 12
    assert np.all(data.lengths == 75)
    assert data.kind == "continuous"
    assert np.array_equal(dc, np.repeat(np.arange(6), 2))
    assert len(oc) == 12


def test_scenario1_case_b_lengths_proportional():
    data, dc, _ = gen_scenario1("B", 5, seed=7)
    assert np.array_equal(data.lengths,
                          np.repeat(5 * np.arange(1, 7), 2))


def test_scenario1_first_mixture_single_component():
    data, _, oc = gen_scenario1("A", 10_000, seed=3)
    unit = data.units[0]
    se = np.sqrt(0.6 / len(unit))
    assert abs(unit.mean() - 0.0) < 3 * se
    assert abs(unit.var() - 0.6) < 0.05
    assert np.all(oc[0] == 0)


def test_scenario1_unit_means_match_mixture_means():
    data, _, _ = gen_scenario1("A", 10_000, seed=4)
    for h in range(1, 7):
        unit = data.units[2 * (h - 1)]
        expect = SCENARIO1_MEANS[:h].mean()  # equal weights 1/h
        spread = np.sqrt(0.6 + SCENARIO1_MEANS[:h].var())
        assert abs(unit.mean() - expect) < 3 * spread / np.sqrt(len(unit))


def test_scenario1_determinism_and_validation():
    a = gen_scenario1("A", 30, seed=9)
    b = gen_scenario1("A", 30, seed=9)
    assert all(np.array_equal(x, y) for x, y in zip(a[0].units, b[0].units))
    with pytest.raises(ValidationError):
        gen_scenario1("C", 10, seed=0)
    with pytest.raises(ValidationError):
        gen_scenario1("A", 0, seed=0)


# ---------------------------------------------------------------------------
# scenario 2


def test_scenario2_shape_and_truth():
    data, dc, oc = gen_scenario2(2, seed=5)
    assert data.n_units == 8
    assert np.all(data.lengths == 40)
    assert np.array_equal(dc, np.repeat(np.arange(4), 2))
    flat = np.concatenate(oc)
    assert set(np.unique(flat)) <= set(range(5))


def test_scenario2_first_mixture_weights():
    data, _, oc = gen_scenario2(50, seed=6)
    first_mix = np.concatenate(oc[:50])
    freq = np.mean(first_mix == 0)
    assert abs(freq - 0.75) < 3 * np.sqrt(0.75 * 0.25 / len(first_mix))


def test_scenario2_shared_component_has_one_label():
    _, _, oc = gen_scenario2(30, seed=8)
    # component N(0, 0.6) appears in every mixture under label 0
    for block in range(4):
        flat = np.concatenate(oc[block * 30:(block + 1) * 30])
        assert 0 in set(flat)


# ---------------------------------------------------------------------------
# scenario 3


def test_scenario3_composition_and_weights():
    data, dc, oc = gen_scenario3(100, seed=1)
    assert data.n_units == 10
    assert np.all(data.lengths == 200)
    assert data.kind == "count"
    assert np.array_equal(dc, np.arange(10) % 3)
    for unit in data.units:
        # stratified mixture: frequency of {0, 1} at least the design mass
        assert np.mean(unit <= 1) >= 0.5
        assert np.all(unit >= 0)
    # mixture supports: round-robin 10, 50, 100
    assert data.units[0].max() <= 10
    assert data.units[1].max() <= 50
    assert data.units[2].max() <= 100


def test_scenario3_truth_classes_by_value():
    data, _, oc = gen_scenario3(40, seed=2)
    for unit, classes in zip(data.units, oc):
        assert np.all(classes == scenario3_class_of(unit))
    # a zero or one is low class even when the uniform component made it
    assert np.array_equal(scenario3_class_of([0, 1, 2, 10, 11, 50, 51, 100]),
                          [0, 0, 1, 1, 2, 2, 3, 3])


def test_scenario3_determinism():
    a = gen_scenario3(25, seed=11)
    b = gen_scenario3(25, seed=11)
    assert all(np.array_equal(x, y) for x, y in zip(a[0].units, b[0].units))


def test_generate_dispatch():
    data, _, _ = generate("1A", seed=0, size=10)
    assert data.n_units == 12
    data, _, _ = generate("2", seed=0, r=1)
    assert data.n_units == 4
    data, _, _ = generate("3", seed=0, n3=10)
    assert data.n_units == 10
    with pytest.raises(ValidationError):
        generate("4", seed=0)


# ---------------------------------------------------------------------------
# file round trips


def test_dataset_roundtrip_continuous(tmp_path):
    data, dc, oc = gen_scenario2(1, seed=3)
    path = tmp_path / "d.csv"
    write_dataset(path, data, header={"seed": 3})
    back = read_dataset(path)
    assert back.kind == "continuous"
    assert back.n_units == data.n_units
    for a, b in zip(data.units, back.units):
        assert np.array_equal(a, b)  # repr round trip is exact


def test_dataset_roundtrip_count_with_scale_and_covariate(tmp_path):
    from commonatoms.model import Dataset
    data = Dataset(kind="count",
                   units=(np.array([1, 2, 3]), np.array([4, 0]))) \
        .with_library_scale()
    path = tmp_path / "d.csv"
    write_dataset(path, data)
    back = read_dataset(path)
    assert np.allclose(back.scale, data.scale)
    assert all(np.array_equal(a, b)
               for a, b in zip(back.units, data.units))

    data2 = Dataset(kind="continuous",
                    units=(np.array([0.5]), np.array([1.5])),
                    covariate=np.array([0.1, -0.7]))
    write_dataset(path, data2)
    back2 = read_dataset(path)
    assert np.array_equal(back2.covariate, data2.covariate)


def test_truth_roundtrip(tmp_path):
    _, dc, oc = gen_scenario3(10, seed=4)
    path = tmp_path / "t.csv"
    write_truth(path, dc, oc, header={"seed": 4})
    dc2, oc2 = read_truth(path)
    assert np.array_equal(dc, dc2)
    assert all(np.array_equal(a, b) for a, b in zip(oc, oc2))


def test_dataset_header_carries_seed(tmp_path):
    data, _, _ = gen_scenario2(1, seed=12)
    path = tmp_path / "d.csv"
    write_dataset(path, data, header={"seed": 12, "scenario": 2})
    text = path.read_text()
    assert "# seed: 12" in text


# ---------------------------------------------------------------------------
# abundance tables


def test_abundance_table_shape(tmp_path):
    gen = np.random.default_rng(13)
    table = gen.integers(0, 100, size=(119, 38))
    table[5] = 0  # an all-zero item row must be retained
    path = tmp_path / "otu.csv"
    with open(path, "w") as fh:
        for row in table:
            fh.write(",".join(str(v) for v in row) + "\n")
    data = load_abundance_table(path)
    assert data.kind == "count"
    assert data.n_units == 38
    assert np.all(data.lengths == 119)
    assert all(u[5] == 0 for u in data.units)


def test_abundance_table_single_cell(tmp_path):
    path = tmp_path / "one.csv"
    path.write_text("7\n")
    data = load_abundance_table(path)
    assert data.n_units == 1 and data.lengths[0] == 1
    assert data.units[0][0] == 7


def test_abundance_table_names_and_tabs(tmp_path):
    path = tmp_path / "named.tsv"
    path.write_text("id\tS1\tS2\nOTU1\t3\t4\nOTU2\t0\t9\n")
    data = load_abundance_table(path)
    assert data.unit_names == ("S1", "S2")
    assert data.item_names == ("OTU1", "OTU2")
    assert np.array_equal(data.units[1], [4, 9])


def test_abundance_table_errors(tmp_path):
    ragged = tmp_path / "ragged.csv"
    ragged.write_text("1,2\n3\n")
    with pytest.raises(ValidationError):
        load_abundance_table(ragged)
    negative = tmp_path / "neg.csv"
    negative.write_text("1,-2\n" )
    with pytest.raises(ValidationError):
        load_abundance_table(negative)
    frac = tmp_path / "frac.csv"
    frac.write_text("1.5,2\n")
    with pytest.raises(ValidationError):
        load_abundance_table(frac)
