import math

import numpy as np
import pytest

from hyobscure.dataset import (
    CsvSchema,
    DatasetError,
    EmptyDatasetError,
    MissingColumnError,
    NonNumericFeatureError,
    empirical_joint,
    load_csv,
    synth_population,
)


def write(tmp_path, text, name="d.csv"):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


def test_load_csv_basic(tmp_path):
    p = write(tmp_path, "id,a,b,age\nx,1,2,30\ny,3,4,20\nz,5,6,30\n")
    ds = load_csv(p, CsvSchema("age", user_id="id"))
    assert ds.user_ids == ("x", "y", "z")
    assert ds.feature_names == ("a", "b")
    np.testing.assert_array_equal(ds.features, [[1, 2], [3, 4], [5, 6]])
    assert ds.private_domain == (20, 30)
    np.testing.assert_array_equal(ds.value_counts, [1, 2])


def test_load_csv_feature_subset_and_bins(tmp_path):
    p = write(tmp_path, "a,b,age\n1,2,31\n3,4,38\n5,6,45\n")
    ds = load_csv(p, CsvSchema("age", features=("b",), bin_width=10))
    assert ds.feature_dim == 1
    assert set(ds.private_domain) == {30, 40}


def test_missing_column(tmp_path):
    p = write(tmp_path, "a,b\n1,2\n3,4\n")
    with pytest.raises(MissingColumnError):
        load_csv(p, CsvSchema("age"))


def test_non_numeric_feature(tmp_path):
    p = write(tmp_path, "a,age\n1,2\nfoo,3\n")
    with pytest.raises(NonNumericFeatureError) as e:
        load_csv(p, CsvSchema("age"))
    assert "foo" in str(e.value)


def test_empty_file(tmp_path):
    p = write(tmp_path, "a,age\n")
    with pytest.raises(EmptyDatasetError):
        load_csv(p, CsvSchema("age"))


def test_duplicate_ids(tmp_path):
    p = write(tmp_path, "id,a,age\nx,1,2\nx,2,3\n")
    with pytest.raises(DatasetError):
        load_csv(p, CsvSchema("age", user_id="id"))


def test_csv_round_trip(tmp_path):
    ds = synth_population(50, 3, 5, 0.5, seed=4)
    path = tmp_path / "pop.csv"
    ds.to_csv(path)
    back = load_csv(path, CsvSchema("y", user_id="user_id"))
    assert back.user_ids == ds.user_ids
    np.testing.assert_array_equal(back.features, ds.features)
    assert back.private_values == ds.private_values


def test_synth_deterministic():
    a = synth_population(200, 4, 8, 0.7, seed=9)
    b = synth_population(200, 4, 8, 0.7, seed=9)
    c = synth_population(200, 4, 8, 0.7, seed=10)
    np.testing.assert_array_equal(a.features, b.features)
    assert a.private_values == b.private_values
    assert a.private_values != c.private_values


def test_synth_correlation_links_value_to_cluster():
    ds, latent = synth_population(2000, 4, 8, 1.0, seed=1, return_clusters=True)
    linked = latent * 8 // 4
    assert np.array_equal(np.asarray(ds.private_values), linked)


def test_empirical_joint_normalised():
    ds, latent = synth_population(300, 5, 6, 0.6, seed=2, return_clusters=True)
    j = empirical_joint(ds, latent)
    assert abs(j.probabilities.sum() - 1.0) < 1e-12
    np.testing.assert_allclose(j.col_marginal, ds.value_counts / ds.n_users)


def test_synth_independent_and_linked_extremes():
    from hyobscure.infotheory import entropy, mutual_information
    ds, latent = synth_population(4000, 4, 4, 0.0, seed=1, return_clusters=True)
    assert mutual_information(empirical_joint(ds, latent)) <= 3 / math.sqrt(4000)
    ds, latent = synth_population(1000, 5, 5, 1.0, seed=2, return_clusters=True)
    mi = mutual_information(empirical_joint(ds, latent))
    assert mi == pytest.approx(entropy(ds.value_counts / ds.n_users), abs=1e-12)


def test_tiny_joint_examples():
    from hyobscure.dataset import Dataset
    ds = Dataset(("a", "b", "c", "d"), np.zeros((4, 1)), (1, 2, 1, 2))
    np.testing.assert_allclose(empirical_joint(ds, [0, 0, 1, 1]).probabilities, 0.25)
    ds = Dataset(("a", "b"), np.zeros((2, 1)), (7, 7))
    np.testing.assert_allclose(empirical_joint(ds, [0, 0]).probabilities, [[1.0]])


def test_export_byte_identical(tmp_path):
    a = synth_population(1000, 10, 16, 0.7, seed=7).to_csv()
    b = synth_population(1000, 10, 16, 0.7, seed=7).to_csv()
    assert a == b
