from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from marlids import data as dp
from marlids.errors import IngestionError, ValidationError

from fixtures import FLOW_CSV, PUBLISHED_SPLIT
from oracles import hamilton


def ds_from(labels, features=None):
    labels = list(labels)
    if features is None:
        features = np.arange(len(labels), dtype=float).reshape(-1, 1)
    return dp.Dataset(np.asarray(features, dtype=float), np.array(labels, dtype=object))


@pytest.fixture
def flow_file(tmp_path):
    p = tmp_path / "flows.csv"
    p.write_text(FLOW_CSV)
    return p


def test_load_fixture(flow_file):
    ds = dp.load_flows([flow_file])
    assert len(ds) == 4
    assert ds.labels.tolist() == ["BENIGN", "DDoS", "BENIGN", "PortScan"]
    assert ds.feature_names == ("Flow Duration", "Total Fwd Packets", "Flow Bytes/s")
    assert np.isinf(ds.features[1, 2]) and np.isnan(ds.features[2, 2])
    assert ds.features[3].tolist() == [40, 5, 7.25]


def test_load_non_numeric_becomes_missing(tmp_path):
    p = tmp_path / "f.csv"
    p.write_text("a,b,Label\n1,x,BENIGN\n2,,Bot\n")
    ds = dp.load_flows([p])
    assert np.isnan(ds.features[:, 1]).all()


def test_load_missing_label_column(tmp_path):
    p = tmp_path / "f.csv"
    p.write_text("a,b\n1,2\n")
    with pytest.raises(IngestionError):
        dp.load_flows([p])


def test_load_short_row_reports_row_number(tmp_path):
    p = tmp_path / "f.csv"
    p.write_text("a,b,Label\n1,2,BENIGN\n3,Bot\n")
    with pytest.raises(IngestionError, match="row 3"):
        dp.load_flows([p])


def test_load_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        dp.load_flows([tmp_path / "absent.csv"])


def test_load_concatenates_files_in_order(tmp_path, flow_file):
    p2 = tmp_path / "more.csv"
    p2.write_text(" Flow Duration, Total Fwd Packets, Flow Bytes/s, Label\n1,1,1,Bot\n")
    ds = dp.load_flows([flow_file, p2])
    assert ds.labels.tolist()[-1] == "Bot" and len(ds) == 5


def test_load_cp1252_dash(tmp_path):
    p = tmp_path / "w.csv"
    p.write_bytes(b"a,Label\n1,Web Attack \x96 XSS\n")
    assert dp.load_flows([p]).labels[0] == "Web Attack – XSS"


def test_clean(flow_file):
    ds = dp.load_flows([flow_file])
    cleaned = dp.clean(ds)
    assert cleaned.labels.tolist() == ["BENIGN", "PortScan"]
    assert dp.clean(cleaned).equals(cleaned)
    finite = ds_from(["A", "B"])
    assert dp.clean(finite).equals(finite)


def test_clean_drops_single_nan():
    ds = ds_from(["A", "B"], [[1.0, np.nan], [2.0, 3.0]])
    assert dp.clean(ds).labels.tolist() == ["B"]


@settings(max_examples=30, deadline=None)
@given(st.lists(st.lists(st.sampled_from([0.0, 1.5, -2.0, np.nan, np.inf, -np.inf]),
                         min_size=2, max_size=2), max_size=20))
def test_clean_idempotent(rows):
    ds = ds_from(["A"] * len(rows), np.array(rows, dtype=float).reshape(len(rows), 2))
    once = dp.clean(ds)
    assert dp.clean(once).equals(once)
    assert np.isfinite(once.features).all()


def test_zscore_examples():
    ds = ds_from(["A"] * 3, [[1.0, 5.0], [2.0, 5.0], [3.0, 5.0]])
    z = dp.fit_zscore(ds)
    out = dp.apply_zscore(ds, z).features
    s = np.sqrt(2 / 3)
    np.testing.assert_allclose(out[:, 0], [-1 / s, 0, 1 / s])
    np.testing.assert_allclose(out[:, 0], [-1.2247, 0, 1.2247], atol=1e-4)
    np.testing.assert_array_equal(out[:, 1], [0, 0, 0])
    assert z.constant.tolist() == [False, True]


def test_zscore_moments():
    rng = np.random.default_rng(0)
    ds = ds_from(["A"] * 500, rng.standard_normal((500, 4)) * [1, 100, 1e4, 0] + [3, -7, 1e6, 2])
    out = dp.apply_zscore(ds, dp.fit_zscore(ds)).features
    assert np.abs(out[:, :3].mean(axis=0)).max() < 1e-9
    assert np.abs(out[:, :3].std(axis=0) - 1).max() < 1e-9
    assert not out[:, 3].any()


def test_zscore_empty_and_mismatch():
    with pytest.raises(ValidationError):
        dp.fit_zscore(ds_from([], np.empty((0, 2))))
    z = dp.fit_zscore(ds_from(["A"], [[1.0, 2.0]]))
    with pytest.raises(ValidationError):
        dp.normalize(np.ones(3), z)


def test_stratified_counts_published():
    counts = {k: v[0] for k, v in PUBLISHED_SPLIT.items()}
    train = dp.stratified_train_counts(counts, 0.8)
    assert train == {k: v[1] for k, v in PUBLISHED_SPLIT.items()}
    assert train == hamilton(counts, Fraction(4, 5))
    assert {k: counts[k] - train[k] for k in counts} == {k: v[2] for k, v in PUBLISHED_SPLIT.items()}


def test_split_heartbleed_rows():
    ds = ds_from(["Heartbleed"] * 11 + ["BENIGN"] * 40)
    train, test = dp.split(ds, 0.8, seed=0)
    assert train.label_counts["Heartbleed"] == 9 and test.label_counts["Heartbleed"] == 2
    assert sorted(np.concatenate([train.features, test.features]).ravel()) == list(range(51))
    # both parts keep the original row order
    assert np.all(np.diff(train.features[:, 0]) > 0) and np.all(np.diff(test.features[:, 0]) > 0)


@settings(max_examples=50, deadline=None)
@given(st.dictionaries(st.sampled_from("ABCDEFG"), st.integers(1, 500), min_size=1),
       st.sampled_from([Fraction(1, 2), Fraction(4, 5), Fraction(2, 3), Fraction(9, 10)]))
def test_stratified_counts_match_oracle(counts, fraction):
    got = dp.stratified_train_counts(counts, fraction)
    assert got == hamilton(counts, fraction)
    total = sum(counts.values())
    budget = int(fraction * total)
    assert sum(got.values()) == budget
    for c in counts:
        # within one record of the class's exact share of the floored budget
        assert abs(got[c] - Fraction(budget * counts[c], total)) < 1


def test_split_deterministic_and_seeded():
    ds = ds_from(["A"] * 50 + ["B"] * 30)
    a = dp.split(ds, 0.8, seed=1)
    b = dp.split(ds, 0.8, seed=1)
    c = dp.split(ds, 0.8, seed=2)
    assert a[0].equals(b[0]) and a[1].equals(b[1])
    assert not a[0].equals(c[0])


def test_split_rejects_bad_fraction():
    with pytest.raises(ValidationError):
        dp.split(ds_from(["A"] * 3), 1.0)


def test_downsample_benign():
    ds = ds_from(["BENIGN"] * 100 + ["X"] * 5)
    out = dp.downsample_benign(ds, 30, seed=0)
    assert out.label_counts == {"BENIGN": 30, "X": 5}
    assert dp.downsample_benign(ds, 100).equals(ds)
    with pytest.raises(ValidationError):
        dp.downsample_benign(ds, 101)


def test_downsample_then_split_published_benign():
    train = dp.stratified_train_counts({"BENIGN": 700000, "DoS Hulk": 230124}, 0.8)
    assert train["BENIGN"] == 560000  # alone with one class the remainder differs
    full = dp.stratified_train_counts({k: v[0] for k, v in PUBLISHED_SPLIT.items()}, 0.8)
    assert (full["BENIGN"], 700000 - full["BENIGN"]) == (559999, 140001)


def test_regroup():
    names = ["DoS Hulk", "DDoS", "DoS GoldenEye", "DoS slowloris", "DoS Slowhttptest"]
    out = dp.regroup_labels(ds_from(names), dp.DEFAULT_GROUPING)
    assert set(out.labels.tolist()) == {"(D)DoS"}
    ident = ds_from(["A", "B"])
    assert dp.regroup_labels(ident, {"A": "A", "B": "B"}).equals(ident)
    with pytest.raises(ValidationError):
        dp.regroup_labels(ident, {"A": "A"})


def test_default_grouping_has_seven_groups():
    groups = set(dp.DEFAULT_GROUPING.values()) - {"BENIGN"}
    assert len(groups) == 7


def test_exclude():
    ds = ds_from(["DoS slowloris", "A", "DoS slowloris", "B"])
    kept, excluded = dp.exclude_labels(ds, {"DoS slowloris"})
    assert "DoS slowloris" not in kept.label_counts
    assert excluded.label_counts == {"DoS slowloris": 2}
    assert kept.features[:, 0].tolist() == [1, 3]


def test_counts_table():
    text = dp.counts_table({"Total": ds_from(["A", "A", "B"]), "Training": ds_from(["A"])})
    lines = text.splitlines()
    assert lines[0].split() == ["Class", "Total", "Training"]
    assert lines[1].split() == ["A", "2", "1"] and lines[2].split() == ["B", "1", "0"]


def test_provenance_accumulates(flow_file):
    ds = dp.clean(dp.load_flows([flow_file]))
    train, _ = dp.split(ds, 0.5, seed=0)
    assert len(train.provenance) == 3 and train.provenance[0].startswith("load")
