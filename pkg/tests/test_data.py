import numpy as np
import pytest

from wqte.data import (
    ColumnSchema,
    Dataset,
    ExposureKind,
    load_csv,
    schema_for_written,
    summarize,
    write_csv,
)
from wqte.errors import ArgumentError, DomainError, ParseError, SchemaError
from wqte.rngs import substream
from wqte.simlab import gen_dataset, parse_scenario, scenario_with, true_binary_ps


def write_text(path, text):
    path.write_text(text, encoding="utf-8")
    return path


class TestLoadCsv:
    def test_basic_mapping_with_transforms(self, tmp_path):
        path = write_text(tmp_path / "danube.csv",
                          "cu,p,precip\n0.1,1.0,5.0\n0.2,10.0,0.0\n0.4,100.0,2.5\n")
        schema = ColumnSchema(outcome="cu", exposure="p", covariates=("precip",),
                              exposure_kind="continuous")
        data, report = load_csv(path, schema, transforms={"cu": "log10", "p": "log10"})
        assert data.n == 3 and data.p == 1
        assert data.exposure == pytest.approx([0.0, 1.0, 2.0])
        assert data.y[0] == pytest.approx(-1.0)
        assert report.rows_read == 3 and report.rows_dropped_missing == 0

    def test_log_of_zero_is_domain_error(self, tmp_path):
        path = write_text(tmp_path / "zero.csv", "cu,p\n0.1,0.0\n0.2,1.0\n")
        schema = ColumnSchema(outcome="cu", exposure="p", covariates=())
        with pytest.raises(DomainError):
            load_csv(path, schema, transforms={"p": "log10"})

    def test_missing_column_is_schema_error(self, tmp_path):
        path = write_text(tmp_path / "short.csv", "a,b\n1,2\n")
        schema = ColumnSchema(outcome="a", exposure="missing", covariates=())
        with pytest.raises(SchemaError):
            load_csv(path, schema)

    def test_non_numeric_cell_reports_row(self, tmp_path):
        path = write_text(tmp_path / "bad.csv", "a,b\n1,2\n1,oops\n")
        schema = ColumnSchema(outcome="a", exposure="b", covariates=())
        with pytest.raises(ParseError, match="row 2"):
            load_csv(path, schema)

    def test_missing_values_dropped_and_counted(self, tmp_path):
        path = write_text(tmp_path / "gaps.csv",
                          "a,b,c\n1,2,3\n1,,3\n2,4,NA\n5,6,7\n")
        schema = ColumnSchema(outcome="a", exposure="b", covariates=("c",))
        data, report = load_csv(path, schema)
        assert data.n == 2
        assert report.rows_dropped_missing == 2
        assert '"rows_dropped_missing": 2' in report.to_json()

    def test_categorical_recoding_keeps_original_labels(self, tmp_path):
        path = write_text(tmp_path / "cat.csv",
                          "y,grade\n1.0,30\n2.0,10\n3.0,20\n4.0,30\n")
        schema = ColumnSchema(outcome="y", exposure="grade", covariates=(),
                              exposure_kind="categorical")
        data, _ = load_csv(path, schema)
        assert data.kind == ExposureKind.categorical(3)
        assert list(data.exposure) == [1.0, 2.0, 3.0, 1.0]  # first-appearance order
        assert data.exposure_labels == (30.0, 10.0, 20.0)

    def test_two_level_categorical_rejected(self, tmp_path):
        path = write_text(tmp_path / "two.csv", "y,g\n1,5\n2,9\n3,5\n")
        schema = ColumnSchema(outcome="y", exposure="g", covariates=(),
                              exposure_kind="categorical")
        with pytest.raises(SchemaError, match="binary"):
            load_csv(path, schema)

    def test_binary_validation(self, tmp_path):
        path = write_text(tmp_path / "b.csv", "y,z\n1,0\n2,2\n")
        schema = ColumnSchema(outcome="y", exposure="z", covariates=(),
                              exposure_kind="binary")
        with pytest.raises(SchemaError):
            load_csv(path, schema)


class TestRoundTrip:
    @pytest.mark.parametrize("key", ["binary-weak-d1-nointer-pareto5",
                                     "cat-strong-d1-nointer-pareto7",
                                     "cont-weak-d4-nointer-pareto10"])
    def test_write_load_bit_identical(self, tmp_path, key):
        scenario = scenario_with(parse_scenario(key), n=200, seed=7)
        data = gen_dataset(scenario)
        path = tmp_path / "out.csv"
        write_csv(data, path)
        reloaded, _ = load_csv(path, schema_for_written(data))
        assert np.array_equal(reloaded.y, data.y)
        assert np.array_equal(reloaded.exposure, data.exposure)
        assert np.array_equal(reloaded.covariates, data.covariates)


class TestDatasetInvariants:
    def test_length_mismatch(self):
        with pytest.raises(ArgumentError):
            Dataset(y=np.ones(3), exposure=np.ones(2), covariates=np.ones((3, 1)),
                    column_names=("x1",), kind=ExposureKind.binary())

    def test_non_finite_rejected(self):
        with pytest.raises(ArgumentError):
            Dataset(y=np.array([1.0, np.nan]), exposure=np.array([0.0, 1.0]),
                    covariates=np.ones((2, 1)), column_names=("x1",),
                    kind=ExposureKind.binary())

    def test_immutability(self):
        data = Dataset(y=np.ones(2), exposure=np.array([0.0, 1.0]),
                       covariates=np.ones((2, 1)), column_names=("x1",),
                       kind=ExposureKind.binary())
        with pytest.raises(ValueError):
            data.y[0] = 5.0

    def test_take_revalidates_levels(self):
        z = np.array([1.0, 2.0, 3.0, 1.0])
        data = Dataset(y=np.arange(4.0), exposure=z, covariates=np.zeros((4, 1)),
                       column_names=("x1",), kind=ExposureKind.categorical(3))
        sub = data.take([0, 1, 2])
        assert sub.n == 3
        with pytest.raises(ArgumentError):
            data.take([0, 1, 0])  # level 3 lost

    def test_exposure_kind_invariants(self):
        with pytest.raises(ArgumentError):
            ExposureKind.categorical(2)
        with pytest.raises(ArgumentError):
            ExposureKind("nope")


class TestSummarize:
    def test_constant_column(self):
        data = Dataset(y=np.full(4, 5.0), exposure=np.array([0, 1, 0, 1.0]),
                       covariates=np.zeros((4, 1)), column_names=("x1",),
                       kind=ExposureKind.binary())
        rows = summarize(data)
        y_row = [r for r in rows if r.column == "y"][0]
        assert y_row.mean == 5.0 and y_row.sd == 0.0

    def test_hand_computed_sd(self):
        data = Dataset(y=np.array([1.0, 2.0, 3.0]), exposure=np.zeros(3),
                       covariates=np.zeros((3, 1)), column_names=("x1",),
                       kind=ExposureKind.binary())
        row = [r for r in summarize(data) if r.column == "y"][0]
        assert row.mean == 2.0 and row.sd == 1.0

    def test_group_by_exposure_mean_gap(self):
        # weak-confounding simulated data: E[X | Z] gap is positive and modest
        scenario = scenario_with(parse_scenario("binary-weak-d1-nointer-pareto5"),
                                 n=100_000, seed=8)
        data = gen_dataset(scenario)
        rows = summarize(data, group_by="exposure")
        means = {r.group: r.mean for r in rows if r.column == "x1"}
        gap = means["z=1"] - means["z=0"]
        # quadrature oracle for expit(0.5 + 0.5x) confounding:
        # E[X|Z=1] - E[X|Z=0] = E[X e]/E[e] - E[X(1-e)]/E[1-e] = 0.47332
        assert gap == pytest.approx(0.47332, abs=0.02)

    def test_single_group_matches_two_pass(self):
        rng = substream(9)
        data = Dataset(y=rng.standard_normal(50), exposure=np.zeros(50),
                       covariates=rng.standard_normal((50, 2)),
                       column_names=("a", "b"), kind=ExposureKind.binary())
        rows = summarize(data)
        for row in rows:
            values = {"y": data.y, "a": data.covariates[:, 0],
                      "b": data.covariates[:, 1]}[row.column]
            assert row.mean == pytest.approx(float(np.mean(values)), abs=1e-12)
            assert row.sd == pytest.approx(float(np.std(values, ddof=1)), abs=1e-12)

    def test_bin_edges_grouping_and_empty_group_warning(self):
        data = Dataset(y=np.arange(6.0), exposure=np.array([0.1, 0.2, 0.3, 1.1, 1.2, 1.3]),
                       covariates=np.zeros((6, 1)), column_names=("x1",),
                       kind=ExposureKind.continuous())
        with pytest.warns(UserWarning, match="empty group"):
            rows = summarize(data, group_by=[0.0, 1.0, 2.0, 3.0])
        groups = {r.group for r in rows}
        assert len(groups) == 2  # the (2, 3] bin is empty and excluded
