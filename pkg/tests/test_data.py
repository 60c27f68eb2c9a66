import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mogu import data as D

HERE = __import__("pathlib").Path(__file__).parent


def write(tmp_path, text, name="d.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_load_small_file(tmp_path):
    s = D.load_csv(write(tmp_path, "date,a,b\nt0,1,2\nt1,3,4\nt2,5,6.5\n"))
    assert s.values.shape == (3, 2)
    assert s.variable_names == ["a", "b"]
    assert s.timestamps == ["t0", "t1", "t2"]
    np.testing.assert_array_equal(s.values[:, 1], [2, 4, 6.5])


def test_load_bad_cell_cites_row_5(tmp_path):
    with pytest.raises(D.DataError, match="row 5"):
        D.load_csv(write(tmp_path, "date,a\nt0,1\nt1,2\nt2,3\nt3,oops\n"))


@pytest.mark.parametrize("text,match", [
    ("", "empty"),
    ("date,a\n", "no data"),
    ("date,a\nt0,1,2\n", "fields"),
    ("date,a\nt0,\n", "row 2"),
    ("date,a\nt0,nan\n", "missing"),
])
def test_load_errors(tmp_path, text, match):
    with pytest.raises(D.DataError, match=match):
        D.load_csv(write(tmp_path, text))


def test_load_missing_file(tmp_path):
    with pytest.raises(D.DataError, match="not found"):
        D.load_csv(tmp_path / "nope.csv")


def test_ett_schema_gives_seven_variables(tmp_path):
    header = "date,HUFL,HULL,MUFL,MULL,LUFL,LULL,OT"
    rows = [f"2016-07-01 {i:02d}:00:00," + ",".join(str(i + j) for j in range(7)) for i in range(5)]
    s = D.load_csv(write(tmp_path, "\n".join([header, *rows]) + "\n"))
    assert s.num_variables == 7 and s.variable_names[-1] == "OT"


def test_csv_round_trip(tmp_path):
    series, _ = D.synth_heteroscedastic(3, 50, 2)
    D.write_csv(tmp_path / "s.csv", series)
    back = D.load_csv(tmp_path / "s.csv")
    assert back.values.tobytes() == series.values.tobytes()
    assert back.timestamps == series.timestamps


def test_ratio_split_example():
    tr, va, te = D.chronological_split(100, D.SplitSpec())
    assert (tr, va, te) == (range(0, 70), range(70, 80), range(80, 100))


def test_rows_split_ett_convention():
    tr, va, te = D.chronological_split(17420, D.SplitSpec("rows", *D.ETTH_ROWS))
    assert (tr, va, te) == (range(0, 8640), range(8640, 11520), range(11520, 14400))
    with pytest.raises(D.DataError):
        D.chronological_split(14399, D.SplitSpec("rows", *D.ETTH_ROWS))


def test_short_partition_rejected():
    with pytest.raises(D.DataError, match="val"):
        D.chronological_split(100, D.SplitSpec(), min_length=20)
    with pytest.raises(D.DataError):
        D.chronological_split(100, D.SplitSpec(train=0.8, val=0.3, test=0.1))


@given(st.integers(10, 5000), st.floats(0.1, 0.8), st.floats(0.05, 0.1))
def test_split_ranges_are_ordered_and_disjoint(n, train, val):
    tr, va, te = D.chronological_split(n, D.SplitSpec(train=train, val=val, test=1 - train - val),
                                         min_length=0)
    assert tr.start == 0 and tr.stop == va.start and va.stop == te.start and te.stop <= n


def test_standardize_train_partition():
    x = np.random.default_rng(0).normal(3.0, 5.0, size=(300, 3))
    stats = D.NormStats.fit(x)
    z = D.standardize(x, stats)
    np.testing.assert_allclose(z.mean(axis=0), 0.0, atol=1e-9)
    np.testing.assert_allclose(z.std(axis=0), 1.0, atol=1e-9)
    np.testing.assert_allclose(D.inverse_standardize(z, stats), x, rtol=0, atol=1e-12 * np.abs(x).max())


def test_constant_column_rejected_by_name():
    x = np.column_stack([np.arange(5.0), np.full(5, 2.0)])
    with pytest.raises(D.DataError, match="'flat'"):
        D.NormStats.fit(x, ["ok", "flat"])


def test_window_count_examples():
    assert len(D.make_windows(np.zeros((100, 1)), 96, 4)) == 1
    assert len(D.make_windows(np.zeros((200, 1)), 96, 96)) == 9
    with pytest.raises(D.DataError):
        D.make_windows(np.zeros((99, 1)), 96, 4)


def test_windows_tile_the_range():
    x = np.arange(30.0).reshape(15, 2)
    w = D.make_windows(x, 4, 2, offset=100)
    assert len(w) == 10
    for i in range(len(w)):
        np.testing.assert_array_equal(w.inputs[i], x[i:i + 4])
        np.testing.assert_array_equal(w.targets[i], x[i + 4:i + 6])
        assert w.origins[i] == 100 + i + 4
    # consecutive windows shift by exactly one row
    np.testing.assert_array_equal(w.inputs[1:, :-1], w.inputs[:-1, 1:])
    assert w[3].origin == 107


@given(st.integers(1, 300), st.integers(1, 40), st.integers(1, 40), st.integers(1, 7))
def test_window_count_closed_form(length, T, h, stride):
    expected = max(0, (length - T - h) // stride + 1)
    assert D.window_count(length, T, h, stride) == expected
    if expected:
        w = D.make_windows(np.arange(float(length))[:, None], T, h, stride)
        assert len(w) == expected
        np.testing.assert_array_equal(w.origins, np.arange(expected) * stride + T)


def test_prepare_has_no_leakage_and_respects_boundaries():
    series, _ = D.synth_heteroscedastic(1, 600, 2)
    p = D.prepare(series, D.SplitSpec(), lookback=24, horizon=6)
    tr, va, te = p.ranges
    ref = series.values[tr.start:tr.stop]
    np.testing.assert_array_equal(p.stats.mean, ref.mean(axis=0))
    np.testing.assert_array_equal(p.stats.std, ref.std(axis=0))
    for r, w in zip(p.ranges, (p.train, p.val, p.test)):
        assert w.origins.min() >= r.start and w.origins.max() + 6 <= r.stop
        assert w.origins.min() - 24 >= max(0, r.start - 24)
        # targets are the standardised rows at the recorded origins
        np.testing.assert_array_equal(w.targets[:, 0], p.standardized[w.origins])
    assert len(p.val) == len(va) - 6 + 1 and len(p.test) == len(te) - 6 + 1
    assert len(p.train) == len(tr) - 24 - 6 + 1

    # mutating test rows cannot change the train statistics
    altered = D.RawSeries(series.timestamps, series.values.copy(), series.variable_names)
    altered.values[te.start:] += 1e3
    q = D.prepare(altered, D.SplitSpec(), lookback=24, horizon=6)
    np.testing.assert_array_equal(q.stats.mean, p.stats.mean)


def test_synth_is_deterministic():
    a, sa = D.synth_heteroscedastic(7, 500, 3)
    b, sb = D.synth_heteroscedastic(7, 500, 3)
    assert a.values.tobytes() == b.values.tobytes() and sa.tobytes() == sb.tobytes()
    c, _ = D.synth_heteroscedastic(8, 500, 3)
    assert not np.array_equal(a.values, c.values)


def test_zero_noise_profile_is_deterministic_signal():
    s, sigma = D.synth_heteroscedastic(4, 300, 2, D.NoiseProfile(zero=True))
    np.testing.assert_array_equal(s.values, D.synth_signal(4, 300, 2))
    assert not sigma.any()


def test_sigma_profile_bounds():
    _, sigma = D.synth_heteroscedastic(2, 1000, 2)
    assert sigma.min() >= 0.05 - 1e-12 and sigma.max() <= 0.5 + 1e-12
    assert sigma.max() > 0.49 and sigma.min() < 0.06


def test_empirical_noise_matches_profile():
    n = 10000
    s, sigma = D.synth_heteroscedastic(5, n, 2)
    resid = s.values - D.synth_signal(5, n, 2)
    for j in range(2):
        high = sigma[:, j] > 0.45
        assert high.sum() > 500
        emp = np.sqrt(np.mean(resid[high, j] ** 2))
        prof = np.sqrt(np.mean(sigma[high, j] ** 2))
        assert abs(emp - prof) / prof < 0.10


def test_fixture_file_loads():
    s = D.load_csv(HERE / "data" / "tiny.csv")
    assert s.values.shape == (400, 3)


def test_noise_scales_give_distinct_regimes():
    base, s1 = D.synth_heteroscedastic(3, 400, 3)
    scaled, s2 = D.synth_heteroscedastic(3, 400, 3, D.NoiseProfile(scales=(0.5, 1.0, 2.0)))
    np.testing.assert_allclose(s2, s1 * [0.5, 1.0, 2.0], rtol=1e-15)
    np.testing.assert_array_equal(D.synth_signal(3, 400, 3), D.synth_signal(3, 400, 3, D.NoiseProfile(scales=(2.0,))))
