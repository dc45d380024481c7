import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from riskseq.datapipe import (
    STD_FLOOR,
    FeatureFrame,
    Normalizer,
    SplitSpec,
    WindowSample,
    apply_normalizer,
    chrono_split,
    fit_normalizer,
    gen_separable,
    gen_synthetic,
    load_csv,
    make_windows,
    prepare,
    window_count,
    write_csv,
)
from riskseq.errors import DataError


def _frame(n=10, F=2, labels=True, seed=0):
    rng = np.random.default_rng(seed)
    lab = rng.integers(0, 2, n) if labels else None
    return FeatureFrame(np.arange(100, 100 + n), [f"f{j}" for j in range(F)], rng.standard_normal((n, F)), lab)


# -------------------------------------------------------------------- csv


def test_load_well_formed(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("timestamp,close,volume,label\n1,10.5,100,0\n2,11.0,90,1\n5,9.25,120,0\n")
    f = load_csv(p)
    assert len(f) == 3
    assert f.feature_names == ("close", "volume")
    np.testing.assert_array_equal(f.values, [[10.5, 100], [11.0, 90], [9.25, 120]])
    np.testing.assert_array_equal(f.labels, [0, 1, 0])
    np.testing.assert_array_equal(f.timestamps, [1, 2, 5])


def test_load_crlf_and_no_label(tmp_path):
    p = tmp_path / "d.csv"
    p.write_bytes(b"timestamp,a,b\r\n1,1.0,2.0\r\n2,3.0,4.0\r\n")
    f = load_csv(p)
    assert f.labels is None
    assert f.values.shape == (2, 2)


@pytest.mark.parametrize(
    "body,match",
    [
        ("timestamp,a,label\n1,abc,0\n", r"row 2 column 'a'"),
        ("timestamp,a,label\n1,1.0,2\n", r"row 2 column 'label'"),
        ("timestamp,a\n1,1.0\n1,2.0\n", r"row 3 duplicate"),
        ("timestamp,a\n2,1.0\n1,2.0\n", r"row 3 .* out of order"),
        ("timestamp,a\n1,1.0\n,2.0\n", r"row 3 missing timestamp"),
        ("timestamp,a\n1,\n", r"row 2 column 'a'"),
        ("timestamp,a\n1,nan\n", r"row 2 column 'a'"),
        ("timestamp,a\n1,1.0,4\n", r"row 2 has 3 cells"),
        ("time,a\n1,1.0\n", r"first column"),
    ],
)
def test_load_rejects(tmp_path, body, match):
    p = tmp_path / "bad.csv"
    p.write_text(body)
    with pytest.raises(DataError, match=match):
        load_csv(p)


def test_csv_round_trip_exact(tmp_path):
    f = gen_synthetic(3, 200, 4, 16)
    p = tmp_path / "s.csv"
    write_csv(f, p)
    g = load_csv(p)
    np.testing.assert_array_equal(f.values, g.values)
    np.testing.assert_array_equal(f.labels, g.labels)
    np.testing.assert_array_equal(f.timestamps, g.timestamps)
    assert p.read_bytes().count(b"\r") == 0


# --------------------------------------------------------------- normaliser


def test_fit_simple_and_constant():
    f = FeatureFrame([1, 2], ["a"], [[1.0], [3.0]])
    n = fit_normalizer(f)
    assert n.mean[0] == 2.0 and n.std[0] == 1.0
    c = FeatureFrame([1, 2, 3], ["a"], [[5.0], [5.0], [5.0]])
    nc = fit_normalizer(c)
    assert nc.mean[0] == 5.0 and nc.std[0] == STD_FLOOR
    np.testing.assert_array_equal(apply_normalizer(c, nc).values, 0.0)


def test_fit_needs_two_rows():
    with pytest.raises(DataError):
        fit_normalizer(FeatureFrame([1], ["a"], [[1.0]]))


def test_transform_of_fit_rows_is_standard():
    f = _frame(50, 3)
    z = apply_normalizer(f, fit_normalizer(f)).values
    assert np.all(np.abs(z.mean(axis=0)) < 1e-9)
    np.testing.assert_allclose(z.std(axis=0), 1.0, atol=1e-9)


def test_identity_normalizer_and_round_trip():
    f = _frame(20, 3)
    ident = Normalizer(np.zeros(3), np.ones(3))
    np.testing.assert_array_equal(apply_normalizer(f, ident).values, f.values)
    n = fit_normalizer(f)
    g = apply_normalizer(f, n)
    np.testing.assert_allclose(n.inverse(g.values), f.values, atol=1e-12)
    np.testing.assert_array_equal(g.labels, f.labels)
    np.testing.assert_array_equal(g.timestamps, f.timestamps)


def test_unfitted_normalizer_rejected():
    with pytest.raises(DataError):
        apply_normalizer(_frame(), Normalizer())


def test_no_leakage_train_statistics_only():
    frame = gen_synthetic(2, 400, 3, 16)
    data = prepare(frame, 16, 1, SplitSpec(0.6, 0.2, 0.2))
    last_train_row = data.train[-1].end_row
    refit = fit_normalizer(frame.rows(last_train_row + 1))
    np.testing.assert_array_equal(data.normalizer.mean, refit.mean)
    np.testing.assert_array_equal(data.normalizer.std, refit.std)
    # changing validation/test rows must not move the statistics
    shifted = FeatureFrame(
        frame.timestamps,
        frame.feature_names,
        np.vstack([frame.values[: last_train_row + 1], frame.values[last_train_row + 1 :] + 1e3]),
        frame.labels,
    )
    again = prepare(shifted, 16, 1, SplitSpec(0.6, 0.2, 0.2))
    np.testing.assert_array_equal(again.normalizer.mean, data.normalizer.mean)
    # validation windows are scaled with training statistics
    v = data.val[0]
    raw = frame.values[v.end_row - 15 : v.end_row + 1]
    np.testing.assert_allclose(v.x, (raw - refit.mean) / refit.std, atol=1e-15)


# ------------------------------------------------------------------ windows


def test_window_boundaries():
    assert len(make_windows(_frame(5), 5, 1)) == 1
    w = make_windows(_frame(10), 4, 2)
    assert [s.end_row + 1 for s in w] == [4, 6, 8, 10]
    assert len(make_windows(_frame(10), 3, 10)) == 1


def test_window_too_short_rejected():
    with pytest.raises(DataError):
        make_windows(_frame(3), 4, 1)


def test_window_needs_labels():
    with pytest.raises(DataError):
        make_windows(_frame(6, labels=False), 3, 1)


def _brute_force_windows(n, T, stride):
    out = []
    start = 0
    while start + T <= n:
        out.append(start + T - 1)
        start += stride
    return out


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 60), st.integers(1, 60), st.integers(1, 15))
def test_window_count_formula(n, T, stride):
    if n < T:
        return
    ends = _brute_force_windows(n, T, stride)
    assert window_count(n, T, stride) == len(ends)
    frame = _frame(n, 1)
    windows = make_windows(frame, T, stride)
    assert [s.end_row for s in windows] == ends
    for s in windows:
        assert s.label == frame.labels[s.end_row]
        assert s.end_timestamp == frame.timestamps[s.end_row]
        np.testing.assert_array_equal(s.x, frame.values[s.end_row - T + 1 : s.end_row + 1])


# ------------------------------------------------------------------ splits


def _samples(n):
    return [WindowSample(np.zeros((1, 1)), 0, t, t) for t in range(n)]


def test_split_counts():
    tr, va, te = chrono_split(_samples(10), SplitSpec(0.6, 0.2, 0.2))
    assert (len(tr), len(va), len(te)) == (6, 2, 2)
    tr, va, te = chrono_split(_samples(7), SplitSpec(0.6, 0.2, 0.2))
    assert (len(tr), len(va), len(te)) == (5, 1, 1)


def test_split_rejects_unordered_and_empty():
    s = _samples(10)
    s[3], s[4] = s[4], s[3]
    with pytest.raises(DataError):
        chrono_split(s, SplitSpec())
    with pytest.raises(DataError):
        chrono_split(_samples(4), SplitSpec(0.6, 0.2, 0.2))


def test_split_spec_validation():
    with pytest.raises(ValueError):
        SplitSpec(0.5, 0.5, 0.0)
    with pytest.raises(ValueError):
        SplitSpec(0.5, 0.3, 0.3)


@given(st.integers(5, 300), st.floats(0.1, 0.8), st.floats(0.05, 0.5))
def test_split_partition_strict(total, a, b):
    if a + b >= 0.95:
        return
    spec = SplitSpec(a, b, 1.0 - a - b)
    try:
        tr, va, te = chrono_split(_samples(total), spec)
    except DataError:
        return
    assert tr + va + te == _samples(total)
    assert tr[-1].end_timestamp < va[0].end_timestamp
    assert va[-1].end_timestamp < te[0].end_timestamp


# ---------------------------------------------------------------- synthetic


def test_synthetic_deterministic():
    a = gen_synthetic(11, 300, 4, 16)
    b = gen_synthetic(11, 300, 4, 16)
    np.testing.assert_array_equal(a.values, b.values)
    np.testing.assert_array_equal(a.labels, b.labels)
    c = gen_synthetic(12, 300, 4, 16)
    assert np.any(a.values != c.values)


def test_synthetic_label_fraction_sweep():
    for seed in range(20):
        f = gen_synthetic(seed, 2000, 6, 32)
        assert 0.2 <= f.labels.mean() <= 0.4


def test_synthetic_validation():
    with pytest.raises(ValueError):
        gen_synthetic(0, 10, 4, 16)
    with pytest.raises(ValueError):
        gen_synthetic(0, 100, 1, 16)


def test_synthetic_regimes_raise_volatility():
    f = gen_synthetic(4, 4000, 6, 32, regime_strength=1.5)
    inside = np.abs(f.values[f.labels == 1]).mean()
    outside = np.abs(f.values[f.labels == 0]).mean()
    assert inside > 1.5 * outside


def test_separable_set_margin():
    X, y = gen_separable(0, 32, 16, 4)
    score = X[:, 8:, 0].mean(axis=1)
    assert score[y == 1].min() > score[y == 0].max()
