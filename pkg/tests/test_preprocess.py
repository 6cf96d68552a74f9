import json

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings, strategies as st

from tlconvnet import preprocess as pp
from tlconvnet.errors import DataError, LeakageError, ShapeError, StateCorruptError, StateVersionError
from tlconvnet.ingest import Role

from oracles import median_by_sort

TOY = pp.UnifiedSchema.from_dict(
    {
        "name": "toy",
        "version": 1,
        "slots": [
            {"name": "x", "kind": "numeric", "fields": {"nslkdd": "x"}},
            {"name": "proto", "kind": "categorical", "fields": {"nslkdd": "proto"}, "case": "lower"},
            {"name": "only_unsw", "kind": "numeric", "fields": {"unswnb15": "y"}},
        ],
    }
)


def toy_state(frame):
    medians = pp.fit_patch(frame, TOY, "nslkdd")
    vocab = pp.fit_encoder(frame, TOY, "nslkdd")
    return pp.PreprocessorState(TOY, "nslkdd", vocab, medians, np.zeros(0), np.zeros(0))


def test_patch_uses_training_median():
    frame = pd.DataFrame({"x": ["1", "", "4", "9"], "proto": ["tcp", "udp", "icmp", ""]})
    state = toy_state(frame)
    assert state.medians == {"x": 4.0}
    patched = pp.patch(frame, state)
    assert float(patched["x"][1]) == 4.0
    assert patched["proto"][3] == "unknown"


@given(st.lists(st.integers(-1000, 1000), min_size=1, max_size=40))
def test_median_matches_sort(values):
    frame = pd.DataFrame({"x": [str(v) for v in values], "proto": ["tcp"] * len(values)})
    assert toy_state(frame).medians["x"] == pytest.approx(median_by_sort(values))


def test_vocabulary_and_one_hot():
    frame = pd.DataFrame({"x": ["0", "1", "2"], "proto": ["tcp", "UDP", "icmp"]})
    state = toy_state(frame)
    assert state.vocabularies["proto"] == ["icmp", "tcp", "udp", "unknown"]
    enc = pp.encode(pd.DataFrame({"x": ["5", "5"], "proto": ["tcp", "sctp"]}), state)
    # x | icmp tcp udp unknown | only_unsw (absent for this source)
    np.testing.assert_array_equal(enc[0], [5, 0, 1, 0, 0, 0])
    np.testing.assert_array_equal(enc[1], [5, 0, 0, 0, 1, 0])


def test_scaler_example():
    mean, std = pp.fit_scaler(np.array([[1.0], [2.0], [3.0]]))
    assert mean[0] == pytest.approx(2.0)
    assert std[0] == pytest.approx(0.8165, abs=1e-4)
    state = pp.PreprocessorState(TOY, "nslkdd", {}, {}, mean, std)
    assert pp.scale(np.array([[3.0]]), state)[0, 0] == pytest.approx(1.2247, abs=1e-4)


def test_constant_dimension_maps_to_zero():
    mean, std = pp.fit_scaler(np.array([[7.0, 1.0], [7.0, 2.0]]))
    state = pp.PreprocessorState(TOY, "nslkdd", {}, {}, mean, std)
    z = pp.scale(np.array([[7.0, 1.0], [100.0, 2.0]]), state)
    np.testing.assert_array_equal(z[:, 0], [0, 0])
    assert np.all(np.isfinite(z))


def test_reshape_and_flatten():
    v = np.arange(113.0)
    t = pp.reshape(v)
    assert t.shape == (113, 1) and t[5, 0] == 5
    np.testing.assert_array_equal(pp.flatten(t), v)
    with pytest.raises(ShapeError):
        pp.reshape(np.zeros(112))


def test_default_schema_width():
    assert pp.load_schema().total_width == 113


@pytest.fixture(scope="module")
def fitted(nsl_train):
    pre = pp.Preprocessor()
    return pre, pre.fit_transform(nsl_train)


def test_transform_shape(fitted, nsl_test_plus):
    pre, x = fitted
    assert x.shape == (1000, 113, 1) and x.dtype == np.float32
    assert pre.transform(nsl_test_plus).shape == (1000, 113, 1)


def test_training_columns_standardized(fitted):
    pre, x = fitted
    flat = pp.flatten(x).astype(np.float64)
    live = ~pre.state.constant
    assert np.all(np.abs(flat.mean(axis=0)[live]) < 1e-5)
    assert np.all(np.abs(flat.std(axis=0)[live] - 1) < 1e-5)
    assert np.all(flat[:, ~live] == 0)


@pytest.mark.parametrize("which", ["nsl", "unsw"])
def test_one_hot_blocks_sum_to_one(which, nsl_test_plus, unsw):
    split = nsl_test_plus if which == "nsl" else unsw
    train_role = split.with_role(Role.TARGET if which == "nsl" else Role.BASE)
    pre = pp.Preprocessor()
    pre.fit(train_role)
    enc = pp.encode(pp.patch(split.frame, pre.state), pre.state)
    assert enc.shape[1] == 113
    for start, stop in pre.state.categorical_spans().values():
        block = enc[:, start:stop]
        assert set(np.unique(block)) <= {0.0, 1.0}
        np.testing.assert_array_equal(block.sum(axis=1), 1)


def test_pipeline_is_deterministic(fitted, nsl_test_21):
    pre, _ = fitted
    assert pre.transform(nsl_test_21).tobytes() == pre.transform(nsl_test_21).tobytes()


@pytest.mark.parametrize("role", [Role.TEST_PLUS, Role.TEST_21, Role.BASE_HOLDOUT])
def test_leakage_guard(nsl_test_plus, role):
    with pytest.raises(LeakageError):
        pp.Preprocessor().fit(nsl_test_plus.with_role(role))


def test_source_mismatch(fitted, unsw):
    with pytest.raises(DataError):
        fitted[0].transform(unsw)


def test_state_round_trip(tmp_path, fitted, nsl_test_plus):
    pre, _ = fitted
    p = tmp_path / "s.json"
    pp.save_state(pre.state, p)
    again = pp.preprocessor_from_state(pp.load_state(p))
    assert again.transform(nsl_test_plus).tobytes() == pre.transform(nsl_test_plus).tobytes()
    pp.save_state(again.state, tmp_path / "s2.json")
    assert p.read_bytes() == (tmp_path / "s2.json").read_bytes()


def test_truncated_state(tmp_path, fitted):
    p = tmp_path / "s.json"
    pp.save_state(fitted[0].state, p)
    p.write_bytes(p.read_bytes()[:200])
    with pytest.raises(StateCorruptError):
        pp.load_state(p)


def test_state_version(tmp_path, fitted):
    p = tmp_path / "s.json"
    pp.save_state(fitted[0].state, p)
    doc = json.loads(p.read_text())
    doc["version"] = 99
    p.write_text(json.dumps(doc))
    with pytest.raises(StateVersionError):
        pp.load_state(p)


def test_state_width_mismatch(tmp_path, fitted):
    p = tmp_path / "s.json"
    pp.save_state(fitted[0].state, p)
    doc = json.loads(p.read_text())
    doc["mean"] = doc["mean"][:-1]
    p.write_text(json.dumps(doc))
    with pytest.raises(StateCorruptError):
        pp.load_state(p)


def test_unfitted_transform(nsl_train):
    with pytest.raises(DataError):
        pp.Preprocessor().transform(nsl_train)


@settings(max_examples=20, deadline=None)
@given(st.lists(st.sampled_from(["tcp", "udp", "icmp", "gre", "", "TCP"]), min_size=1, max_size=30))
def test_encode_one_hot_property(values):
    state = toy_state(pd.DataFrame({"x": ["1", "2"], "proto": ["tcp", "udp"]}))
    enc = pp.encode(pp.patch(pd.DataFrame({"x": ["0"] * len(values), "proto": values}), state), state)
    # x | tcp udp unknown | only_unsw
    assert enc.shape == (len(values), 5)
    np.testing.assert_array_equal(enc[:, 1:4].sum(axis=1), 1)


def test_patch_without_gaps_is_a_no_op():
    frame = pd.DataFrame({"x": ["1", "2", "3"], "proto": ["tcp", "udp", "icmp"]})
    assert pp.patch(frame, toy_state(frame)).equals(frame)


def test_refit_is_identical(nsl_train):
    a, b = pp.Preprocessor(), pp.Preprocessor()
    a.fit(nsl_train)
    b.fit(nsl_train)
    assert a.state.vocabularies == b.state.vocabularies
    assert a.state.medians == b.state.medians
    assert a.state.mean.tobytes() == b.state.mean.tobytes() and a.state.std.tobytes() == b.state.std.tobytes()


def test_constant_column_flagged_and_mean_maps_to_zero():
    mean, std = pp.fit_scaler(np.array([[5.0, 1.0], [5.0, 2.0], [5.0, 3.0]]))
    state = pp.PreprocessorState(TOY, "nslkdd", {}, {}, mean, std)
    np.testing.assert_array_equal(state.constant, [True, False])
    assert pp.scale(np.array([[5.0, 2.0]]), state)[0, 1] == 0
