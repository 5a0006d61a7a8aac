import json
import threading
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gpsl.corpus import synth_split
from gpsl.decode import rns_decode
from gpsl.errors import ModelFormatError, UnsupportedVersionError
from gpsl.inference import TrainOptions, train
from gpsl.kernel import KernelSpec
from gpsl.model import (
    GPSL1,
    GPSL2,
    GPSL4,
    DependencySet,
    init_state,
    load,
    model_from_dict,
    model_to_dict,
    pair_index,
    save,
)


@pytest.fixture(scope="module")
def toy():
    tr, te = synth_split(3, 5, 8, 4, seed=3)
    m = train(tr, GPSL2, KernelSpec("se", 1.0, 0.8), TrainOptions(max_outer=3))
    return m, te


def test_pair_index_examples():
    assert pair_index(0, 0, 3) == 0
    assert pair_index(2, 1, 3) == 7
    with pytest.raises(IndexError):
        pair_index(3, 0, 3)


def test_pair_index_bijection():
    J = 4
    idx = sorted(pair_index(a, b, J) for a in range(J) for b in range(J))
    assert idx == list(range(J * J))


@given(st.integers(2, 9), st.data())
def test_pair_index_row_major(J, data):
    a = data.draw(st.integers(0, J - 1))
    b = data.draw(st.integers(0, J - 1))
    assert divmod(pair_index(a, b, J), J) == (a, b)


def test_dependency_sets():
    assert GPSL1.offsets == (-1,) and GPSL2.R == 2 and GPSL4.offsets == (-2, -1, 1, 2)
    assert DependencySet.parse("-2,-1,1,2") == GPSL4
    assert DependencySet.parse("").R == 0
    assert str(GPSL4) == "-2,-1,1,2"
    for bad in ("0", "-1,-1", "x"):
        with pytest.raises(ValueError):
            DependencySet.parse(bad)


def test_init_state():
    s = init_state(3, 5, 2, seed=1)
    assert np.all(s.lambda_U == 1 / 3) and np.all(s.m_U == 0)
    assert np.all(s.m_S == 0) and np.all(s.v_S == 1) and s.m_S.shape == (2, 9)
    r0 = init_state(2, 4, 0)
    assert r0.m_S.size == 0 and r0.v_S.size == 0
    t = init_state(3, 5, 2, seed=99)
    assert all(np.array_equal(getattr(s, k), getattr(t, k)) for k in ("m_U", "lambda_U", "m_S", "v_S"))
    with pytest.raises(ValueError):
        init_state(1, 5, 0)


def test_round_trip_bit_exact(toy, tmp_path):
    m, te = toy
    path = tmp_path / "m.json"
    save(m, path)
    m2 = load(path)
    for k in ("m_U", "lambda_U", "m_S", "v_S"):
        assert np.array_equal(getattr(m.state, k), getattr(m2.state, k))
    assert m2.kernels == m.kernels and m2.deps == m.deps
    assert m2.label_alphabet == m.label_alphabet and m2.feature_alphabet == m.feature_alphabet
    assert (m2.X_train != m.X_train).nnz == 0
    for s in te.sentences:
        a, b = rns_decode(m, s), rns_decode(m2, s)
        assert np.array_equal(a.table, b.table) and np.array_equal(a.labels, b.labels)


def test_truncated_file(toy, tmp_path):
    path = tmp_path / "m.json"
    save(toy[0], path)
    text = path.read_text()
    path.write_text(text[: len(text) // 2])
    with pytest.raises(ModelFormatError):
        load(path)


def test_unknown_version(toy, tmp_path):
    d = model_to_dict(toy[0])
    d["format"] = "gpsl-model-v999"
    path = tmp_path / "m.json"
    path.write_text(json.dumps(d))
    with pytest.raises(UnsupportedVersionError):
        load(path)


@pytest.mark.parametrize("key,value", [("NL", 3), ("m_U", [[0.0]]), ("offsets", [-1]),
                                       ("train_indices", [10 ** 6])])
def test_inconsistent_dimensions(toy, key, value):
    d = model_to_dict(toy[0])
    d[key] = value
    with pytest.raises(ModelFormatError):
        model_from_dict(d)


def test_failed_save_leaves_previous_file(toy, tmp_path, monkeypatch):
    path = tmp_path / "m.json"
    save(toy[0], path)
    before = path.read_text()

    def fail(*a, **k):
        raise OSError("disk full")

    monkeypatch.setattr("gpsl.model.os.replace", fail)
    with pytest.raises(OSError):
        save(toy[0], path)
    assert path.read_text() == before
    assert [p.name for p in tmp_path.iterdir()] == ["m.json"]


def test_concurrent_decoding_builds_cache_once(toy):
    m, te = toy
    m2 = model_from_dict(model_to_dict(m))
    calls = []
    lock = threading.Lock()

    def build(model):
        with lock:
            calls.append(1)
        return object()

    with ThreadPoolExecutor(8) as ex:
        results = list(ex.map(lambda _: m2.cached("probe", build), range(32)))
        tables = list(ex.map(lambda s: rns_decode(m2, s).table, te.sentences))
    assert len(calls) == 1 and all(r is results[0] for r in results)
    for s, t in zip(te.sentences, tables):
        assert np.array_equal(t, rns_decode(m, s).table)
