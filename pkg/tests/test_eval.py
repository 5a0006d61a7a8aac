import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gpsl.corpus import MISSING, Corpus, mask_labels, synth_split
from gpsl.errors import EmptyCorpusError, UnsupportedDependencyError
from gpsl.evaluation import (
    REPORT_HEADER,
    EvalReport,
    compare_decoders,
    evaluate,
    format_percent,
    hamming,
    hamming_with_count,
    missing_sweep,
    paired_t,
)
from gpsl.inference import TrainOptions, train
from gpsl.kernel import KernelSpec
from gpsl.model import GPSL1, GPSL2, DependencySet

FAST = TrainOptions(max_outer=3, learn_hypers=False)


@pytest.fixture(scope="module")
def data():
    return synth_split(3, 6, 12, 6, emission_noise=0.2, seed=5)


@pytest.fixture(scope="module")
def model1(data):
    return train(data[0], GPSL1, KernelSpec("linear", 1.0), FAST)


def test_hamming_examples():
    assert hamming([0, 1, 2], [0, 1, 2]) == 0
    assert hamming([0] * 5, [1] * 5) == 5
    assert hamming_with_count([0, 1, MISSING, 2], [0, 2, 1, 2]) == (1, 3)
    with pytest.raises(ValueError):
        hamming([0, 1], [0])


seqs = st.integers(1, 12).flatmap(
    lambda n: st.tuples(*[st.lists(st.integers(0, 3), min_size=n, max_size=n)] * 3))


@given(seqs)
def test_hamming_is_a_metric(abc):
    a, b, c = abc
    assert hamming(a, a) == 0
    assert hamming(a, b) == hamming(b, a)
    assert hamming(a, c) <= hamming(a, b) + hamming(b, c)
    assert (hamming(a, b) == 0) == (a == b)


def test_format_percent_rounds_half_even():
    assert format_percent(0.0) == "0.00"
    assert format_percent(0.6) == "60.00"
    assert format_percent(0.000125) == "0.01"
    assert format_percent(0.000375) == "0.04"
    assert format_percent(1 / 3) == "33.33"


def report(losses, counts):
    return EvalReport("rns", np.array(losses), np.array(counts), np.zeros(len(losses), int))


@given(st.lists(st.tuples(st.integers(0, 50), st.integers(0, 50)), min_size=1, max_size=20))
def test_accuracy_and_loss_sum_to_one(pairs):
    counts = [a + b for a, b in pairs]
    if sum(counts) == 0:
        return
    r = report([a for a, _ in pairs], counts)
    assert 0.0 <= r.mean_loss <= 1.0
    assert r.accuracy + r.mean_loss == 1.0


def test_paired_t():
    a, b = [3.0, 4.0, 5.0, 8.0], [1.0, 3.0, 2.0, 4.0]
    d = np.subtract(a, b)
    assert paired_t(a, b) == pytest.approx(d.mean() / (d.std(ddof=1) / 2))
    assert paired_t([1, 1], [1, 1]) == 0.0
    assert paired_t([2, 3], [1, 2]) == np.inf
    with pytest.raises(ValueError):
        paired_t([1], [0])


def test_evaluate_is_deterministic_and_consistent(data, model1):
    te = data[1]
    r1, r2 = evaluate(model1, te), evaluate(model1, te)
    assert np.array_equal(r1.losses, r2.losses) and np.array_equal(r1.iterations, r2.iterations)
    assert r1.n_tokens == te.n_tokens
    assert r1.mean_loss == r1.losses.sum() / te.n_tokens
    assert r1.accuracy + r1.mean_loss == 1.0
    assert r1.mean_loss < 2 / 3


def test_evaluate_errors(data, model1):
    te = data[1]
    with pytest.raises(EmptyCorpusError):
        evaluate(model1, Corpus((), te.feature_alphabet, te.label_alphabet))
    with pytest.raises(EmptyCorpusError):
        evaluate(model1, mask_labels(te, 1.0, 0))
    m2 = train(data[0], GPSL2, KernelSpec("linear", 1.0), TrainOptions(max_outer=1, learn_hypers=False))
    with pytest.raises(UnsupportedDependencyError):
        evaluate(m2, te, "viterbi")


def test_missing_truth_is_excluded(data, model1):
    te = data[1]
    masked = mask_labels(te, 0.5, 1)
    r = evaluate(model1, masked)
    assert r.n_tokens == te.n_tokens - round(0.5 * te.n_tokens)


def test_decoder_comparison(data, model1):
    cmp = compare_decoders(model1, data[1])
    assert np.array_equal(cmp.differences, cmp.viterbi.losses - cmp.rns.losses)
    assert cmp.viterbi.decoder == "viterbi" and np.all(cmp.viterbi.iterations == 0)
    assert np.isfinite(cmp.t_value) or np.all(cmp.differences == cmp.differences[0])


def test_missing_sweep_shape_and_identity(data):
    tr, te = data
    variants = [GPSL1, DependencySet(())]
    table = missing_sweep(tr, te, [0.0, 0.4], variants, seed=2, kernel_spec=KernelSpec("linear", 1.0),
                          opts=FAST)
    assert table.accuracy_grid().shape == (2, 2)
    assert not np.isnan(table.accuracy_grid()).any()
    plain = evaluate(train(tr, GPSL1, KernelSpec("linear", 1.0), FAST), te)
    assert np.array_equal(table.cells[0].report.losses, plain.losses)
    lines = table.csv("synth").splitlines()
    assert lines[0] == REPORT_HEADER and len(lines) == 5
    assert lines[1].startswith('synth,rns,0,"-1",')
    again = missing_sweep(tr, te, [0.0, 0.4], variants, seed=2, kernel_spec=KernelSpec("linear", 1.0),
                          opts=FAST)
    assert np.array_equal(again.accuracy_grid(), table.accuracy_grid())


def test_missing_sweep_errors(data):
    tr, te = data
    with pytest.raises(ValueError):
        missing_sweep(tr, te, [1.5], [GPSL1])
    with pytest.raises(UnsupportedDependencyError, match="fraction=0"):
        missing_sweep(tr, te, [0.0], [GPSL2], opts=TrainOptions(max_outer=1, learn_hypers=False),
                      decoder="viterbi")
