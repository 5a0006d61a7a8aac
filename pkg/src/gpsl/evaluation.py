"""Hamming loss, decoder comparisons and the missing-label sweep."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from decimal import ROUND_HALF_EVEN, Decimal
from typing import Sequence

import numpy as np

from .corpus import MISSING, Corpus, mask_labels
from .decode import decode_corpus
from .errors import EmptyCorpusError, GPSLError
from .inference import TrainOptions, train
from .kernel import KernelSpec
from .model import DependencySet, TrainedModel


def hamming_with_count(y_true: Sequence[int], y_pred: Sequence[int]) -> tuple[int, int]:
    """Mismatch count and number of counted positions (missing truth skipped)."""
    yt = np.asarray(y_true)
    yp = np.asarray(y_pred)
    if yt.shape != yp.shape:
        raise ValueError(f"length mismatch: {len(yt)} true vs {len(yp)} predicted labels")
    use = yt != MISSING
    return int(np.sum(yt[use] != yp[use])), int(np.sum(use))


def hamming(y_true: Sequence[int], y_pred: Sequence[int]) -> int:
    return hamming_with_count(y_true, y_pred)[0]


def format_percent(fraction: float) -> str:
    """``100 * fraction`` with two decimals, rounding half to even."""
    return str(Decimal(repr(100.0 * fraction)).quantize(Decimal("0.01"), rounding=ROUND_HALF_EVEN))


@dataclass(frozen=True)
class EvalReport:
    decoder: str
    losses: np.ndarray  # per-sentence mismatch counts
    counts: np.ndarray  # per-sentence counted tokens
    iterations: np.ndarray  # per-sentence decoder iterations (0 for viterbi)
    wall_time: float = 0.0
    non_converged: int = 0

    @property
    def n_tokens(self) -> int:
        return int(self.counts.sum())

    @property
    def mean_loss(self) -> float:
        return float(self.losses.sum()) / self.n_tokens

    @property
    def loss_percent(self) -> str:
        return format_percent(self.mean_loss)

    @property
    def accuracy(self) -> float:
        return 1.0 - self.mean_loss

    @property
    def mean_iterations(self) -> float:
        return float(np.mean(self.iterations)) if len(self.iterations) else 0.0

    @property
    def max_iterations(self) -> int:
        return int(np.max(self.iterations)) if len(self.iterations) else 0


def evaluate(model: TrainedModel, corpus: Corpus, decoder: str = "rns",
             tol: float = 1e-6, max_iter: int = 100) -> EvalReport:
    if len(corpus) == 0:
        raise EmptyCorpusError("cannot evaluate on an empty corpus")
    t0 = time.perf_counter()
    results = decode_corpus(model, corpus, decoder, tol, max_iter)
    wall = time.perf_counter() - t0
    losses, counts = zip(*(hamming_with_count(s.labels, r.labels)
                           for s, r in zip(corpus.sentences, results)))
    counts = np.asarray(counts)
    if counts.sum() == 0:
        raise EmptyCorpusError("corpus has no labeled tokens to evaluate")
    return EvalReport(
        decoder=decoder,
        losses=np.asarray(losses),
        counts=counts,
        iterations=np.array([r.iterations for r in results]),
        wall_time=wall,
        non_converged=sum(not r.converged for r in results),
    )


def paired_t(a: Sequence[float], b: Sequence[float]) -> float:
    """Paired t statistic of ``a - b``."""
    diff = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    n = len(diff)
    if n < 2:
        raise ValueError("paired t-test needs at least two pairs")
    mean = diff.mean()
    sd = diff.std(ddof=1)
    if sd == 0.0:
        return 0.0 if mean == 0.0 else math.copysign(math.inf, mean)
    return float(mean / (sd / math.sqrt(n)))


@dataclass(frozen=True)
class DecoderComparison:
    rns: EvalReport
    viterbi: EvalReport

    @property
    def differences(self) -> np.ndarray:
        """Per-sentence loss of Viterbi minus loss of RNS."""
        return self.viterbi.losses - self.rns.losses

    @property
    def t_value(self) -> float:
        return paired_t(self.viterbi.losses, self.rns.losses)


def compare_decoders(model: TrainedModel, corpus: Corpus, tol: float = 1e-6,
                     max_iter: int = 100) -> DecoderComparison:
    return DecoderComparison(evaluate(model, corpus, "rns", tol, max_iter),
                             evaluate(model, corpus, "viterbi"))


REPORT_HEADER = "dataset,decoder,fraction,deps,loss_pct,accuracy,mean_iterations,wall_time"


@dataclass(frozen=True)
class SweepCell:
    fraction: float
    deps: DependencySet
    report: EvalReport
    train_time: float

    def csv(self, dataset: str = "") -> str:
        r = self.report
        return (f"{dataset},{r.decoder},{self.fraction:g},\"{self.deps}\",{r.loss_percent},"
                f"{r.accuracy:.6f},{r.mean_iterations:.3f},{self.train_time + r.wall_time:.3f}")


@dataclass
class SweepTable:
    fractions: list[float]
    variants: list[DependencySet]
    cells: list[SweepCell] = field(default_factory=list)

    def accuracy_grid(self) -> np.ndarray:
        """``(len(fractions), len(variants))`` accuracies."""
        grid = np.full((len(self.fractions), len(self.variants)), np.nan)
        for c in self.cells:
            grid[self.fractions.index(c.fraction), self.variants.index(c.deps)] = c.report.accuracy
        return grid

    def csv(self, dataset: str = "") -> str:
        return "\n".join([REPORT_HEADER] + [c.csv(dataset) for c in self.cells]) + "\n"


def missing_sweep(
    train_corpus: Corpus,
    test_corpus: Corpus,
    fractions: Sequence[float],
    variants: Sequence[DependencySet],
    seed: int = 0,
    kernel_spec: KernelSpec | Sequence[KernelSpec] = KernelSpec(),
    opts: TrainOptions | None = None,
    decoder: str = "rns",
) -> SweepTable:
    """Train every (mask fraction, dependency set) cell and evaluate on ``test_corpus``.

    The mask for a given fraction is drawn once with ``seed`` and shared by
    all dependency variants.
    """
    fractions = [float(f) for f in fractions]
    for f in fractions:
        if not 0.0 <= f <= 1.0:
            raise ValueError(f"mask fraction {f} outside [0, 1]")
    table = SweepTable(fractions, list(variants))
    for f in fractions:
        masked = mask_labels(train_corpus, f, seed)
        for deps in table.variants:
            try:
                t0 = time.perf_counter()
                model = train(masked, deps, kernel_spec, opts)
                elapsed = time.perf_counter() - t0
                report = evaluate(model, test_corpus, decoder)
            except GPSLError as exc:
                raise type(exc)(f"sweep cell (fraction={f:g}, deps={deps}): {exc}") from exc
            table.cells.append(SweepCell(f, deps, report, elapsed))
    return table
