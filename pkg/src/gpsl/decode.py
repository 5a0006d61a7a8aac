"""Prediction: local predictive moments, the iterative RNS decoder and Viterbi."""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from . import _accel
from .corpus import Corpus, Sentence, features_to_csr
from .errors import UnsupportedDependencyError
from .kernel import cross_kernel, diag_kernel, gram
from .model import TrainedModel, pair_index

log = logging.getLogger(__name__)

NEGATIVE_VARIANCE_TOL = 1e-8


@dataclass(frozen=True)
class PredictiveLocal:
    mean: np.ndarray  # (L, J)
    var: np.ndarray  # (L, J)

    @property
    def scores(self) -> np.ndarray:
        """Expected local exponent ``mean + var / 2``."""
        return self.mean + 0.5 * self.var


@dataclass(frozen=True)
class DecodeResult:
    labels: np.ndarray
    table: np.ndarray  # (L, J) RNS probabilities
    iterations: int
    converged: bool = True

    @property
    def confidence(self) -> np.ndarray:
        return self.table.max(axis=1)


@dataclass(frozen=True)
class _LabelPredictor:
    alpha: np.ndarray
    active: np.ndarray
    sqrt_lam: np.ndarray
    chol: np.ndarray


def _build_predictors(model: TrainedModel) -> list[_LabelPredictor]:
    grams = [gram(k, model.X_train) for k in model.kernels]
    out = []
    for j in range(model.J):
        g = grams[0] if len(grams) == 1 else grams[j]
        lam = model.state.lambda_U[j]
        act = np.flatnonzero(lam > 0)
        sq = np.sqrt(lam[act])
        B = sq[:, None] * g.K[np.ix_(act, act)] * sq[None, :]
        B[np.diag_indices_from(B)] += 1.0
        out.append(_LabelPredictor(g.solve(model.state.m_U[j]), act, sq,
                                   sla.cholesky(B, lower=True)))
    return out


def sentence_features(model: TrainedModel, sentence: Sentence | sp.spmatrix) -> sp.csr_matrix:
    if isinstance(sentence, Sentence):
        return features_to_csr([t.features for t in sentence.tokens], model.P)
    return sp.csr_matrix(sentence)


def predictive_local(model: TrainedModel, sentence) -> PredictiveLocal:
    """Predictive mean and variance of every local function at each position.

    ``mean = k_*^T K^{-1} m`` and ``var = k(x,x) - k_*^T (K^{-1} - K^{-1} V K^{-1}) k_*``,
    using ``K^{-1} - K^{-1} V K^{-1} = S B^{-1} S``.
    """
    X = sentence_features(model, sentence)
    preds = model.cached("predictors", _build_predictors)
    L = X.shape[0]
    mean = np.empty((L, model.J))
    var = np.empty((L, model.J))
    for j, p in enumerate(preds):
        spec = model.kernel_for(j)
        Ks = cross_kernel(spec, X, model.X_train)  # (L, NL)
        mean[:, j] = Ks @ p.alpha
        v = sla.solve_triangular(p.chol, p.sqrt_lam[:, None] * Ks[:, p.active].T,
                                 lower=True, check_finite=False)
        var[:, j] = diag_kernel(spec, X) - np.einsum("ij,ij->j", v, v)
    if np.any(var < -NEGATIVE_VARIANCE_TOL):
        warnings.warn(f"negative predictive variance {var.min():.3e} clamped to 0", RuntimeWarning)
    np.maximum(var, 0.0, out=var)
    return PredictiveLocal(mean, var)


def g_matrices(model: TrainedModel) -> np.ndarray:
    """``(R, J, J)`` array of expected pair scores ``m_S + v_S / 2``."""
    J = model.J
    return (model.state.m_S + 0.5 * model.state.v_S).reshape(model.R, J, J)


def g_term(model: TrainedModel, d: int, a: int, b: int) -> float:
    k = pair_index(a, b, model.J)
    return float(model.state.m_S[d, k] + 0.5 * model.state.v_S[d, k])


def rns_from_scores(u: np.ndarray, G: np.ndarray, offsets, tol: float = 1e-6,
                    max_iter: int = 100) -> DecodeResult:
    """Run the RNS fixed-point iteration on precomputed local scores ``u`` (L, J)."""
    if not tol > 0:
        raise ValueError("tol must be positive")
    if max_iter < 1:
        raise ValueError("max_iter must be at least 1")
    table, it, converged = _accel.rns_iterate(u, G, tuple(offsets), tol, max_iter)
    if not converged:
        log.warning("RNS did not converge in %d iterations", max_iter)
    return DecodeResult(np.argmax(table, axis=1), table, int(it), bool(converged))


def rns_decode(model: TrainedModel, sentence, tol: float = 1e-6, max_iter: int = 100) -> DecodeResult:
    """Iteratively refined normalized scores, updated for all positions at once.

    Each sweep adds, for every dependency, the pair scores averaged under the
    previous sweep's distribution at the dependent position; stops when no
    entry moves by ``tol`` or more.
    """
    u = predictive_local(model, sentence).scores
    if model.R == 0:
        return rns_from_scores(u, np.zeros((0, model.J, model.J)), (), tol, max_iter)
    return rns_from_scores(u, g_matrices(model), model.deps.offsets, tol, max_iter)


def viterbi_from_scores(u: np.ndarray, E: np.ndarray) -> np.ndarray:
    return _accel.viterbi(u, E)


def viterbi_decode(model: TrainedModel, sentence) -> np.ndarray:
    """Exact max-sum path for previous-label models."""
    if model.deps.offsets != (-1,):
        raise UnsupportedDependencyError(
            f"Viterbi decoding needs dependencies (-1,), model has {model.deps.offsets}"
        )
    u = predictive_local(model, sentence).scores
    return viterbi_from_scores(u, g_matrices(model)[0])


def decode_corpus(model: TrainedModel, corpus: Corpus, decoder: str = "rns",
                  tol: float = 1e-6, max_iter: int = 100) -> list[DecodeResult]:
    if decoder not in ("rns", "viterbi"):
        raise ValueError(f"unknown decoder {decoder!r}")
    if decoder == "viterbi" and model.deps.offsets != (-1,):
        raise UnsupportedDependencyError(
            f"Viterbi decoding needs dependencies (-1,), model has {model.deps.offsets}"
        )
    out = []
    for s in corpus.sentences:
        if decoder == "rns":
            out.append(rns_decode(model, s, tol, max_iter))
        else:
            out.append(DecodeResult(viterbi_decode(model, s), np.empty((len(s), 0)), 0))
    return out


def format_predictions(model: TrainedModel, corpus: Corpus, results: list[DecodeResult],
                       confidence: bool = False) -> str:
    """Input columns plus the predicted label (and optionally max RNS)."""
    if confidence and any(r.table.shape[1] == 0 for r in results):
        raise ValueError("confidence needs RNS tables; Viterbi results carry none")
    blocks = []
    for s, r in zip(corpus.sentences, results):
        lines = []
        conf_col = r.confidence if confidence else [None] * len(r.labels)
        for tok, lab, conf in zip(s.tokens, r.labels, conf_col):
            cols = list(tok.columns) + [model.label_alphabet.string(int(lab))]
            if confidence:
                cols.append(f"{conf:.6f}")
            lines.append(" ".join(cols) + "\n")
        blocks.append("".join(lines))
    return "\n".join(blocks)

