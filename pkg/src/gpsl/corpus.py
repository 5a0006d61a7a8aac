"""CoNLL ingestion, unigram feature templates, label masking and synthetic data.

A CoNLL file holds one token per line with whitespace separated columns and a
blank line between sentences. The last column is the label; ``?`` marks a
missing label. Features are produced by CRF++-style unigram templates such as
``U00:%x[0,0]`` or ``U05:%x[-1,0]/%x[0,0]``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import CorpusFormatError, EmptyCorpusError, TemplateError

MISSING = -1
MISSING_LABEL = "?"

_MACRO = re.compile(r"%x\[\s*(-?\d+)\s*,\s*(\d+)\s*\]")


class Alphabet:
    """Bijection between strings and consecutive integer ids."""

    def __init__(self, items: Iterable[str] = ()):
        self._index: dict[str, int] = {}
        self._strings: list[str] = []
        for s in items:
            self.add(s)

    def add(self, s: str) -> int:
        i = self._index.get(s)
        if i is None:
            i = len(self._strings)
            self._index[s] = i
            self._strings.append(s)
        return i

    def get(self, s: str, default: int | None = None) -> int | None:
        return self._index.get(s, default)

    def index(self, s: str) -> int:
        return self._index[s]

    def string(self, i: int) -> str:
        return self._strings[i]

    @property
    def strings(self) -> list[str]:
        return list(self._strings)

    def copy(self) -> "Alphabet":
        return Alphabet(self._strings)

    def __contains__(self, s: object) -> bool:
        return s in self._index

    def __len__(self) -> int:
        return len(self._strings)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Alphabet) and self._strings == other._strings

    def __repr__(self) -> str:
        return f"Alphabet({len(self)} entries)"


@dataclass(frozen=True)
class Token:
    columns: tuple[str, ...]
    features: tuple[int, ...]
    label: int

    @property
    def is_missing(self) -> bool:
        return self.label == MISSING


@dataclass(frozen=True)
class Sentence:
    tokens: tuple[Token, ...]

    def __post_init__(self):
        if len(self.tokens) == 0:
            raise CorpusFormatError("sentence must contain at least one token")

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def labels(self) -> np.ndarray:
        return np.array([t.label for t in self.tokens], dtype=np.int64)


@dataclass(frozen=True)
class RawCorpus:
    """Sentences of raw column tuples, before feature expansion."""

    sentences: tuple[tuple[tuple[str, ...], ...], ...]

    @property
    def n_columns(self) -> int:
        return len(self.sentences[0][0]) if self.sentences else 0

    def __len__(self) -> int:
        return len(self.sentences)


@dataclass(frozen=True)
class TemplateSet:
    templates: tuple[str, ...]

    def __post_init__(self):
        for t in self.templates:
            if not t.startswith("U"):
                raise TemplateError(f"only unigram (U) templates are supported, got {t!r}")

    @classmethod
    def parse(cls, text: str) -> "TemplateSet":
        out = []
        for raw in text.splitlines():
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            out.append(line)
        return cls(tuple(out))

    @classmethod
    def read(cls, path: str | Path) -> "TemplateSet":
        return cls.parse(Path(path).read_text(encoding="utf-8"))

    def max_column(self) -> int:
        cols = [int(c) for t in self.templates for _, c in _MACRO.findall(t)]
        return max(cols, default=-1)


DEFAULT_TEMPLATES = TemplateSet(("U00:%x[0,0]",))


@dataclass(frozen=True)
class Corpus:
    sentences: tuple[Sentence, ...]
    label_alphabet: Alphabet
    feature_alphabet: Alphabet
    templates: TemplateSet = field(default=DEFAULT_TEMPLATES)

    @property
    def P(self) -> int:
        return len(self.feature_alphabet)

    @property
    def J(self) -> int:
        return len(self.label_alphabet)

    @property
    def n_tokens(self) -> int:
        return sum(len(s) for s in self.sentences)

    def __len__(self) -> int:
        return len(self.sentences)

    def labels(self) -> np.ndarray:
        """Flat label vector over all tokens, MISSING where unlabeled."""
        return np.array([t.label for s in self.sentences for t in s.tokens], dtype=np.int64)

    def feature_matrix(self) -> sp.csr_matrix:
        """Binary CSR matrix with one row per token (in corpus order)."""
        return features_to_csr([t.features for s in self.sentences for t in s.tokens], self.P)

    def with_labels(self, labels: Sequence[int]) -> "Corpus":
        """Copy of the corpus with the flat label vector replaced."""
        labels = list(labels)
        if len(labels) != self.n_tokens:
            raise ValueError("label vector length does not match token count")
        it = iter(labels)
        sents = tuple(
            Sentence(tuple(Token(t.columns, t.features, int(next(it))) for t in s.tokens))
            for s in self.sentences
        )
        return Corpus(sents, self.label_alphabet, self.feature_alphabet, self.templates)


def features_to_csr(rows: Sequence[Sequence[int]], P: int) -> sp.csr_matrix:
    indptr = np.zeros(len(rows) + 1, dtype=np.int64)
    indptr[1:] = np.cumsum([len(r) for r in rows])
    indices = np.fromiter((f for r in rows for f in r), dtype=np.int64, count=int(indptr[-1]))
    if len(indices) and (indices.min() < 0 or indices.max() >= P):
        raise CorpusFormatError(f"feature id out of range for P={P}")
    data = np.ones(len(indices), dtype=np.float64)
    return sp.csr_matrix((data, indices, indptr), shape=(len(rows), P))


def read_conll(path: str | Path) -> RawCorpus:
    """Parse a CoNLL column file.

    Raises
    ------
    CorpusFormatError
        If the column count differs between any two token lines.
    EmptyCorpusError
        If the file holds no tokens.
    """
    text = Path(path).read_text(encoding="utf-8")
    return parse_conll(text, source=str(path))


def parse_conll(text: str, source: str = "<string>") -> RawCorpus:
    sentences: list[tuple[tuple[str, ...], ...]] = []
    current: list[tuple[str, ...]] = []
    ncols = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        cols = tuple(line.split())
        if not cols:
            if current:
                sentences.append(tuple(current))
                current = []
            continue
        if ncols is None:
            ncols = len(cols)
        elif len(cols) != ncols:
            raise CorpusFormatError(
                f"{source}:{lineno}: expected {ncols} columns, found {len(cols)}"
            )
        current.append(cols)
    if current:
        sentences.append(tuple(current))
    if not sentences:
        raise EmptyCorpusError(f"{source}: no tokens found")
    return RawCorpus(tuple(sentences))


def write_conll(path: str | Path, sentences: Iterable[Iterable[Sequence[str]]]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_conll(sentences))


def format_conll(sentences: Iterable[Iterable[Sequence[str]]]) -> str:
    blocks = []
    for sent in sentences:
        blocks.append("".join(" ".join(cols) + "\n" for cols in sent))
    return "\n".join(blocks)


def _pad(i: int, L: int) -> str:
    if i < 0:
        return f"_B{i}_"
    return f"_B+{i - L + 1}_"


def expand_template(template: str, rows: Sequence[Sequence[str]], pos: int) -> str:
    """Substitute every ``%x[row,col]`` macro of ``template`` at position ``pos``."""
    L = len(rows)

    def sub(m: re.Match) -> str:
        i = pos + int(m.group(1))
        if 0 <= i < L:
            return rows[i][int(m.group(2))]
        return _pad(i, L)

    return _MACRO.sub(sub, template)


def apply_templates(
    raw: RawCorpus,
    tset: TemplateSet = DEFAULT_TEMPLATES,
    freeze: bool = False,
    feature_alphabet: Alphabet | None = None,
    label_alphabet: Alphabet | None = None,
) -> Corpus:
    """Expand unigram templates into sparse binary feature ids.

    With ``freeze`` set, both alphabets must be given and are not extended:
    unseen feature strings are dropped and an unseen label string is an
    error. Without it, copies of the given alphabets (or fresh ones) grow as
    new strings appear.
    """
    n_input = raw.n_columns - 1
    if tset.max_column() >= n_input:
        raise TemplateError(
            f"template references column {tset.max_column()} but data has "
            f"{n_input} input column(s)"
        )
    if freeze:
        if feature_alphabet is None or label_alphabet is None:
            raise ValueError("freeze requires existing feature and label alphabets")
        feats, labs = feature_alphabet, label_alphabet
    else:
        feats = feature_alphabet.copy() if feature_alphabet is not None else Alphabet()
        labs = label_alphabet.copy() if label_alphabet is not None else Alphabet()

    sentences = []
    for rows in raw.sentences:
        tokens = []
        for pos, cols in enumerate(rows):
            ids = set()
            for t in tset.templates:
                s = expand_template(t, rows, pos)
                i = feats.get(s) if freeze else feats.add(s)
                if i is not None:
                    ids.add(i)
            lab = cols[-1]
            if lab == MISSING_LABEL:
                y = MISSING
            elif freeze:
                y = labs.get(lab)
                if y is None:
                    raise CorpusFormatError(f"label {lab!r} not in the model's label alphabet")
            else:
                y = labs.add(lab)
            tokens.append(Token(tuple(cols), tuple(sorted(ids)), y))
        sentences.append(Sentence(tuple(tokens)))
    return Corpus(tuple(sentences), label_alphabet=labs, feature_alphabet=feats, templates=tset)


def mask_labels(c: Corpus, fraction: float, seed: int = 0) -> Corpus:
    """Hide ``round(fraction * n_tokens)`` labels chosen uniformly at random."""
    if not 0.0 <= fraction <= 1.0:
        raise ValueError(f"mask fraction must lie in [0, 1], got {fraction}")
    y = c.labels()
    if np.any(y == MISSING):
        raise ValueError("corpus already contains missing labels")
    k = round(fraction * len(y))
    if k == 0:
        return c
    rng = np.random.default_rng(seed)
    hide = rng.choice(len(y), size=k, replace=False)
    y[hide] = MISSING
    return c.with_labels(y)


def transition_matrix(J: int, transition_strength: float, perm: np.ndarray) -> np.ndarray:
    """Row-stochastic matrix putting weight exp(strength) on ``perm[a]``."""
    logits = np.zeros((J, J))
    logits[np.arange(J), perm] = transition_strength
    T = np.exp(logits - logits.max(axis=1, keepdims=True))
    return T / T.sum(axis=1, keepdims=True)


def synth_raw(
    J: int,
    L: int,
    N: int,
    transition_strength: float = 3.0,
    emission_dim: int = 5,
    seed: int = 0,
    emission_noise: float = 0.5,
) -> RawCorpus:
    """Sample ``N`` sequences of length ``L`` from a noisy first-order chain.

    Each label owns a block of ``emission_dim`` words. A token emits a word from
    its label's block, except with probability ``emission_noise`` where it
    emits a word drawn uniformly from the whole vocabulary.
    """
    if J < 2 or L < 1 or N < 1 or emission_dim < 1:
        raise ValueError("need J >= 2, L >= 1, N >= 1, emission_dim >= 1")
    if transition_strength < 0 or not math.isfinite(transition_strength):
        raise ValueError("transition_strength must be finite and non-negative")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(J)
    T = transition_matrix(J, transition_strength, perm)
    cumT = np.cumsum(T, axis=1)
    vocab = J * emission_dim

    sentences = []
    for _ in range(N):
        y = np.empty(L, dtype=np.int64)
        y[0] = rng.integers(J)
        u = rng.random(L)
        for l in range(1, L):
            y[l] = min(int(np.searchsorted(cumT[y[l - 1]], u[l], side="right")), J - 1)
        noisy = rng.random(L) < emission_noise
        words = np.where(
            noisy,
            rng.integers(vocab, size=L),
            y * emission_dim + rng.integers(emission_dim, size=L),
        )
        sentences.append(tuple((f"w{w}", f"L{lab}") for w, lab in zip(words, y)))
    return RawCorpus(tuple(sentences))


def synth_generate(
    J: int,
    L: int,
    N: int,
    transition_strength: float = 3.0,
    emission_dim: int = 5,
    seed: int = 0,
    emission_noise: float = 0.5,
    feature_alphabet: Alphabet | None = None,
) -> Corpus:
    """Synthetic labeled corpus featurized with the single word template.

    Label ``Lk`` always receives id ``k``. Passing the ``feature_alphabet`` of a
    training corpus freezes it, which is how matching test sets are built.
    """
    raw = synth_raw(J, L, N, transition_strength, emission_dim, seed, emission_noise)
    labels = Alphabet(f"L{k}" for k in range(J))
    if feature_alphabet is None:
        return apply_templates(raw, DEFAULT_TEMPLATES, label_alphabet=labels)
    return apply_templates(raw, DEFAULT_TEMPLATES, freeze=True,
                           feature_alphabet=feature_alphabet, label_alphabet=labels)


def synth_split(
    J: int,
    L: int,
    n_train: int,
    n_test: int,
    transition_strength: float = 3.0,
    emission_dim: int = 5,
    seed: int = 0,
    emission_noise: float = 0.5,
) -> tuple[Corpus, Corpus]:
    """Train/test corpora drawn from one chain; the test set uses the frozen alphabets."""
    raw = synth_raw(J, L, n_train + n_test, transition_strength, emission_dim, seed, emission_noise)
    labels = Alphabet(f"L{k}" for k in range(J))
    tr = apply_templates(RawCorpus(raw.sentences[:n_train]), DEFAULT_TEMPLATES, label_alphabet=labels)
    te = apply_templates(RawCorpus(raw.sentences[n_train:]), DEFAULT_TEMPLATES, freeze=True,
                         feature_alphabet=tr.feature_alphabet, label_alphabet=tr.label_alphabet)
    return tr, te
