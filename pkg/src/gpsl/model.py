"""Model definition: dependency sets, variational state and the model file."""

from __future__ import annotations

import json
import os
import tempfile
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

import numpy as np
import scipy.sparse as sp

from .corpus import Alphabet, TemplateSet
from .errors import ModelFormatError, UnsupportedVersionError
from .kernel import KernelSpec

FORMAT_VERSION = "gpsl-model-v1"


@dataclass(frozen=True)
class DependencySet:
    """Signed offsets of the neighbor labels conditioning each position.

    ``(-1,)`` conditions on the previous label, ``(-1, 1)`` on both
    neighbors, and so on.
    """

    offsets: tuple[int, ...] = ()

    def __post_init__(self):
        offs = tuple(int(o) for o in self.offsets)
        if any(o == 0 for o in offs):
            raise ValueError("dependency offsets must be nonzero")
        if len(set(offs)) != len(offs):
            raise ValueError(f"duplicate dependency offsets in {offs}")
        object.__setattr__(self, "offsets", offs)

    @property
    def R(self) -> int:
        return len(self.offsets)

    @classmethod
    def parse(cls, text: str) -> "DependencySet":
        """Parse a comma separated list such as ``"-2,-1,1,2"``; empty means R=0."""
        text = text.strip()
        if not text or text.lower() == "none":
            return cls(())
        try:
            return cls(tuple(int(p) for p in text.split(",")))
        except ValueError as exc:
            raise ValueError(f"invalid dependency list {text!r}: {exc}") from exc

    def __str__(self) -> str:
        return ",".join(str(o) for o in self.offsets)


GPSL0 = DependencySet(())
GPSL1 = DependencySet((-1,))
GPSL2 = DependencySet((-1, 1))
GPSL4 = DependencySet((-2, -1, 1, 2))


def pair_index(a: int, b: int, J: int) -> int:
    """Row-major index of the (dependent label ``a``, target label ``b``) pair."""
    if not (0 <= a < J and 0 <= b < J):
        raise IndexError(f"label pair ({a}, {b}) out of range for J={J}")
    return a * J + b


@dataclass
class VariationalState:
    """Variational parameters.

    ``lambda_U[j]`` holds the site precisions defining
    ``V_U[j] = (K^{-1} + diag(lambda_U[j]))^{-1}``; ``v_S[d]`` is the diagonal
    of the covariance of the pair scores for dependency ``d``.
    """

    m_U: np.ndarray
    lambda_U: np.ndarray
    m_S: np.ndarray
    v_S: np.ndarray

    @property
    def J(self) -> int:
        return self.m_U.shape[0]

    @property
    def NL(self) -> int:
        return self.m_U.shape[1]

    @property
    def R(self) -> int:
        return self.m_S.shape[0]

    def check(self) -> None:
        J, NL, R = self.J, self.NL, self.R
        shapes = {"m_U": (J, NL), "lambda_U": (J, NL), "m_S": (R, J * J), "v_S": (R, J * J)}
        for name, shape in shapes.items():
            if getattr(self, name).shape != shape:
                raise ModelFormatError(f"{name} has shape {getattr(self, name).shape}, expected {shape}")
        if np.any(self.lambda_U < 0):
            raise ModelFormatError("lambda_U entries must be non-negative")
        if np.any(self.v_S <= 0):
            raise ModelFormatError("v_S entries must be positive")

    def copy(self) -> "VariationalState":
        return VariationalState(self.m_U.copy(), self.lambda_U.copy(), self.m_S.copy(), self.v_S.copy())


def init_state(J: int, NL: int, R: int, seed: int | None = None) -> VariationalState:
    """Zero means, uniform-softmax site precisions 1/J, unit pair variances.

    ``seed`` is accepted for interface symmetry; initialization is deterministic.
    """
    if J < 2 or NL < 1 or R < 0:
        raise ValueError("need J >= 2, NL >= 1, R >= 0")
    return VariationalState(
        m_U=np.zeros((J, NL)),
        lambda_U=np.full((J, NL), 1.0 / J),
        m_S=np.zeros((R, J * J)),
        v_S=np.ones((R, J * J)),
    )


@dataclass(eq=False)
class TrainedModel:
    label_alphabet: Alphabet
    feature_alphabet: Alphabet
    kernels: tuple[KernelSpec, ...]
    deps: DependencySet
    X_train: sp.csr_matrix
    state: VariationalState
    templates: TemplateSet = field(default_factory=lambda: TemplateSet(("U00:%x[0,0]",)))
    meta: dict[str, Any] = field(default_factory=dict)
    version: str = FORMAT_VERSION
    trace: list = field(default_factory=list, repr=False)

    def __post_init__(self):
        self._lock = threading.Lock()
        self._cache: dict[str, Any] = {}
        if len(self.kernels) not in (1, self.J):
            raise ModelFormatError(f"expected 1 or {self.J} kernel specs, got {len(self.kernels)}")
        self.state.check()
        if self.state.J != self.J or self.state.NL != self.NL or self.state.R != self.deps.R:
            raise ModelFormatError("variational state dimensions disagree with the model header")

    @property
    def J(self) -> int:
        return len(self.label_alphabet)

    @property
    def P(self) -> int:
        return len(self.feature_alphabet)

    @property
    def NL(self) -> int:
        return self.X_train.shape[0]

    @property
    def R(self) -> int:
        return self.deps.R

    def kernel_for(self, j: int) -> KernelSpec:
        return self.kernels[0] if len(self.kernels) == 1 else self.kernels[j]

    def cached(self, key: str, build: Callable[["TrainedModel"], Any]) -> Any:
        """Build a derived quantity once; safe under concurrent decoding."""
        with self._lock:
            if key not in self._cache:
                self._cache[key] = build(self)
            return self._cache[key]


def _floats(a: np.ndarray) -> list:
    return np.asarray(a, dtype=np.float64).tolist()


def model_to_dict(m: TrainedModel) -> dict:
    X = m.X_train
    return {
        "format": m.version,
        "J": m.J,
        "P": m.P,
        "NL": m.NL,
        "R": m.R,
        "offsets": list(m.deps.offsets),
        "kernels": [k.to_dict() for k in m.kernels],
        "labels": m.label_alphabet.strings,
        "features": m.feature_alphabet.strings,
        "templates": list(m.templates.templates),
        "train_indptr": X.indptr.tolist(),
        "train_indices": X.indices.tolist(),
        "m_U": _floats(m.state.m_U),
        "lambda_U": _floats(m.state.lambda_U),
        "m_S": _floats(m.state.m_S),
        "v_S": _floats(m.state.v_S),
        "meta": m.meta,
    }


def _array(d: dict, key: str, rows: int, cols: int) -> np.ndarray:
    a = np.asarray(d[key], dtype=np.float64)
    if rows == 0:
        a = a.reshape(0, cols)
    if a.shape != (rows, cols):
        raise ModelFormatError(f"{key} has shape {a.shape}, expected {(rows, cols)}")
    return a


def model_from_dict(d: dict) -> TrainedModel:
    version = d.get("format")
    if version != FORMAT_VERSION:
        raise UnsupportedVersionError(f"unsupported model format {version!r} (expected {FORMAT_VERSION})")
    try:
        J, P, NL, R = (int(d[k]) for k in ("J", "P", "NL", "R"))
        deps = DependencySet(tuple(d["offsets"]))
        labels = Alphabet(d["labels"])
        features = Alphabet(d["features"])
        if deps.R != R or len(labels) != J or len(features) != P:
            raise ModelFormatError("header counts disagree with offsets/alphabets")
        indptr = np.asarray(d["train_indptr"], dtype=np.int64)
        indices = np.asarray(d["train_indices"], dtype=np.int64)
        if len(indptr) != NL + 1 or indptr[-1] != len(indices) or np.any(np.diff(indptr) < 0):
            raise ModelFormatError("training matrix row pointers are inconsistent")
        if len(indices) and (indices.min() < 0 or indices.max() >= P):
            raise ModelFormatError("training matrix feature ids out of range")
        X = sp.csr_matrix((np.ones(len(indices)), indices, indptr), shape=(NL, P))
        state = VariationalState(
            m_U=_array(d, "m_U", J, NL),
            lambda_U=_array(d, "lambda_U", J, NL),
            m_S=_array(d, "m_S", R, J * J),
            v_S=_array(d, "v_S", R, J * J),
        )
        kernels = tuple(KernelSpec.from_dict(k) for k in d["kernels"])
        return TrainedModel(labels, features, kernels, deps, X, state,
                            TemplateSet(tuple(d.get("templates", ("U00:%x[0,0]",)))),
                            dict(d.get("meta", {})), version)
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ModelFormatError):
            raise
        raise ModelFormatError(f"malformed model file: {exc}") from exc


def save(m: TrainedModel, path: str | Path) -> None:
    """Write the model atomically (temporary file + rename)."""
    path = Path(path)
    text = json.dumps(model_to_dict(m), allow_nan=False)
    fd, tmp = tempfile.mkstemp(prefix=path.name + ".", suffix=".tmp", dir=path.parent or ".")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
            fh.write("\n")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load(path: str | Path) -> TrainedModel:
    try:
        d = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"{path}: not a complete model file ({exc})") from exc
    if not isinstance(d, dict):
        raise ModelFormatError(f"{path}: not a model file")
    return model_from_dict(d)
