import numpy as np
import pytest

from gpsl.corpus import Alphabet, RawCorpus, TemplateSet, apply_templates
from gpsl.inference import VariationalProblem, build_contexts
from gpsl.kernel import KernelSpec
from gpsl.model import DependencySet, VariationalState

WORD_AND_ID = TemplateSet(("U00:%x[0,0]", "U01:%x[0,1]"))


def random_corpus(rng, N, L, J, vocab=4, missing=0.0, unique_ids=False):
    """Small labeled corpus; with ``unique_ids`` every token also gets its own feature."""
    sents = []
    for n in range(N):
        Ln = L if np.isscalar(L) else int(rng.integers(L[0], L[1] + 1))
        rows = []
        for l in range(Ln):
            lab = "?" if rng.random() < missing else f"L{rng.integers(J)}"
            cols = [f"w{rng.integers(vocab)}"]
            if unique_ids:
                cols.append(f"t{n}_{l}")
            rows.append(tuple(cols + [lab]))
        sents.append(tuple(rows))
    labels = Alphabet(f"L{k}" for k in range(J))
    tset = WORD_AND_ID if unique_ids else TemplateSet(("U00:%x[0,0]",))
    return apply_templates(RawCorpus(tuple(sents)), tset, label_alphabet=labels)


def random_state(rng, J, NL, R, lam_low=0.05):
    return VariationalState(
        m_U=rng.normal(size=(J, NL)),
        lambda_U=rng.uniform(lam_low, 0.95, size=(J, NL)),
        m_S=rng.normal(size=(R, J * J)),
        v_S=rng.uniform(0.2, 1.0, size=(R, J * J)),
    )


def random_problem(rng, N=2, L=3, J=3, offsets=(-1,), kernel=None, missing=0.0,
                   unique_ids=True):
    c = random_corpus(rng, N, L, J, missing=missing, unique_ids=unique_ids)
    deps = DependencySet(tuple(offsets)) if offsets else DependencySet(())
    ctx = build_contexts(c, deps)
    kernel = kernel if kernel is not None else KernelSpec("linear", float(rng.uniform(0.5, 2.0)))
    state = random_state(rng, J, ctx.NL, deps.R)
    return VariationalProblem(ctx, J, kernel, state)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
