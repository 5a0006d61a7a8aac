"""Variational Gaussian training of the pseudo-likelihood sequence model.

The posterior over the per-label local functions is ``N(m_U[j], V_U[j])`` with
``V_U[j] = (K^{-1} + diag(lambda_U[j]))^{-1}``; the posterior over the pair
scores of dependency ``d`` is ``N(m_S[d], diag(v_S[d]))`` under an identity
prior. Every update below is a coordinate ascent step on the Jensen lower
bound of the evidence, and ``train`` wraps them in the variational-EM loop
with a hyperparameter step between inner sweeps.

Writing ``S = diag(sqrt(lambda))`` and ``B = I + S K S`` the quantities needed
by the bound are ``log|V K^{-1}| = -log|B|``, ``tr(V K^{-1}) = tr(B^{-1})`` and
``diag(V) = diag(K) - colsum((chol(B)^{-1} S K)^2)``; nothing requires
``K^{-1}`` itself beyond solves with the Gram factor.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from . import _accel
from .corpus import MISSING, Corpus
from .errors import NumericalError
from .kernel import GramMatrix, KernelSpec, cholesky, gram, kernel_log_param_grads
from .model import DependencySet, TrainedModel, VariationalState, init_state

log = logging.getLogger(__name__)

OUT_OF_RANGE = -2


@dataclass(frozen=True)
class TokenContexts:
    """Flattened training tokens with their dependent labels.

    ``dep[t, d]`` is the label at ``position[t] + offsets[d]`` in the same
    sentence, ``MISSING`` if that label is unobserved, or ``OUT_OF_RANGE``.
    """

    X: sp.csr_matrix
    y: np.ndarray
    dep: np.ndarray
    sentence: np.ndarray
    position: np.ndarray
    offsets: tuple[int, ...]

    @property
    def NL(self) -> int:
        return len(self.y)

    @property
    def observed(self) -> np.ndarray:
        return self.y >= 0


def dependent_labels(labels: np.ndarray, offsets: Sequence[int]) -> np.ndarray:
    """``(L, R)`` dependent labels of one sentence (MISSING / OUT_OF_RANGE aware)."""
    L = len(labels)
    dep = np.full((L, len(offsets)), OUT_OF_RANGE, dtype=np.int64)
    for d, off in enumerate(offsets):
        lo, hi = max(0, -off), min(L, L - off)
        if lo < hi:
            dep[lo:hi, d] = labels[lo + off:hi + off]
    return dep


def build_contexts(corpus: Corpus, deps: DependencySet) -> TokenContexts:
    deps_rows, sent, pos = [], [], []
    for n, s in enumerate(corpus.sentences):
        deps_rows.append(dependent_labels(s.labels, deps.offsets))
        sent.append(np.full(len(s), n))
        pos.append(np.arange(len(s)))
    return TokenContexts(
        X=corpus.feature_matrix(),
        y=corpus.labels(),
        dep=np.concatenate(deps_rows, axis=0),
        sentence=np.concatenate(sent),
        position=np.concatenate(pos),
        offsets=deps.offsets,
    )


def log_softmax_parts(s: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Row-wise log-sum-exp and softmax of a score matrix."""
    mx = s.max(axis=1, keepdims=True)
    e = np.exp(s - mx)
    tot = e.sum(axis=1, keepdims=True)
    return (mx + np.log(tot)).ravel(), e / tot


@dataclass
class TrainOptions:
    inner_tol: float = 1e-5
    outer_tol: float = 1e-4
    max_outer: int = 20
    max_inner: int = 100
    learn_hypers: bool = True
    # the linear kernel's only hyperparameter is a global scale; it stays
    # fixed unless asked for (see README)
    learn_linear_scale: bool = False
    grad_tol: float = 1e-6
    newton_max_iter: int = 100
    fp_tol: float = 1e-8
    fp_max_sweeps: int = 50
    hyper_max_steps: int = 20
    seed: int = 0
    callback: Callable[["TraceEntry"], None] | None = None


@dataclass(frozen=True)
class TraceEntry:
    outer: int
    inner: int
    step: str
    bound: float
    wall: float

    def csv(self) -> str:
        return f"{self.outer},{self.inner},{self.step},{self.bound!r},{self.wall:.6f}"


TRACE_HEADER = "outer,inner,step,bound,wall_time"


@dataclass
class _Site:
    """Factorization of ``B = I + S K S`` restricted to tokens with lambda > 0."""

    active: np.ndarray
    chol: np.ndarray
    sqrt_lam: np.ndarray
    diagV: np.ndarray
    neg_logdet_B: float
    trace_Binv: float


class VariationalProblem:
    """Mutable working state for coordinate ascent on the lower bound.

    Holds the Gram factors, ``alpha[j] = K^{-1} m_U[j]``, the site
    factorizations behind ``V_U[j]`` and the current token score table, and
    keeps all of them consistent with ``state`` after every update.
    """

    def __init__(self, ctx: TokenContexts, J: int,
                 kernels: KernelSpec | Sequence[KernelSpec],
                 state: VariationalState | None = None):
        self.ctx = ctx
        self.J = J
        self.R = len(ctx.offsets)
        if ctx.dep.shape != (ctx.NL, self.R):
            raise ValueError("dependency table has the wrong shape")
        self.obs = ctx.observed
        self.y_obs = np.where(self.obs, ctx.y, 0)
        self.state = state if state is not None else init_state(J, ctx.NL, self.R)
        if self.state.NL != ctx.NL or self.state.J != J or self.state.R != self.R:
            raise ValueError("variational state does not match the problem dimensions")
        self._set_kernels(kernels)

    # -- construction / caches -------------------------------------------

    @property
    def NL(self) -> int:
        return self.ctx.NL

    @property
    def shared_kernel(self) -> bool:
        return len(self.kernels) == 1

    def kernel_index(self, j: int) -> int:
        return 0 if self.shared_kernel else j

    def gram_for(self, j: int) -> GramMatrix:
        return self.grams[self.kernel_index(j)]

    def _set_kernels(self, kernels) -> None:
        if isinstance(kernels, KernelSpec):
            kernels = (kernels,)
        kernels = tuple(kernels)
        if len(kernels) not in (1, self.J):
            raise ValueError(f"need 1 or {self.J} kernel specs, got {len(kernels)}")
        grams = tuple(gram(k, self.ctx.X) for k in kernels)
        self.kernels = kernels
        self.grams = grams
        self.alpha = np.vstack([self.gram_for(j).solve(self.state.m_U[j]) for j in range(self.J)])
        self.sites = [self._factor_site(j) for j in range(self.J)]
        self.refresh_scores()

    def _factor_site(self, j: int, lam: np.ndarray | None = None) -> _Site:
        K = self.gram_for(j).K
        lam = self.state.lambda_U[j] if lam is None else lam
        act = np.flatnonzero(lam > 0)
        sq = np.sqrt(lam[act])
        B = sq[:, None] * K[np.ix_(act, act)] * sq[None, :]
        B[np.diag_indices_from(B)] += 1.0
        L = cholesky(B, f"I + S K S for label {j}")
        Q = sla.solve_triangular(L, sq[:, None] * K[act], lower=True, check_finite=False)
        diagV = np.diag(K) - np.einsum("ij,ij->j", Q, Q)
        # S V S = I - B^{-1}, hence tr(B^{-1}) = NL - sum(lambda * diag V)
        trace = len(lam) - float(lam[act] @ diagV[act])
        return _Site(act, L, sq, diagV, -2.0 * float(np.sum(np.log(np.diag(L)))), trace)

    def site_precision(self, j: int) -> np.ndarray:
        """Dense ``S B^{-1} S`` (equal to ``K^-1 - K^-1 V K^-1``) for label ``j``."""
        site = self.sites[j]
        C = np.zeros((self.NL, self.NL))
        if len(site.active):
            Binv, info = sla.lapack.dpotri(site.chol, lower=1)
            if info != 0:
                raise NumericalError(f"inverting site matrix for label {j} failed (info={info})")
            Binv = np.tril(Binv) + np.tril(Binv, -1).T
            C[np.ix_(site.active, site.active)] = site.sqrt_lam[:, None] * Binv * site.sqrt_lam[None, :]
        return C

    def dense_V(self, j: int) -> np.ndarray:
        K = self.gram_for(j).K
        return K - K @ self.site_precision(j) @ K

    def refresh_scores(self) -> None:
        st = self.state
        base = (st.m_U + 0.5 * np.vstack([s.diagV for s in self.sites])).T
        if self.R:
            G = (st.m_S + 0.5 * st.v_S).reshape(self.R, self.J, self.J)
            self.scores = _accel.token_scores(base, self.ctx.dep, G)
        else:
            self.scores = np.ascontiguousarray(base)
        self.lse, self.sigma = log_softmax_parts(self.scores)

    # -- objective pieces -------------------------------------------------

    def kl_U(self, j: int) -> float:
        s = self.sites[j]
        return 0.5 * (s.neg_logdet_B - s.trace_Binv - float(self.state.m_U[j] @ self.alpha[j]))

    def kl_S(self, d: int) -> float:
        v, m = self.state.v_S[d], self.state.m_S[d]
        return 0.5 * (float(np.sum(np.log(v) - v)) - float(m @ m))

    def numerator(self) -> np.ndarray:
        """Per-token mean score of the observed label (0 for missing tokens)."""
        st, t = self.state, np.arange(self.NL)
        num = st.m_U[self.y_obs, t]
        for d in range(self.R):
            a = self.ctx.dep[:, d]
            act = a >= 0
            num = num + np.where(act, st.m_S[d][np.where(act, a, 0) * self.J + self.y_obs], 0.0)
        return np.where(self.obs, num, 0.0)

    def likelihood(self) -> float:
        return float(np.sum(self.numerator() - np.where(self.obs, self.lse, 0.0)))

    def bound(self) -> float:
        return (sum(self.kl_U(j) for j in range(self.J))
                + sum(self.kl_S(d) for d in range(self.R))
                + self.likelihood())

    # -- gradients --------------------------------------------------------

    def residual(self, j: int) -> np.ndarray:
        return np.where(self.obs, (self.ctx.y == j) - self.sigma[:, j], 0.0)

    def grad_m_U(self, j: int) -> np.ndarray:
        return -self.alpha[j] + self.residual(j)

    def pair_moments(self, d: int):
        return _accel.pair_moments(self.ctx.dep[:, d], self.ctx.y, self.sigma, self.J)

    def grad_m_S(self, d: int) -> np.ndarray:
        counts, sigsum, _ = self.pair_moments(d)
        return -self.state.m_S[d] + (counts - sigsum).ravel()

    def grad_v_S(self, d: int) -> np.ndarray:
        _, sigsum, _ = self.pair_moments(d)
        v = self.state.v_S[d]
        return 0.5 / v - 0.5 - 0.5 * sigsum.ravel()

    def grad_diag_V(self, j: int) -> np.ndarray:
        """Derivative of the likelihood term w.r.t. the diagonal of V_U[j]."""
        return -0.5 * np.where(self.obs, self.sigma[:, j], 0.0)

    def theta_gradient(self, hold: str = "lambda", correction_tol: float = 0.0) -> np.ndarray:
        """Gradient of the bound w.r.t. the log hyperparameters.

        ``hold="lambda"`` differentiates the bound as a function of
        ``(theta, m_U, lambda_U, m_S, v_S)``, so V_U moves with K; this is
        what ``hyper_step`` ascends. ``hold="V"`` keeps the covariance
        matrices themselves fixed, giving
        ``1/2 tr[(K^-1 V K^-1 + K^-1 m m^T K^-1 - K^-1) dK]``. The two agree
        whenever lambda_U is at its fixed point; the difference term is
        skipped when every ``|lambda - softmax|`` is below ``correction_tol``.
        """
        if hold not in ("lambda", "V"):
            raise ValueError("hold must be 'lambda' or 'V'")
        out = [np.zeros(k.n_params) for k in self.kernels]
        dKs = [kernel_log_param_grads(k, self.ctx.X) for k in self.kernels]
        for j in range(self.J):
            a, K = self.alpha[j], self.gram_for(j).K
            C = self.site_precision(j)
            M = np.outer(a, a) - C
            if hold == "lambda":
                D = self.state.lambda_U[j] - np.where(self.obs, self.sigma[:, j], 0.0)
                if np.max(np.abs(D)) > correction_tol:
                    A = np.eye(self.NL) - C @ K
                    M = M + (A * D[None, :]) @ A.T
            ki = self.kernel_index(j)
            for p, dK in enumerate(dKs[ki]):
                out[ki][p] += 0.5 * float(np.einsum("ij,ij->", M, dK))
        return np.concatenate(out)

    # -- coordinate updates ---------------------------------------------------

    def _set_m_U(self, j: int, m: np.ndarray, alpha: np.ndarray) -> None:
        self.state.m_U[j] = m
        self.alpha[j] = alpha
        self.refresh_scores()

    def _objective_m_U(self, j: int) -> float:
        return (-0.5 * float(self.state.m_U[j] @ self.alpha[j])
                + float(np.sum(np.where(self.obs & (self.ctx.y == j), self.state.m_U[j], 0.0)))
                - float(np.sum(np.where(self.obs, self.lse, 0.0))))

    def update_m_U(self, j: int) -> int:
        """Damped Newton ascent on m_U[j]; returns the number of steps taken."""
        K = self.gram_for(j).K
        for it in range(self.max_newton):
            r = self.residual(j)
            g = -self.alpha[j] + r
            if np.linalg.norm(g) < self.grad_tol:
                return it
            m0, a0 = self.state.m_U[j].copy(), self.alpha[j].copy()
            f0 = self._objective_m_U(j)
            w = np.where(self.obs, self.sigma[:, j] * (1.0 - self.sigma[:, j]), 0.0)
            sw = np.sqrt(w)
            b = w * m0 + r
            Bw = sw[:, None] * K * sw[None, :]
            Bw[np.diag_indices_from(Bw)] += 1.0
            Lw = cholesky(Bw, f"Newton system for label {j}")
            Kb = K @ b
            a_new = b - sw * sla.cho_solve((Lw, True), sw * Kb, check_finite=False)
            dm = K @ a_new - m0
            da = a_new - a0
            slope = float(g @ dm)
            if slope <= 0:
                # numerical noise near the optimum; take the gradient instead
                dm, da = K @ g, g.copy()
                slope = float(g @ dm)
            step = 1.0
            while True:
                self._set_m_U(j, m0 + step * dm, a0 + step * da)
                f1 = self._objective_m_U(j)
                if f1 >= f0 + 1e-4 * step * slope:
                    break
                step *= 0.5
                if step < 1e-10:
                    self._set_m_U(j, m0, a0)
                    log.debug("m_U[%d]: no ascent step found (|g|=%.3e)", j, np.linalg.norm(g))
                    return it
        log.debug("m_U[%d]: Newton hit %d iterations", j, self.max_newton)
        return self.max_newton

    def fixedpoint_V_U(self, j: int) -> int:
        """Iterate ``lambda_t <- softmax_t(j)`` (0 for missing tokens) to its fixed point.

        The fixed point is the stationary point of the bound, which is
        strictly concave in V_U[j]. If a sweep budget runs out before
        convergence and the bound went down, retry with damping and
        finally keep the previous lambda.
        """
        lam0, site0 = self.state.lambda_U[j].copy(), self.sites[j]
        before = self.bound()
        for damping in (1.0, 0.5, 0.25):
            sweeps = self._fixedpoint_sweeps(j, damping)
            after = self.bound()
            if after >= before - 1e-12 * abs(before):
                return sweeps
            log.debug("V_U[%d]: fixed point decreased bound (damping %.2f)", j, damping)
            self.state.lambda_U[j] = lam0
            self.sites[j] = site0
            self.refresh_scores()
        return 0

    def _fixedpoint_sweeps(self, j: int, damping: float) -> int:
        for sweep in range(1, self.fp_max_sweeps + 1):
            target = np.where(self.obs, self.sigma[:, j], 0.0)
            lam = self.state.lambda_U[j]
            new = (1.0 - damping) * lam + damping * target
            delta = float(np.max(np.abs(new - lam)))
            self.state.lambda_U[j] = new
            self.sites[j] = self._factor_site(j)
            self.refresh_scores()
            if delta < self.fp_tol:
                return sweep
        return self.fp_max_sweeps

    def _objective_m_S(self, d: int, counts: np.ndarray) -> float:
        m = self.state.m_S[d]
        return (-0.5 * float(m @ m) + float(counts.ravel() @ m)
                - float(np.sum(np.where(self.obs, self.lse, 0.0))))

    def update_m_S(self, d: int) -> int:
        """Newton ascent on m_S[d]; the Hessian is block diagonal over dependent labels."""
        J = self.J
        for it in range(self.max_newton):
            counts, sigsum, curv = self.pair_moments(d)
            m0 = self.state.m_S[d].copy()
            g = (-m0.reshape(J, J) + counts - sigsum)
            if np.linalg.norm(g) < self.grad_tol:
                return it
            H = curv + np.eye(J)[None, :, :]
            dm = np.linalg.solve(H, g[:, :, None])[:, :, 0].ravel()
            slope = float(g.ravel() @ dm)
            f0 = self._objective_m_S(d, counts)
            step = 1.0
            while True:
                self.state.m_S[d] = m0 + step * dm
                self.refresh_scores()
                if self._objective_m_S(d, counts) >= f0 + 1e-4 * step * slope:
                    break
                step *= 0.5
                if step < 1e-10:
                    self.state.m_S[d] = m0
                    self.refresh_scores()
                    return it
        return self.max_newton

    def update_v_S(self, d: int) -> int:
        """Self-consistent ``v_k = 1 / (1 + c_k)`` with ``c_k`` the summed softmax of pair k."""
        v0 = self.state.v_S[d].copy()
        before = self.bound()
        for it in range(1, 201):
            _, sigsum, _ = self.pair_moments(d)
            new = 1.0 / (1.0 + sigsum.ravel())
            delta = float(np.max(np.abs(new - self.state.v_S[d])))
            self.state.v_S[d] = new
            self.refresh_scores()
            if delta < 1e-13:
                break
        if self.bound() < before - 1e-12 * abs(before):
            self.state.v_S[d] = v0
            self.refresh_scores()
            return 0
        return it

    def set_log_params(self, theta: np.ndarray) -> None:
        specs, i = [], 0
        for k in self.kernels:
            specs.append(k.with_log_params(theta[i:i + k.n_params]))
            i += k.n_params
        self._set_kernels(specs)

    def log_params(self) -> np.ndarray:
        return np.concatenate([k.log_params() for k in self.kernels])

    def free_params(self, learn_linear_scale: bool = True) -> np.ndarray:
        """Boolean mask over ``log_params()`` of the hyperparameters to learn."""
        return np.concatenate([
            np.full(k.n_params, learn_linear_scale or k.family != "linear") for k in self.kernels
        ])

    def hyper_step(self, max_steps: int = 20, tol: float = 1e-8,
                   correction_tol: float = 1e-7, free: np.ndarray | None = None) -> tuple[float, int]:
        """Gradient ascent on the log hyperparameters with m_U, lambda_U fixed.

        ``free`` masks which log hyperparameters may move (default: all).
        Returns ``(bound, accepted_steps)``. Trial points that fail to
        factorize or lower the bound are rejected and the step shrinks.
        """
        theta = self.log_params()
        if free is not None and not np.any(free):
            return self.bound(), 0
        f = self.bound()
        accepted = 0
        eta = None
        for _ in range(max_steps):
            g = self.theta_gradient("lambda", correction_tol)
            if free is not None:
                g = np.where(free, g, 0.0)
            gn = float(np.linalg.norm(g))
            if gn < tol:
                break
            if eta is None:
                eta = min(1.0, 0.5 / gn)
            kernels, grams, alpha, sites = self.kernels, self.grams, self.alpha.copy(), list(self.sites)
            improved = False
            while eta * gn > 1e-10:
                trial = theta + eta * g
                try:
                    self.set_log_params(trial)
                    f_new = self.bound()
                except NumericalError:
                    f_new = -np.inf
                if f_new >= f:
                    improved = f_new > f
                    theta, eta = trial, eta * 1.5
                    break
                self.kernels, self.grams, self.alpha, self.sites = kernels, grams, alpha.copy(), list(sites)
                self.refresh_scores()
                eta *= 0.3
            else:
                break
            rel = (f_new - f) / max(abs(f), 1e-300)
            f = f_new
            accepted += 1
            if not improved or rel < tol:
                break
        return f, accepted

    # defaults used by the update methods; train() overrides from TrainOptions
    grad_tol = 1e-6
    max_newton = 100
    fp_tol = 1e-8
    fp_max_sweeps = 50

    def configure(self, opts: TrainOptions) -> "VariationalProblem":
        self.grad_tol = opts.grad_tol
        self.max_newton = opts.newton_max_iter
        self.fp_tol = opts.fp_tol
        self.fp_max_sweeps = opts.fp_max_sweeps
        return self


def problem_from_model(model: TrainedModel, corpus: Corpus) -> VariationalProblem:
    """Working problem for a trained model and its (labeled) training corpus."""
    ctx = build_contexts(corpus, model.deps)
    if ctx.NL != model.NL:
        raise ValueError("corpus token count differs from the model's training set")
    return VariationalProblem(ctx, model.J, model.kernels, model.state.copy())


def lower_bound(model: TrainedModel, corpus: Corpus) -> float:
    return problem_from_model(model, corpus).bound()


def _check_corpus(corpus: Corpus) -> None:
    if corpus.J < 2:
        raise ValueError("training needs at least two labels")
    if not np.any(corpus.labels() != MISSING):
        raise ValueError("training corpus has no observed labels")


def _rel_increase(new: float, old: float) -> float:
    return (new - old) / max(abs(old), 1e-300)


def train(
    corpus: Corpus,
    deps: DependencySet,
    kernel_spec: KernelSpec | Sequence[KernelSpec] = KernelSpec(),
    opts: TrainOptions | None = None,
) -> TrainedModel:
    """Variational EM: inner coordinate ascent sweeps, then a hyperparameter step.

    Each sweep updates m_U[j] and V_U[j] for every label, then m_S[d] and
    V_S[d] for every dependency. The inner loop stops when the relative
    bound increase of a sweep drops below ``inner_tol``; the outer loop when
    a whole outer iteration gains less than ``outer_tol`` (relative) or after
    ``max_outer`` iterations.
    """
    opts = opts or TrainOptions()
    _check_corpus(corpus)
    t0 = time.perf_counter()
    ctx = build_contexts(corpus, deps)
    prob = VariationalProblem(ctx, corpus.J, kernel_spec).configure(opts)
    trace: list[TraceEntry] = []

    def record(outer: int, inner: int, step: str) -> float:
        b = prob.bound()
        e = TraceEntry(outer, inner, step, b, time.perf_counter() - t0)
        trace.append(e)
        if opts.callback is not None:
            opts.callback(e)
        return b

    bound = record(0, 0, "init")
    free = prob.free_params(opts.learn_linear_scale)
    learn = opts.learn_hypers and bool(np.any(free))
    outer = 0
    inner_total = 0
    for outer in range(1, opts.max_outer + 1):
        outer_start = bound
        try:
            for inner in range(1, opts.max_inner + 1):
                sweep_start = bound
                for j in range(prob.J):
                    prob.update_m_U(j)
                    record(outer, inner, f"m_U[{j}]")
                    prob.fixedpoint_V_U(j)
                    record(outer, inner, f"V_U[{j}]")
                for d in range(prob.R):
                    prob.update_m_S(d)
                    record(outer, inner, f"m_S[{d}]")
                    prob.update_v_S(d)
                    record(outer, inner, f"V_S[{d}]")
                bound = trace[-1].bound
                inner_total += 1
                if _rel_increase(bound, sweep_start) < opts.inner_tol:
                    break
            if learn:
                prob.hyper_step(opts.hyper_max_steps, tol=opts.inner_tol, free=free)
                bound = record(outer, inner, "theta")
        except NumericalError as exc:
            raise NumericalError(f"outer iteration {outer}, inner sweep {inner_total}: {exc}") from exc
        log.info("outer %d: bound %.6f", outer, bound)
        if _rel_increase(bound, outer_start) < opts.outer_tol:
            break

    model = TrainedModel(
        label_alphabet=corpus.label_alphabet,
        feature_alphabet=corpus.feature_alphabet,
        kernels=prob.kernels,
        deps=deps,
        X_train=ctx.X,
        state=prob.state,
        templates=corpus.templates,
        meta={
            "final_bound": bound,
            "outer_iterations": outer,
            "inner_sweeps": inner_total,
            "wall_time": time.perf_counter() - t0,
        },
        trace=trace,
    )
    return model


def write_trace(path, trace: Sequence[TraceEntry]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(TRACE_HEADER + "\n")
        for e in trace:
            fh.write(e.csv() + "\n")
