"""Gaussian factor model: likelihoods, expanded-parameter priors, Gibbs kernels.

Model: y_i = L eta_i + eps_i with L a p x k lower-triangular loading matrix,
eta_i ~ N(0, I_k), eps_i ~ N(0, diag(sigma2)). Sampling runs in a working
parameterization (working loadings with standard-normal priors, one
multiplicative inverse-gamma scale per column) whose rescaled coordinates
carry t-family priors on the loadings; t_df = inf degrades to plain normal
priors. Tempered targets scale either a whole loading column (PAMP) or a
single entry (small-change steps) or the likelihood exponent (GMP).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional
import warnings

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import gammaln

from .core import _LOG_2PI, chol_decompose
from .errors import DegenerateData, NumericalBreakdown, OverparameterizedModel
from .rng import RngStream

# ---------------------------------------------------------------------------
# Specifications
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PriorSpec:
    """Priors for loadings (t family via parameter expansion) and precisions.

    t_df may be math.inf for exact normal priors. Loading entries get a
    per-column scale-mixture construction: working entries N(0,1), column
    scale psi ~ IG(t_df/2, t_df*t_scale^2/2), inducing t_{t_df}(0, t_scale)
    marginals on rescaled entries. sign_constraint folds the diagonal
    loading of each column to be non-negative (folded-t).
    """

    t_df: float = 10.0
    t_scale: float = 1.0
    ig_shape: float = 1.0
    ig_rate: float = 0.2
    sign_constraint: bool = False

    def __post_init__(self):
        if not (self.t_df >= 1.0):
            raise ValueError("t_df must be >= 1 (or math.inf for normal priors)")
        if self.t_scale <= 0 or self.ig_shape <= 0 or self.ig_rate <= 0:
            raise ValueError("prior scales must be positive")

    @property
    def normal_limit(self) -> bool:
        return math.isinf(self.t_df)


def num_free_params(p: int, k: int) -> int:
    """Free parameter count q of the k-factor model on p variables."""
    if p < 1 or k < 0:
        raise ValueError("need p >= 1 and k >= 0")
    q = p * (k + 1) - k * (k - 1) // 2
    if q > p * (p + 1) // 2:
        raise OverparameterizedModel(
            f"k={k} factors on p={p} variables gives q={q} > p(p+1)/2={p * (p + 1) // 2}"
        )
    return q


@dataclass(frozen=True)
class FactorModelSpec:
    """Dimensions plus prior for one factor model."""

    p: int
    k: int
    prior: PriorSpec = field(default_factory=PriorSpec)

    def __post_init__(self):
        if self.k > self.p:
            raise ValueError("k must not exceed p for the triangular pattern")
        num_free_params(self.p, self.k)  # raises if overparameterized


@dataclass(frozen=True)
class TemperedTarget:
    """An unnormalized tempered density along a path.

    path_kind "pamp": likelihood with column h of the loadings scaled by t
    (step_index i restricts the scaling to the single 1-based entry (i+1, h)
    of that column, with entries 1..i of the column pinned to zero).
    path_kind "gmp": likelihood^t times the prior, h = model factor count.
    """

    path_kind: str
    t: float
    h: int
    step_index: Optional[int] = None

    def __post_init__(self):
        if self.path_kind not in ("pamp", "gmp"):
            raise ValueError(f"unknown path kind {self.path_kind!r}")
        if not 0.0 <= self.t <= 1.0:
            raise ValueError("t must lie in [0, 1]")
        if self.h < 0:
            raise ValueError("h must be non-negative")
        if self.step_index is not None:
            if self.path_kind != "pamp":
                raise ValueError("step_index only applies to the pamp path")
            if self.step_index < max(self.h - 1, 1):
                raise ValueError("step_index must be >= h-1 (and >= 1)")

    def validate_for(self, p: int):
        if self.step_index is not None and self.step_index > p - 1:
            raise ValueError(f"step_index {self.step_index} exceeds p-1={p - 1}")
        if self.path_kind == "pamp" and self.h > p:
            raise ValueError("tempered column index exceeds p")


def pattern_mask(p: int, k: int) -> np.ndarray:
    """Boolean p x k mask of free entries (lower-triangular-plus-diagonal)."""
    return np.tril(np.ones((p, k), dtype=bool))


def target_masks(p: int, k: int, target: Optional[TemperedTarget]):
    """Structure, scale, and temper-direction masks for a target.

    Returns (struct, scale, direction):
      struct    bool (p,k): entries that are parameters of the target's model
      scale     float (p,k): per-entry likelihood multiplier (0 / t / 1)
      direction bool (p,k): entries whose multiplier is t (d scale / dt = 1)
    """
    struct = pattern_mask(p, k)
    direction = np.zeros((p, k), dtype=bool)
    if target is None or target.path_kind == "gmp":
        return struct, struct.astype(float), direction
    target.validate_for(p)
    col = target.h - 1
    if target.step_index is None:
        direction[:, col] = struct[:, col]
    else:
        i = target.step_index  # spec's 1-based step; 0-based tempered row == i
        struct = struct.copy()
        struct[:i, col] = False
        direction[i, col] = True
    scale = struct.astype(float)
    scale[direction] = target.t
    return struct, scale, direction


def effective_loadings(lambda_mat: np.ndarray, target: Optional[TemperedTarget]) -> np.ndarray:
    """Loading matrix as the tempered likelihood sees it."""
    lambda_mat = np.asarray(lambda_mat, dtype=float)
    p, k = lambda_mat.shape
    _, scale, _ = target_masks(p, k, target)
    return lambda_mat * scale


# ---------------------------------------------------------------------------
# Likelihoods
# ---------------------------------------------------------------------------


def loglik_conditional(Y, lambda_mat, sigma2, eta, target: Optional[TemperedTarget] = None) -> float:
    """Conditional log-likelihood sum_i log N(y_i; Lambda_t eta_i, diag(sigma2))."""
    Y = np.asarray(Y, dtype=float)
    sigma2 = np.asarray(sigma2, dtype=float)
    n, p = Y.shape
    lam_eff = effective_loadings(lambda_mat, target)
    R = Y - np.asarray(eta, dtype=float) @ lam_eff.T
    ssr = np.einsum("ij,ij->j", R, R)
    return float(-0.5 * (n * p * _LOG_2PI + n * np.sum(np.log(sigma2)) + np.sum(ssr / sigma2)))


def loglik_marginal(Y, lambda_mat, sigma2, target: Optional[TemperedTarget] = None) -> float:
    """Log-likelihood with the factors integrated out: sum_i log N(y_i; 0, Omega_t)."""
    Y = np.asarray(Y, dtype=float)
    n, p = Y.shape
    lam_eff = effective_loadings(lambda_mat, target)
    omega = lam_eff @ lam_eff.T + np.diag(np.asarray(sigma2, dtype=float))
    L = chol_decompose(omega)
    z = solve_triangular(L, Y.T, lower=True)
    logdet = 2.0 * np.sum(np.log(np.diag(L)))
    return float(-0.5 * (n * p * _LOG_2PI + n * logdet + np.sum(z * z)))


def marginal_cov(lambda_mat: np.ndarray, sigma2: np.ndarray) -> np.ndarray:
    """Omega = Lambda Lambda' + diag(sigma2)."""
    lambda_mat = np.asarray(lambda_mat, dtype=float)
    return lambda_mat @ lambda_mat.T + np.diag(np.asarray(sigma2, dtype=float))


@dataclass(frozen=True)
class GlobalMaxCov:
    """Unrestricted-covariance likelihood maximizer and the attained bound."""

    omega_hat: np.ndarray
    loglik_bound: float
    degenerate: bool


def global_max_cov(Y: np.ndarray) -> GlobalMaxCov:
    """Sample covariance (the global MVN likelihood maximizer) plus its bound.

    The bound is the log-likelihood attained at the unrestricted MLE with a
    fitted mean, which dominates every zero-mean factor-model likelihood
    value after the factors are integrated out.
    """
    Y = np.asarray(Y, dtype=float)
    n, p = Y.shape
    if n < 2:
        raise ValueError("need at least two observations")
    Yc = Y - Y.mean(axis=0)
    omega_hat = Yc.T @ Yc / (n - 1)
    omega_mle = Yc.T @ Yc / n
    sign, logdet = np.linalg.slogdet(omega_mle)
    if sign <= 0:
        warnings.warn("sample covariance is singular", DegenerateData)
        return GlobalMaxCov(omega_hat, math.inf, True)
    bound = -0.5 * n * (p * _LOG_2PI + logdet + p)
    return GlobalMaxCov(omega_hat, float(bound), False)


def simulate(lambda_true: np.ndarray, sigma2_true: np.ndarray, n: int, stream: RngStream) -> np.ndarray:
    """n iid rows from N_p(0, Lambda Lambda' + diag(sigma2))."""
    lambda_true = np.atleast_2d(np.asarray(lambda_true, dtype=float))
    sigma2_true = np.asarray(sigma2_true, dtype=float)
    p, k = lambda_true.shape
    gen = stream.generator()
    eta = gen.standard_normal((n, k))
    eps = gen.standard_normal((n, p)) * np.sqrt(sigma2_true)
    return eta @ lambda_true.T + eps


# ---------------------------------------------------------------------------
# Prior density in the rescaled (natural) coordinates
# ---------------------------------------------------------------------------


def log_prior_density(lambda_mat, sigma2, prior: PriorSpec, target: Optional[TemperedTarget] = None) -> float:
    """Log prior of (Lambda, sigma2) under the induced t-family construction.

    Entries of one column share a scale-mixture variable, so each column's
    free entries are jointly multivariate-t (exchangeably dependent), not
    independent t. With sign_constraint the diagonal entry is folded.
    """
    lambda_mat = np.asarray(lambda_mat, dtype=float)
    sigma2 = np.asarray(sigma2, dtype=float)
    p, k = lambda_mat.shape
    struct, _, _ = target_masks(p, k, target)
    nu, s = prior.t_df, prior.t_scale
    total = 0.0
    for col in range(k):
        v = lambda_mat[struct[:, col], col]
        d = v.size
        if d == 0:
            continue
        if prior.sign_constraint and col < p and struct[col, col]:
            if lambda_mat[col, col] < 0:
                return -math.inf
            total += math.log(2.0)
        ss = float(v @ v)
        if prior.normal_limit:
            total += -0.5 * d * (_LOG_2PI + 2.0 * math.log(s)) - 0.5 * ss / (s * s)
        else:
            total += (
                gammaln((nu + d) / 2.0)
                - gammaln(nu / 2.0)
                - 0.5 * d * math.log(nu * math.pi)
                - d * math.log(s)
                - 0.5 * (nu + d) * math.log1p(ss / (nu * s * s))
            )
    a, b = prior.ig_shape, prior.ig_rate
    total += np.sum(a * math.log(b) - gammaln(a) - (a + 1.0) * np.log(sigma2) - b / sigma2)
    return float(total)


# ---------------------------------------------------------------------------
# Gibbs machinery (working parameterization)
# ---------------------------------------------------------------------------


@dataclass
class FactorState:
    """Working-coordinate chain state; natural coordinates via properties."""

    lambda_work: np.ndarray  # (p, k)
    psi: np.ndarray          # (k,)
    sigma2: np.ndarray       # (p,)
    eta_work: np.ndarray     # (n, k)

    @property
    def loadings(self) -> np.ndarray:
        return self.lambda_work * np.sqrt(self.psi)

    @property
    def eta(self) -> np.ndarray:
        return self.eta_work / np.sqrt(self.psi) if self.psi.size else self.eta_work


def _psi_prior_params(prior: PriorSpec):
    return prior.t_df / 2.0, prior.t_df * prior.t_scale**2 / 2.0


def init_state(p: int, k: int, n: int, prior: PriorSpec, gen: np.random.Generator,
               target: Optional[TemperedTarget] = None) -> FactorState:
    """Draw an initial state from the target model's prior."""
    struct, _, _ = target_masks(p, k, target)
    if prior.normal_limit:
        psi = np.full(k, prior.t_scale**2)
    else:
        a_psi, b_psi = _psi_prior_params(prior)
        psi = b_psi / gen.standard_gamma(a_psi, size=k)
    lam = gen.standard_normal((p, k)) * struct
    sigma2 = prior.ig_rate / gen.standard_gamma(prior.ig_shape, size=p)
    eta = gen.standard_normal((n, k)) * np.sqrt(psi)
    return FactorState(lam, psi, sigma2, eta)


def draw_factors(lambda_mat, sigma2, Y, stream: RngStream) -> np.ndarray:
    """Conjugate draw of latent factors given natural-coordinate loadings.

    eta_i ~ N(A Lambda' Sigma^-1 y_i, A) with A = (I_k + Lambda' Sigma^-1 Lambda)^-1.
    """
    gen = stream.generator() if isinstance(stream, RngStream) else stream
    lambda_mat = np.asarray(lambda_mat, dtype=float)
    sigma2 = np.asarray(sigma2, dtype=float)
    Y = np.asarray(Y, dtype=float)
    k = lambda_mat.shape[1]
    return _factors_step(lambda_mat, np.ones(k), sigma2, Y, 1.0, gen)


def _factors_step(lam_eff, psi, sigma2, Y, w, gen) -> np.ndarray:
    """Draw working factors under tempered likelihood weight w."""
    n = Y.shape[0]
    k = lam_eff.shape[1]
    if k == 0:
        return np.empty((n, 0))
    lam_w = lam_eff / sigma2[:, None]
    prec = np.diag(1.0 / psi) + w * (lam_eff.T @ lam_w)
    try:
        Lp = np.linalg.cholesky(prec)
    except np.linalg.LinAlgError as exc:
        raise NumericalBreakdown("factor conditional lost positive definiteness") from exc
    means = np.linalg.solve(prec, w * (lam_w.T @ Y.T))
    z = gen.standard_normal((k, n))
    return (means + solve_triangular(Lp.T, z, lower=False)).T


def draw_precisions(lambda_mat, eta, Y, prior: PriorSpec, stream: RngStream) -> np.ndarray:
    """Conjugate inverse-gamma draw of each sigma_j^2 given residuals."""
    gen = stream.generator() if isinstance(stream, RngStream) else stream
    Y = np.asarray(Y, dtype=float)
    R = Y - np.asarray(eta, dtype=float) @ np.asarray(lambda_mat, dtype=float).T
    n = Y.shape[0]
    ssr = np.einsum("ij,ij->j", R, R)
    g = gen.standard_gamma(prior.ig_shape + 0.5 * n, size=Y.shape[1])
    return (prior.ig_rate + 0.5 * ssr) / g


def gibbs_sweep(state: FactorState, Y, target: Optional[TemperedTarget], prior: PriorSpec,
                stream) -> tuple[FactorState, float, float]:
    """One full sweep; returns (new state, score at target, conditional loglik).

    Update order: factors, loading rows (batched across rows), precisions,
    expansion scales, then the optional diagonal sign fold. Tempering touches
    only the column/entry named by the target (pamp) or the likelihood
    exponent (gmp).
    """
    gen = stream.generator() if isinstance(stream, RngStream) else stream
    Y = np.asarray(Y, dtype=float)
    n, p = Y.shape
    k = state.lambda_work.shape[1]
    struct, scale, direction = target_masks(p, k, target)
    w = target.t if (target is not None and target.path_kind == "gmp") else 1.0

    lam_eff = state.lambda_work * scale
    eta = _factors_step(lam_eff, state.psi, state.sigma2, Y, w, gen)

    if k > 0:
        G = eta.T @ eta
        HtY = eta.T @ Y
        cc = scale[:, :, None] * scale[:, None, :]
        prec = np.eye(k)[None, :, :] + (w / state.sigma2)[:, None, None] * cc * G[None, :, :]
        try:
            Lr = np.linalg.cholesky(prec)
        except np.linalg.LinAlgError as exc:
            raise NumericalBreakdown("loading-row conditional lost positive definiteness") from exc
        rhs = (w / state.sigma2)[:, None] * scale * HtY.T
        means = np.linalg.solve(prec, rhs[:, :, None])
        z = gen.standard_normal((p, k))
        noise = np.linalg.solve(np.transpose(Lr, (0, 2, 1)), z[:, :, None])
        lam = (means + noise)[:, :, 0] * struct
    else:
        lam = state.lambda_work

    lam_eff = lam * scale
    R = Y - eta @ lam_eff.T
    ssr = np.einsum("ij,ij->j", R, R)
    g = gen.standard_gamma(prior.ig_shape + 0.5 * w * n, size=p)
    sigma2 = (prior.ig_rate + 0.5 * w * ssr) / g

    if prior.normal_limit or k == 0:
        psi = np.full(k, prior.t_scale**2)
    else:
        a_psi, b_psi = _psi_prior_params(prior)
        g = gen.standard_gamma(a_psi + 0.5 * n, size=k)
        psi = (b_psi + 0.5 * np.einsum("ij,ij->j", eta, eta)) / g

    if prior.sign_constraint:
        for col in range(min(p, k)):
            if lam[col, col] < 0:
                lam[:, col] = -lam[:, col]
                eta[:, col] = -eta[:, col]

    loglik = float(-0.5 * (n * p * _LOG_2PI + n * np.sum(np.log(sigma2)) + np.sum(ssr / sigma2)))
    if target is not None and target.path_kind == "gmp":
        score = loglik
    elif target is not None:
        # d/dt of the tempered conditional loglik at fixed state (Eq.-style
        # direction restricted to the tempered entries); invariant under the
        # working/natural rescaling because lambda * eta_column is.
        rows, cols = np.nonzero(direction)
        score = 0.0
        for j, l in zip(rows, cols):
            score += lam[j, l] / sigma2[j] * float(R[:, j] @ eta[:, l])
        score = float(score)
    else:
        score = loglik
    return FactorState(lam, psi, sigma2, eta), score, loglik


# ---------------------------------------------------------------------------
# Score functions evaluated on natural-coordinate states
# ---------------------------------------------------------------------------


def score_pamp(Y, lambda_mat, sigma2, eta, t: float, h: int) -> float:
    """Path score sum_i (y_i - Lambda_t eta_i)' Sigma^-1 (0,...,lambda_h) eta_i."""
    target = TemperedTarget("pamp", t, h)
    Y = np.asarray(Y, dtype=float)
    lambda_mat = np.asarray(lambda_mat, dtype=float)
    sigma2 = np.asarray(sigma2, dtype=float)
    eta = np.asarray(eta, dtype=float)
    R = Y - eta @ effective_loadings(lambda_mat, target).T
    wvec = (R / sigma2) @ lambda_mat[:, h - 1]
    return float(wvec @ eta[:, h - 1])


def score_pssc_step(Y, lambda_mat, sigma2, eta, t: float, h: int, i: int) -> float:
    """Per-step score: only the 1-based entry (i+1, h) of column h is scaled."""
    target = TemperedTarget("pamp", t, h, step_index=i)
    Y = np.asarray(Y, dtype=float)
    lambda_mat = np.asarray(lambda_mat, dtype=float)
    sigma2 = np.asarray(sigma2, dtype=float)
    eta = np.asarray(eta, dtype=float)
    R = Y - eta @ effective_loadings(lambda_mat, target).T
    return float(lambda_mat[i, h - 1] / sigma2[i] * (R[:, i] @ eta[:, h - 1]))


def score_gmp(Y, lambda_mat, sigma2, eta) -> float:
    """GMP score: the untempered conditional log-likelihood."""
    return loglik_conditional(Y, lambda_mat, sigma2, eta, target=None)


# ---------------------------------------------------------------------------
# Chain driver
# ---------------------------------------------------------------------------


@dataclass
class ChainSamples:
    """Retained draws of one chain with cached per-draw score and loglik."""

    target: Optional[TemperedTarget]
    burnin: int
    stream: RngStream
    loadings: np.ndarray   # (m, p, k) natural coordinates
    sigma2: np.ndarray     # (m, p)
    scores: np.ndarray     # (m,)
    logliks: np.ndarray    # (m,)
    eta: Optional[np.ndarray] = None  # (m, n, k) when retained

    @property
    def m(self) -> int:
        return self.scores.shape[0]


def run_chain(target: Optional[TemperedTarget], Y, prior: PriorSpec, m: int, burnin: int,
              stream: RngStream, k: Optional[int] = None, keep_eta: bool = False) -> ChainSamples:
    """Run one Gibbs chain at a tempered target and retain m draws.

    The model's factor count defaults to target.h. States, scores, and
    conditional logliks are cached per draw; the whole run is a pure
    function of (arguments, stream).
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    Y = np.asarray(Y, dtype=float)
    n, p = Y.shape
    if k is None:
        if target is None:
            raise ValueError("k is required when no target is given")
        k = target.h
    gen = stream.generator()
    state = init_state(p, k, n, prior, gen, target)
    for _ in range(burnin):
        state, _, _ = gibbs_sweep(state, Y, target, prior, gen)
    loadings = np.empty((m, p, k))
    sigma2 = np.empty((m, p))
    scores = np.empty(m)
    logliks = np.empty(m)
    eta = np.empty((m, n, k)) if keep_eta else None
    for j in range(m):
        state, scores[j], logliks[j] = gibbs_sweep(state, Y, target, prior, gen)
        loadings[j] = state.loadings
        sigma2[j] = state.sigma2
        if keep_eta:
            eta[j] = state.eta
    return ChainSamples(target, burnin, stream, loadings, sigma2, scores, logliks, eta)
