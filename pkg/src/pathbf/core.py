"""Distribution sampling, log-densities, and small numerical kernels.

Everything here is deterministic given an ``RngStream`` and safe to call
concurrently with distinct streams. Dense linear algebra only; the largest
matrices in this problem domain are 26x26.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve, solve_triangular
from scipy.special import gammaln, ndtr, ndtri

from .errors import DegenerateSeries, DomainError, GridError, NotPositiveDefinite
from .rng import RngStream

_LOG_2PI = float(np.log(2.0 * np.pi))


def chol_decompose(M: np.ndarray) -> np.ndarray:
    """Lower-triangular L with M = L L'.

    Raises NotPositiveDefinite when a pivot fails, which in this package
    always signals an invalid covariance state.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {M.shape}")
    scale = np.max(np.abs(M))
    if scale > 0 and np.max(np.abs(M - M.T)) > 1e-12 * scale:
        raise ValueError("matrix is not symmetric")
    try:
        return np.linalg.cholesky(M)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from exc


def mvn_logpdf(y: np.ndarray, mean: np.ndarray, cov: np.ndarray) -> float:
    """Log density of N(mean, cov) at y, via Cholesky (no explicit inverse)."""
    y = np.atleast_1d(np.asarray(y, dtype=float))
    mean = np.broadcast_to(np.asarray(mean, dtype=float), y.shape)
    L = chol_decompose(np.atleast_2d(cov))
    if L.shape[0] != y.shape[-1]:
        raise ValueError("dimension mismatch between y and cov")
    z = solve_triangular(L, (y - mean).T, lower=True)
    logdet = 2.0 * np.sum(np.log(np.diag(L)))
    quad = np.sum(z * z, axis=0)
    out = -0.5 * (y.shape[-1] * _LOG_2PI + logdet + quad)
    return float(out) if np.isscalar(quad) or quad.ndim == 0 else out


def log_multigamma(p: int, a: float) -> float:
    """log of the multivariate gamma function Gamma_p(a)."""
    if p < 1:
        raise ValueError("p must be a positive integer")
    if a <= (p - 1) / 2.0:
        raise DomainError(f"log_multigamma requires a > (p-1)/2, got a={a}, p={p}")
    j = np.arange(1, p + 1)
    return float(p * (p - 1) / 4.0 * np.log(np.pi) + np.sum(gammaln(a + (1.0 - j) / 2.0)))


def trapezoid(ts: np.ndarray, vals: np.ndarray) -> float:
    """Trapezoid rule on a [0,1] grid; exact for affine integrands."""
    ts = np.asarray(ts, dtype=float)
    vals = np.asarray(vals, dtype=float)
    if ts.ndim != 1 or ts.shape != vals.shape:
        raise GridError("grid and values must be 1-D and the same length")
    if ts.size < 2:
        raise GridError("grid needs at least two points")
    if ts[0] != 0.0 or ts[-1] != 1.0:
        raise GridError(f"grid must span [0, 1] exactly, got [{ts[0]}, {ts[-1]}]")
    dt = np.diff(ts)
    if np.any(dt <= 0.0):
        raise GridError("grid points must be strictly increasing")
    return float(0.5 * np.sum(dt * (vals[1:] + vals[:-1])))


def autocorr(series: np.ndarray, lag: int) -> float:
    """Sample autocorrelation of a series at the given lag."""
    x = np.asarray(series, dtype=float)
    if lag < 0:
        raise ValueError("lag must be non-negative")
    if x.size <= lag:
        raise ValueError("series must be longer than the requested lag")
    if lag == 0:
        return 1.0
    xc = x - x.mean()
    denom = float(np.dot(xc, xc))
    if denom == 0.0:
        raise DegenerateSeries("constant series has no autocorrelation at positive lag")
    return float(np.dot(xc[:-lag], xc[lag:]) / denom)


def acf(series: np.ndarray, max_lag: int) -> np.ndarray:
    """Autocorrelation function for lags 0..max_lag (FFT-based)."""
    x = np.asarray(series, dtype=float)
    n = x.size
    if n <= max_lag:
        raise ValueError("series must be longer than max_lag")
    xc = x - x.mean()
    denom = float(np.dot(xc, xc))
    if denom == 0.0:
        raise DegenerateSeries("constant series has no autocorrelation")
    nfft = int(2 ** np.ceil(np.log2(2 * n)))
    f = np.fft.rfft(xc, nfft)
    corr = np.fft.irfft(f * np.conj(f), nfft)[: max_lag + 1]
    return corr / denom


def effective_sample_size(series: np.ndarray) -> float:
    """ESS via Geyer's initial-positive-sequence truncation of the ACF."""
    x = np.asarray(series, dtype=float)
    n = x.size
    if n < 4:
        return float(n)
    if np.ptp(x) == 0.0:
        return float(n)
    rho = acf(x, min(n - 1, n // 2))
    # sum consecutive (even, odd) lag pairs while the pair sums stay positive
    tau = 1.0
    k = 1
    while k + 1 < rho.size:
        pair = rho[k] + rho[k + 1]
        if pair <= 0.0:
            break
        tau += 2.0 * pair
        k += 2
    return float(n / max(tau, 1.0))


# ---------------------------------------------------------------------------
# Distribution specifications and sampling
# ---------------------------------------------------------------------------

KINDS = (
    "normal",
    "truncated-normal",
    "gamma",
    "inverse-gamma",
    "student-t",
    "wishart",
    "inverse-wishart",
)


@dataclass(frozen=True)
class DistSpec:
    """A named distribution plus parameters.

    kinds and parameters:
      normal:            mean, sd
      truncated-normal:  mean, sd, lower (support [lower, inf))
      gamma:             shape, rate          (mean shape/rate)
      inverse-gamma:     shape, rate          (mean rate/(shape-1))
      student-t:         df, scale            (scale mixture of normals)
      wishart:           df, scale matrix     (mean df * scale)
      inverse-wishart:   df, scale matrix     (mean scale/(df-dim-1))
    """

    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown distribution kind {self.kind!r}")
        p = self.params
        if self.kind == "normal":
            if p.get("sd", 1.0) <= 0:
                raise ValueError("normal sd must be positive")
        elif self.kind == "truncated-normal":
            if p.get("sd", 1.0) <= 0:
                raise ValueError("truncated-normal sd must be positive")
            if "lower" not in p:
                raise ValueError("truncated-normal requires a lower bound")
        elif self.kind in ("gamma", "inverse-gamma"):
            if p["shape"] <= 0 or p["rate"] <= 0:
                raise ValueError(f"{self.kind} shape and rate must be positive")
        elif self.kind == "student-t":
            if p["df"] < 1:
                raise ValueError("student-t df must be >= 1")
            if p.get("scale", 1.0) <= 0:
                raise ValueError("student-t scale must be positive")
        else:  # wishart family
            scale = np.asarray(p["scale"], dtype=float)
            if scale.ndim != 2 or scale.shape[0] != scale.shape[1]:
                raise ValueError("wishart scale must be a square matrix")
            dim = scale.shape[0]
            if p["df"] <= dim - 1:
                raise ValueError("wishart df must exceed dim - 1")
            chol_decompose(scale)  # PD check


def _draw_truncnorm(gen, mean, sd, lower, size):
    alpha = (lower - mean) / sd
    if alpha <= 5.0:
        # inverse CDF is accurate while the truncation point is within ~5 sigma
        u = gen.uniform(ndtr(alpha), 1.0, size=size)
        z = ndtri(u)
    else:
        # Robert (1995) exponential rejection for the far tail
        shape = size if size is not None else ()
        z = np.empty(shape)
        flat = z.reshape(-1) if shape else None
        count = flat.size if flat is not None else 1
        lam = 0.5 * (alpha + np.sqrt(alpha * alpha + 4.0))
        got = 0
        vals = []
        while got < count:
            prop = alpha + gen.exponential(1.0 / lam, size=max(count - got, 16))
            accept = gen.uniform(size=prop.size) <= np.exp(-0.5 * (prop - lam) ** 2)
            kept = prop[accept]
            vals.append(kept)
            got += kept.size
        draws = np.concatenate(vals)[:count]
        z = draws[0] if flat is None else draws.reshape(shape)
    return mean + sd * z


def _draw_wishart(gen, df, scale_chol):
    """Bartlett decomposition draw of Wishart(df, scale)."""
    d = scale_chol.shape[0]
    A = np.zeros((d, d))
    idx = np.tril_indices(d, -1)
    A[idx] = gen.standard_normal(len(idx[0]))
    A[np.diag_indices(d)] = np.sqrt(gen.chisquare(df - np.arange(d)))
    LA = scale_chol @ A
    return LA @ LA.T


def draw(spec: DistSpec, stream: RngStream, size: int | None = None):
    """Sample from spec; pure function of (spec, master_seed, stream_id).

    Scalar kinds return a float (or array of length size); matrix kinds
    return a (d, d) matrix (or (size, d, d) stack).
    """
    gen = stream.generator()
    p = spec.params
    if spec.kind == "normal":
        return gen.normal(p.get("mean", 0.0), p.get("sd", 1.0), size=size)
    if spec.kind == "truncated-normal":
        return _draw_truncnorm(gen, p.get("mean", 0.0), p.get("sd", 1.0), p["lower"], size)
    if spec.kind == "gamma":
        return gen.standard_gamma(p["shape"], size=size) / p["rate"]
    if spec.kind == "inverse-gamma":
        return p["rate"] / gen.standard_gamma(p["shape"], size=size)
    if spec.kind == "student-t":
        df, scale = p["df"], p.get("scale", 1.0)
        z = gen.standard_normal(size=size)
        g = gen.chisquare(df, size=size)
        return scale * z / np.sqrt(g / df)
    scale_chol = chol_decompose(np.asarray(p["scale"], dtype=float))
    df = p["df"]
    if spec.kind == "wishart":
        if size is None:
            return _draw_wishart(gen, df, scale_chol)
        return np.stack([_draw_wishart(gen, df, scale_chol) for _ in range(size)])
    # inverse-wishart: invert Wishart draws taken under the inverted scale
    inv_scale = cho_solve((scale_chol, True), np.eye(scale_chol.shape[0]))
    inv_chol = np.linalg.cholesky(0.5 * (inv_scale + inv_scale.T))
    if size is None:
        return np.linalg.inv(_draw_wishart(gen, df, inv_chol))
    return np.stack([np.linalg.inv(_draw_wishart(gen, df, inv_chol)) for _ in range(size)])
