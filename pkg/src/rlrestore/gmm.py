"""Gaussian mixture models: density, EM fitting, conditioning, affine maps.

A :class:`Gmm` is an immutable value holding ``weights`` (M,), ``means``
(M, d) and ``covs`` (M, d, d).  Every operation here returns a new mixture.
"""

from __future__ import annotations

import json
import logging
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import logsumexp, ndtr

log = logging.getLogger(__name__)

JITTER_START = 1e-9
JITTER_MAX = 1e-3
WEIGHT_FLOOR = 1e-10
# prune conditional components whose posterior weight is numerically irrelevant
COND_PRUNE = 1e-14
# log-likelihood below which an observation is out of every component's support
OOD_LOGLIK = -700.0
_LOG_2PI = math.log(2.0 * math.pi)


class GmmError(ValueError):
    """Invalid mixture input or a numerically unrecoverable operation."""


class DegenerateFitError(GmmError):
    pass


@dataclass(frozen=True)
class GaussianComponent:
    weight: float
    mean: np.ndarray
    covariance: np.ndarray


@dataclass(frozen=True)
class FitConfig:
    tol: float = 1e-8
    max_iters: int = 500
    seed: int = 0
    # optional starting point; split to reach the requested component count
    init: Gmm | None = None


@dataclass(frozen=True, eq=False)
class Gmm:
    weights: np.ndarray
    means: np.ndarray
    covs: np.ndarray
    dim: int = field(init=False)

    def __post_init__(self):
        w = np.array(self.weights, dtype=float).reshape(-1)
        mu = np.array(self.means, dtype=float)
        if mu.ndim == 1:
            mu = mu.reshape(len(w), -1)
        cov = np.array(self.covs, dtype=float)
        if cov.ndim == 2:
            cov = cov.reshape(len(w), mu.shape[1], mu.shape[1])
        if len(w) == 0:
            raise GmmError("mixture needs at least one component")
        if mu.shape[0] != len(w) or cov.shape[0] != len(w):
            raise GmmError("weights, means and covariances disagree on component count")
        d = mu.shape[1]
        if d < 1 or cov.shape[1:] != (d, d):
            raise GmmError(f"covariance shape {cov.shape[1:]} does not match mean dimension {d}")
        if np.any(~np.isfinite(w)) or np.any(w <= 0):
            raise GmmError("component weights must be finite and strictly positive")
        if abs(w.sum() - 1.0) > 1e-12:
            w = w / w.sum()
            if abs(w.sum() - 1.0) > 1e-12:
                raise GmmError("weights do not sum to one")
        if not (np.all(np.isfinite(mu)) and np.all(np.isfinite(cov))):
            raise GmmError("non-finite mean or covariance entry")
        asym = np.abs(cov - cov.transpose(0, 2, 1)).max()
        scale = max(1.0, np.abs(cov).max())
        if asym > 1e-12 * scale:
            raise GmmError(f"covariance not symmetric (max asymmetry {asym:.3g})")
        cov = 0.5 * (cov + cov.transpose(0, 2, 1))
        for a in (w, mu, cov):
            a.flags.writeable = False
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", mu)
        object.__setattr__(self, "covs", cov)
        object.__setattr__(self, "dim", d)

    @classmethod
    def single(cls, mean, cov) -> Gmm:
        mean = np.atleast_1d(np.asarray(mean, dtype=float))
        cov = np.asarray(cov, dtype=float).reshape(len(mean), len(mean))
        return cls(np.ones(1), mean[None], cov[None])

    @classmethod
    def from_components(cls, components) -> Gmm:
        comps = list(components)
        return cls(
            np.array([c.weight for c in comps]),
            np.array([np.asarray(c.mean, dtype=float) for c in comps]),
            np.array([np.asarray(c.covariance, dtype=float) for c in comps]),
        )

    @property
    def n_components(self) -> int:
        return len(self.weights)

    @property
    def components(self) -> list[GaussianComponent]:
        return [
            GaussianComponent(float(w), m, c)
            for w, m, c in zip(self.weights, self.means, self.covs)
        ]

    def __repr__(self):
        return f"Gmm(dim={self.dim}, n_components={self.n_components})"

    # serialization -------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "components": [
                {
                    "weight": float(w),
                    "mean": [float(v) for v in m],
                    "covariance": [[float(v) for v in row] for row in c],
                }
                for w, m, c in zip(self.weights, self.means, self.covs)
            ],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> Gmm:
        try:
            comps = doc["components"]
            g = cls(
                np.array([c["weight"] for c in comps], dtype=float),
                np.array([c["mean"] for c in comps], dtype=float),
                np.array([c["covariance"] for c in comps], dtype=float),
            )
        except (KeyError, TypeError) as exc:
            raise GmmError(f"malformed mixture document: {exc}") from exc
        if "dim" in doc and int(doc["dim"]) != g.dim:
            raise GmmError(f"declared dim {doc['dim']} != component dimension {g.dim}")
        return g

    def to_json(self) -> str:
        # repr(float) is the shortest round-tripping decimal, so loads() is bit-exact
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def from_json(cls, text: str) -> Gmm:
        return cls.from_dict(json.loads(text))

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path) -> Gmm:
        return cls.from_json(Path(path).read_text())


# numerical helpers -----------------------------------------------------------


def safe_cholesky(cov: np.ndarray) -> np.ndarray:
    """Cholesky factor, adding diagonal jitter only when the plain factorization fails.

    Jitter is ``lam * trace/dim`` with ``lam`` escalating by 10x from 1e-9 to 1e-3.
    An all-zero matrix uses unit scale so point masses stay factorizable.
    """
    cov = np.asarray(cov, dtype=float)
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        pass
    d = cov.shape[0]
    scale = np.trace(cov) / d
    if not scale > 0:
        scale = 1.0
    eye = np.eye(d)
    lam = JITTER_START
    while lam <= JITTER_MAX * (1 + 1e-12):
        try:
            return np.linalg.cholesky(cov + lam * scale * eye)
        except np.linalg.LinAlgError:
            lam *= 10.0
    raise GmmError("covariance is not positive definite even after maximal jitter")


def _component_logpdf(x: np.ndarray, mean: np.ndarray, chol: np.ndarray) -> np.ndarray:
    # x: (n, d)
    diff = (x - mean).T
    z = _solve_lower(chol, diff)
    maha = np.einsum("ij,ij->j", z, z)
    logdet = 2.0 * np.log(np.diag(chol)).sum()
    return -0.5 * (maha + logdet + len(mean) * _LOG_2PI)


def _solve_lower(chol, rhs):
    return solve_triangular(chol, rhs, lower=True, check_finite=False)


def _check_rows(g: Gmm, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != g.dim:
        raise GmmError(f"data dimension {x.shape[-1]} != mixture dimension {g.dim}")
    if x.shape[0] == 0:
        raise GmmError("dataset is empty")
    return x


def component_logpdfs(g: Gmm, x) -> np.ndarray:
    """(n, M) matrix of log N_m(x_i) without the weights."""
    x = _check_rows(g, x)
    out = np.empty((x.shape[0], g.n_components))
    for m in range(g.n_components):
        out[:, m] = _component_logpdf(x, g.means[m], safe_cholesky(g.covs[m]))
    return out


def logpdf(g: Gmm, x) -> np.ndarray:
    lp = component_logpdfs(g, x) + np.log(g.weights)
    return logsumexp(lp, axis=1)


def density(g: Gmm, x) -> float:
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        x = x.reshape(1)
    if x.ndim != 1:
        raise GmmError("density takes a single point; use logpdf for batches")
    return float(np.exp(logpdf(g, x)[0]))


def log_likelihood(g: Gmm, data) -> float:
    return float(logpdf(g, data).sum())


# EM ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FitResult:
    gmm: Gmm
    trace: tuple[float, ...]
    converged: bool

    @property
    def log_likelihood(self) -> float:
        return self.trace[-1]


def _kmeanspp(x: np.ndarray, m: int, rng: np.random.Generator) -> np.ndarray:
    n = x.shape[0]
    centers = [x[rng.integers(n)]]
    d2 = ((x - centers[0]) ** 2).sum(axis=1)
    for _ in range(1, m):
        total = d2.sum()
        if total <= 0:
            idx = rng.integers(n)
        else:
            idx = rng.choice(n, p=d2 / total)
        centers.append(x[idx])
        d2 = np.minimum(d2, ((x - x[idx]) ** 2).sum(axis=1))
    return np.array(centers)


def _split_to(g: Gmm, m: int) -> Gmm:
    """Grow a mixture to ``m`` components by splitting the heaviest one along
    its principal axis; each split preserves the mixture mean and covariance."""
    w, mu, cov = list(g.weights), list(g.means), list(g.covs)
    while len(w) < m:
        j = int(np.argmax(w))
        vals, vecs = np.linalg.eigh(cov[j])
        lam, v = max(vals[-1], 0.0), vecs[:, -1]
        step = 0.5 * math.sqrt(lam) * v
        shrunk = cov[j] - 0.25 * lam * np.outer(v, v)
        shrunk = 0.5 * (shrunk + shrunk.T)
        half = w[j] / 2
        w[j:j + 1] = [half, half]
        mu[j:j + 1] = [mu[j] - step, mu[j] + step]
        cov[j:j + 1] = [shrunk, shrunk.copy()]
    return Gmm(np.array(w), np.array(mu), np.array(cov))


def _em(x: np.ndarray, w, mu, cov, tol: float, max_iters: int):
    n, d = x.shape
    trace = []
    converged = False
    for _ in range(max_iters):
        g = Gmm(w, mu, cov)
        lp = component_logpdfs(g, x) + np.log(g.weights)
        norm = logsumexp(lp, axis=1)
        ll = float(norm.sum())
        if trace and ll - trace[-1] < tol:
            trace.append(ll)
            converged = True
            break
        trace.append(ll)
        resp = np.exp(lp - norm[:, None])
        nk = resp.sum(axis=0)
        keep = nk / n >= WEIGHT_FLOOR
        if not keep.all():
            log.debug("dropping %d starved components", int((~keep).sum()))
            resp, nk = resp[:, keep], nk[keep]
        w = nk / n
        mu = (resp.T @ x) / nk[:, None]
        cov = np.empty((len(nk), d, d))
        for k in range(len(nk)):
            diff = x - mu[k]
            c = (resp[:, k, None] * diff).T @ diff / nk[k]
            cov[k] = 0.5 * (c + c.T)
    else:
        g = Gmm(w, mu, cov)
        trace.append(log_likelihood(g, x))
    return Gmm(w, mu, cov), trace, converged


def fit_em(data, m: int, cfg: FitConfig | None = None) -> FitResult:
    """EM fit of an ``m``-component mixture; returns the fit and its log-likelihood trace.

    The trace starts at the initial parameters and is non-decreasing.
    """
    cfg = cfg or FitConfig()
    x = np.asarray(data, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2 or x.shape[0] == 0:
        raise GmmError("dataset must be a non-empty 2-D array")
    n, d = x.shape
    if m < 1:
        raise GmmError("component count must be positive")
    if n < m:
        raise GmmError(f"{n} rows cannot support {m} components")
    if m == 1:
        mu = x.mean(axis=0)
        diff = x - mu
        cov = diff.T @ diff / n
        g = Gmm(np.ones(1), mu[None], cov[None])
        return FitResult(g, (log_likelihood(g, x),), True)
    if np.ptp(x, axis=0).max() == 0:
        raise DegenerateFitError("all rows identical; cannot separate components")

    if cfg.init is not None:
        if cfg.init.dim != d:
            raise GmmError("initial mixture dimension mismatch")
        start = _split_to(cfg.init, m) if cfg.init.n_components < m else cfg.init
        w0, mu0, cov0 = start.weights, start.means, start.covs
    else:
        rng = np.random.default_rng(cfg.seed)
        mu0 = _kmeanspp(x, m, rng)
        diff = x - x.mean(axis=0)
        pooled = diff.T @ diff / n
        cov0 = np.repeat(pooled[None], m, axis=0)
        w0 = np.full(m, 1.0 / m)
    g, trace, converged = _em(x, w0, mu0, cov0, cfg.tol, cfg.max_iters)
    return FitResult(g, tuple(trace), converged)


def fit(data, m: int, cfg: FitConfig | None = None) -> Gmm:
    return fit_em(data, m, cfg).gmm


# closed-form transformations --------------------------------------------------


def linear_map(g: Gmm, a, c=None) -> Gmm:
    """Distribution of ``A X + C``."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    if a.shape[1] != g.dim:
        raise GmmError(f"map has {a.shape[1]} columns, mixture dim is {g.dim}")
    c = np.zeros(a.shape[0]) if c is None else np.atleast_1d(np.asarray(c, dtype=float))
    if c.shape != (a.shape[0],):
        raise GmmError("offset length must equal the number of map rows")
    means = g.means @ a.T + c
    covs = np.einsum("ij,mjk,lk->mil", a, g.covs, a)
    covs = 0.5 * (covs + covs.transpose(0, 2, 1))
    return Gmm(g.weights.copy(), means, covs)


def selection_matrix(dim: int, idx) -> np.ndarray:
    idx = list(idx)
    e = np.zeros((len(idx), dim))
    e[np.arange(len(idx)), idx] = 1.0
    return e


def _check_idx(g: Gmm, idx) -> list[int]:
    idx = [int(i) for i in idx]
    if not idx:
        raise GmmError("empty index list")
    if len(set(idx)) != len(idx):
        raise GmmError("indices must be distinct")
    if min(idx) < 0 or max(idx) >= g.dim:
        raise GmmError(f"index out of range for dim {g.dim}")
    return idx


def marginal(g: Gmm, idx) -> Gmm:
    idx = _check_idx(g, idx)
    ix = np.array(idx)
    return Gmm(g.weights.copy(), g.means[:, ix], g.covs[:, ix[:, None], ix[None, :]])


def condition(g: Gmm, observed_idx, y) -> Gmm:
    """Mixture over the unobserved coordinates given ``X[observed_idx] = y``.

    Remaining coordinates keep their original relative order.  Posterior
    weights are computed in the log domain.
    """
    obs = _check_idx(g, observed_idx)
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if y.shape != (len(obs),):
        raise GmmError(f"expected {len(obs)} observed values, got {y.shape}")
    rest = [i for i in range(g.dim) if i not in set(obs)]
    if not rest:
        raise GmmError("cannot condition on every coordinate")
    o, r = np.array(obs), np.array(rest)
    M = g.n_components
    logw = np.empty(M)
    means = np.empty((M, len(r)))
    covs = np.empty((M, len(r), len(r)))
    for m in range(M):
        mu, cov = g.means[m], g.covs[m]
        s_yy = cov[np.ix_(o, o)]
        s_zy = cov[np.ix_(r, o)]
        chol = safe_cholesky(s_yy)
        dy = y - mu[o]
        z = _solve_lower(chol, dy)
        logw[m] = np.log(g.weights[m]) - 0.5 * (
            z @ z + 2.0 * np.log(np.diag(chol)).sum() + len(o) * _LOG_2PI
        )
        # gain = s_zy s_yy^{-1}
        gain = _solve_lower(chol, s_zy.T)
        gain = _solve_upper(chol.T, gain).T
        means[m] = mu[r] + gain @ dy
        c = cov[np.ix_(r, r)] - gain @ s_zy.T
        covs[m] = 0.5 * (c + c.T)
    comp_ll = logw - np.log(g.weights)
    if comp_ll.max() < OOD_LOGLIK:
        warnings.warn(
            "observation lies outside every component's support; "
            "using nearest-component hard assignment",
            RuntimeWarning,
            stacklevel=2,
        )
        best = int(np.argmax(comp_ll))
        return Gmm(np.ones(1), means[best:best + 1], covs[best:best + 1])
    post = np.exp(logw - logsumexp(logw))
    keep = post >= COND_PRUNE
    post = post[keep] / post[keep].sum()
    return Gmm(post, means[keep], covs[keep])


def _solve_upper(u, rhs):
    return solve_triangular(u, rhs, lower=False, check_finite=False)


def moments(g: Gmm) -> tuple[np.ndarray, np.ndarray]:
    """Mean and covariance (law of total covariance)."""
    mean = g.weights @ g.means
    second = np.einsum("m,mij->ij", g.weights, g.covs + np.einsum("mi,mj->mij", g.means, g.means))
    cov = second - np.outer(mean, mean)
    return mean, 0.5 * (cov + cov.T)


def mean(g: Gmm) -> np.ndarray:
    return g.weights @ g.means


# univariate ---------------------------------------------------------------------


def _univariate(g: Gmm):
    if g.dim != 1:
        raise GmmError(f"univariate operation on a {g.dim}-D mixture")
    return g.means[:, 0], np.sqrt(np.maximum(g.covs[:, 0, 0], 0.0))


def cdf1(g: Gmm, x: float) -> float:
    mu, sd = _univariate(g)
    return float(_cdf_vals(g.weights, mu, sd, float(x)))


def _cdf_vals(w, mu, sd, x):
    z = np.where(sd > 0, (x - mu) / np.where(sd > 0, sd, 1.0), np.where(x >= mu, np.inf, -np.inf))
    return min(1.0, max(0.0, float(w @ ndtr(z))))


def quantile1(g: Gmm, p: float) -> float:
    """Inverse CDF by bisection on a bracket 10 standard deviations past every component."""
    if not 0.0 < p < 1.0:
        raise GmmError(f"quantile level {p} outside (0, 1)")
    mu, sd = _univariate(g)
    w = g.weights
    lo = float((mu - 10 * sd).min())
    hi = float((mu + 10 * sd).max())
    if lo == hi:
        return lo
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if _cdf_vals(w, mu, sd, mid) < p:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


# sampling --------------------------------------------------------------------------


def sample(g: Gmm, n: int, seed: int | np.random.Generator = 0, return_labels: bool = False):
    if n < 1:
        raise GmmError("sample count must be positive")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    labels = rng.choice(g.n_components, size=n, p=g.weights)
    z = rng.standard_normal((n, g.dim))
    out = np.empty((n, g.dim))
    for m in range(g.n_components):
        sel = labels == m
        if sel.any():
            out[sel] = g.means[m] + z[sel] @ safe_cholesky(g.covs[m]).T
    if return_labels:
        return out, labels
    return out
