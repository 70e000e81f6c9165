"""Linear Gaussian cluster-weighted model fit by EM.

The joint density of (x, y) is a G-component mixture in which each
component supplies a Gaussian input density N(mu_g, Sigma_g) and a Gaussian
output density N(beta_g0 + beta_g . x, sigma2_g).  All density arithmetic
runs in log space; responsibilities come from a logsumexp-normalized E-step
and the M-step delegates covariance estimation to the parsimonious family.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import logsumexp

from .covariances import ScatterInput, check_model_code, mstep_covariances
from .data import LabeledDataset
from .errors import ConfigError, DataError, DegeneracyError
from .rng import RandomSource

LOG_2PI = np.log(2.0 * np.pi)

EMPTY_MASS_FRACTION = 1e-6
MAX_RESEEDS = 3
SIGMA2_FLOOR_FRACTION = 1e-10
NORMAL_EQ_RIDGE = 1e-10


@dataclass
class CwmParams:
    """Component weights, input Gaussians and local linear output models."""

    weights: np.ndarray      # length G, simplex
    means: np.ndarray        # G x d
    covariances: np.ndarray  # G x d x d
    reg_coeffs: np.ndarray   # G x (d+1), intercept first
    output_vars: np.ndarray  # length G
    cov_model: str

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.means = np.atleast_2d(np.asarray(self.means, dtype=np.float64))
        self.covariances = np.asarray(self.covariances, dtype=np.float64)
        self.reg_coeffs = np.atleast_2d(np.asarray(self.reg_coeffs, dtype=np.float64))
        self.output_vars = np.asarray(self.output_vars, dtype=np.float64)
        check_model_code(self.cov_model)
        G = self.weights.shape[0]
        if abs(self.weights.sum() - 1.0) > 1e-12 or np.any(self.weights <= 0):
            raise DegeneracyError("component weights must be positive and sum to 1")
        d = self.means.shape[1]
        if self.means.shape != (G, d) or self.covariances.shape != (G, d, d):
            raise ConfigError("parameter shapes are inconsistent")
        if self.reg_coeffs.shape != (G, d + 1):
            raise ConfigError("reg_coeffs must be G x (d+1), intercept first")
        if np.any(self.output_vars <= 0) or not np.all(np.isfinite(self.output_vars)):
            raise DegeneracyError("output variances must be positive and finite")

    @property
    def G(self) -> int:
        return self.weights.shape[0]

    @property
    def d(self) -> int:
        return self.means.shape[1]


@dataclass
class FitResult:
    params: CwmParams
    loglik_trace: np.ndarray
    responsibilities: np.ndarray
    converged: bool
    n_iterations: int
    hard_labels: np.ndarray  # 1-based MAP labels
    regularized: bool
    n_reseeds: int = 0

    @property
    def loglik(self) -> float:
        return float(self.loglik_trace[-1])

    @property
    def N(self) -> int:
        return self.responsibilities.shape[0]


def _require_response(data: LabeledDataset) -> np.ndarray:
    if data.response is None:
        raise DataError("dataset has no response variable; the CWM needs one")
    return data.response


def mvn_log_density(X, mu, Sigma) -> np.ndarray:
    """Gaussian log density of each row of X, via the Cholesky factor of Sigma."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    d = X.shape[1]
    try:
        L = np.linalg.cholesky(Sigma)
    except np.linalg.LinAlgError:
        raise DegeneracyError("input covariance is not positive definite") from None
    dev = X - np.asarray(mu)[None, :]
    z = solve_triangular(L, dev.T, lower=True)
    maha = np.sum(z * z, axis=0)
    logdet = 2.0 * float(np.sum(np.log(np.diag(L))))
    return -0.5 * (d * LOG_2PI + logdet + maha)


def input_density(x, mu, Sigma) -> float:
    """Multivariate normal density at a single point."""
    return float(np.exp(mvn_log_density(np.atleast_2d(x), mu, Sigma)[0]))


def output_log_density(y, X, beta, sigma2) -> np.ndarray:
    """Log density of y around the affine prediction beta_0 + beta . x."""
    if sigma2 <= 0:
        raise DegeneracyError("output variance must be positive")
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    pred = beta[0] + X @ beta[1:]
    resid = np.asarray(y, dtype=np.float64) - pred
    return -0.5 * (LOG_2PI + np.log(sigma2) + resid * resid / sigma2)


def output_density(y, x, beta, sigma2) -> float:
    return float(np.exp(output_log_density(np.atleast_1d(y), np.atleast_2d(x), beta, sigma2)[0]))


def component_log_densities(data: LabeledDataset, params: CwmParams) -> np.ndarray:
    """N x G matrix of log pi_g + log p(x|g) + log p(y|x,g)."""
    y = _require_response(data)
    X = data.features
    n = X.shape[0]
    ll = np.empty((n, params.G))
    for g in range(params.G):
        ll[:, g] = (
            np.log(params.weights[g])
            + mvn_log_density(X, params.means[g], params.covariances[g])
            + output_log_density(y, X, params.reg_coeffs[g], params.output_vars[g])
        )
    return ll


def e_step(data: LabeledDataset, params: CwmParams) -> tuple[np.ndarray, float]:
    """Posterior responsibilities and observed-data log-likelihood."""
    ll = component_log_densities(data, params)
    row_lse = logsumexp(ll, axis=1)
    if not np.all(np.isfinite(row_lse)):
        bad = int(np.argmax(~np.isfinite(row_lse)))
        raise DegeneracyError(f"observation {bad} has zero density under every component")
    resp = np.exp(ll - row_lse[:, None])
    return resp, float(row_lse.sum())


def m_step(
    data: LabeledDataset,
    resp: np.ndarray,
    cov_model: str,
    prev_covariances=None,
) -> tuple[CwmParams, bool]:
    """Maximize the Q-function: weights, means, constrained covariances,
    weighted least-squares coefficients and output variances.

    prev_covariances (the previous iteration's, when running inside EM)
    warm-starts the iterative covariance models so the loglik stays
    monotone.  Returns the new parameters and whether any regularization
    (covariance ridge or normal-equation ridge) was engaged.
    """
    y = _require_response(data)
    X = data.features
    n, d = X.shape
    resp = np.asarray(resp, dtype=np.float64)
    G = resp.shape[1]
    masses = resp.sum(axis=0)
    if np.any(masses <= 0):
        g = int(np.argmax(masses <= 0))
        raise DegeneracyError(f"component {g} has zero responsibility mass")

    weights = masses / n
    means = (resp.T @ X) / masses[:, None]

    scatters = np.empty((G, d, d))
    for g in range(G):
        dev = X - means[g]
        scatters[g] = (dev * resp[:, g : g + 1]).T @ dev
    covs, regularized = mstep_covariances(
        cov_model, ScatterInput(scatters, masses), prev=prev_covariances
    )

    Xt = np.column_stack([np.ones(n), X])
    betas = np.empty((G, d + 1))
    sigma2 = np.empty(G)
    var_y = float(np.var(y))
    floor = SIGMA2_FLOOR_FRACTION * var_y
    for g in range(G):
        r = resp[:, g]
        A = Xt.T @ (Xt * r[:, None])
        b = Xt.T @ (r * y)
        try:
            beta = np.linalg.solve(A, b)
            if not np.all(np.isfinite(beta)):
                raise np.linalg.LinAlgError
        except np.linalg.LinAlgError:
            beta = np.linalg.solve(A + NORMAL_EQ_RIDGE * np.eye(d + 1), b)
            regularized = True
        betas[g] = beta
        resid = y - Xt @ beta
        sigma2[g] = max(float(np.dot(r, resid * resid) / masses[g]), floor)

    params = CwmParams(
        weights=weights,
        means=means,
        covariances=np.array(covs),
        reg_coeffs=betas,
        output_vars=sigma2,
        cov_model=cov_model,
    )
    return params, regularized


def _global_ols(X: np.ndarray, y: np.ndarray) -> np.ndarray:
    Xt = np.column_stack([np.ones(X.shape[0]), X])
    A = Xt.T @ Xt
    b = Xt.T @ y
    try:
        return np.linalg.solve(A, b)
    except np.linalg.LinAlgError:
        return np.linalg.solve(A + NORMAL_EQ_RIDGE * np.eye(A.shape[0]), b)


def _kmeans_means(X: np.ndarray, G: int, gen: np.random.Generator, n_iter: int = 10) -> np.ndarray:
    """Short Lloyd iteration for initialization only."""
    centers = X[gen.choice(X.shape[0], size=G, replace=False)].copy()
    for _ in range(n_iter):
        d2 = ((X[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        assign = np.argmin(d2, axis=1)
        for g in range(G):
            members = assign == g
            if np.any(members):
                centers[g] = X[members].mean(axis=0)
            else:
                centers[g] = X[gen.integers(X.shape[0])]
    return centers


def initialize(
    data: LabeledDataset,
    G: int,
    strategy: str = "kmeans_like",
    rng: RandomSource = RandomSource(0),
    cov_model: str = "VVV",
) -> CwmParams:
    """Starting parameters: uniform weights, means picked from the data
    (random_rows) or from a short seeded k-means (kmeans_like), identity
    input covariances, globally fitted coefficients with a small seeded
    relative perturbation, and var(y) output variances.
    """
    y = _require_response(data)
    X = data.features
    n, d = X.shape
    if G < 1:
        raise ConfigError("G must be positive")
    if G > n:
        raise ConfigError(f"G={G} exceeds the number of observations N={n}")
    if strategy not in ("random_rows", "kmeans_like"):
        raise ConfigError(f"unknown init strategy {strategy!r}")

    gen = rng.generator()
    if strategy == "random_rows":
        means = X[gen.choice(n, size=G, replace=False)].copy()
    else:
        means = _kmeans_means(X, G, gen)

    beta_hat = _global_ols(X, y)
    betas = beta_hat[None, :] * (1.0 + 0.1 * gen.standard_normal((G, d + 1)))
    var_y = float(np.var(y))
    if var_y <= 0:
        raise DegeneracyError("response is constant; output variance cannot be initialized")
    return CwmParams(
        weights=np.full(G, 1.0 / G),
        means=means,
        covariances=np.broadcast_to(np.eye(d), (G, d, d)).copy(),
        reg_coeffs=betas,
        output_vars=np.full(G, var_y),
        cov_model=cov_model,
    )


def _reseed_empty(
    params: CwmParams, resp: np.ndarray, empty: np.ndarray, X: np.ndarray
) -> CwmParams:
    """Move empty components to the worst-explained data points, identity covariance."""
    order = np.argsort(resp.max(axis=1), kind="stable")
    means = params.means.copy()
    covs = params.covariances.copy()
    for k, g in enumerate(np.flatnonzero(empty)):
        means[g] = X[order[k % len(order)]]
        covs[g] = np.eye(X.shape[1])
    return CwmParams(
        weights=params.weights,
        means=means,
        covariances=covs,
        reg_coeffs=params.reg_coeffs,
        output_vars=params.output_vars,
        cov_model=params.cov_model,
    )


def _run_em(
    data: LabeledDataset,
    G: int,
    cov_model: str,
    init_strategy: str,
    max_iter: int,
    tol: float,
    rng: RandomSource,
) -> FitResult:
    X = data.features
    n = X.shape[0]
    params = initialize(data, G, init_strategy, rng, cov_model)
    regularized = False
    reseeds = 0

    resp, ll = e_step(data, params)
    trace = [ll]
    converged = False
    n_iter = 0
    it = 0
    while it < max_iter:
        masses = resp.sum(axis=0)
        empty = masses < EMPTY_MASS_FRACTION * n
        if np.any(empty):
            if reseeds >= MAX_RESEEDS:
                raise DegeneracyError(
                    f"component(s) {np.flatnonzero(empty).tolist()} stayed empty "
                    f"after {MAX_RESEEDS} re-seeds"
                )
            reseeds += 1
            params = _reseed_empty(params, resp, empty, X)
            resp, ll = e_step(data, params)
            trace = [ll]
            continue

        params, reg = m_step(data, resp, cov_model, prev_covariances=params.covariances)
        regularized |= reg
        resp, ll_new = e_step(data, params)
        trace.append(ll_new)
        n_iter = it + 1
        if abs(ll_new - ll) / (1.0 + abs(ll_new)) < tol:
            converged = True
            break
        ll = ll_new
        it += 1

    return FitResult(
        params=params,
        loglik_trace=np.array(trace),
        responsibilities=resp,
        converged=converged,
        n_iterations=n_iter,
        hard_labels=np.argmax(resp, axis=1) + 1,
        regularized=regularized,
        n_reseeds=reseeds,
    )


def fit(
    data: LabeledDataset,
    G: int,
    cov_model: str = "VVV",
    init_strategy: str = "kmeans_like",
    n_starts: int = 5,
    max_iter: int = 500,
    tol: float = 1e-8,
    rng: RandomSource = RandomSource(0),
) -> FitResult:
    """Best of n_starts independent EM runs, each from its own child seed.

    A start that degenerates (empty components beyond the re-seed budget,
    singular covariances) is discarded; if every start degenerates the
    aggregated failure is raised.
    """
    check_model_code(cov_model)
    if n_starts < 1:
        raise ConfigError("n_starts must be positive")
    best: FitResult | None = None
    failures: list[str] = []
    for s in range(n_starts):
        try:
            result = _run_em(data, G, cov_model, init_strategy, max_iter, tol, rng.child(s))
        except DegeneracyError as exc:
            failures.append(f"start {s}: {exc}")
            continue
        if best is None or result.loglik > best.loglik:
            best = result
    if best is None:
        raise DegeneracyError(
            f"all {n_starts} starts degenerated for G={G}, model {cov_model}: "
            + "; ".join(failures)
        )
    return best


def predict_cluster(params: CwmParams, data: LabeledDataset) -> np.ndarray:
    """MAP component labels in 1..G, ties toward the lowest component."""
    resp, _ = e_step(data, params)
    return np.argmax(resp, axis=1) + 1
