"""Gaussian hidden Markov regime model over log returns.

Fitting is expectation-maximization with a scaled forward-backward pass, run
for a bounded number of iterations. Observations are daily log returns
(dimension 1 in this system), but means and covariances are stored and
processed in general dimension so every state carries a full covariance
matrix.

The directional forecast is the sign of the posterior-weighted one-step-ahead
expected return: e = (posterior @ A) @ means. The per-state mean ranking is
exposed separately for diagnostics.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .directions import sign_direction
from .errors import InsufficientDataError, NumericalError, ParameterError

MIN_SAMPLES_PER_STATE = 10


@dataclass
class HmmConfig:
    n_states: int = 5
    max_iterations: int = 10
    covariance_kind: str = "full"
    convergence_tol: float = 1e-4
    seed: int = 0
    variance_floor: float = 1e-12

    def __post_init__(self):
        if self.n_states < 1:
            raise ParameterError("n_states must be >= 1")
        if self.max_iterations < 1:
            raise ParameterError("max_iterations must be >= 1")
        if self.covariance_kind != "full":
            raise ParameterError("only full covariance is supported")


@dataclass
class HmmModel:
    """Fitted model: state distribution, transitions, and Gaussian emissions."""

    initial_probs: np.ndarray      # (K,)
    transition: np.ndarray         # (K, K), row-stochastic
    means: np.ndarray              # (K, D)
    covariances: np.ndarray        # (K, D, D)
    fit_log_likelihood: float
    log_likelihood_path: list[float] = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)

    @property
    def n_states(self) -> int:
        return self.initial_probs.size

    @property
    def mean_returns(self) -> np.ndarray:
        """Per-state mean of the first observation component."""
        return self.means[:, 0]

    def to_dict(self) -> dict:
        return {
            "initial_probs": self.initial_probs.tolist(),
            "transition": self.transition.tolist(),
            "means": self.means.tolist(),
            "covariances": self.covariances.tolist(),
            "fit_log_likelihood": self.fit_log_likelihood,
            "log_likelihood_path": list(self.log_likelihood_path),
            "diagnostics": dict(self.diagnostics),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, payload: dict) -> "HmmModel":
        return cls(
            initial_probs=np.array(payload["initial_probs"], dtype=float),
            transition=np.array(payload["transition"], dtype=float),
            means=np.array(payload["means"], dtype=float),
            covariances=np.array(payload["covariances"], dtype=float),
            fit_log_likelihood=float(payload["fit_log_likelihood"]),
            log_likelihood_path=list(payload.get("log_likelihood_path", [])),
            diagnostics=dict(payload.get("diagnostics", {})),
        )


@dataclass(frozen=True)
class StateRanking:
    best_state: int
    means_by_state: np.ndarray


@dataclass(frozen=True)
class DirectionForecast:
    expected_return: float
    direction: str


def _as_observations(returns: Sequence[float] | np.ndarray) -> np.ndarray:
    obs = np.asarray(returns, dtype=float)
    if obs.ndim == 1:
        obs = obs[:, None]
    return obs


def _log_gaussian(obs: np.ndarray, mean: np.ndarray, cov: np.ndarray) -> np.ndarray:
    """Log density of each row of ``obs`` under N(mean, cov)."""
    dim = mean.size
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"state covariance not positive definite: {exc}") from exc
    diff = obs - mean
    solved = np.linalg.solve(chol, diff.T)
    quad = np.sum(solved * solved, axis=0)
    log_det = 2.0 * np.sum(np.log(np.diag(chol)))
    return -0.5 * (dim * np.log(2.0 * np.pi) + log_det + quad)


def _emission_log_probs(obs: np.ndarray, means: np.ndarray, covs: np.ndarray) -> np.ndarray:
    n_states = means.shape[0]
    log_b = np.empty((obs.shape[0], n_states))
    for k in range(n_states):
        log_b[:, k] = _log_gaussian(obs, means[k], covs[k])
    return log_b


def _forward(log_b: np.ndarray, pi: np.ndarray, trans: np.ndarray):
    """Scaled forward pass. Returns (normalized alphas, norms, log-likelihood).

    Emission probabilities are shifted per time step before exponentiation;
    the shift cancels in the normalized recursion and is added back to the
    log-likelihood, so the result is exact even for extreme densities.
    """
    n_obs, _ = log_b.shape
    shifts = log_b.max(axis=1)
    b = np.exp(log_b - shifts[:, None])
    alphas = np.empty_like(b)
    norms = np.empty(n_obs)

    a = pi * b[0]
    norms[0] = a.sum()
    if norms[0] <= 0:
        raise NumericalError("forward recursion collapsed at t=0")
    alphas[0] = a / norms[0]
    for t in range(1, n_obs):
        a = (alphas[t - 1] @ trans) * b[t]
        norms[t] = a.sum()
        if norms[t] <= 0:
            raise NumericalError(f"forward recursion collapsed at t={t}")
        alphas[t] = a / norms[t]
    log_likelihood = float(np.log(norms).sum() + shifts.sum())
    return alphas, norms, log_likelihood, b


def _backward(b: np.ndarray, trans: np.ndarray, norms: np.ndarray) -> np.ndarray:
    """Backward pass scaled by the forward norms (Rabiner-style)."""
    n_obs, n_states = b.shape
    betas = np.empty((n_obs, n_states))
    betas[-1] = 1.0
    for t in range(n_obs - 2, -1, -1):
        betas[t] = (trans @ (b[t + 1] * betas[t + 1])) / norms[t + 1]
    return betas


def _initial_parameters(obs: np.ndarray, config: HmmConfig):
    """Deterministic seeded initialization.

    Means come from a quantile split of the observations (sorted, cut into
    n_states buckets), every state starts from the pooled covariance, pi is
    uniform, and the transition matrix puts 0.8 on self-transitions. A tiny
    seeded jitter separates duplicate bucket means so EM cannot lock states
    together on heavily discretized data.
    """
    n_states = config.n_states
    dim = obs.shape[1]
    order = np.argsort(obs[:, 0], kind="stable")
    buckets = np.array_split(order, n_states)
    means = np.vstack(
        [obs[idx].mean(axis=0) if idx.size else obs.mean(axis=0) for idx in buckets]
    )

    centered = obs - obs.mean(axis=0)
    pooled = (centered.T @ centered) / obs.shape[0]
    pooled = _floor_covariance(pooled, config.variance_floor)
    covs = np.repeat(pooled[None, :, :], n_states, axis=0)

    rng = np.random.default_rng(config.seed)
    scale = float(np.sqrt(np.diag(pooled)).mean())
    means = means + rng.normal(0.0, 1e-6 * (scale + 1e-12), size=(n_states, dim))

    pi = np.full(n_states, 1.0 / n_states)
    if n_states == 1:
        trans = np.ones((1, 1))
    else:
        off = 0.2 / (n_states - 1)
        trans = np.full((n_states, n_states), off)
        np.fill_diagonal(trans, 0.8)
    return pi, trans, means, covs


def _floor_covariance(cov: np.ndarray, floor: float) -> np.ndarray:
    """Symmetrize and force diagonal entries up to the variance floor."""
    cov = 0.5 * (cov + cov.T)
    diag = np.diag(cov).copy()
    low = diag < floor
    if np.any(low):
        diag[low] = floor
        cov = cov.copy()
        np.fill_diagonal(cov, diag)
    return cov


def fit(returns: Sequence[float] | np.ndarray, config: HmmConfig) -> HmmModel:
    """Fit by EM until the log-likelihood gain drops below tolerance or the
    iteration cap is reached. The recorded per-iteration log-likelihood path
    is non-decreasing (standard EM guarantee)."""
    obs = _as_observations(returns)
    n_obs = obs.shape[0]
    if n_obs < MIN_SAMPLES_PER_STATE * config.n_states:
        raise InsufficientDataError(
            f"need >= {MIN_SAMPLES_PER_STATE * config.n_states} returns "
            f"for {config.n_states} states, got {n_obs}"
        )

    pi, trans, means, covs = _initial_parameters(obs, config)
    floor = config.variance_floor
    floored = False
    path: list[float] = []
    prev_ll = -np.inf
    iterations = 0
    converged = False

    for _ in range(config.max_iterations):
        log_b = _emission_log_probs(obs, means, covs)
        alphas, norms, log_likelihood, b = _forward(log_b, pi, trans)
        betas = _backward(b, trans, norms)
        path.append(log_likelihood)
        iterations += 1

        gammas = alphas * betas
        gammas /= gammas.sum(axis=1, keepdims=True)

        # Expected transition counts, accumulated without materializing the
        # (T, K, K) tensor. With this scaling each xi_t is already a proper
        # posterior, so the sum is the expected count matrix.
        weighted = b[1:] * betas[1:] / norms[1:, None]
        xi_sum = trans * (alphas[:-1].T @ weighted)

        pi = gammas[0] / gammas[0].sum()
        from_counts = gammas[:-1].sum(axis=0)
        new_trans = trans.copy()
        for k in range(config.n_states):
            if from_counts[k] > 1e-12:
                new_trans[k] = xi_sum[k] / from_counts[k]
        new_trans = np.clip(new_trans, 0.0, None)
        new_trans /= new_trans.sum(axis=1, keepdims=True)
        trans = new_trans

        occupancy = gammas.sum(axis=0)
        for k in range(config.n_states):
            if occupancy[k] <= 1e-10:
                continue  # dead state: keep previous parameters
            mean_k = (gammas[:, k] @ obs) / occupancy[k]
            diff = obs - mean_k
            cov_k = (gammas[:, k][:, None] * diff).T @ diff / occupancy[k]
            before = cov_k
            cov_k = _floor_covariance(cov_k, floor)
            if np.any(np.diag(before) < floor):
                floored = True
            means[k] = mean_k
            covs[k] = cov_k

        if log_likelihood - prev_ll < config.convergence_tol:
            converged = True
            prev_ll = log_likelihood
            break
        prev_ll = log_likelihood

    # Log-likelihood of the final parameters (after the last M-step).
    log_b = _emission_log_probs(obs, means, covs)
    _, _, final_ll, _ = _forward(log_b, pi, trans)
    path.append(final_ll)

    return HmmModel(
        initial_probs=pi,
        transition=trans,
        means=means,
        covariances=covs,
        fit_log_likelihood=final_ll,
        log_likelihood_path=path,
        diagnostics={
            "iterations": iterations,
            "converged": converged,
            "variance_floored": floored,
        },
    )


def forward_posterior(model: HmmModel, returns: Sequence[float] | np.ndarray) -> np.ndarray:
    """Filtered state distribution P(state_T | returns_1..T)."""
    obs = _as_observations(returns)
    if obs.shape[0] == 0:
        raise InsufficientDataError("forward_posterior needs at least one return")
    log_b = _emission_log_probs(obs, model.means, model.covariances)
    alphas, _, _, _ = _forward(log_b, model.initial_probs, model.transition)
    return alphas[-1]


def filtered_states(model: HmmModel, returns: Sequence[float] | np.ndarray) -> np.ndarray:
    """Arg-max filtered state index for every time step."""
    obs = _as_observations(returns)
    if obs.shape[0] == 0:
        raise InsufficientDataError("filtered_states needs at least one return")
    log_b = _emission_log_probs(obs, model.means, model.covariances)
    alphas, _, _, _ = _forward(log_b, model.initial_probs, model.transition)
    return np.argmax(alphas, axis=1)


def predict_direction(model: HmmModel, posterior: np.ndarray) -> DirectionForecast:
    """One-step-ahead expected return under the filtered posterior, and its sign."""
    posterior = np.asarray(posterior, dtype=float)
    expected = float((posterior @ model.transition) @ model.mean_returns)
    return DirectionForecast(expected, sign_direction(expected))


def state_ranking(model: HmmModel) -> StateRanking:
    """State with the highest historical mean return; ties go to the lowest index."""
    means = model.mean_returns
    return StateRanking(int(np.argmax(means)), means.copy())
