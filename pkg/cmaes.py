#!/usr/bin/env python3
"""
CMA-ES optimizer state shared by the CMA-ME and CMA-MEGA emitters
(mu/mu_w, lambda) recombination with rank-one and rank-mu covariance updates and
cumulative step-size adaptation, using the default strategy parameters for (n, lambda)
"""
import math
from dataclasses import dataclass, field, replace

import numpy as np

from errors import InvalidArgumentError, RestartRequired
from rng import split_rng

EIGEN_FLOOR = 1e-30


def default_population_size(n):
    return 4 + int(3 * math.log(n))


@dataclass(frozen=True)
class CmaesParameters:
    """Static strategy parameters derived from the dimension and population size"""
    n: int
    lam: int
    mu: int
    weights: np.ndarray = field(repr=False)
    mueff: float
    cc: float
    cs: float
    c1: float
    cmu: float
    damps: float
    cm: float = 1.0

    @classmethod
    def create(cls, n, lam=None):
        n = int(n)
        lam = int(lam) if lam else default_population_size(n)
        if lam < 2:
            raise InvalidArgumentError(f"CMA-ES needs a population of at least 2, got {lam}")
        mu = lam // 2
        raw = np.log(lam / 2 + 0.5) - np.log(np.arange(1, mu + 1))
        weights = raw / raw.sum()
        mueff = raw.sum() ** 2 / np.sum(raw ** 2)
        cc = (4 + mueff / n) / (n + 4 + 2 * mueff / n)
        cs = (mueff + 2) / (n + mueff + 5)
        c1 = 2 / ((n + 1.3) ** 2 + mueff)
        cmu = min(1 - c1, 2 * (mueff - 2 + 1 / mueff) / ((n + 2) ** 2 + mueff))
        damps = 2 * mueff / lam + 0.3 + cs
        return cls(n, lam, mu, weights, mueff, cc, cs, c1, cmu, damps)


@dataclass
class CmaesState:
    mean: np.ndarray
    sigma: float
    covariance: np.ndarray
    p_sigma: np.ndarray
    p_c: np.ndarray
    params: CmaesParameters
    generation: int = 0


def cmaes_init(mean, sigma, lam=None):
    mean = np.asarray(mean, dtype=float).copy()
    n = len(mean)
    if not sigma > 0:
        raise InvalidArgumentError(f"sigma must be positive, got {sigma}")
    return CmaesState(mean=mean, sigma=float(sigma), covariance=np.eye(n),
                      p_sigma=np.zeros(n), p_c=np.zeros(n), params=CmaesParameters.create(n, lam))


def eigen_decomposition(covariance):
    """Eigenvalues clamped to EIGEN_FLOOR and the eigenbasis"""
    if not np.all(np.isfinite(covariance)):
        raise RestartRequired("covariance matrix has non-finite entries")
    eigenvalues, basis = np.linalg.eigh(covariance)
    return np.maximum(eigenvalues, EIGEN_FLOOR), basis


def condition_number(state):
    eigenvalues, _ = eigen_decomposition(state.covariance)
    return float(eigenvalues.max() / eigenvalues.min())


def cmaes_ask(state, lam, rng):
    """`lam` samples from Normal(mean, sigma^2 C)"""
    lam = int(lam)
    if lam < 2:
        raise InvalidArgumentError(f"lambda must be >= 2, got {lam}")
    eigenvalues, basis = eigen_decomposition(state.covariance)
    generator = rng.generator() if hasattr(rng, 'generator') else rng
    z = generator.standard_normal((lam, len(state.mean)))
    return state.mean + state.sigma * (z * np.sqrt(eigenvalues)) @ basis.T


def cmaes_tell(state, samples, ranking):
    """One CMA-ES generation from samples ranked best first; returns a new state"""
    par = state.params
    samples = np.asarray(samples, dtype=float)
    if len(samples) != par.lam:
        raise InvalidArgumentError(f"expected {par.lam} samples, got {len(samples)}")
    ranking = np.asarray(ranking, dtype=int)
    if sorted(ranking.tolist()) != list(range(par.lam)):
        raise InvalidArgumentError("ranking must be a permutation of the sample indices")
    n = par.n
    old_mean = state.mean
    sigma = state.sigma

    steps = (samples[ranking[:par.mu]] - old_mean) / sigma
    mean_step = par.weights @ steps
    mean = old_mean + par.cm * sigma * mean_step

    eigenvalues, basis = eigen_decomposition(state.covariance)
    inv_sqrt = basis @ np.diag(eigenvalues ** -0.5) @ basis.T
    y = (mean - old_mean) / sigma
    p_sigma = (1 - par.cs) * state.p_sigma + math.sqrt(par.cs * (2 - par.cs) * par.mueff) * (inv_sqrt @ y)
    generation = state.generation + 1
    # turn off rank-one accumulation when sigma increases quickly
    hsig = float(np.sum(p_sigma ** 2) / n / (1 - (1 - par.cs) ** (2 * generation)) < 2 + 4 / (n + 1))
    p_c = (1 - par.cc) * state.p_c + hsig * math.sqrt(par.cc * (2 - par.cc) * par.mueff) * y

    c1a = par.c1 * (1 - (1 - hsig ** 2) * par.cc * (2 - par.cc))
    covariance = (1 - c1a - par.cmu * par.weights.sum()) * state.covariance
    covariance += par.c1 * np.outer(p_c, p_c)
    covariance += par.cmu * (steps.T * par.weights) @ steps
    covariance = (covariance + covariance.T) / 2

    sigma *= math.exp(min(1.0, (par.cs / par.damps) * (np.sum(p_sigma ** 2) / n - 1) / 2))
    return replace(state, mean=mean, sigma=sigma, covariance=covariance, p_sigma=p_sigma, p_c=p_c,
                   generation=generation)


def minimize(objective, mean, sigma, rng, max_evaluations, target=None, lam=None):
    """Plain CMA-ES minimization loop; returns (best_x, best_value, evaluations)"""
    state = cmaes_init(mean, sigma, lam)
    best_x, best_value, evaluations = None, math.inf, 0
    while evaluations + state.params.lam <= max_evaluations:
        ask_rng, rng = split_rng(rng, 2)
        samples = cmaes_ask(state, state.params.lam, ask_rng)
        values = np.array([objective(x) for x in samples])
        evaluations += len(samples)
        ranking = np.argsort(values, kind='stable')
        if values[ranking[0]] < best_value:
            best_x, best_value = samples[ranking[0]].copy(), float(values[ranking[0]])
        if target is not None and best_value < target:
            break
        state = cmaes_tell(state, samples, ranking)
    return best_x, best_value, evaluations
