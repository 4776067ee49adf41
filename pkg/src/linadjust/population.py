"""Population least-squares solutions and exact asymptotic variances.

Moment mode works from the eight-quantity record (pi, Sigma, Omega1,
Omega0, mu1, mu0, q1, q0) with the convention E(X) = 0; that record
determines every residual second moment exactly, so no sampling is
involved. Sampler mode estimates the same record by Monte Carlo and
flags results as approximate.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .dominance import condition_centered
from .estimate import SingularDesignError
from .model import ModelSpec, named_spec

__all__ = [
    "ExactMoments",
    "GaussianArmSampler",
    "PopulationSpec",
    "PopulationSolution",
    "BetaAteEstimate",
    "solve_population",
    "asymptotic_variance_known_mean",
    "asymptotic_variance_centered",
    "variance_gap_theorem2",
    "ancova_anova_gap",
    "make_counterexample",
    "approximate_beta_ate",
    "random_moment_population",
    "population_to_dict",
    "population_from_dict",
]

MC_MOMENT_DRAWS = 1_000_000


@dataclass(frozen=True)
class ExactMoments:
    """Second-order moment record of (X, Y, A) with E(X) = 0.

    sigma = E(XX'), omega_a = E(XY | A=a), mu_a = E(Y | A=a) and
    q_a = E(Y^2 | A=a). These suffice for every population solution and
    asymptotic variance in the linear class.
    """

    sigma: np.ndarray
    omega1: np.ndarray
    omega0: np.ndarray
    mu1: float
    mu0: float
    q1: float
    q0: float

    def __post_init__(self) -> None:
        sigma = np.atleast_2d(np.asarray(self.sigma, dtype=float))
        omega1 = np.atleast_1d(np.asarray(self.omega1, dtype=float))
        omega0 = np.atleast_1d(np.asarray(self.omega0, dtype=float))
        p = sigma.shape[0]
        if sigma.shape != (p, p):
            msg = f"sigma must be square, got shape {sigma.shape}"
            raise ValueError(msg)
        if omega1.shape != (p,) or omega0.shape != (p,):
            msg = "omega1 and omega0 must match sigma's dimension"
            raise ValueError(msg)
        if not np.allclose(sigma, sigma.T):
            msg = "sigma must be symmetric"
            raise ValueError(msg)
        try:
            np.linalg.cholesky(sigma)
        except np.linalg.LinAlgError:
            msg = "sigma must be positive definite"
            raise SingularDesignError(msg) from None
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "omega1", omega1)
        object.__setattr__(self, "omega0", omega0)
        object.__setattr__(self, "mu1", float(self.mu1))
        object.__setattr__(self, "mu0", float(self.mu0))
        object.__setattr__(self, "q1", float(self.q1))
        object.__setattr__(self, "q0", float(self.q0))

    @property
    def p(self) -> int:
        return self.sigma.shape[0]


@dataclass(frozen=True)
class GaussianArmSampler:
    """Gaussian covariates with linear arm-wise outcome laws.

    X ~ N(0, sigma); Y(a) = b_a + l_a'X + s_a * e with independent
    standard normal noise. Closed-form moments are exact.
    """

    sigma: np.ndarray
    b0: float
    b1: float
    l0: np.ndarray
    l1: np.ndarray
    s0: float
    s1: float

    def __post_init__(self) -> None:
        sigma = np.atleast_2d(np.asarray(self.sigma, dtype=float))
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "l0", np.atleast_1d(np.asarray(self.l0, dtype=float)))
        object.__setattr__(self, "l1", np.atleast_1d(np.asarray(self.l1, dtype=float)))
        object.__setattr__(self, "_chol", np.linalg.cholesky(sigma))

    @property
    def p(self) -> int:
        return self.sigma.shape[0]

    def moments(self) -> ExactMoments:
        q1 = self.b1**2 + self.l1 @ self.sigma @ self.l1 + self.s1**2
        q0 = self.b0**2 + self.l0 @ self.sigma @ self.l0 + self.s0**2
        return ExactMoments(
            sigma=self.sigma,
            omega1=self.sigma @ self.l1,
            omega0=self.sigma @ self.l0,
            mu1=self.b1,
            mu0=self.b0,
            q1=q1,
            q0=q0,
        )

    def potential(self, n: int, rng: np.random.Generator):
        """Draw covariates and both potential outcomes."""
        x = rng.standard_normal((n, self.p)) @ self._chol.T
        y1 = self.b1 + x @ self.l1 + self.s1 * rng.standard_normal(n)
        y0 = self.b0 + x @ self.l0 + self.s0 * rng.standard_normal(n)
        return x, y1, y0

    def draw_dataset(self, n: int, pi: float, rng: np.random.Generator):
        from .model import Dataset

        x, y1, y0 = self.potential(n, rng)
        a = (rng.random(n) < pi).astype(float)
        return Dataset(a, x, a * y1 + (1.0 - a) * y0)


@dataclass(frozen=True)
class PopulationSpec:
    """Assignment probability plus moments and/or a seeded sampler."""

    pi: float
    moments: ExactMoments | None = None
    sampler: GaussianArmSampler | None = None

    def __post_init__(self) -> None:
        if not 0.0 < self.pi < 1.0:
            msg = f"pi must lie in (0, 1), got {self.pi}"
            raise ValueError(msg)
        if self.moments is None and self.sampler is None:
            msg = "population needs moments, a sampler, or both"
            raise ValueError(msg)

    @property
    def p(self) -> int:
        return self.moments.p if self.moments is not None else self.sampler.p


@dataclass(frozen=True)
class PopulationSolution:
    """Population least-squares coefficients for one ModelSpec."""

    alpha: float
    beta: float
    gamma: np.ndarray
    delta: np.ndarray
    beta_ate: float
    approximate: bool = False


class BetaAteEstimate(NamedTuple):
    value: float
    mc_se: float


def _resolve_moments(pop: PopulationSpec, seed: int = 0) -> tuple[ExactMoments, bool]:
    if pop.moments is not None:
        return pop.moments, False
    rng = np.random.default_rng(np.random.SeedSequence((int(seed), 0x6D6F6D)))
    x, y1, y0 = pop.sampler.potential(MC_MOMENT_DRAWS, rng)
    mom = ExactMoments(
        sigma=x.T @ x / len(x),
        omega1=x.T @ y1 / len(x),
        omega0=x.T @ y0 / len(x),
        mu1=float(y1.mean()),
        mu0=float(y0.mean()),
        q1=float((y1**2).mean()),
        q0=float((y0**2).mean()),
    )
    return mom, True


def solve_population(spec: ModelSpec, pop: PopulationSpec, seed: int = 0) -> PopulationSolution:
    """Solve the restricted population least-squares problem exactly.

    The first-order conditions reduce, with E(X) = 0 and A independent
    of X, to alpha = mu0, beta = mu1 - mu0, and the symmetric linear
    system over the free gamma and delta entries

        [Sigma_FF   pi*Sigma_FG] [gamma_F]   [Omega_bar_F - fixed]
        [pi*Sigma_GF pi*Sigma_GG] [delta_G] = [pi*(Omega1_G - fixed)]

    where Omega_bar = pi*Omega1 + (1-pi)*Omega0. Fixed coefficients are
    echoed in the returned vectors. Sampler-only populations get their
    moment record estimated by Monte Carlo and the result is flagged
    approximate.
    """
    if spec.p != pop.p:
        msg = f"spec has p={spec.p} covariates but population has p={pop.p}"
        raise ValueError(msg)
    mom, approximate = _resolve_moments(pop, seed)
    pi = pop.pi
    sigma = mom.sigma
    omega_bar = pi * mom.omega1 + (1.0 - pi) * mom.omega0

    gamma = np.array([0.0 if c.is_free else c.value for c in spec.gamma])
    delta = np.array([0.0 if c.is_free else c.value for c in spec.delta])
    f_idx = list(spec.unrestricted_gamma())
    g_idx = list(spec.unrestricted_delta())
    if f_idx or g_idx:
        k11 = sigma[np.ix_(f_idx, f_idx)]
        k12 = pi * sigma[np.ix_(f_idx, g_idx)]
        k22 = pi * sigma[np.ix_(g_idx, g_idx)]
        k = np.block([[k11, k12], [k12.T, k22]])
        r = omega_bar[f_idx] - sigma[f_idx] @ gamma - pi * (sigma[f_idx] @ delta)
        s = pi * (mom.omega1[g_idx] - sigma[g_idx] @ gamma - sigma[g_idx] @ delta)
        rhs = np.concatenate([r, s])
        try:
            sol = np.linalg.solve(k, rhs)
        except np.linalg.LinAlgError:
            msg = "population normal equations are singular"
            raise SingularDesignError(msg) from None
        gamma[f_idx] = sol[: len(f_idx)]
        delta[g_idx] = sol[len(f_idx) :]

    beta_ate = mom.mu1 - mom.mu0
    return PopulationSolution(
        alpha=mom.mu0,
        beta=beta_ate,
        gamma=gamma,
        delta=delta,
        beta_ate=beta_ate,
        approximate=approximate,
    )


def _residual_second_moment(mom: ExactMoments, sol: PopulationSolution, arm: int) -> float:
    """E[eps^2 | A=arm] from the moment record; exact, no 4th moments."""
    c = sol.gamma + arm * sol.delta
    omega = mom.omega1 if arm == 1 else mom.omega0
    mu = mom.mu1 if arm == 1 else mom.mu0
    q = mom.q1 if arm == 1 else mom.q0
    m2 = q - mu * mu - 2.0 * (c @ omega) + c @ mom.sigma @ c
    return max(float(m2), 0.0)


def asymptotic_variance_known_mean(
    spec: ModelSpec, pop: PopulationSpec, seed: int = 0
) -> float:
    """n * avar of the treatment coefficient with a known covariate mean.

    Equals m2(1)/pi + m2(0)/(1-pi) with m2(a) the arm-wise residual
    second moment at the population solution.
    """
    mom, _ = _resolve_moments(pop, seed)
    sol = solve_population(spec, pop, seed)
    return _residual_second_moment(mom, sol, 1) / pop.pi + _residual_second_moment(
        mom, sol, 0
    ) / (1.0 - pop.pi)


def asymptotic_variance_centered(spec: ModelSpec, pop: PopulationSpec, seed: int = 0) -> float:
    """n * avar of the empirically centered estimate.

    Adds the interaction penalty delta_s' Sigma (2 delta_f - delta_s)
    to the known-mean variance, with delta_f from the all-free model.
    """
    mom, _ = _resolve_moments(pop, seed)
    sol = solve_population(spec, pop, seed)
    v = _residual_second_moment(mom, sol, 1) / pop.pi + _residual_second_moment(
        mom, sol, 0
    ) / (1.0 - pop.pi)
    full = solve_population(named_spec("ANHECOVA", spec.p), pop, seed)
    delta_s = sol.delta
    return v + float(delta_s @ mom.sigma @ (2.0 * full.delta - delta_s))


def variance_gap_theorem2(
    spec1: ModelSpec, spec2: ModelSpec, pop: PopulationSpec, seed: int = 0
) -> float:
    """Closed-form centered variance gap V2_tilde - V1_tilde.

    Requires the centered dominance condition (nested constraints and
    equal free sets for spec1). The gap is the quadratic form
    (d_gamma + (1-pi) d_delta)' Sigma (d_gamma + (1-pi) d_delta)
    divided by pi(1-pi), hence always nonnegative.
    """
    if not condition_centered(spec1, spec2):
        msg = (
            "centered dominance condition violated: needs nested constraints "
            "and equal free main-effect/interaction sets for the first spec"
        )
        raise ValueError(msg)
    mom, _ = _resolve_moments(pop, seed)
    sol1 = solve_population(spec1, pop, seed)
    sol2 = solve_population(spec2, pop, seed)
    d_gamma = sol1.gamma - sol2.gamma
    d_delta = sol1.delta - sol2.delta
    v = d_gamma + (1.0 - pop.pi) * d_delta
    return float(v @ mom.sigma @ v) / (pop.pi * (1.0 - pop.pi))


def ancova_anova_gap(pop: PopulationSpec, seed: int = 0) -> float:
    """Exact V(ANCOVA) - V(ANOVA) under known-mean centering.

    Equals (gamma_f + pi*delta_f)' Sigma ((3pi-2) delta_f - gamma_f)
    / (pi(1-pi)); either sign can occur.
    """
    mom, _ = _resolve_moments(pop, seed)
    pi = pop.pi
    try:
        gamma_f = np.linalg.solve(mom.sigma, mom.omega0)
        delta_f = np.linalg.solve(mom.sigma, mom.omega1 - mom.omega0)
    except np.linalg.LinAlgError:
        msg = "sigma is singular"
        raise SingularDesignError(msg) from None
    left = gamma_f + pi * delta_f
    right = (3.0 * pi - 2.0) * delta_f - gamma_f
    return float(left @ mom.sigma @ right) / (pi * (1.0 - pi))


COUNTEREXAMPLE_KINDS = ("AncovaWorse", "InteractionsOnlyWorseCentered")


def make_counterexample(kind: str, pi: float) -> PopulationSpec:
    """Single-covariate populations where a named dominance claim fails.

    AncovaWorse (pi != 1/2): arm slopes l0 = pi - 1, l1 = pi give
    gamma_f = (pi-1) delta_f with delta_f = 1, so the ANCOVA-minus-ANOVA
    gap is (2pi-1)^2 / (pi(1-pi)) > 0.

    InteractionsOnlyWorseCentered (pi > 1/2): slopes l1 = 1, l0 = -1/2
    give Omega0 = -Omega1/2, and the centered interactions-only
    estimator trails the unadjusted one by exactly (2pi-1)/pi. For
    pi <= 1/2 that gap is nonpositive (the interactions-only estimator
    dominates there), so no counterexample exists and this raises.
    """
    if not 0.0 < pi < 1.0:
        msg = f"pi must lie in (0, 1), got {pi}"
        raise ValueError(msg)
    if kind == "AncovaWorse":
        if pi == 0.5:
            msg = "AncovaWorse needs pi != 1/2; the gap vanishes with (2pi-1)^2"
            raise ValueError(msg)
        sampler = GaussianArmSampler(
            sigma=np.eye(1), b0=0.0, b1=1.0,
            l0=np.array([pi - 1.0]), l1=np.array([pi]), s0=1.0, s1=1.0,
        )
    elif kind == "InteractionsOnlyWorseCentered":
        if pi <= 0.5:
            msg = (
                "InteractionsOnlyWorseCentered needs pi > 1/2: the centered "
                "gap is (2pi-1)/pi times a positive quadratic form"
            )
            raise ValueError(msg)
        sampler = GaussianArmSampler(
            sigma=np.eye(1), b0=0.0, b1=1.0,
            l0=np.array([-0.5]), l1=np.array([1.0]), s0=1.0, s1=1.0,
        )
    else:
        msg = f"unknown counterexample kind {kind!r}; expected one of {COUNTEREXAMPLE_KINDS}"
        raise ValueError(msg)
    return PopulationSpec(pi=pi, moments=sampler.moments(), sampler=sampler)


def approximate_beta_ate(
    pop: PopulationSpec, n_draws: int = 10_000_000, seed: int = 0
) -> BetaAteEstimate:
    """Monte Carlo estimate of E[Y(1) - Y(0)] with its standard error."""
    if pop.sampler is None:
        msg = "approximate_beta_ate needs a sampler with potential outcomes"
        raise ValueError(msg)
    if n_draws <= 0:
        msg = f"n_draws must be positive, got {n_draws}"
        raise ValueError(msg)
    rng = np.random.default_rng(np.random.SeedSequence((int(seed), 0xB47A)))
    total = 0.0
    total_sq = 0.0
    done = 0
    chunk = 1_000_000
    while done < n_draws:
        m = min(chunk, n_draws - done)
        _, y1, y0 = pop.sampler.potential(m, rng)
        d = y1 - y0
        total += float(d.sum())
        total_sq += float((d * d).sum())
        done += m
    mean = total / n_draws
    var = max(total_sq / n_draws - mean * mean, 0.0)
    return BetaAteEstimate(mean, float(np.sqrt(var / n_draws)))


def random_moment_population(rng: np.random.Generator, p: int | None = None) -> PopulationSpec:
    """Random Gaussian-arm population for property suites.

    Covariance eigenvalues stay within a condition number of 1000;
    slopes and intercepts are uniform on [-2, 2], noise scales on
    [0.3, 2], and pi on [0.1, 0.9].
    """
    if p is None:
        p = int(rng.integers(1, 4))
    q, _ = np.linalg.qr(rng.standard_normal((p, p)))
    eigs = np.exp(rng.uniform(np.log(0.05), np.log(5.0), size=p))
    eigs = np.clip(eigs, eigs.max() / 1000.0, None)
    sigma = (q * eigs) @ q.T
    sigma = 0.5 * (sigma + sigma.T)
    sampler = GaussianArmSampler(
        sigma=sigma,
        b0=float(rng.uniform(-2, 2)),
        b1=float(rng.uniform(-2, 2)),
        l0=rng.uniform(-2, 2, size=p),
        l1=rng.uniform(-2, 2, size=p),
        s0=float(rng.uniform(0.3, 2.0)),
        s1=float(rng.uniform(0.3, 2.0)),
    )
    pi = float(rng.uniform(0.1, 0.9))
    return PopulationSpec(pi=pi, moments=sampler.moments(), sampler=sampler)


def population_to_dict(pop: PopulationSpec) -> dict:
    """JSON-ready moment-mode serialization."""
    if pop.moments is None:
        msg = "only moment-mode populations are serializable"
        raise ValueError(msg)
    m = pop.moments
    return {
        "pi": pop.pi,
        "sigma": m.sigma.tolist(),
        "omega1": m.omega1.tolist(),
        "omega0": m.omega0.tolist(),
        "mu1": m.mu1,
        "mu0": m.mu0,
        "q1": m.q1,
        "q0": m.q0,
    }


def population_from_dict(d: dict) -> PopulationSpec:
    try:
        moments = ExactMoments(
            sigma=np.asarray(d["sigma"], dtype=float),
            omega1=np.asarray(d["omega1"], dtype=float),
            omega0=np.asarray(d["omega0"], dtype=float),
            mu1=d["mu1"],
            mu0=d["mu0"],
            q1=d["q1"],
            q0=d["q0"],
        )
        return PopulationSpec(pi=float(d["pi"]), moments=moments)
    except KeyError as exc:
        msg = f"population record is missing field {exc.args[0]!r}"
        raise ValueError(msg) from None
