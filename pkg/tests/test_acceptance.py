"""End-to-end acceptance checks.

Each test pins one deliverable: reproduction windows for the standard
scenarios, the dominance calculus against exact variances, the
counterexample certificates, the centering penalty, oracle equivalence
of the constrained solver, standard-error calibration, and the
gain-score comparison. Monte Carlo configurations (n, reps, seeds) are
fixed so runs are bit-reproducible.
"""

import time

import numpy as np
import pytest

from linadjust import (
    FREE,
    CoefConstraint,
    GaussianArmSampler,
    Dataset,
    Empirical,
    KnownMean,
    ModelSpec,
    PopulationSpec,
    ancova_anova_gap,
    asymptotic_variance_centered,
    asymptotic_variance_known_mean,
    check_centered,
    check_known_mean,
    condition_centered,
    condition_known_mean,
    custom_scenario,
    did_vs_ldv_experiment,
    draw,
    fit_ols,
    make_counterexample,
    named_spec,
    parse_formula,
    random_moment_population,
    rep_seed,
    run_grid,
    scenario,
    solve_population,
    variance_gap_theorem2,
)

ANOVA1 = named_spec("ANOVA", 1)
ANCOVA1 = named_spec("ANCOVA", 1)
ANHECOVA1 = named_spec("ANHECOVA", 1)
FULL = "1 + A + X1 + A:X1"
NULL = "1 + A"


def sd_se(sd, reps):
    """Large-sample standard error of a Monte Carlo SD estimate."""
    return sd / np.sqrt(2.0 * reps)


def test_criterion_01_covariate_assignment_windows():
    start = time.perf_counter()
    rep = run_grid(
        scenario(3, n=1000),
        [parse_formula(FULL, ["X1"]), parse_formula(NULL, ["X1"])],
        None,
        1000,
        seed=0,
    )
    elapsed = time.perf_counter() - start
    full = rep.cell(FULL)
    null = rep.cell(NULL)
    assert elapsed < 60.0
    assert 0.57 <= full.bias <= 0.64, f"full-model bias {full.bias:.4f}"
    assert 0.12 <= full.sd <= 0.17, f"full-model sd {full.sd:.4f}"
    assert 0.56 <= null.bias <= 0.63, f"unadjusted bias {null.bias:.4f}"
    assert 0.11 <= null.sd <= 0.15, f"unadjusted sd {null.sd:.4f}"


def test_criterion_02_weighted_windows():
    rep = run_grid(
        scenario(4, n=1000),
        [parse_formula(FULL, ["X1"]), parse_formula(NULL, ["X1"])],
        None,
        1000,
        seed=0,
    )
    full = rep.cell(FULL)
    null = rep.cell(NULL)
    assert 0.10 <= full.bias <= 0.20, f"full-model bias {full.bias:.4f}"
    assert -0.06 <= null.bias <= 0.05, f"unadjusted bias {null.bias:.4f}"
    assert full.sd < 0.95 * null.sd, f"sd full {full.sd:.4f} vs null {null.sd:.4f}"


def test_criterion_03_bias_and_sd_profile_over_pi():
    pis = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)
    reps = 1000
    rep = run_grid(
        scenario(1, n=1000),
        [ANOVA1, ANCOVA1, ANHECOVA1],
        list(pis),
        reps,
        seed=0,
    )
    for c in rep.cells:
        assert abs(c.bias) < 3.0 * c.mc_se, f"bias {c.bias:.4f} at {c.model}, pi={c.pi}"
    for pi in pis:
        sd_he = rep.cell(FULL, pi).sd
        for other in (NULL, "1 + A + X1"):
            sd_o = rep.cell(other, pi).sd
            tol = 3.0 * np.hypot(sd_se(sd_he, reps), sd_se(sd_o, reps))
            assert sd_he <= sd_o + tol, f"{other} beats interactions at pi={pi}"
    # main-effects-only adjustment backfires at heavy imbalance
    assert rep.cell("1 + A + X1", 0.9).sd > rep.cell(NULL, 0.9).sd


def _restrict(constraints, rng):
    out = []
    for c in constraints:
        if c is FREE and rng.random() < 0.5:
            out.append(CoefConstraint(float(rng.normal())))
        else:
            out.append(c)
    return tuple(out)


def _slot(rng):
    u = rng.random()
    if u < 0.6:
        return FREE
    if u < 0.8:
        return CoefConstraint(0.0)
    return CoefConstraint(float(rng.normal()))


def test_criterion_04_dominance_property_suite():
    """200 random populations each for the known-mean and the centered
    dominance conditions; certified orderings must hold exactly and the
    centered gap must match its closed form."""
    rng = np.random.default_rng(41)
    done = 0
    while done < 200:
        pop = random_moment_population(rng)
        p = pop.p

        # known-mean pair: free interactions cover free main effects
        g1 = tuple(_slot(rng) for _ in range(p))
        d1 = tuple(FREE for _ in range(p))
        spec1 = ModelSpec(g1, d1)
        spec2 = ModelSpec(_restrict(g1, rng), _restrict(d1, rng))
        if (spec1.gamma, spec1.delta) == (spec2.gamma, spec2.delta):
            spec2 = ModelSpec(spec2.gamma, (CoefConstraint(0.0),) + spec2.delta[1:])
        assert condition_known_mean(spec1, spec2, pop.pi)
        assert check_known_mean(spec1, spec2, pop.pi).verdict == "Dominates"
        v1 = asymptotic_variance_known_mean(spec1, pop)
        v2 = asymptotic_variance_known_mean(spec2, pop)
        assert v1 <= v2 + 1e-9, f"known-mean ordering violated: {v1} > {v2}"

        # centered pair: equal free sets for main effects and interactions
        mask = rng.random(p) < 0.6
        if not mask.any():
            mask[int(rng.integers(p))] = True
        g1 = tuple(FREE if m else CoefConstraint(float(rng.normal())) for m in mask)
        d1 = tuple(FREE if m else CoefConstraint(float(rng.normal())) for m in mask)
        spec1 = ModelSpec(g1, d1)
        spec2 = ModelSpec(_restrict(g1, rng), _restrict(d1, rng))
        if (spec1.gamma, spec1.delta) == (spec2.gamma, spec2.delta):
            j = int(np.flatnonzero(mask)[0])
            d2 = list(spec2.delta)
            d2[j] = CoefConstraint(0.0)
            spec2 = ModelSpec(spec2.gamma, tuple(d2))
        assert condition_centered(spec1, spec2)
        vc1 = asymptotic_variance_centered(spec1, pop)
        vc2 = asymptotic_variance_centered(spec2, pop)
        assert vc1 <= vc2 + 1e-9, f"centered ordering violated: {vc1} > {vc2}"
        gap = variance_gap_theorem2(spec1, spec2, pop)
        assert gap == pytest.approx(vc2 - vc1, abs=1e-9)
        done += 1


def test_criterion_05_counterexample_certification():
    # main-effects adjustment can hurt under known means
    pi = 0.3
    pop = make_counterexample("AncovaWorse", pi)
    gap = ancova_anova_gap(pop)
    closed = (2 * pi - 1) ** 2 / (pi * (1 - pi))
    assert gap == pytest.approx(closed, abs=1e-9)
    assert gap > 0
    direct = asymptotic_variance_known_mean(
        ANCOVA1, pop
    ) - asymptotic_variance_known_mean(ANOVA1, pop)
    assert gap == pytest.approx(direct, abs=1e-9)

    reps = 100_000
    scn = custom_scenario(pop.sampler, pi=pi, beta_ate=1.0, n=200)
    km = [spec.with_centering(KnownMean((0.0,))) for spec in (ANOVA1, ANCOVA1)]
    rep = run_grid(scn, km, None, reps, seed=0)
    sd_anova, sd_ancova = (c.sd for c in rep.cells)
    margin = 3.0 * np.hypot(sd_se(sd_anova, reps), sd_se(sd_ancova, reps))
    assert sd_ancova - sd_anova > margin

    # interactions-only adjustment can hurt under empirical centering
    pi = 0.75
    pop = make_counterexample("InteractionsOnlyWorseCentered", pi)
    io_spec = parse_formula("1 + A + A:X1", ["X1"])
    vc_io = asymptotic_variance_centered(io_spec, pop)
    vc_anova = asymptotic_variance_centered(ANOVA1, pop)
    sol = solve_population(io_spec, pop)
    q = float(sol.delta @ pop.moments.sigma @ sol.delta)
    assert vc_io - vc_anova == pytest.approx((2 * pi - 1) / pi * q, abs=1e-9)
    assert vc_io > vc_anova

    scn = custom_scenario(pop.sampler, pi=pi, beta_ate=1.0, n=200)
    rep = run_grid(scn, [ANOVA1, io_spec], None, reps, seed=0)
    sd_anova, sd_io = (c.sd for c in rep.cells)
    margin = 3.0 * np.hypot(sd_se(sd_anova, reps), sd_se(sd_io, reps))
    assert sd_io - sd_anova > margin


def test_criterion_06_balanced_design_free_interactions_cost_nothing(s1_moments):
    pop = PopulationSpec(pi=0.5, moments=s1_moments)
    vc_sub = asymptotic_variance_centered(ANCOVA1, pop)
    vc_full = asymptotic_variance_centered(ANHECOVA1, pop)
    assert abs(vc_full - vc_sub) < 1e-9
    assert check_centered(ANCOVA1, ANHECOVA1, 0.5).verdict == "EqualVariance"

    sampler = GaussianArmSampler(
        sigma=np.array([[1.0]]),
        b0=3.0,
        b1=5.0,
        l0=np.array([1.0]),
        l1=np.array([2.5]),
        s0=1.0,
        s1=1.0,
    )
    n, reps = 5000, 2000
    scn = custom_scenario(sampler, pi=0.5, beta_ate=2.0, n=n)
    rep = run_grid(scn, [ANCOVA1, ANHECOVA1], None, reps, seed=0)
    sd_sub, sd_full = (c.sd for c in rep.cells)
    tol = 3.0 * np.hypot(sd_se(sd_sub, reps), sd_se(sd_full, reps))
    assert abs(sd_full - sd_sub) < tol


def test_criterion_07_centering_penalty_calibration(s1_population):
    """Empirical centering inflates the full model's variance by
    delta' Sigma delta; a paired simulation must land within 10%."""
    sol = solve_population(ANHECOVA1, s1_population)
    target = float(sol.delta @ s1_population.moments.sigma @ sol.delta)
    assert target == pytest.approx(2.25, abs=1e-12)

    n, reps = 5000, 10_000
    scn = scenario(1, n=n)
    spec_emp = ANHECOVA1.with_centering(Empirical())
    spec_known = ANHECOVA1.with_centering(KnownMean((0.0,)))
    key = f"acceptance|centering-penalty|pi=0.3|n={n}"
    est_emp = np.empty(reps)
    est_known = np.empty(reps)
    for r in range(reps):
        data = draw(scn, rep_seed(0, key, r), pi=0.3).data
        est_emp[r] = fit_ols(spec_emp, data).ate_hat
        est_known[r] = fit_ols(spec_known, data).ate_hat
    gap = n * (est_emp.var(ddof=1) - est_known.var(ddof=1))
    assert gap == pytest.approx(target, rel=0.10), f"measured penalty {gap:.4f}"


def test_criterion_08_constrained_solver_oracle_equivalence():
    rng = np.random.default_rng(8)
    done = 0
    while done < 100:
        p = int(rng.integers(1, 4))
        n = int(rng.integers(2 * p + 7, 31))
        a = (rng.random(n) < 0.5).astype(float)
        if a.sum() < p + 2 or (n - a.sum()) < p + 2:
            continue
        x = rng.normal(size=(n, p))
        y = rng.normal(size=n) * 2.0 + rng.normal() * a
        gamma = tuple(_slot(rng) for _ in range(p))
        delta = tuple(_slot(rng) for _ in range(p))
        if rng.random() < 0.5:
            centering = Empirical()
            mu = x.mean(axis=0)
        else:
            mu = rng.normal(size=p)
            centering = KnownMean(tuple(float(v) for v in mu))
        spec = ModelSpec(gamma, delta, centering=centering)
        fit = fit_ols(spec, Dataset(a, x, y))

        xc = x - mu
        cols = [np.ones(n), a]
        y_adj = y.copy()
        for j, c in enumerate(gamma):
            if c.is_free:
                cols.append(xc[:, j])
            else:
                y_adj = y_adj - c.value * xc[:, j]
        for j, c in enumerate(delta):
            if c.is_free:
                cols.append(a * xc[:, j])
            else:
                y_adj = y_adj - c.value * a * xc[:, j]
        theta = np.linalg.pinv(np.column_stack(cols)) @ y_adj

        assert fit.alpha == pytest.approx(theta[0], abs=1e-10)
        assert fit.ate_hat == pytest.approx(theta[1], abs=1e-10)
        k = 2
        for j, c in enumerate(gamma):
            if c.is_free:
                assert fit.gamma[j] == pytest.approx(theta[k], abs=1e-10)
                k += 1
        for j, c in enumerate(delta):
            if c.is_free:
                assert fit.delta[j] == pytest.approx(theta[k], abs=1e-10)
                k += 1
        done += 1

    # the gain-score estimator reduces to a difference in means
    for trial in range(20):
        n = int(rng.integers(12, 31))
        a = np.r_[np.ones(n // 2), np.zeros(n - n // 2)]
        rng.shuffle(a)
        if a.sum() < 3 or (n - a.sum()) < 3:
            continue
        x = rng.normal(size=n)
        y = rng.normal(size=n) + 0.8 * x
        fit = fit_ols(named_spec("DiD", 1), Dataset(a, x, y))
        g = y - (x - x.mean())
        dim = g[a == 1].mean() - g[a == 0].mean()
        assert fit.ate_hat == pytest.approx(dim, abs=1e-10)


def test_criterion_09_reported_se_matches_sampling_sd():
    n, reps = 5000, 800
    models = [
        parse_formula(f, ["X1"])
        for f in (NULL, "1 + A + X1", "1 + A + A:X1", FULL)
    ]
    rep = run_grid(scenario(1, n=n), models, [0.5], reps, seed=0)
    for c in rep.cells:
        ratio = c.mean_se / c.sd
        assert abs(ratio - 1.0) <= 0.10, f"{c.model}: mean se/sd = {ratio:.3f}"


def test_criterion_10_free_baseline_slope_beats_pinned():
    rep = did_vs_ldv_experiment()
    did = rep.cell("DiD")
    ldv = rep.cell("LDV")
    assert ldv.sd <= did.sd
    margin = 3.0 * np.hypot(sd_se(did.sd, did.reps), sd_se(ldv.sd, ldv.reps))
    assert did.sd - ldv.sd > margin, f"sd gap {did.sd - ldv.sd:.5f} vs margin {margin:.5f}"
