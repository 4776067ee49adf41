"""Sufficient-condition checks for asymptotic variance dominance.

A verdict of NotGuaranteed means the implemented sufficient conditions
did not certify the ordering, not that dominance is false.
"""

from __future__ import annotations

from dataclasses import dataclass

from .model import ModelSpec, named_spec, parse_formula

__all__ = [
    "DominanceVerdict",
    "check_known_mean",
    "check_centered",
    "constraints_nested",
    "condition_known_mean",
    "condition_centered",
    "table1",
    "corollaries",
]


@dataclass(frozen=True)
class DominanceVerdict:
    """Outcome of a dominance check on an ordered pair of specs.

    ``theorem`` names the clause that certified the verdict:
    "Theorem1-pi-half", "Theorem1-interaction-superset", "Theorem2",
    "Remark1", or "none". ``explanation`` records which subconditions
    held.
    """

    verdict: str  # "Dominates" | "NotGuaranteed" | "EqualVariance"
    theorem: str
    centering: str  # "known-mean" | "empirical"
    explanation: dict[str, bool]

    def __str__(self) -> str:
        return f"{self.verdict} ({self.theorem})"


def constraints_nested(outer, inner) -> bool:
    """Componentwise set containment of constraint tuples."""
    return all(o.contains(i) for o, i in zip(outer, inner))


def _subconditions(spec1: ModelSpec, spec2: ModelSpec) -> dict[str, bool]:
    return {
        "gamma_nested": constraints_nested(spec1.gamma, spec2.gamma),
        "delta_nested": constraints_nested(spec1.delta, spec2.delta),
    }


def condition_known_mean(spec1: ModelSpec, spec2: ModelSpec, pi: float) -> bool:
    """The known-mean dominance condition, allowing spec1 == spec2."""
    sub = _subconditions(spec1, spec2)
    third = pi == 0.5 or set(spec1.unrestricted_delta()) >= set(spec1.unrestricted_gamma())
    return sub["gamma_nested"] and sub["delta_nested"] and third


def condition_centered(spec1: ModelSpec, spec2: ModelSpec) -> bool:
    """The centered dominance condition, allowing spec1 == spec2."""
    sub = _subconditions(spec1, spec2)
    equal_free = set(spec1.unrestricted_gamma()) == set(spec1.unrestricted_delta())
    return sub["gamma_nested"] and sub["delta_nested"] and equal_free


def _validate_pair(spec1: ModelSpec, spec2: ModelSpec, pi: float) -> None:
    if spec1.p != spec2.p:
        msg = f"specs have different covariate counts: {spec1.p} vs {spec2.p}"
        raise ValueError(msg)
    if (spec1.gamma, spec1.delta) == (spec2.gamma, spec2.delta):
        msg = "specs are identical; dominance comparison needs distinct models"
        raise ValueError(msg)
    if not 0.0 < pi < 1.0:
        msg = f"pi must lie in (0, 1), got {pi}"
        raise ValueError(msg)


def check_known_mean(spec1: ModelSpec, spec2: ModelSpec, pi: float) -> DominanceVerdict:
    """Does spec1 uniformly dominate spec2 when the covariate mean is known?

    Certifies dominance when spec2's constraint sets are contained in
    spec1's and either pi is one half or spec1's free interactions
    cover its free main effects.
    """
    _validate_pair(spec1, spec2, pi)
    expl = _subconditions(spec1, spec2)
    expl["pi_half"] = pi == 0.5
    expl["interaction_superset"] = set(spec1.unrestricted_delta()) >= set(
        spec1.unrestricted_gamma()
    )
    if expl["gamma_nested"] and expl["delta_nested"]:
        if expl["interaction_superset"]:
            return DominanceVerdict("Dominates", "Theorem1-interaction-superset", "known-mean", expl)
        if expl["pi_half"]:
            return DominanceVerdict("Dominates", "Theorem1-pi-half", "known-mean", expl)
    return DominanceVerdict("NotGuaranteed", "none", "known-mean", expl)


def check_centered(spec1: ModelSpec, spec2: ModelSpec, pi: float) -> DominanceVerdict:
    """Does spec1 uniformly dominate spec2 under empirical centering?

    Certifies dominance when the constraint sets are nested and spec1
    frees the same covariates in main effects and interactions. When
    additionally the main-effect constraints coincide and pi is one
    half, the two asymptotic variances are equal.
    """
    _validate_pair(spec1, spec2, pi)
    expl = _subconditions(spec1, spec2)
    expl["equal_free_sets"] = set(spec1.unrestricted_gamma()) == set(spec1.unrestricted_delta())
    if expl["gamma_nested"] and expl["delta_nested"] and expl["equal_free_sets"]:
        expl["gamma_equal"] = spec1.gamma == spec2.gamma
        expl["pi_half"] = pi == 0.5
        if expl["gamma_equal"] and expl["pi_half"]:
            return DominanceVerdict("EqualVariance", "Remark1", "empirical", expl)
        return DominanceVerdict("Dominates", "Theorem2", "empirical", expl)
    # equality is symmetric: if the reversed pair meets the dominance
    # condition with identical main-effect constraints at pi = 1/2, the
    # closed-form gap is zero in both directions
    if (
        pi == 0.5
        and spec1.gamma == spec2.gamma
        and constraints_nested(spec2.gamma, spec1.gamma)
        and constraints_nested(spec2.delta, spec1.delta)
        and set(spec2.unrestricted_gamma()) == set(spec2.unrestricted_delta())
    ):
        expl["gamma_equal"] = True
        expl["pi_half"] = True
        expl["reversed_pair_nested"] = True
        return DominanceVerdict("EqualVariance", "Remark1", "empirical", expl)
    return DominanceVerdict("NotGuaranteed", "none", "empirical", expl)


_TABLE1_ROWS = (
    ("1 + A + X + A:X", "1 + A"),
    ("1 + A + X + A:X", "1 + A + X"),
    ("1 + A + X + A:X", "1 + A + A:X"),
    ("1 + A + X", "1 + A"),
    ("1 + A + A:X", "1 + A"),
)


def table1(p: int, pi: float) -> list[dict]:
    """Verdicts for the five basic model comparisons, both centerings.

    Returns one record per row with the two formulas and the verdicts
    under known-mean and empirical centering.
    """
    if p < 1:
        msg = f"p must be positive, got {p}"
        raise ValueError(msg)
    names = [f"X{j + 1}" for j in range(p)]
    rows = []
    for f1, f2 in _TABLE1_ROWS:
        s1 = parse_formula(f1, names)
        s2 = parse_formula(f2, names)
        known = check_known_mean(s1, s2, pi)
        cent = check_centered(s1, s2, pi)
        rows.append(
            {
                "model1": f1,
                "model2": f2,
                "known_mean": known.verdict,
                "known_mean_clause": known.theorem,
                "empirical": cent.verdict,
                "empirical_clause": cent.theorem,
            }
        )
    return rows


def corollaries(pi: float, p: int = 2) -> list[dict]:
    """Named-estimator dominance claims and how this checker certifies them.

    ANHECOVA versus ANOVA and ANCOVA are certified directly. LDV versus
    DiD is a claim the implemented sufficient conditions cannot certify
    (LDV frees the baseline main effect but not its interaction, so its
    free sets differ); that row carries certified=False and is backed
    empirically by the simulation harness instead.
    """
    pairs = [
        ("ANHECOVA", "ANOVA"),
        ("ANHECOVA", "ANCOVA"),
        ("LDV", "DiD"),
    ]
    out = []
    for name1, name2 in pairs:
        s1 = named_spec(name1, p)
        s2 = named_spec(name2, p)
        v = check_centered(s1, s2, pi)
        out.append(
            {
                "model1": name1,
                "model2": name2,
                "verdict": v.verdict,
                "clause": v.theorem,
                "certified": v.verdict in ("Dominates", "EqualVariance"),
            }
        )
    return out
