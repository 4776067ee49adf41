"""Model specifications, the formula mini-language, and design construction.

A model is the pair of per-covariate constraint lists (gamma for main
effects, delta for treatment interactions), each entry either free or
pinned to a constant. The intercept and the treatment coefficient are
always free.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "CoefConstraint",
    "FREE",
    "KnownMean",
    "Empirical",
    "ModelSpec",
    "Dataset",
    "ColumnMap",
    "NAMED_SPECS",
    "parse_formula",
    "format_formula",
    "named_spec",
    "build_design",
]


@dataclass(frozen=True)
class CoefConstraint:
    """Constraint on a single coefficient: free, or fixed at a finite value.

    ``value is None`` means the coefficient is unrestricted.
    """

    value: float | None = None

    def __post_init__(self) -> None:
        if self.value is not None:
            v = float(self.value)
            if not np.isfinite(v):
                msg = f"fixed coefficient value must be finite, got {self.value!r}"
                raise ValueError(msg)
            object.__setattr__(self, "value", v)

    @property
    def is_free(self) -> bool:
        return self.value is None

    def contains(self, other: CoefConstraint) -> bool:
        """Set containment: the real line contains everything, a singleton
        contains only itself."""
        if self.is_free:
            return True
        return (not other.is_free) and self.value == other.value

    def __repr__(self) -> str:
        return "Free" if self.is_free else f"Fixed({self.value!r})"


FREE = CoefConstraint()


@dataclass(frozen=True)
class KnownMean:
    """Center covariates at a known mean vector before fitting."""

    mu: tuple[float, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "mu", tuple(float(m) for m in self.mu))
        if not all(np.isfinite(m) for m in self.mu):
            msg = "known mean must be finite"
            raise ValueError(msg)


@dataclass(frozen=True)
class Empirical:
    """Center covariates at the sample mean of each fitted dataset."""


Centering = KnownMean | Empirical


@dataclass(frozen=True)
class ModelSpec:
    """Constraint sets for main effects (gamma) and interactions (delta).

    Parameters
    ----------
    gamma, delta : tuple of CoefConstraint
        One entry per covariate; must have equal length.
    centering : KnownMean or Empirical
        How covariates are centered when a design is built. Empirical
        centering makes the ATE estimate the shift-invariant variant
        beta_hat + delta_hat' X_bar.
    """

    gamma: tuple[CoefConstraint, ...]
    delta: tuple[CoefConstraint, ...]
    centering: Centering = field(default_factory=Empirical)

    def __post_init__(self) -> None:
        object.__setattr__(self, "gamma", tuple(self.gamma))
        object.__setattr__(self, "delta", tuple(self.delta))
        if len(self.gamma) != len(self.delta):
            msg = (
                f"gamma and delta must have equal length, "
                f"got {len(self.gamma)} and {len(self.delta)}"
            )
            raise ValueError(msg)
        if len(self.gamma) == 0:
            msg = "at least one covariate is required"
            raise ValueError(msg)
        if isinstance(self.centering, KnownMean) and len(self.centering.mu) != len(self.gamma):
            msg = (
                f"known mean has length {len(self.centering.mu)}, "
                f"expected {len(self.gamma)}"
            )
            raise ValueError(msg)

    @property
    def p(self) -> int:
        return len(self.gamma)

    def unrestricted_gamma(self) -> tuple[int, ...]:
        """Indices (0-based) of free main-effect coefficients."""
        return tuple(j for j, c in enumerate(self.gamma) if c.is_free)

    def unrestricted_delta(self) -> tuple[int, ...]:
        """Indices (0-based) of free interaction coefficients."""
        return tuple(j for j, c in enumerate(self.delta) if c.is_free)

    def with_centering(self, centering: Centering) -> ModelSpec:
        return ModelSpec(self.gamma, self.delta, centering)


class Dataset:
    """A sample of (treatment, covariates, outcome) records.

    Parameters
    ----------
    a : array_like, shape (n,)
        Treatment indicators, each exactly 0 or 1.
    x : array_like, shape (n, p) or (n,)
        Covariates; a 1-D array is treated as a single covariate.
    y : array_like, shape (n,)
        Observed outcomes.
    weights : array_like, shape (n,), optional
        Strictly positive per-unit weights.
    """

    def __init__(self, a, x, y, weights=None) -> None:
        a = np.asarray(a, dtype=float)
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if x.ndim != 2:
            msg = f"x must be 1-D or 2-D, got ndim={x.ndim}"
            raise ValueError(msg)
        n = x.shape[0]
        if a.shape != (n,) or y.shape != (n,):
            msg = f"shape mismatch: a {a.shape}, y {y.shape}, x {x.shape}"
            raise ValueError(msg)
        if not np.isfinite(x).all() or not np.isfinite(y).all():
            msg = "covariates and outcomes must be finite"
            raise ValueError(msg)
        bad = ~((a == 0.0) | (a == 1.0))
        if bad.any():
            i = int(np.flatnonzero(bad)[0])
            msg = f"treatment indicator must be 0 or 1, got {a[i]!r} at row {i}"
            raise ValueError(msg)
        if n < x.shape[1] + 2:
            msg = f"need at least p + 2 = {x.shape[1] + 2} rows, got {n}"
            raise ValueError(msg)
        if weights is not None:
            weights = np.asarray(weights, dtype=float)
            if weights.shape != (n,):
                msg = f"weights shape {weights.shape} does not match n={n}"
                raise ValueError(msg)
            if not np.isfinite(weights).all() or (weights <= 0).any():
                msg = "weights must be strictly positive and finite"
                raise ValueError(msg)
        self.a = a
        self.x = x
        self.y = y
        self.weights = weights

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def p(self) -> int:
        return self.x.shape[1]

    def __repr__(self) -> str:
        w = "present" if self.weights is not None else "none"
        return f"Dataset(n={self.n}, p={self.p}, weights={w})"


@dataclass(frozen=True)
class ColumnMap:
    """Maps design columns back to model coefficients.

    ``labels`` names every column of Z in order; ``gamma_cols`` and
    ``delta_cols`` map covariate index -> design column index for the
    free coefficients.
    """

    labels: tuple[str, ...]
    gamma_cols: dict[int, int]
    delta_cols: dict[int, int]


_NUMBER = r"[-+]?(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][-+]?\d+)?"
_IDENT = r"[A-Za-z_][A-Za-z_0-9.]*"
_TERM_RE = re.compile(
    rf"^(?:(?P<one>1)|(?P<inter>A:(?P<iname>{_IDENT})(?:@(?P<ival>{_NUMBER}))?)"
    rf"|(?P<treat>A)|(?P<main>(?P<mname>{_IDENT})(?:@(?P<mval>{_NUMBER}))?))$"
)


def parse_formula(text: str, covariate_names: list[str]) -> ModelSpec:
    """Parse a model formula into a ModelSpec.

    Grammar (whitespace insignificant)::

        formula := term ("+" term)*
        term    := "1" | "A" | ident | ident "@" number
                 | "A:" ident | "A:" ident "@" number | "X" | "A:X"

    ``1`` and ``A`` are mandatory (intercept and treatment are always
    free). A bare covariate frees its main-effect coefficient;
    ``name@c`` pins it to the constant ``c``; the ``A:`` prefix does the
    same for the interaction coefficient. Absent terms are pinned to
    zero. ``X`` is shorthand for all covariates and ``A:X`` for all
    interactions, unless an actual covariate is named ``X``, in which
    case the name wins.

    Parameters
    ----------
    text : str
        The formula.
    covariate_names : list of str
        Covariate names, in column order. Must be unique and must not
        contain ``1`` or ``A``.

    Returns
    -------
    ModelSpec
        With default Empirical centering.

    Raises
    ------
    ValueError
        On syntax errors (with character position), unknown covariate
        names, duplicate terms, or a missing ``1`` or ``A`` term.
    """
    names = list(covariate_names)
    if len(set(names)) != len(names):
        msg = "covariate names must be unique"
        raise ValueError(msg)
    if "1" in names or "A" in names:
        msg = "covariate names '1' and 'A' are reserved"
        raise ValueError(msg)
    index = {name: j for j, name in enumerate(names)}
    p = len(names)

    gamma: list[CoefConstraint | None] = [None] * p
    delta: list[CoefConstraint | None] = [None] * p
    saw_one = False
    saw_a = False

    pos = 0
    for raw in text.split("+"):
        term = raw.strip()
        at = pos + (len(raw) - len(raw.lstrip()))
        pos += len(raw) + 1
        if not term:
            msg = f"empty term at position {at} in {text!r}"
            raise ValueError(msg)
        compact = re.sub(r"\s+", "", term)
        if compact == "X" and "X" not in index:
            for j in range(p):
                _set_term(gamma, j, FREE, names, side="")
            continue
        if compact == "A:X" and "X" not in index:
            for j in range(p):
                _set_term(delta, j, FREE, names, side="A:")
            continue
        m = _TERM_RE.match(compact)
        if m is None:
            msg = f"cannot parse term {term!r} at position {at} in {text!r}"
            raise ValueError(msg)
        if m.group("one"):
            if saw_one:
                msg = "duplicate term '1'"
                raise ValueError(msg)
            saw_one = True
        elif m.group("treat"):
            if saw_a:
                msg = "duplicate term 'A'"
                raise ValueError(msg)
            saw_a = True
        elif m.group("inter"):
            name = m.group("iname")
            if name not in index:
                msg = f"unknown covariate {name!r} at position {at}"
                raise ValueError(msg)
            val = m.group("ival")
            c = FREE if val is None else CoefConstraint(float(val))
            _set_term(delta, index[name], c, names, side="A:")
        else:
            name = m.group("mname")
            if name not in index:
                msg = f"unknown covariate {name!r} at position {at}"
                raise ValueError(msg)
            val = m.group("mval")
            c = FREE if val is None else CoefConstraint(float(val))
            _set_term(gamma, index[name], c, names, side="")

    if not saw_one:
        msg = "formula must contain the intercept term '1'"
        raise ValueError(msg)
    if not saw_a:
        msg = "formula must contain the treatment term 'A'"
        raise ValueError(msg)

    zero = CoefConstraint(0.0)
    return ModelSpec(
        gamma=tuple(c if c is not None else zero for c in gamma),
        delta=tuple(c if c is not None else zero for c in delta),
    )


def _set_term(slots, j, constraint, names, side):
    if slots[j] is not None:
        msg = f"duplicate term for {side}{names[j]}"
        raise ValueError(msg)
    slots[j] = constraint


def format_formula(spec: ModelSpec, covariate_names: list[str]) -> str:
    """Canonical formula text for ``spec``; inverse of parse_formula.

    Coefficients fixed at zero are omitted, matching the parser's
    default for absent terms.
    """
    if len(covariate_names) != spec.p:
        msg = f"expected {spec.p} covariate names, got {len(covariate_names)}"
        raise ValueError(msg)
    parts = ["1", "A"]
    for j, c in enumerate(spec.gamma):
        if c.is_free:
            parts.append(covariate_names[j])
        elif c.value != 0.0:
            parts.append(f"{covariate_names[j]}@{c.value!r}")
    for j, c in enumerate(spec.delta):
        if c.is_free:
            parts.append(f"A:{covariate_names[j]}")
        elif c.value != 0.0:
            parts.append(f"A:{covariate_names[j]}@{c.value!r}")
    return " + ".join(parts)


NAMED_SPECS = ("ANOVA", "ANCOVA", "ANHECOVA", "DiD", "LDV")


def named_spec(name: str, p: int) -> ModelSpec:
    """Build one of the named estimator specifications.

    ANOVA fits no covariates; ANCOVA frees all main effects; ANHECOVA
    frees main effects and interactions. DiD pins the first main-effect
    coefficient at 1 and LDV frees it; both require the first covariate
    to be the baseline outcome and pin its interaction at 0, freeing
    everything else.
    """
    if p < 1:
        msg = f"p must be positive, got {p}"
        raise ValueError(msg)
    zero = CoefConstraint(0.0)
    key = name.strip().lower()
    if key == "anova":
        return ModelSpec((zero,) * p, (zero,) * p)
    if key == "ancova":
        return ModelSpec((FREE,) * p, (zero,) * p)
    if key == "anhecova":
        return ModelSpec((FREE,) * p, (FREE,) * p)
    if key == "did":
        return ModelSpec(
            (CoefConstraint(1.0),) + (FREE,) * (p - 1),
            (zero,) + (FREE,) * (p - 1),
        )
    if key == "ldv":
        return ModelSpec((FREE,) * p, (zero,) + (FREE,) * (p - 1))
    msg = f"unknown estimator name {name!r}; expected one of {NAMED_SPECS}"
    raise ValueError(msg)


def build_design(spec: ModelSpec, data: Dataset):
    """Assemble the regression design for a spec and dataset.

    Covariates are centered first (sample mean under Empirical, the
    given vector under KnownMean). Columns of Z are, in order: the
    intercept, the treatment, the free main-effect covariates, and the
    free interactions. Coefficients pinned to constants contribute to
    a per-row offset instead of a column.

    Returns
    -------
    (Z, offset, column_map) : (ndarray (n, q), ndarray (n,), ColumnMap)
        q = 2 + #free gamma + #free delta. The offset holds the fixed
        part gamma_fixed' Xc + A * delta_fixed' Xc of the fit.
    """
    if data.p != spec.p:
        msg = f"dataset has p={data.p} covariates but spec expects {spec.p}"
        raise ValueError(msg)
    if isinstance(spec.centering, KnownMean):
        xc = data.x - np.asarray(spec.centering.mu)
    else:
        xc = data.x - data.x.mean(axis=0)
    a = data.a
    n = data.n

    free_g = spec.unrestricted_gamma()
    free_d = spec.unrestricted_delta()
    cols = [np.ones(n), a]
    labels = ["1", "A"]
    gamma_cols: dict[int, int] = {}
    delta_cols: dict[int, int] = {}
    for j in free_g:
        gamma_cols[j] = len(cols)
        cols.append(xc[:, j])
        labels.append(f"X{j + 1}")
    for j in free_d:
        delta_cols[j] = len(cols)
        cols.append(a * xc[:, j])
        labels.append(f"A:X{j + 1}")
    z = np.column_stack(cols)

    offset = np.zeros(n)
    for j, c in enumerate(spec.gamma):
        if not c.is_free and c.value != 0.0:
            offset += c.value * xc[:, j]
    for j, c in enumerate(spec.delta):
        if not c.is_free and c.value != 0.0:
            offset += c.value * (a * xc[:, j])

    return z, offset, ColumnMap(tuple(labels), gamma_cols, delta_cols)
