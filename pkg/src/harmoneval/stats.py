"""Rank statistics for the listening study.

Two engines live here: a Mann-Whitney U test (exact enumeration over the
pooled multiset, or a tie-corrected normal approximation) and a cumulative
link model (proportional-odds logit) fitted by damped Newton iterations,
with marginality-respecting likelihood-ratio ANOVA on top.
"""

from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass, field
from math import comb
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np
from scipy.stats import chi2, norm

from .errors import (
    ConvergenceError,
    DesignError,
    EmptyInputError,
    SeparationError,
)

EXACT_SIZE_CAP = 20
RANK_CATEGORIES = 4

FULL_FACTORIAL = (
    ("algorithm",),
    ("modality",),
    ("musician",),
    ("algorithm", "modality"),
    ("algorithm", "musician"),
    ("modality", "musician"),
    ("algorithm", "modality", "musician"),
)


def binarize_musicianship(level: int) -> bool:
    """Expertise 1-2 counts as nonmusician, 3-6 as musician."""
    if not 1 <= level <= 6:
        raise ValueError(f"expertise level must be in 1..6, got {level}")
    return level >= 3


@dataclass(frozen=True)
class Observation:
    ranking: int
    algorithm: str
    modality: str
    musician: bool
    participant: str = ""

    def __post_init__(self):
        if not 1 <= self.ranking <= RANK_CATEGORIES:
            raise ValueError(f"ranking must be in 1..4, got {self.ranking}")


@dataclass(frozen=True)
class ObservationTable:
    rows: tuple[Observation, ...]

    def __post_init__(self):
        object.__setattr__(self, "rows", tuple(self.rows))

    def __len__(self) -> int:
        return len(self.rows)

    def __iter__(self):
        return iter(self.rows)

    @classmethod
    def from_csv(cls, path) -> "ObservationTable":
        """Read the study-export CSV (participant, stimulus, algorithm,
        modality, ranking, expertise, age, gender)."""
        rows = []
        with open(Path(path), newline="", encoding="utf-8") as fh:
            for record in csv.DictReader(fh):
                rows.append(
                    Observation(
                        ranking=int(record["ranking"]),
                        algorithm=record["algorithm"],
                        modality=record["modality"],
                        musician=binarize_musicianship(int(record["expertise"])),
                        participant=record.get("participant", ""),
                    )
                )
        return cls(rows=tuple(rows))


# ---------------------------------------------------------------------------
# Mann-Whitney U


@dataclass(frozen=True)
class MwuResult:
    U: float
    p_two_sided: float
    method: str
    z: Optional[float] = None
    n1: int = 0
    n2: int = 0


def _u_statistic(a: np.ndarray, b: np.ndarray) -> float:
    """U = #{(x, y): x < y} + 0.5 * #{ties} over pairs from a x b."""
    b_sorted = np.sort(b)
    lo = np.searchsorted(b_sorted, a, side="left")
    hi = np.searchsorted(b_sorted, a, side="right")
    greater = len(b) - hi
    ties = hi - lo
    return float(np.sum(greater) + 0.5 * np.sum(ties))


def _exact_u_distribution(pooled: np.ndarray, n1: int) -> tuple[np.ndarray, np.ndarray]:
    """All achievable U values and their assignment counts.

    Enumerates group assignments by how many copies of each distinct pooled
    value land in the first sample; each composition stands for a known
    number of raw assignments.
    """
    values, counts = np.unique(pooled, return_counts=True)
    k = len(values)
    grid = np.indices(tuple(c + 1 for c in counts)).reshape(k, -1).T
    grid = grid[grid.sum(axis=1) == n1]
    complement = counts[None, :] - grid
    ways = np.ones(len(grid))
    for v in range(k):
        table = np.array([comb(int(counts[v]), j) for j in range(counts[v] + 1)], dtype=float)
        ways *= table[grid[:, v]]
    # values are sorted ascending, so "greater" mass is a reversed cumsum
    rev = np.cumsum(complement[:, ::-1], axis=1)[:, ::-1]
    greater = rev - complement
    u = (grid * greater).sum(axis=1) + 0.5 * (grid * complement).sum(axis=1)
    return u, ways


def mann_whitney_u(a: Sequence[float], b: Sequence[float], method: str = "auto") -> MwuResult:
    """Two-sided Mann-Whitney U test for samples a and b.

    The exact method enumerates every split of the pooled multiset (allowed
    up to n1 + n2 = 20) and doubles the smaller tail.  The normal method is
    tie-corrected with a 0.5 continuity correction.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    n1, n2 = len(a), len(b)
    if n1 == 0 or n2 == 0:
        raise EmptyInputError("both samples must be non-empty")
    if method == "auto":
        method = "exact" if n1 + n2 <= EXACT_SIZE_CAP else "normal"

    u_obs = _u_statistic(a, b)
    pooled = np.concatenate([a, b])

    if method == "exact":
        if n1 + n2 > EXACT_SIZE_CAP:
            raise ValueError(
                f"exact method supports n1 + n2 <= {EXACT_SIZE_CAP}, got {n1 + n2}"
            )
        u_all, ways = _exact_u_distribution(pooled, n1)
        total = ways.sum()
        eps = 1e-9
        p_le = ways[u_all <= u_obs + eps].sum() / total
        p_ge = ways[u_all >= u_obs - eps].sum() / total
        p = min(1.0, 2.0 * min(p_le, p_ge))
        return MwuResult(U=u_obs, p_two_sided=p, method="exact", n1=n1, n2=n2)

    if method not in ("normal", "normal_tie_corrected"):
        raise ValueError(f"unknown method {method!r}")
    n = n1 + n2
    mean = n1 * n2 / 2.0
    _, tie_counts = np.unique(pooled, return_counts=True)
    tie_term = float(np.sum(tie_counts**3 - tie_counts))
    variance = (n1 * n2 / 12.0) * ((n + 1) - tie_term / (n * (n - 1)))
    if variance <= 0:
        return MwuResult(
            U=u_obs, p_two_sided=1.0, method="normal_tie_corrected", z=0.0, n1=n1, n2=n2
        )
    shift = u_obs - mean
    z = np.sign(shift) * max(0.0, abs(shift) - 0.5) / np.sqrt(variance)
    p = min(1.0, 2.0 * float(norm.sf(abs(z))))
    return MwuResult(
        U=u_obs, p_two_sided=p, method="normal_tie_corrected", z=float(z), n1=n1, n2=n2
    )


# ---------------------------------------------------------------------------
# Cumulative link model


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


@dataclass(frozen=True)
class _Factor:
    name: str
    levels: tuple
    # reference level is levels[0]; one indicator column per other level


def _factors_for(rows: Sequence[Observation], names: Iterable[str]) -> dict[str, _Factor]:
    factors = {}
    for name in names:
        values = [getattr(r, name) for r in rows]
        levels = tuple(sorted(set(values)))
        if len(levels) < 2:
            raise DesignError(f"factor {name!r} has a single level")
        factors[name] = _Factor(name=name, levels=levels)
    return factors


def _term_columns(
    rows: Sequence[Observation],
    term: tuple[str, ...],
    factors: Mapping[str, _Factor],
) -> list[tuple[str, np.ndarray]]:
    per_factor = []
    for name in term:
        fac = factors[name]
        cols = []
        for level in fac.levels[1:]:
            indicator = np.array(
                [1.0 if getattr(r, name) == level else 0.0 for r in rows]
            )
            cols.append((f"{name}[{level}]", indicator))
        per_factor.append(cols)
    out = []
    for combo in itertools.product(*per_factor):
        name = ":".join(n for n, _ in combo)
        col = np.ones(len(rows))
        for _, indicator in combo:
            col = col * indicator
        out.append((name, col))
    return out


def design_matrix(
    table: ObservationTable, terms: Sequence[tuple[str, ...]]
) -> tuple[np.ndarray, tuple[str, ...], dict[str, _Factor]]:
    """Treatment-coded design matrix (no intercept; thresholds absorb it)."""
    names = sorted({f for term in terms for f in term})
    factors = _factors_for(table.rows, names)
    columns: list[np.ndarray] = []
    col_names: list[str] = []
    for term in terms:
        for name, col in _term_columns(table.rows, term, factors):
            col_names.append(name)
            columns.append(col)
    X = np.column_stack(columns) if columns else np.zeros((len(table), 0))
    return X, tuple(col_names), factors


@dataclass
class ClmModel:
    """Fitted cumulative-logit model: P(Y <= j | x) = sigmoid(theta_j - x.beta)."""

    thresholds: np.ndarray
    beta: np.ndarray
    loglik: float
    J: int
    term_names: tuple[str, ...]
    terms: tuple[tuple[str, ...], ...] = ()
    factors: Mapping[str, _Factor] = field(default_factory=dict)
    eta: np.ndarray = field(default_factory=lambda: np.zeros(0))
    musician_mix: Optional[float] = None
    n_iter: int = 0

    def category_probs(self, eta: float) -> np.ndarray:
        cum = _sigmoid(np.concatenate([self.thresholds - eta, [np.inf]]))
        return np.diff(np.concatenate([[0.0], cum]))

    def eta_for(self, values: Mapping[str, object]) -> float:
        """Linear predictor for one factor-level combination."""
        row = {}
        for fac in self.factors.values():
            level = values[fac.name]
            if level not in fac.levels:
                raise ValueError(f"unknown level {level!r} for factor {fac.name!r}")
            for other in fac.levels[1:]:
                row[f"{fac.name}[{other}]"] = 1.0 if level == other else 0.0
        eta = 0.0
        for name, coef in zip(self.term_names, self.beta):
            value = 1.0
            for part in name.split(":"):
                value *= row[part]
            eta += coef * value
        return eta


def _clm_loglik_parts(psi: np.ndarray, y: np.ndarray, X: np.ndarray, J: int):
    """Log-likelihood plus the pieces needed for its derivatives."""
    n_thresh = J - 1
    theta = psi[:n_thresh]
    beta = psi[n_thresh:]
    eta = X @ beta if X.shape[1] else np.zeros(len(y))
    upper = np.where(y <= n_thresh, theta[np.minimum(y, n_thresh) - 1] - eta, np.inf)
    lower = np.where(y >= 2, theta[np.maximum(y - 2, 0)] - eta, -np.inf)
    Fu = _sigmoid(upper)
    Fl = _sigmoid(lower)
    p = Fu - Fl
    with np.errstate(divide="ignore"):
        ll = float(np.sum(np.log(p)))
    return ll, eta, upper, lower, Fu, Fl, p


def _clm_grad_hess(psi: np.ndarray, y: np.ndarray, X: np.ndarray, J: int):
    """Gradient and Hessian of the log-likelihood in (theta, beta) space."""
    n_thresh = J - 1
    n_beta = X.shape[1]
    P = n_thresh + n_beta
    n = len(y)
    ll, _eta, upper, lower, Fu, Fl, p = _clm_loglik_parts(psi, y, X, J)

    fu = Fu * (1.0 - Fu)
    fl = Fl * (1.0 - Fl)
    dfu = fu * (1.0 - 2.0 * Fu)
    dfl = fl * (1.0 - 2.0 * Fl)

    C_upper = np.zeros((n, P))
    C_lower = np.zeros((n, P))
    rows = np.arange(n)
    has_upper = y <= n_thresh
    has_lower = y >= 2
    C_upper[rows[has_upper], y[has_upper] - 1] = 1.0
    C_lower[rows[has_lower], y[has_lower] - 2] = 1.0
    if n_beta:
        C_upper[:, n_thresh:] = -X
        C_lower[:, n_thresh:] = -X

    wu = fu / p
    wl = fl / p
    G = wu[:, None] * C_upper - wl[:, None] * C_lower
    grad = G.sum(axis=0)
    H = (
        C_upper.T @ (C_upper * (dfu / p)[:, None])
        - C_lower.T @ (C_lower * (dfl / p)[:, None])
        - G.T @ G
    )
    return ll, grad, H


def _phi_to_psi(phi: np.ndarray, J: int) -> np.ndarray:
    """Unconstrained parameters -> (increasing thresholds, beta)."""
    n_thresh = J - 1
    psi = phi.copy()
    if n_thresh > 1:
        psi[1:n_thresh] = phi[0] + np.cumsum(np.exp(phi[1:n_thresh]))
    return psi


def _fit_newton(y: np.ndarray, X: np.ndarray, J: int, max_iter: int, tol: float):
    n_thresh = J - 1
    n_beta = X.shape[1]
    counts = np.bincount(y, minlength=J + 1)[1 : J + 1]
    cum = np.cumsum(counts)[:-1] / len(y)
    theta0 = np.log(cum / (1.0 - cum))
    phi = np.zeros(n_thresh + n_beta)
    phi[0] = theta0[0]
    if n_thresh > 1:
        phi[1:n_thresh] = np.log(np.diff(theta0))

    ll = -np.inf
    for iteration in range(max_iter):
        psi = _phi_to_psi(phi, J)
        ll, grad_psi, hess_psi = _clm_grad_hess(psi, y, X, J)

        if np.max(np.abs(grad_psi)) <= tol:
            return phi, psi, ll, iteration
        if np.max(np.abs(psi)) > 50.0:
            raise SeparationError(
                "parameters diverged; the outcome may be separable from the design"
            )

        # chain rule into the unconstrained parameterization
        jac = np.eye(len(phi))
        for j in range(1, n_thresh):
            jac[j, 0] = 1.0
            for k in range(1, j + 1):
                jac[j, k] = np.exp(phi[k])
        grad = jac.T @ grad_psi
        hess = jac.T @ hess_psi @ jac
        for k in range(1, n_thresh):
            hess[k, k] += np.sum(grad_psi[k:n_thresh]) * np.exp(phi[k])

        step = None
        ridge = 0.0
        for _ in range(8):
            try:
                step = np.linalg.solve(-(hess - ridge * np.eye(len(phi))), grad)
                break
            except np.linalg.LinAlgError:
                ridge = max(ridge * 10.0, 1e-8)
        if step is None:
            raise ConvergenceError("Newton system is singular")

        scale = 1.0
        improved = False
        for _ in range(50):
            candidate = phi + scale * step
            cand_ll = _clm_loglik_parts(_phi_to_psi(candidate, J), y, X, J)[0]
            if np.isfinite(cand_ll) and cand_ll > ll - 1e-13:
                phi = candidate
                improved = True
                break
            scale *= 0.5
        if not improved:
            raise ConvergenceError("step halving failed to improve the log-likelihood")
    raise ConvergenceError(f"no convergence within {max_iter} iterations")


def fit_clm_raw(
    y: Sequence[int],
    X: np.ndarray,
    term_names: Sequence[str] = (),
    max_iter: int = 200,
    tol: float = 1e-8,
) -> ClmModel:
    """Fit a cumulative-logit model to outcome categories 1..J."""
    y = np.asarray(y, dtype=np.int64)
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != len(y):
        raise ValueError("X must be (n_obs, n_cols)")
    if len(y) == 0:
        raise EmptyInputError("no observations")
    J = int(y.max())
    if y.min() < 1:
        raise ValueError("outcome categories must start at 1")
    present = np.unique(y)
    if len(present) != J:
        missing = sorted(set(range(1, J + 1)) - set(present.tolist()))
        raise DesignError(f"empty outcome categories: {missing}")
    if J < 2:
        raise DesignError("need at least two outcome categories")
    if X.shape[1]:
        augmented = np.column_stack([np.ones(len(y)), X])
        if np.linalg.matrix_rank(augmented) < augmented.shape[1]:
            raise DesignError("design matrix is rank deficient")

    phi, psi, ll, n_iter = _fit_newton(y, X, J, max_iter, tol)
    thresholds = psi[: J - 1]
    beta = psi[J - 1 :]
    eta = X @ beta if X.shape[1] else np.zeros(len(y))
    if not np.all(np.diff(thresholds) > 0):
        raise ConvergenceError("thresholds are not strictly increasing at the optimum")
    return ClmModel(
        thresholds=thresholds,
        beta=beta,
        loglik=ll,
        J=J,
        term_names=tuple(term_names) if term_names else tuple(f"x{i}" for i in range(X.shape[1])),
        eta=eta,
        n_iter=n_iter,
    )


def fit_clm(
    table: ObservationTable,
    terms: Sequence[tuple[str, ...]] = FULL_FACTORIAL,
    max_iter: int = 200,
    tol: float = 1e-8,
) -> ClmModel:
    """Fit ranking ~ <terms> on a study observation table."""
    if len(table) == 0:
        raise EmptyInputError("no observations")
    terms = tuple(tuple(t) for t in terms)
    X, names, factors = design_matrix(table, terms)
    y = np.array([r.ranking for r in table.rows])
    model = fit_clm_raw(y, X, term_names=names, max_iter=max_iter, tol=tol)
    model.terms = terms
    model.factors = factors
    if any("musician" in term for term in terms):
        model.musician_mix = float(np.mean([r.musician for r in table.rows]))
    return model


@dataclass(frozen=True)
class AnovaRow:
    term: str
    df: int
    lr_stat: float
    p_value: float


@dataclass(frozen=True)
class AnovaTable:
    rows: tuple[AnovaRow, ...]

    def __iter__(self):
        return iter(self.rows)

    def by_term(self) -> dict[str, AnovaRow]:
        return {row.term: row for row in self.rows}


def anova_lr(
    table: ObservationTable,
    terms: Sequence[tuple[str, ...]] = FULL_FACTORIAL,
    max_iter: int = 200,
) -> AnovaTable:
    """Marginality-respecting (type-II style) likelihood-ratio tests.

    Each term is tested against the model of every term that does not
    strictly contain it; the reduced model additionally drops the term.
    """
    terms = tuple(tuple(t) for t in terms)
    y = np.array([r.ranking for r in table.rows])
    cache: dict[frozenset, tuple[float, int]] = {}

    def fitted(subset: tuple[tuple[str, ...], ...]) -> tuple[float, int]:
        key = frozenset(subset)
        if key not in cache:
            X, names, _ = design_matrix(table, subset)
            try:
                model = fit_clm_raw(y, X, term_names=names, max_iter=max_iter)
            except (ConvergenceError, SeparationError, DesignError) as exc:
                raise type(exc)(
                    f"while fitting reduced model {subset}: {exc}"
                ) from exc
            cache[key] = (model.loglik, X.shape[1])
        return cache[key]

    rows = []
    for term in terms:
        base = tuple(t for t in terms if not set(term) < set(t))
        reduced = tuple(t for t in base if t != term)
        ll_full, cols_full = fitted(base)
        ll_reduced, cols_reduced = fitted(reduced)
        df = cols_full - cols_reduced
        lr = max(0.0, 2.0 * (ll_full - ll_reduced))
        rows.append(
            AnovaRow(
                term=":".join(term),
                df=df,
                lr_stat=lr,
                p_value=float(chi2.sf(lr, df)),
            )
        )
    return AnovaTable(rows=tuple(rows))


def rank_distribution(table: ObservationTable) -> dict[tuple[str, str], np.ndarray]:
    """Ranking counts per (algorithm, modality) cell."""
    out: dict[tuple[str, str], np.ndarray] = {}
    for row in table.rows:
        cell = (row.algorithm, row.modality)
        if cell not in out:
            out[cell] = np.zeros(RANK_CATEGORIES, dtype=np.int64)
        out[cell][row.ranking - 1] += 1
    return out


@dataclass(frozen=True)
class StudyAnalysis:
    mwu: Mapping[str, MwuResult]  # per modality: algorithm A vs B rankings
    model: "ClmModel"
    anova: AnovaTable
    rank_counts: Mapping[tuple[str, str], np.ndarray]
    probabilities: Mapping[tuple[str, str], np.ndarray]


def analyze_study(table: ObservationTable) -> StudyAnalysis:
    """Full analysis pass: per-modality A-vs-B MWU, the three-way CLM with
    its ANOVA, and the figure-style count/probability tables."""
    if len(table) == 0:
        raise EmptyInputError("no observations")
    algorithms = sorted({r.algorithm for r in table.rows})
    modalities = sorted({r.modality for r in table.rows})
    if len(algorithms) != 2:
        raise DesignError(f"expected two algorithms, got {algorithms}")
    mwu = {}
    for modality in modalities:
        a = [r.ranking for r in table.rows if r.modality == modality and r.algorithm == algorithms[0]]
        b = [r.ranking for r in table.rows if r.modality == modality and r.algorithm == algorithms[1]]
        mwu[modality] = mann_whitney_u(a, b, method="auto")
    model = fit_clm(table)
    anova = anova_lr(table)
    return StudyAnalysis(
        mwu=mwu,
        model=model,
        anova=anova,
        rank_counts=rank_distribution(table),
        probabilities=interaction_probabilities(model),
    )


def interaction_probabilities(model: ClmModel) -> dict[tuple[str, str], np.ndarray]:
    """Model-implied P(ranking = r) per (algorithm, modality) cell.

    Musicianship is averaged out using the fitted data's musician share.
    """
    required = {"algorithm", "modality", "musician"}
    if not required <= set(model.factors):
        raise ValueError("model must be fitted on algorithm, modality and musician")
    mix = model.musician_mix if model.musician_mix is not None else 0.5
    out: dict[tuple[str, str], np.ndarray] = {}
    for alg in model.factors["algorithm"].levels:
        for mod in model.factors["modality"].levels:
            probs = np.zeros(model.J)
            for musician, weight in ((False, 1.0 - mix), (True, mix)):
                eta = model.eta_for(
                    {"algorithm": alg, "modality": mod, "musician": musician}
                )
                probs += weight * model.category_probs(eta)
            out[(alg, mod)] = probs
    return out
