"""Dummy-coded OLS of retained value on year of construction and condition class.

Condition A is the baseline absorbed in the intercept; B and C enter as
indicator columns. Year is used raw, so the fit goes through a QR
decomposition rather than the normal equations.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy import stats
from scipy.linalg import solve_triangular

from .dataset import ConditionClass

log = logging.getLogger(__name__)

COLUMNS = ("(Intercept)", "year of construction", "B/A", "C/A")
# retained value = intercept + year + B/A + C/A, appraiser-assessed condition
REFERENCE_COEF = (-11.471, 0.006, -0.049, -0.090)
REFERENCE_SIGMA = 0.133
REFERENCE_ADJ_R2 = 0.602


class SingularDesignError(ValueError):
    pass


class RegressionError(ValueError):
    pass


def design_row(year_built: float, cls) -> np.ndarray:
    c = ConditionClass.parse(cls)
    return np.array([1.0, float(year_built), float(c == ConditionClass.B), float(c == ConditionClass.C)])


def build_design(records: Iterable[tuple]) -> tuple[np.ndarray, np.ndarray]:
    """(year_built, class, retained_value) triples -> X, y.

    Records without a retained value are dropped (logged as a warning count).
    """
    rows, ys, skipped = [], [], 0
    for year, cls, value in records:
        if value is None:
            skipped += 1
            continue
        if not (math.isfinite(float(year)) and math.isfinite(float(value))):
            raise RegressionError(f"non-finite design entry ({year}, {cls}, {value})")
        rows.append(design_row(year, cls))
        ys.append(float(value))
    if skipped:
        log.warning("%d record(s) without retained_value excluded from the design", skipped)
    if not rows:
        raise RegressionError("no regression response available")
    return np.vstack(rows), np.array(ys)


@dataclass(frozen=True, eq=False)
class RegressionFit:
    names: tuple[str, ...]
    coef: np.ndarray
    se: np.ndarray
    t: np.ndarray
    p: np.ndarray
    r2: float
    adj_r2: float
    sigma: float
    f_stat: float
    f_pvalue: float
    n: int
    dof: int

    def stars(self, j: int) -> str:
        return significance_stars(self.p[j])

    def to_dict(self) -> dict:
        return {
            "names": list(self.names),
            "coef": self.coef.tolist(), "se": self.se.tolist(),
            "t": self.t.tolist(), "p": self.p.tolist(),
            "r2": self.r2, "adj_r2": self.adj_r2, "sigma": self.sigma,
            "f": self.f_stat, "f_p": self.f_pvalue, "n": self.n, "dof": self.dof,
        }


def significance_stars(p: float) -> str:
    if p < 0.001:
        return "***"
    if p < 0.01:
        return "**"
    if p < 0.05:
        return "*"
    return ""


def _check_rank(x: np.ndarray, r: np.ndarray, names: Sequence[str]) -> None:
    col_norms = np.linalg.norm(x, axis=0)
    diag = np.abs(np.diag(r))
    for j in range(x.shape[1]):
        if col_norms[j] == 0.0 or diag[j] <= 1e-10 * col_norms[j]:
            raise SingularDesignError(f"singular design: column {names[j]!r} is constant zero or collinear")


def ols_fit(x, y, names: Sequence[str] = COLUMNS) -> RegressionFit:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n, k = x.shape
    if len(names) != k:
        names = tuple(f"x{j}" for j in range(k))
    if y.shape != (n,):
        raise ValueError("y must have one entry per design row")
    if n < 5 or n - k <= 0:
        raise RegressionError(f"need n >= 5 and n > {k} observations, got {n}")
    q, r = np.linalg.qr(x)
    _check_rank(x, r, names)
    coef = solve_triangular(r, q.T @ y)
    resid = y - x @ coef
    dof = n - k
    rss = float(resid @ resid)
    sigma = math.sqrt(rss / dof)
    r_inv = solve_triangular(r, np.eye(k))
    se = sigma * np.sqrt((r_inv ** 2).sum(axis=1))
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(se > 0, coef / se, np.copysign(np.inf, coef))
    p = np.clip(2.0 * stats.t.sf(np.abs(t), dof), 0.0, 1.0)
    tss = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - rss / tss if tss > 0 else float("nan")
    adj_r2 = 1.0 - (1.0 - r2) * (n - 1) / dof
    df_model = k - 1
    if df_model > 0 and r2 < 1.0:
        f_stat = (r2 / df_model) / ((1.0 - r2) / dof)
        f_p = float(stats.f.sf(f_stat, df_model, dof))
    else:
        f_stat, f_p = float("inf"), 0.0
    return RegressionFit(tuple(names), coef, se, t, p, r2, adj_r2, sigma, f_stat, f_p, n, dof)


def predict_value(fit: RegressionFit, year_built: float, cls) -> float:
    return float(design_row(year_built, cls) @ fit.coef)


# ------------------------------------------------------------ model comparison

def compare_models(years: Sequence[int], values: Sequence[float | None], truth: Sequence,
                   mv: Sequence, lh: Sequence) -> dict[str, RegressionFit]:
    """Fit the same specification with the true, MV and LH condition labels."""
    if not len(years) == len(values) == len(truth) == len(mv) == len(lh):
        raise ValueError("all inputs must cover the same records")
    fits = {}
    for name, labels in (("True", truth), ("MV", mv), ("LH", lh)):
        x, y = build_design(zip(years, labels, values))
        fits[name] = ols_fit(x, y)
    return fits


_ROW_PREFIX = {"True": "true", "MV": "predictedMV", "LH": "predictedLH"}


def format_table(fits: dict[str, RegressionFit]) -> str:
    """Aligned text table: coefficients with stars, standard errors in parentheses."""
    cols = list(fits)
    label_w = 22
    col_w = 14

    def line(label, cells):
        return label.ljust(label_w) + "".join(c.rjust(col_w) for c in cells)

    out = [line("", cols), "-" * (label_w + col_w * len(cols))]
    for j, base in enumerate(COLUMNS[:2]):
        out.append(line(base, [f"{fits[c].coef[j]:.3f}{fits[c].stars(j)}" for c in cols]))
        out.append(line("", [f"({fits[c].se[j]:.3f})" for c in cols]))
    for c in cols:
        for j, dummy in ((2, "B/A"), (3, "C/A")):
            cells = [""] * len(cols)
            f = fits[c]
            cells[cols.index(c)] = f"{f.coef[j]:.3f}{f.stars(j)}"
            out.append(line(f"{_ROW_PREFIX.get(c, c)}: {dummy}", cells))
            cells = [""] * len(cols)
            cells[cols.index(c)] = f"({f.se[j]:.3f})"
            out.append(line("", cells))
    out.append("-" * (label_w + col_w * len(cols)))
    out.append(line("adj. R^2", [f"{fits[c].adj_r2:.3f}" for c in cols]))
    out.append(line("sigma", [f"{fits[c].sigma:.3f}" for c in cols]))
    out.append(line("F", [f"{fits[c].f_stat:.3f}" for c in cols]))
    out.append(line("p", [f"{fits[c].f_pvalue:.3f}" for c in cols]))
    out.append(line("n", [str(fits[c].n) for c in cols]))
    out.append("***p<0.001, **p<0.01, *p<0.05")
    return "\n".join(out) + "\n"


def fits_json(fits: dict[str, RegressionFit]) -> str:
    return json.dumps({k: v.to_dict() for k, v in fits.items()}, indent=1, sort_keys=True)
