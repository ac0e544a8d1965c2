"""Taguchi designs, curve error functions, ANOVA and extreme-value sweeps."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import betainc

from .contact import LDCurve
from .errors import DivisionGuardError, InvalidInputError

# Modified L16 for three 4-level factors (E, yield, hardening).
_L16_MODIFIED = (
    (1, 1, 1), (1, 2, 2), (1, 3, 3), (1, 4, 4),
    (2, 1, 2), (2, 2, 1), (2, 3, 4), (2, 4, 3),
    (3, 1, 3), (3, 2, 4), (3, 3, 1), (3, 4, 2),
    (4, 1, 4), (4, 2, 3), (4, 3, 2), (4, 4, 1),
)

# L27 for six 3-level factors (E, C_s, m_s, C_t, m_t, t_eps).
_L27 = (
    (1, 1, 1, 1, 1, 1), (1, 1, 1, 1, 2, 2), (1, 1, 1, 1, 3, 3),
    (1, 2, 2, 2, 1, 1), (1, 2, 2, 2, 2, 2), (1, 2, 2, 2, 3, 3),
    (1, 3, 3, 3, 1, 1), (1, 3, 3, 3, 2, 2), (1, 3, 3, 3, 3, 3),
    (2, 1, 2, 3, 1, 2), (2, 1, 2, 3, 2, 3), (2, 1, 2, 3, 3, 1),
    (2, 2, 3, 1, 1, 2), (2, 2, 3, 1, 2, 3), (2, 2, 3, 1, 3, 1),
    (2, 3, 1, 2, 1, 2), (2, 3, 1, 2, 2, 3), (2, 3, 1, 2, 3, 1),
    (3, 1, 3, 2, 1, 3), (3, 1, 3, 2, 2, 1), (3, 1, 3, 2, 3, 2),
    (3, 2, 1, 3, 1, 3), (3, 2, 1, 3, 2, 1), (3, 2, 1, 3, 3, 2),
    (3, 3, 2, 1, 1, 3), (3, 3, 2, 1, 2, 1), (3, 3, 2, 1, 3, 2),
)

_ARRAYS = {"L16_modified": _L16_MODIFIED, "L27": _L27}
SUPPORTED_ARRAYS = tuple(_ARRAYS)


# ---------------------------------------------------------------------------
# Designs
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FactorLevels:
    names: tuple
    levels: tuple

    def __post_init__(self):
        levels = tuple(tuple(float(v) for v in lv) for lv in self.levels)
        object.__setattr__(self, "levels", levels)
        object.__setattr__(self, "names", tuple(self.names))
        if len(self.names) != len(levels):
            raise InvalidInputError("one level list per factor name is required")
        for name, lv in zip(self.names, levels):
            if len(lv) < 1:
                raise InvalidInputError(f"factor {name} has no levels")
            if any(b <= a for a, b in zip(lv, lv[1:])):
                raise InvalidInputError(f"levels of {name} must be strictly increasing")

    @property
    def counts(self):
        return tuple(len(lv) for lv in self.levels)

    def bounds(self):
        return tuple((lv[0], lv[-1]) for lv in self.levels)

    def substitute(self, assignments):
        """Replace 1-based level indices by level values."""
        A = np.asarray(assignments, dtype=int)
        return np.column_stack([np.asarray(lv)[A[:, j] - 1] for j, lv in enumerate(self.levels)])


@dataclass(frozen=True)
class OrthogonalArray:
    name: str
    assignments: np.ndarray

    @property
    def runs(self):
        return self.assignments.shape[0]

    @property
    def factors(self):
        return self.assignments.shape[1]

    def is_balanced(self):
        for col in self.assignments.T:
            _, counts = np.unique(col, return_counts=True)
            if len(set(counts)) != 1:
                return False
        return True

    def is_orthogonal(self):
        A = self.assignments
        for i, j in itertools.combinations(range(A.shape[1]), 2):
            n_i, n_j = len(np.unique(A[:, i])), len(np.unique(A[:, j]))
            pairs = {}
            for a, b in zip(A[:, i], A[:, j]):
                pairs[(a, b)] = pairs.get((a, b), 0) + 1
            if len(pairs) != n_i * n_j or len(set(pairs.values())) != 1:
                return False
        return True

    def to_csv(self, names=None):
        names = names or [f"f{j + 1}" for j in range(self.factors)]
        lines = ["run," + ",".join(names)]
        lines += [f"{i + 1}," + ",".join(str(v) for v in row) for i, row in enumerate(self.assignments)]
        return "\n".join(lines) + "\n"


def orthogonal_array(kind) -> OrthogonalArray:
    if kind not in _ARRAYS:
        raise InvalidInputError(f"unsupported array {kind!r}; supported: {', '.join(SUPPORTED_ARRAYS)}")
    return OrthogonalArray(kind, np.array(_ARRAYS[kind], dtype=int))


def degrees_of_freedom(levels_per_factor, interactions=()):
    """Sum of (k - 1) over factors plus the product dof of each interaction pair."""
    ks = list(levels_per_factor)
    if any(k < 2 for k in ks):
        raise InvalidInputError("every factor needs at least two levels")
    total = sum(k - 1 for k in ks)
    for group in interactions:
        total += math.prod(ks[i] - 1 for i in group)
    return total


def full_factorial(levels: FactorLevels):
    """Cartesian product; the last factor varies fastest."""
    return np.array(list(itertools.product(*levels.levels)), dtype=float)


# ---------------------------------------------------------------------------
# Error functions
# ---------------------------------------------------------------------------

def _depths(c):
    return np.asarray(c.h if isinstance(c, LDCurve) else c, dtype=float)


def _paired(sim, exp):
    a, b = _depths(sim), _depths(exp)
    if a.shape != b.shape:
        raise InvalidInputError(f"curves have {a.size} and {b.size} samples; resample onto a shared grid first")
    return a, b


def error_rms_relative(sim, exp):
    h_sim, h_exp = _paired(sim, exp)
    if np.any(h_exp == 0):
        idx = np.flatnonzero(h_exp == 0).tolist()
        raise DivisionGuardError(f"experimental displacement is zero at samples {idx}")
    return float(np.sqrt(np.mean(((h_sim - h_exp) / h_exp) ** 2)))


def error_mse(sim, exp):
    h_sim, h_exp = _paired(sim, exp)
    return float(np.mean((h_exp - h_sim) ** 2))


def resample_to_grid(exp: LDCurve, sim: LDCurve) -> LDCurve:
    """Depths of ``exp`` at the loads of ``sim``, per branch.

    Loading and unloading branches are interpolated separately and
    linearly in P.  Times are taken from ``sim``.
    """
    def branches(c):
        k = c.unload_start
        return (c.P[: k + 1], c.h[: k + 1]), (c.P[k:], c.h[k:])

    (Pl, hl), (Pu, hu) = branches(exp)
    k = sim.unload_start
    out = np.empty_like(sim.P)
    out[: k + 1] = _interp_monotone(sim.P[: k + 1], Pl, hl)
    out[k:] = _interp_monotone(sim.P[k:], Pu[::-1], hu[::-1])
    return LDCurve(sim.t, sim.P, out)


def _interp_monotone(x, xp, fp):
    # collapse repeated loads (holds) to their last depth so np.interp sees increasing x
    xp, fp = np.asarray(xp, float), np.asarray(fp, float)
    keep = np.append(np.diff(xp) > 0, True)
    return np.interp(x, xp[keep], fp[keep])


# ---------------------------------------------------------------------------
# ANOVA
# ---------------------------------------------------------------------------

def f_sf(F, d1, d2):
    """Upper tail of the F distribution via the regularized incomplete beta."""
    if F <= 0:
        return 1.0
    return float(betainc(d2 / 2.0, d1 / 2.0, d2 / (d2 + d1 * F)))


@dataclass(frozen=True)
class AnovaRow:
    source: str
    df: int
    ss: float
    ms: float
    F: float | None
    P: float | None
    pct: float


@dataclass(frozen=True)
class AnovaTable:
    rows: tuple
    error_df: int
    error_ss: float
    error_ms: float | None
    total_df: int
    total_ss: float

    def row(self, source) -> AnovaRow:
        for r in self.rows:
            if r.source == source:
                return r
        raise KeyError(source)

    def to_csv(self):
        lines = ["source,DF,AdjSS,AdjMS,F,P,pct_contribution"]
        opt = lambda v: "" if v is None else repr(float(v))  # noqa: E731
        for r in self.rows:
            lines.append(f"{r.source},{r.df},{r.ss!r},{r.ms!r},{opt(r.F)},{opt(r.P)},{r.pct!r}")
        lines.append(f"Error,{self.error_df},{self.error_ss!r},{opt(self.error_ms)},,,")
        lines.append(f"Total,{self.total_df},{self.total_ss!r},,,,")
        return "\n".join(lines) + "\n"

    def to_text(self):
        head = ("Source", "DF", "Adj SS", "Adj MS", "F-Value", "P-Value", "% Contribution")
        body = []
        for r in self.rows:
            body.append((r.source, str(r.df), f"{r.ss:.6g}", f"{r.ms:.6g}",
                         "-" if r.F is None else f"{r.F:.2f}", "-" if r.P is None else f"{r.P:.3f}", f"{r.pct:.2f}"))
        body.append(("Error", str(self.error_df), f"{self.error_ss:.6g}",
                     "-" if self.error_ms is None else f"{self.error_ms:.6g}", "", "", ""))
        body.append(("Total", str(self.total_df), f"{self.total_ss:.6g}", "", "", "", ""))
        widths = [max(len(row[i]) for row in [head, *body]) for i in range(len(head))]
        fmt = lambda row: "  ".join(c.rjust(w) if i else c.ljust(w) for i, (c, w) in enumerate(zip(row, widths)))  # noqa: E731
        return "\n".join([fmt(head), "-" * len(fmt(head)), *map(fmt, body)]) + "\n"


def anova_from_ss(sources, ss, dfs, error_ss, error_df, total_ss=None, total_df=None):
    """Assemble a table from sums of squares and degrees of freedom."""
    ss = [float(v) for v in ss]
    total_ss = float(sum(ss) + error_ss) if total_ss is None else float(total_ss)
    total_df = int(sum(dfs) + error_df) if total_df is None else int(total_df)
    error_ms = error_ss / error_df if error_df > 0 else None
    rows = []
    for name, s, d in zip(sources, ss, dfs):
        ms = s / d
        if error_ms:
            F = ms / error_ms
            P = f_sf(F, d, error_df)
        else:
            F = P = None
        pct = 100.0 * s / total_ss if total_ss > 0 else 0.0
        rows.append(AnovaRow(name, int(d), s, ms, F, P, pct))
    return AnovaTable(tuple(rows), int(error_df), float(error_ss), error_ms, total_df, total_ss)


def anova(design: OrthogonalArray, levels: FactorLevels, responses):
    """Main-effects ANOVA on a balanced design.

    Factor SS is ``sum_levels n_level (mean_level - grand_mean)^2``; the
    error term is what the main effects leave of the total.
    """
    y = np.asarray(responses, dtype=float)
    if y.shape != (design.runs,):
        raise InvalidInputError(f"expected {design.runs} responses, got {y.size}")
    if design.factors != len(levels.names):
        raise InvalidInputError("factor count of design and levels differ")
    grand = y.mean()
    total_ss = float(np.sum((y - grand) ** 2))
    ss, dfs = [], []
    for j in range(design.factors):
        col = design.assignments[:, j]
        s = 0.0
        for lv in np.unique(col):
            sel = y[col == lv]
            s += sel.size * (sel.mean() - grand) ** 2
        ss.append(float(s))
        dfs.append(len(np.unique(col)) - 1)
    error_df = design.runs - 1 - sum(dfs)
    # clip tiny negative round-off; a saturated design has no error term
    error_ss = max(total_ss - sum(ss), 0.0)
    return anova_from_ss(levels.names, ss, dfs, error_ss, error_df, total_ss, design.runs - 1)


# ---------------------------------------------------------------------------
# Extreme-value sensitivity
# ---------------------------------------------------------------------------

FEATURES = ("max_depth", "residual_depth")


def curve_features(curve: LDCurve):
    return {"max_depth": float(np.max(curve.h)), "residual_depth": curve.residual_depth}


@dataclass(frozen=True)
class ExtremeDelta:
    parameter: str
    lo: float
    hi: float
    deltas: dict


def extreme_sensitivity(param_bounds, baseline, forward, features=FEATURES, names=None):
    """Feature change between each parameter's low and high limit.

    ``forward`` maps a parameter vector to an ``LDCurve``; the other
    parameters stay at ``baseline``.  Reports ``feature(hi) - feature(lo)``.
    """
    base = np.asarray(baseline, dtype=float)
    names = names or [f"p{j}" for j in range(base.size)]
    for (lo, hi), b, n in zip(param_bounds, base, names):
        if not lo <= b <= hi:
            raise InvalidInputError(f"baseline {n}={b} outside [{lo}, {hi}]")
    unknown = set(features) - set(FEATURES)
    if unknown:
        raise InvalidInputError(f"unknown features {sorted(unknown)}")
    out = []
    for j, (lo, hi) in enumerate(param_bounds):
        vals = []
        for v in (lo, hi):
            p = base.copy()
            p[j] = v
            vals.append(curve_features(forward(p)))
        out.append(ExtremeDelta(names[j], float(lo), float(hi), {f: vals[1][f] - vals[0][f] for f in features}))
    return out


def extremes_csv(deltas):
    feats = list(deltas[0].deltas) if deltas else list(FEATURES)
    lines = ["parameter,lo,hi," + ",".join(f"delta_{f}" for f in feats)]
    for d in deltas:
        lines.append(f"{d.parameter},{d.lo!r},{d.hi!r}," + ",".join(repr(d.deltas[f]) for f in feats))
    return "\n".join(lines) + "\n"
