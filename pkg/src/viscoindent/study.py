"""Reference parameter tables and glue between the forward model and the surrogate."""

from __future__ import annotations

import itertools

import numpy as np

from .constitutive import PARAM_NAMES, MaterialParams
from .contact import DEFAULT_FORWARD, ForwardConfig, LoadSchedule, forward_depths
from .doe import FactorLevels
from .surrogate import build_snapshots, train

# Six-factor, three-level screening levels.
BURGER_LEVELS = FactorLevels(
    ("E", "C_s", "m_s", "C_t", "m_t", "t_eps"),
    (
        (3.0, 3.25, 3.5),
        (0.02, 0.06, 0.1),
        (0.15, 0.25, 0.35),
        (0.15, 0.25, 0.35),
        (0.2, 0.5, 0.8),
        (0.1, 0.25, 0.4),
    ),
)

# Training grid; m_s is spread evenly over its screening range.
SURROGATE_LEVELS = FactorLevels(
    ("E", "C_s", "m_s", "C_t", "m_t"),
    (
        (3.0, 3.25, 3.5),
        (0.02, 0.045, 0.07, 0.1),
        tuple(float(v) for v in np.linspace(0.15, 0.35, 4)),
        (0.15, 0.25, 0.35),
        (0.2, 0.8),
    ),
)
SURROGATE_FIXED = {"nu": 0.34, "t_eps": 0.25}

BURGER_OPTIM = MaterialParams(E=3.28, nu=0.34, C_s=0.09, m_s=0.20, C_t=0.24, m_t=0.47, t_eps=0.25)

RAMP_TIMES = (30.0, 45.0, 60.0, 240.0)
P_MAX = 1.0


def reference_schedules(ramps=RAMP_TIMES, P_max=P_MAX, n_samples=100):
    return [LoadSchedule.triangular(P_max, t, n_samples) for t in ramps]


def params_from_rows(X, names, fixed):
    """Batched ``MaterialParams`` from rows of ``X`` plus fixed values."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    values = dict(fixed)
    for j, n in enumerate(names):
        values[n] = X[:, j]
    missing = [n for n in PARAM_NAMES if n not in values]
    if missing:
        raise KeyError(f"no value for {missing}")
    return MaterialParams(**{n: values[n] for n in PARAM_NAMES})


def depth_forward(schedule: LoadSchedule, names, fixed, cfg: ForwardConfig = DEFAULT_FORWARD):
    """Row-batched map from parameter rows to depth vectors."""
    def run(X):
        return forward_depths(params_from_rows(X, names, fixed), schedule, cfg)

    return run


def condition_snapshots(schedule, levels: FactorLevels = SURROGATE_LEVELS, fixed=SURROGATE_FIXED,
                        cfg: ForwardConfig = DEFAULT_FORWARD, threads=1):
    X = np.array(list(itertools.product(*levels.levels)))
    fwd = depth_forward(schedule, levels.names, fixed, cfg)
    if threads > 1:
        # chunks run concurrently; the column order is unchanged
        from concurrent.futures import ThreadPoolExecutor

        chunks = np.array_split(np.arange(len(X)), threads)

        def batched(Z):
            with ThreadPoolExecutor(max_workers=threads) as pool:
                return np.vstack(list(pool.map(lambda idx: fwd(Z[idx]), chunks)))

        return build_snapshots(X, batched, levels.bounds(), levels.names, batched=True)
    return build_snapshots(X, fwd, levels.bounds(), levels.names, batched=True)


def condition_surrogate(schedule, kernel="MQ", c_j=0.5, energy_threshold=0.999, **kw):
    snaps = condition_snapshots(schedule, **kw)
    return train(snaps, kernel, c_j, energy_threshold), snaps


def cell_midpoints(levels: FactorLevels):
    """Points halfway between neighbouring levels in every dimension."""
    mids = [0.5 * (np.asarray(lv[1:]) + np.asarray(lv[:-1])) for lv in levels.levels]
    return np.array(list(itertools.product(*mids)))
