"""Analytic elastoplastic indentation benchmark for surrogate studies.

A closed-form stand-in for finite element runs on a hardening metal:
quadratic loading with a hardness set by a representative flow stress,
and a power-law elastic unloading branch.  Cheap enough to serve as its
own oracle at held-out points.
"""

from __future__ import annotations

import itertools

import numpy as np

from .contact import DIAMOND_E, DIAMOND_NU
from .surrogate import SnapshotSet

NAMES = ("E", "sigma_y", "hardening")
LEVELS = (
    (60.0, 67.5, 75.0),
    (0.05, 0.10, 0.15, 0.20),
    (0.40, 0.55, 0.70),
)
P_MAX = 4.9  # mN
N_LOAD = 15
NU = 0.345
REP_STRAIN = 0.033
CONSTRAINT = 2.8
UNLOAD_EXPONENT = 1.5
# tangent modulus of the bilinear hardening law per unit hardening coefficient
TANGENT_SCALE = 2.0  # GPa


def hardness(E, sigma_y, hardening):
    """Hardness (GPa) from the flow stress at the representative strain."""
    E, sigma_y, hardening = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (E, sigma_y, hardening)))
    plastic = np.maximum(REP_STRAIN - sigma_y / E, 0.0)
    return CONSTRAINT * (sigma_y + hardening * TANGENT_SCALE * plastic)


def reduced_modulus(E, nu=NU):
    return 1.0 / ((1 - nu ** 2) / np.asarray(E, dtype=float) + (1 - DIAMOND_NU ** 2) / DIAMOND_E)


def load_levels(P_max=P_MAX, n_load=N_LOAD):
    """Load values at which depths are reported: loading then unloading."""
    up = P_max * np.arange(1, n_load + 1) / n_load
    down = P_max * np.arange(n_load - 1, -1, -1) / n_load
    return np.concatenate([up, down])


def elastoplastic_depths(E, sigma_y, hardening, P_max=P_MAX, n_load=N_LOAD):
    """Depths (nm) at ``load_levels``; broadcast over the leading parameter axes."""
    E = np.asarray(E, dtype=float)[..., None]
    H = hardness(E, np.asarray(sigma_y, dtype=float)[..., None], np.asarray(hardening, dtype=float)[..., None])
    Er = reduced_modulus(E)
    # loading curvature, GPa; P[mN] = C h^2 1e-6
    C = Er / (0.194 * np.sqrt(Er / H) + 0.930 * np.sqrt(H / Er)) ** 2
    P = load_levels(P_max, n_load)
    up, down = P[:n_load], P[n_load:]
    h_load = np.sqrt(up * 1e6 / C)
    h_max = h_load[..., -1:]
    A = P_max * 1e6 / H
    S = 2.0 / np.sqrt(np.pi) * Er * np.sqrt(A) * 1e-6
    h_f = h_max - UNLOAD_EXPONENT * P_max / S
    h_unload = h_f + (h_max - h_f) * (down / P_max) ** (1.0 / UNLOAD_EXPONENT)
    return np.concatenate([h_load, np.broadcast_to(h_unload, h_load.shape[:-1] + down.shape)], axis=-1)


def forward(p):
    """Row-batched forward map ``(n, 3) -> (n, 30)``."""
    p = np.atleast_2d(np.asarray(p, dtype=float))
    return elastoplastic_depths(p[:, 0], p[:, 1], p[:, 2])


def training_inputs():
    return np.array(list(itertools.product(*LEVELS)))


def midpoint_inputs():
    """Centres of the grid cells, halfway between neighbouring training points."""
    mids = [0.5 * (np.asarray(l[1:]) + np.asarray(l[:-1])) for l in LEVELS]
    return np.array(list(itertools.product(*mids)))


def bounds():
    return tuple((l[0], l[-1]) for l in LEVELS)


def standard_benchmark():
    """Returns ``(snapshots, holdout_inputs d x n, holdout_outputs N x n)``."""
    X = training_inputs()
    snaps = SnapshotSet(X.T, forward(X).T, bounds(), NAMES)
    Xv = midpoint_inputs()
    return snaps, Xv.T, forward(Xv).T
