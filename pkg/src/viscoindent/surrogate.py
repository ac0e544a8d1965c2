"""POD-RBF surrogate: snapshot compression plus radial-basis interpolation.

Matrices follow the column convention throughout: ``P`` is ``d x M``
(one parameter vector per column) and ``U`` is ``N x M`` (one output per
column).
"""

from __future__ import annotations

import hashlib
import io
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    ConditioningError,
    ForwardModelError,
    InvalidInputError,
    MissingArtifactError,
)

log = logging.getLogger(__name__)

KERNELS = ("LS", "CS", "MQ", "GS", "IMQ")
FORMAT_TAG = "VISCOINDENT-SURROGATE"
FORMAT_VERSION = 1
MAX_CONDITION = 1e14
RANK_TOL = 1e-12


# ---------------------------------------------------------------------------
# Snapshots
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SnapshotSet:
    P: np.ndarray
    U: np.ndarray
    param_bounds: tuple
    names: tuple = ()

    def __post_init__(self):
        P = np.atleast_2d(np.asarray(self.P, dtype=float))
        U = np.atleast_2d(np.asarray(self.U, dtype=float))
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "U", U)
        bounds = tuple((float(lo), float(hi)) for lo, hi in self.param_bounds)
        object.__setattr__(self, "param_bounds", bounds)
        if P.shape[1] != U.shape[1]:
            raise InvalidInputError(f"P has {P.shape[1]} columns but U has {U.shape[1]}")
        if P.shape[1] < 2:
            raise InvalidInputError("need at least two snapshots")
        if len(bounds) != P.shape[0]:
            raise InvalidInputError("one (lo, hi) pair per parameter dimension is required")
        if any(not lo < hi for lo, hi in bounds):
            raise InvalidInputError("every bound needs lo < hi")
        if self.names and len(self.names) != P.shape[0]:
            raise InvalidInputError("names must match the parameter dimension")

    @property
    def n_outputs(self):
        return self.U.shape[0]

    @property
    def n_snapshots(self):
        return self.U.shape[1]

    def content_hash(self):
        h = hashlib.sha256()
        for arr in (self.P, self.U, np.asarray(self.param_bounds)):
            h.update(np.ascontiguousarray(arr, dtype="<f8").tobytes())
        return h.hexdigest()


def bounds_from_params(param_sets):
    P = np.asarray(param_sets, dtype=float)
    return tuple(zip(P.min(axis=0), P.max(axis=0)))


def build_snapshots(param_sets, forward, bounds=None, names=(), batched=False, threads=1):
    """Evaluate ``forward`` at every parameter set and stack the results.

    ``forward`` maps a d-vector to an N-vector, or, with ``batched``, an
    ``(M, d)`` array to ``(M, N)``.  Columns keep the input order.
    """
    X = np.atleast_2d(np.asarray(param_sets, dtype=float))
    if X.shape[0] < 2:
        raise InvalidInputError("need at least two parameter sets")
    bounds = bounds_from_params(X) if bounds is None else tuple(bounds)
    for lo, hi in bounds:
        if lo >= hi:
            raise InvalidInputError("every bound needs lo < hi")
    lo = np.array([b[0] for b in bounds])
    hi = np.array([b[1] for b in bounds])
    outside = np.flatnonzero(np.any((X < lo) | (X > hi), axis=1))
    if outside.size:
        raise InvalidInputError(f"parameter sets {outside.tolist()} lie outside the bounds")

    if batched:
        U = np.asarray(forward(X), dtype=float)
        if U.shape[0] != X.shape[0]:
            raise InvalidInputError("batched forward must return one row per parameter set")
        bad = np.flatnonzero(~np.all(np.isfinite(U), axis=1))
        if bad.size:
            raise ForwardModelError(f"forward model failed for columns {bad.tolist()}", bad)
        return SnapshotSet(X.T, U.T, bounds, tuple(names))

    def run(i):
        try:
            out = np.asarray(forward(X[i]), dtype=float).ravel()
            if not np.all(np.isfinite(out)):
                raise ValueError("non-finite output")
            return out, None
        except Exception as exc:  # noqa: BLE001 - aggregated below
            return None, exc

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, range(len(X))))
    else:
        results = [run(i) for i in range(len(X))]
    failed = [i for i, (_, exc) in enumerate(results) if exc is not None]
    if failed:
        detail = "; ".join(f"{i}: {results[i][1]}" for i in failed[:5])
        raise ForwardModelError(f"forward model failed for columns {failed} ({detail})", failed)
    lengths = {len(r) for r, _ in results}
    if len(lengths) != 1:
        raise InvalidInputError(f"forward outputs have differing lengths {sorted(lengths)}")
    U = np.column_stack([r for r, _ in results])
    return SnapshotSet(X.T, U, bounds, tuple(names))


def add_noise(snapshots: SnapshotSet, level, seed):
    """Multiplicative uniform noise ``U * (1 + level * xi)``, ``xi ~ U[-1, 1]``."""
    if level < 0:
        raise InvalidInputError("noise level must be non-negative")
    if level == 0:
        return snapshots
    rng = np.random.default_rng(seed)
    xi = rng.uniform(-1.0, 1.0, size=snapshots.U.shape)
    return SnapshotSet(snapshots.P, snapshots.U * (1.0 + level * xi), snapshots.param_bounds, snapshots.names)


# ---------------------------------------------------------------------------
# POD
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PodBasis:
    phi: np.ndarray
    lambdas: np.ndarray
    energy_retained: float

    @property
    def K(self):
        return self.phi.shape[1]


def truncation_rank(lambdas, energy_threshold):
    """Smallest K whose cumulative eigenvalue share reaches the threshold.

    Returns ``(K, retained_energy)``.  Eigenvalues below
    ``RANK_TOL * lambda_1`` never count towards K.
    """
    if not 0 < energy_threshold <= 1:
        raise InvalidInputError("energy threshold must lie in (0, 1]")
    lam = np.sort(np.asarray(lambdas, dtype=float))[::-1]
    total = lam.sum()
    if total <= 0:
        raise InvalidInputError("snapshot matrix carries no energy")
    rank = int(np.sum(lam > RANK_TOL * lam[0]))
    ratio = np.cumsum(lam) / total
    K = int(np.searchsorted(ratio, energy_threshold - 1e-12) + 1)
    K = min(K, rank)
    return K, min(float(ratio[K - 1]), 1.0)


def pod_reduce(U, energy_threshold=0.999):
    """POD basis from the eigenpairs of the Gram matrix ``U^T U``.

    Snapshots are not mean-centred.  The modes ``U v_j / sqrt(lambda_j)``
    are re-orthonormalised with a QR pass, which only removes round-off
    because the Gram route squares the condition number.
    """
    U = np.atleast_2d(np.asarray(U, dtype=float))
    G = U.T @ U
    lam, V = np.linalg.eigh(G)
    order = np.argsort(lam)[::-1]
    lam, V = lam[order], V[:, order]
    lam = np.where(lam < 0, 0.0, lam)
    K, energy = truncation_rank(lam, energy_threshold)
    phi = U @ V[:, :K] / np.sqrt(lam[:K])
    Q, R = np.linalg.qr(phi)
    Q = Q * np.sign(np.diag(R))
    # deterministic sign: largest-magnitude entry of each mode is positive
    pivot = np.argmax(np.abs(Q), axis=0)
    Q = Q * np.sign(Q[pivot, np.arange(K)])
    return PodBasis(Q, lam, energy)


def amplitudes(basis: PodBasis, U):
    return basis.phi.T @ np.asarray(U, dtype=float)


# ---------------------------------------------------------------------------
# RBF
# ---------------------------------------------------------------------------

def rbf_eval(kernel, r, c_j=0.5, gs_squared=False):
    """Radial basis function value at distance ``r``.

    The Gaussian uses ``exp(-r / c^2)`` unless ``gs_squared`` selects the
    conventional ``exp(-r^2 / c^2)``.
    """
    r = np.asarray(r, dtype=float)
    kernel = kernel.upper()
    if kernel == "LS":
        return r.copy()
    if kernel == "CS":
        return r ** 3
    if kernel in ("MQ", "GS", "IMQ") and not c_j > 0:
        raise InvalidInputError(f"{kernel} needs a positive shape parameter")
    if kernel == "MQ":
        return np.sqrt(1.0 + r ** 2 / c_j ** 2)
    if kernel == "GS":
        return np.exp(-(r ** 2 if gs_squared else r) / c_j ** 2)
    if kernel == "IMQ":
        return 1.0 / np.sqrt(r ** 2 + c_j ** 2)
    raise InvalidInputError(f"unknown kernel {kernel!r}; choose from {', '.join(KERNELS)}")


def _pairwise(X, Y):
    """Euclidean distances between columns of X (d x n) and Y (d x m)."""
    diff = X[:, :, None] - Y[:, None, :]
    return np.sqrt(np.sum(diff ** 2, axis=0))


@dataclass(frozen=True)
class SurrogateModel:
    basis: PodBasis
    B: np.ndarray
    kernel: str
    c_j: float
    P_train: np.ndarray
    param_bounds: tuple
    names: tuple = ()
    gs_squared: bool = False
    energy_threshold: float = 0.999
    training_hash: str = ""
    condition: float = float("nan")

    @property
    def lo(self):
        return np.array([b[0] for b in self.param_bounds])

    @property
    def hi(self):
        return np.array([b[1] for b in self.param_bounds])

    def normalize(self, p):
        """Map parameters (last axis = dimension) onto [0, 1]."""
        return (np.asarray(p, dtype=float) - self.lo) / (self.hi - self.lo)

    def in_bounds(self, p, tol=1e-12):
        z = self.normalize(p)
        return np.all((z >= -tol) & (z <= 1 + tol), axis=-1)

    def predict(self, p, with_flag=False):
        return predict(self, p, with_flag)


def train(snapshots: SnapshotSet, kernel="MQ", c_j=0.5, energy_threshold=0.999, gs_squared=False):
    """Fit the POD basis and solve ``B F = A`` for the RBF coefficients."""
    kernel = kernel.upper()
    if kernel not in KERNELS:
        raise InvalidInputError(f"unknown kernel {kernel!r}; choose from {', '.join(KERNELS)}")
    basis = pod_reduce(snapshots.U, energy_threshold)
    A = amplitudes(basis, snapshots.U)
    lo = np.array([b[0] for b in snapshots.param_bounds])[:, None]
    hi = np.array([b[1] for b in snapshots.param_bounds])[:, None]
    Z = (snapshots.P - lo) / (hi - lo)
    F = rbf_eval(kernel, _pairwise(Z, Z), c_j, gs_squared)
    cond = float(np.linalg.cond(F))
    if not np.isfinite(cond) or cond > MAX_CONDITION:
        raise ConditioningError(
            f"interpolation matrix condition number {cond:.3g} exceeds {MAX_CONDITION:g}; "
            f"adjust the shape parameter (c_j={c_j}) or remove duplicate training points"
        )
    # F is symmetric, so B F = A  <=>  F B^T = A^T
    B = np.linalg.solve(F, A.T).T
    return SurrogateModel(
        basis, B, kernel, float(c_j), Z, snapshots.param_bounds, tuple(snapshots.names), bool(gs_squared),
        float(energy_threshold), snapshots.content_hash(), cond,
    )


def predict(model: SurrogateModel, p, with_flag=False):
    """Surrogate output ``phi B f(p)``.

    ``p`` may be a single d-vector or an ``(n, d)`` batch (rows).  Points
    outside the training bounds are still evaluated; ``with_flag``
    returns the extrapolation mask alongside.
    """
    p = np.asarray(p, dtype=float)
    single = p.ndim == 1
    P = np.atleast_2d(p)
    flag = ~model.in_bounds(P)
    if np.any(flag):
        log.warning("surrogate evaluated outside its training bounds at %d point(s)", int(flag.sum()))
    Z = model.normalize(P).T
    f = rbf_eval(model.kernel, _pairwise(model.P_train, Z), model.c_j, model.gs_squared)
    U = (model.basis.phi @ (model.B @ f)).T
    if single:
        U, flag = U[0], bool(flag[0])
    return (U, flag) if with_flag else U


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ValidationReport:
    per_point: np.ndarray
    mean: float
    worst: float

    def to_csv(self):
        lines = ["point,relative_error"]
        lines += [f"{i},{e!r}" for i, e in enumerate(map(float, self.per_point))]
        lines.append(f"mean,{self.mean!r}")
        lines.append(f"worst,{self.worst!r}")
        return "\n".join(lines) + "\n"


def validation_report(model: SurrogateModel, holdout_inputs, holdout_outputs):
    """Relative L2 error ``|pred - actual| / |actual|`` per holdout column."""
    X = np.atleast_2d(np.asarray(holdout_inputs, dtype=float))
    Y = np.atleast_2d(np.asarray(holdout_outputs, dtype=float))
    if X.shape[1] != Y.shape[1] or X.shape[0] != len(model.param_bounds) or Y.shape[0] != model.basis.phi.shape[0]:
        raise InvalidInputError("holdout inputs/outputs do not match the model dimensions")
    pred = predict(model, X.T).T
    err = np.linalg.norm(pred - Y, axis=0) / np.linalg.norm(Y, axis=0)
    return ValidationReport(err, float(err.mean()), float(err.max()))


def shape_sweep(snapshots: SnapshotSet, holdout_inputs, holdout_outputs, kernel, c_values,
                energy_threshold=0.999, gs_squared=False):
    """Mean validation error for each shape parameter; ``nan`` when training fails."""
    rows = []
    for c in c_values:
        try:
            model = train(snapshots, kernel, c, energy_threshold, gs_squared)
            rows.append((float(c), validation_report(model, holdout_inputs, holdout_outputs).mean))
        except ConditioningError:
            rows.append((float(c), float("nan")))
    return rows


def spectrum_csv(basis: PodBasis):
    lam = basis.lambdas
    cum = np.cumsum(lam) / lam.sum()
    lines = ["mode,eigenvalue,cumulative_energy"]
    lines += [f"{i + 1},{float(l)!r},{float(c)!r}" for i, (l, c) in enumerate(zip(lam, cum))]
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------

def _fmt_row(values):
    return " ".join(repr(float(v)) for v in values)


def dumps(model: SurrogateModel) -> str:
    """Versioned text artifact; row-major matrices, ``repr`` floats."""
    phi, B, Z = model.basis.phi, model.B, model.P_train
    N, K = phi.shape
    d, M = Z.shape
    out = io.StringIO()
    out.write(f"{FORMAT_TAG} {FORMAT_VERSION}\n")
    out.write(f"kernel {model.kernel}\n")
    out.write(f"c_j {model.c_j!r}\n")
    out.write(f"gs_squared {int(model.gs_squared)}\n")
    out.write(f"energy_threshold {model.energy_threshold!r}\n")
    out.write(f"energy_retained {model.basis.energy_retained!r}\n")
    out.write(f"condition {model.condition!r}\n")
    out.write(f"training_hash {model.training_hash}\n")
    out.write(f"dims {N} {K} {M} {d}\n")
    out.write("names " + ",".join(model.names) + "\n")
    out.write("bounds_lo " + _fmt_row(model.lo) + "\n")
    out.write("bounds_hi " + _fmt_row(model.hi) + "\n")
    out.write("lambdas " + _fmt_row(model.basis.lambdas) + "\n")
    for tag, mat in (("phi", phi), ("B", B), ("P_train", Z)):
        out.write(f"{tag} {mat.shape[0]} {mat.shape[1]}\n")
        for row in mat:
            out.write(_fmt_row(row) + "\n")
    return out.getvalue()


def loads(text: str) -> SurrogateModel:
    lines = text.splitlines()
    head = lines[0].split()
    if len(head) != 2 or head[0] != FORMAT_TAG:
        raise InvalidInputError("not a surrogate artifact")
    if int(head[1]) != FORMAT_VERSION:
        raise InvalidInputError(f"unsupported surrogate format version {head[1]}")
    meta = {}
    i = 1
    while i < len(lines) and lines[i].split(" ", 1)[0] not in ("phi",):
        key, _, val = lines[i].partition(" ")
        meta[key] = val
        i += 1
    mats = {}
    while i < len(lines):
        tag, r, c = lines[i].split()
        r, c = int(r), int(c)
        rows = [np.array(lines[i + 1 + k].split(), dtype=float) for k in range(r)]
        mats[tag] = np.array(rows, dtype=float).reshape(r, c)
        i += 1 + r
    N, K, M, d = (int(x) for x in meta["dims"].split())
    lo = np.array(meta["bounds_lo"].split(), dtype=float)
    hi = np.array(meta["bounds_hi"].split(), dtype=float)
    lam = np.array(meta["lambdas"].split(), dtype=float)
    if mats["phi"].shape != (N, K) or mats["B"].shape != (K, M) or mats["P_train"].shape != (d, M):
        raise InvalidInputError("surrogate artifact dimensions are inconsistent")
    names = tuple(n for n in meta.get("names", "").split(",") if n)
    basis = PodBasis(mats["phi"], lam, float(meta["energy_retained"]))
    return SurrogateModel(
        basis, mats["B"], meta["kernel"], float(meta["c_j"]), mats["P_train"], tuple(zip(lo, hi)), names,
        bool(int(meta["gs_squared"])), float(meta["energy_threshold"]), meta["training_hash"].strip(),
        float(meta["condition"]),
    )


def save(model: SurrogateModel, path):
    from .contact import write_text_atomic

    write_text_atomic(path, dumps(model))


def load(path) -> SurrogateModel:
    path = Path(path)
    if not path.exists():
        raise MissingArtifactError(f"surrogate file not found: {path}")
    return loads(path.read_text(encoding="utf-8"))
