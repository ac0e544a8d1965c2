"""Spring-dashpot viscoelastic models and the nonlinear Burgers integrator.

Conventions
-----------
* Voigt order is ``xx, yy, zz, yz, zx, xy``.
* Strains are stored as *tensor* components.  Engineering shear strains
  (gamma = 2 * eps) must be halved on the way in and doubled on the way
  out; see :func:`to_engineering_shear` / :func:`from_engineering_shear`.
* Stress is in GPa and time in seconds.  ``C_s`` and ``C_t`` carry
  whatever units make ``C * J2**m * s`` a strain rate (strain) in that
  system.

Every function accepts leading batch dimensions: a stress may have shape
``(..., 6)`` and material constants may be arrays broadcasting against
``...``.  This is what lets the forward model integrate hundreds of
parameter sets in one pass.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .errors import DivergenceError, InvalidInputError, NumericalSingularityError

PARAM_NAMES = ("E", "nu", "C_s", "m_s", "C_t", "m_t", "t_eps")

_NORMAL = slice(0, 3)
_SHEAR = slice(3, 6)

# Deviatoric projector in tensor-Voigt form: s = DEV @ sigma.
DEV = np.zeros((6, 6))
DEV[:3, :3] = np.eye(3) - 1.0 / 3.0
DEV[3:, 3:] = np.eye(3)


def _col(x):
    return np.asarray(x, dtype=float)[..., None]


def _mat(x):
    return np.asarray(x, dtype=float)[..., None, None]


def to_engineering_shear(eps):
    """Tensor-Voigt strain -> engineering-Voigt strain (shear doubled)."""
    out = np.array(eps, dtype=float, copy=True)
    out[..., _SHEAR] *= 2.0
    return out


def from_engineering_shear(gamma):
    out = np.array(gamma, dtype=float, copy=True)
    out[..., _SHEAR] *= 0.5
    return out


@dataclass(frozen=True)
class MaterialParams:
    """The seven nonlinear Burgers constants.

    ``extra_voigt`` holds ``(C_t, m_t, t_eps)`` triples for additional
    Voigt elements beyond the first.  Fields may be numpy arrays of a
    common shape for batched evaluation.
    """

    E: float
    nu: float
    C_s: float
    m_s: float
    C_t: float
    m_t: float
    t_eps: float
    extra_voigt: tuple = ()

    def __post_init__(self):
        for name in PARAM_NAMES:
            v = np.asarray(getattr(self, name), dtype=float)
            if not np.all(np.isfinite(v)):
                raise InvalidInputError(f"{name} must be finite")
        checks = [
            (np.all(np.asarray(self.E) > 0), "E > 0"),
            (np.all((np.asarray(self.nu) > 0) & (np.asarray(self.nu) < 0.5)), "0 < nu < 0.5"),
            (np.all(np.asarray(self.C_s) >= 0), "C_s >= 0"),
            (np.all(np.asarray(self.m_s) >= 0), "m_s >= 0"),
        ]
        for C_t, m_t, t_eps in self.voigt_elements:
            checks += [
                (np.all(np.asarray(C_t) >= 0), "C_t >= 0"),
                (np.all(np.asarray(m_t) >= 0), "m_t >= 0"),
                (np.all(np.asarray(t_eps) > 0), "t_eps > 0"),
            ]
        for ok, what in checks:
            if not ok:
                raise InvalidInputError(f"material parameter violates {what}")

    @property
    def voigt_elements(self):
        return ((self.C_t, self.m_t, self.t_eps),) + tuple(tuple(v) for v in self.extra_voigt)

    @property
    def n_voigt(self):
        return 1 + len(self.extra_voigt)

    def as_vector(self):
        return np.array([getattr(self, n) for n in PARAM_NAMES], dtype=float)

    @classmethod
    def from_vector(cls, vec: Sequence[float]) -> "MaterialParams":
        vec = np.asarray(vec, dtype=float)
        return cls(*(vec[..., i] for i in range(len(PARAM_NAMES))))

    def replace(self, **changes):
        return replace(self, **changes)


@dataclass(frozen=True)
class StressInvariants:
    s: np.ndarray
    J2: np.ndarray


@dataclass(frozen=True)
class MaterialState:
    """Stress plus partitioned strain history at time ``t``."""

    sigma: np.ndarray
    eps_e: np.ndarray
    eps_s: np.ndarray
    eps_t: tuple
    t: float = 0.0

    @classmethod
    def initial(cls, params: MaterialParams, sigma=None, batch_shape=()):
        """Virgin state, optionally pre-stressed elastically to ``sigma``.

        A pre-stressed state has elastic strain ``C_e @ sigma`` and no
        creep strain, i.e. the load was applied instantaneously at t = 0.
        """
        if sigma is None:
            sigma = np.zeros(tuple(batch_shape) + (6,))
        sigma = np.array(np.broadcast_to(sigma, np.broadcast_shapes(np.shape(sigma), tuple(batch_shape) + (6,))), dtype=float)
        eps_e = hooke_apply(params.E, params.nu, sigma)
        zeros = np.zeros_like(eps_e)
        return cls(sigma, eps_e, zeros.copy(), tuple(zeros.copy() for _ in range(params.n_voigt)), 0.0)

    @property
    def eps(self):
        """Total strain, the sum of all partitions."""
        total = self.eps_e + self.eps_s
        for e in self.eps_t:
            total = total + e
        return total


# ---------------------------------------------------------------------------
# Invariants and compliance blocks
# ---------------------------------------------------------------------------

def deviatoric_invariants(sigma) -> StressInvariants:
    """Deviator ``s`` and ``J2 = s:s / 2`` (shear terms counted twice)."""
    sigma = np.asarray(sigma, dtype=float)
    if sigma.shape[-1:] != (6,):
        raise InvalidInputError(f"stress must have trailing dimension 6, got {sigma.shape}")
    if not np.all(np.isfinite(sigma)):
        raise InvalidInputError("stress contains non-finite entries")
    mean = sigma[..., _NORMAL].sum(axis=-1, keepdims=True) / 3.0
    s = sigma.copy()
    s[..., _NORMAL] -= mean
    J2 = 0.5 * np.sum(s[..., _NORMAL] ** 2, axis=-1) + np.sum(s[..., _SHEAR] ** 2, axis=-1)
    return StressInvariants(s, J2)


def _deviator(sigma):
    s = np.array(sigma, dtype=float, copy=True)
    s[..., _NORMAL] -= s[..., _NORMAL].sum(axis=-1, keepdims=True) / 3.0
    return s


def _J2(s):
    return 0.5 * np.sum(s[..., _NORMAL] ** 2, axis=-1) + np.sum(s[..., _SHEAR] ** 2, axis=-1)


def hooke_apply(E, nu, sigma):
    """Elastic strain ``C_e @ sigma`` without forming the matrix."""
    sigma = np.asarray(sigma, dtype=float)
    E, nu = _col(E), _col(nu)
    out = (1.0 + nu) / E * sigma
    out[..., _NORMAL] -= nu / E * sigma[..., _NORMAL].sum(axis=-1, keepdims=True)
    return out


def elastic_compliance(E, nu):
    E, nu = _mat(E), _mat(nu)
    C = np.zeros(np.broadcast_shapes(E.shape, nu.shape)[:-2] + (6, 6))
    C[..., :3, :3] = -nu / E
    idx = np.arange(6)
    C[..., idx[:3], idx[:3]] = (1.0 / E)[..., 0]
    C[..., idx[3:], idx[3:]] = ((1.0 + nu) / E)[..., 0]
    return C


def elastic_stiffness(E, nu):
    """Hooke stiffness consistent with tensor shear strains."""
    E, nu = _mat(E), _mat(nu)
    lam = E * nu / ((1 + nu) * (1 - 2 * nu))
    mu = E / (2 * (1 + nu))
    K = np.zeros(np.broadcast_shapes(E.shape, nu.shape)[:-2] + (6, 6))
    K[..., :3, :3] = lam
    idx = np.arange(6)
    K[..., idx[:3], idx[:3]] = (lam + 2 * mu)[..., 0]
    K[..., idx[3:], idx[3:]] = (2 * mu)[..., 0]
    return K


def _steady_rate(params, J2):
    return np.asarray(params.C_s, dtype=float) * J2 ** np.asarray(params.m_s, dtype=float)


def steady_creep_increment(state: MaterialState, params: MaterialParams, dt, dsigma=None):
    """Steady-creep strain increment over ``dt`` and its stress compliance.

    ``J2`` is frozen at the start of the increment.  The returned matrix
    is ``dt * C_s * J2**m_s / 2 * DEV``; its diagonal is 1/3 (normal)
    and 1/2 (shear) times ``dt * C_s * J2**m_s``.  The increment includes
    the ``dsigma`` contribution (zero when omitted).
    """
    _check_dt(dt)
    s = _deviator(state.sigma)
    rate = _col(_steady_rate(params, _J2(s)))
    deps = dt * rate * s
    Cs = 0.5 * dt * rate[..., None] * DEV
    if dsigma is not None:
        deps = deps + 0.5 * dt * rate * _deviator(dsigma)
    return deps, Cs


def transient_creep_increment(state: MaterialState, params: MaterialParams, dt, dsigma=None, element=0):
    """Transient-creep increment of Voigt element ``element``.

    Central difference of ``eps_t' + eps_t / t_eps = C_t / t_eps * J2**m_t * s``.
    """
    _check_dt(dt)
    C_t, m_t, t_eps = params.voigt_elements[element]
    s = _deviator(state.sigma)
    a = _col(np.asarray(C_t, dtype=float) * _J2(s) ** np.asarray(m_t, dtype=float))
    denom = _col(2.0 * np.asarray(t_eps, dtype=float) + dt)
    eps_t = state.eps_t[element]
    deps = (2.0 * dt * a * s - 2.0 * dt * eps_t) / denom
    Ct = (dt / denom * a)[..., None] * DEV
    if dsigma is not None:
        deps = deps + dt * a * _deviator(dsigma) / denom
    return deps, Ct


def _check_dt(dt):
    if not np.isfinite(dt) or dt <= 0:
        raise InvalidInputError(f"time increment must be positive and finite, got {dt}")


def assemble_tangent(state: MaterialState, params: MaterialParams, dt):
    """Total incremental compliance and its inverse (the tangent stiffness)."""
    C = elastic_compliance(params.E, params.nu) + steady_creep_increment(state, params, dt)[1]
    for k in range(params.n_voigt):
        C = C + transient_creep_increment(state, params, dt, element=k)[1]
    try:
        K = np.linalg.inv(C)
    except np.linalg.LinAlgError as exc:
        raise NumericalSingularityError("incremental compliance is singular") from exc
    return C, K


def held_creep_strain(state: MaterialState, params: MaterialParams, dt):
    """Creep strain accrued over ``dt`` at constant stress.

    Steady term uses ``C_s`` (the printed formula shows ``C_t`` there,
    which is inconsistent with the steady-creep increment it is
    extracted from).
    """
    total = steady_creep_increment(state, params, dt)[0]
    for k in range(params.n_voigt):
        total = total + transient_creep_increment(state, params, dt, element=k)[0]
    return total


def artificial_stress_increment(state: MaterialState, params: MaterialParams, dt):
    """``K @ held_creep_strain``: the stress that would relax the held creep."""
    _, K = assemble_tangent(state, params, dt)
    return np.einsum("...ij,...j->...i", K, held_creep_strain(state, params, dt))


def step_stress_driven(state: MaterialState, params: MaterialParams, dsigma, dt, step_index=None):
    """Advance every strain partition for a prescribed stress increment."""
    _check_dt(dt)
    dsigma = np.asarray(dsigma, dtype=float)
    deps_e = hooke_apply(params.E, params.nu, dsigma)
    deps_s, _ = steady_creep_increment(state, params, dt, dsigma)
    eps_t = tuple(
        e + transient_creep_increment(state, params, dt, dsigma, element=k)[0]
        for k, e in enumerate(state.eps_t)
    )
    new = MaterialState(state.sigma + dsigma, state.eps_e + deps_e, state.eps_s + deps_s, eps_t, state.t + dt)
    if not (np.all(np.isfinite(new.eps_s)) and all(np.all(np.isfinite(e)) for e in eps_t)):
        raise DivergenceError(f"non-finite strain at step {step_index}", step_index)
    return new


def step_strain_driven(state: MaterialState, params: MaterialParams, deps, dt, step_index=None):
    """UMAT-style update: solve for the stress increment, then advance.

    ``dsigma = K @ (deps - held_creep_strain)``.  With ``J2`` frozen over
    the step this is exact for the discretised equations.
    """
    _, K = assemble_tangent(state, params, dt)
    rhs = np.asarray(deps, dtype=float) - held_creep_strain(state, params, dt)
    dsigma = np.einsum("...ij,...j->...i", K, rhs)
    return step_stress_driven(state, params, dsigma, dt, step_index), dsigma


def _param_batch_shape(params: MaterialParams):
    shapes = [np.shape(getattr(params, n)) for n in PARAM_NAMES]
    for elem in params.extra_voigt:
        shapes += [np.shape(v) for v in elem]
    return np.broadcast_shapes(*shapes)


def integrate_stress_history(params: MaterialParams, times, stresses, state=None, record=None,
                             divergence_factor=1e6):
    """Drive the integrator through a piecewise-linear stress history.

    Parameters
    ----------
    times : (n,) array
        Strictly increasing sample times; ``times[0]`` is the start.
    stresses : (..., n, 6) array
        Stress at each sample time.  Leading dimensions broadcast against
        array-valued material constants.
    state : MaterialState, optional
        Starting state; defaults to ``stresses[..., 0, :]`` applied
        elastically to a virgin material.
    record : sequence of int, optional
        Sample indices whose strain is returned (default: all).

    Returns
    -------
    (..., len(record), 6) array of total strain.

    Raises
    ------
    DivergenceError
        If strain turns non-finite or exceeds ``divergence_factor`` times
        the larger of the starting strain and the elastic strain at peak
        stress.
    """
    times = np.asarray(times, dtype=float)
    stresses = np.asarray(stresses, dtype=float)
    if np.any(np.diff(times) <= 0):
        raise InvalidInputError("times must be strictly increasing")
    batch = np.broadcast_shapes(_param_batch_shape(params), stresses.shape[:-2])
    if state is None:
        state = MaterialState.initial(params, np.broadcast_to(stresses[..., 0, :], batch + (6,)))
    record = np.arange(len(times)) if record is None else np.asarray(record, dtype=int)
    slot = {int(i): k for k, i in enumerate(record)}
    out = np.empty(batch + (len(record), 6))
    if 0 in slot:
        out[..., slot[0], :] = state.eps
    peak = np.max(np.abs(hooke_apply(params.E, params.nu, np.abs(stresses).max(axis=-2))))
    scale = max(float(np.max(np.abs(state.eps))), float(peak), np.finfo(float).tiny)
    for i in range(1, len(times)):
        state = step_stress_driven(state, params, stresses[..., i, :] - state.sigma, times[i] - times[i - 1], i)
        if i in slot:
            eps = state.eps
            if np.max(np.abs(eps)) > divergence_factor * scale:
                raise DivergenceError(f"strain exceeded {divergence_factor:g}x its reference magnitude at step {i}", i)
            out[..., slot[i], :] = eps
    return out


def constant_stress_creep(params: MaterialParams, sigma0, t):
    """Closed-form uniaxial creep strain ``eps_xx(t)`` under constant ``sigma0``."""
    t = np.asarray(t, dtype=float)
    J2 = sigma0 ** 2 / 3.0
    out = sigma0 / params.E + params.C_s * J2 ** params.m_s * (2 * sigma0 / 3) * t
    for C_t, m_t, t_eps in params.voigt_elements:
        out = out + C_t * J2 ** m_t * (2 * sigma0 / 3) * (1 - np.exp(-t / t_eps))
    return out


# ---------------------------------------------------------------------------
# Linear spring-dashpot models
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LinearViscoParams:
    E: float
    eta: float

    def __post_init__(self):
        if not (self.E > 0 and self.eta > 0):
            raise InvalidInputError("E and eta must be positive")


@dataclass(frozen=True)
class PronySeries:
    """Relaxation modulus ``E0 * (1 - sum p_i (1 - exp(-t / tau_i)))``."""

    E0: float
    terms: tuple = field(default_factory=tuple)

    def __post_init__(self):
        if self.E0 <= 0:
            raise InvalidInputError("E0 must be positive")
        p = np.array([pt[0] for pt in self.terms], dtype=float)
        tau = np.array([pt[1] for pt in self.terms], dtype=float)
        if np.any(tau <= 0) or np.any(p < 0) or p.sum() > 1:
            raise InvalidInputError("Prony terms need tau_i > 0 and 0 <= sum(p_i) <= 1")


def kelvin_voigt_creep(params: LinearViscoParams, sigma0, t):
    t = np.asarray(t, dtype=float)
    return sigma0 / params.E * (1.0 - np.exp(-params.E * t / params.eta))


def maxwell_relaxation(params: LinearViscoParams, sigma0, t):
    t = np.asarray(t, dtype=float)
    return sigma0 * np.exp(-params.E * t / params.eta)


def prony_relaxation(params: PronySeries, t):
    t = np.asarray(t, dtype=float)
    loss = np.zeros_like(t)
    for p, tau in params.terms:
        loss = loss + p * (1.0 - np.exp(-t / tau))
    return params.E0 * (1.0 - loss)
