"""Indentation analysis and the reduced indentation forward model.

Units: load in mN, depth in nm, time in s, moduli and hardness in GPa.
One mN/nm^2 is 1e6 GPa, hence the ``_GPA`` factor below.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import curve_fit

from .constitutive import MaterialParams, integrate_stress_history
from .errors import (
    CorrectionInvalidError,
    InvalidGeometryError,
    InvalidInputError,
    NoseDetectedError,
    TipStifferError,
)

_GPA = 1e6  # mN/nm^2 -> GPa

EPS_BERKOVICH = 0.75
EPS_CONE = 2.0 * (math.pi - 2.0) / math.pi
BETA_BERKOVICH = 1.034
BERKOVICH_CONE_ANGLE = 70.3
DIAMOND_E = 1141.0
DIAMOND_NU = 0.07

CSV_HEADER = "t_s,P_mN,h_nm"


# ---------------------------------------------------------------------------
# Data types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LoadSchedule:
    """Load-controlled triangular or trapezoidal indentation profile."""

    profile: str = "triangular"
    P_max: float = 1.0
    t_load: float = 30.0
    t_hold: float = 0.0
    t_unload: float = 30.0
    n_samples: int = 100

    def __post_init__(self):
        if self.profile not in ("triangular", "trapezoidal"):
            raise InvalidInputError(f"unknown load profile {self.profile!r}")
        if not (self.P_max > 0 and self.t_load > 0 and self.t_unload > 0 and self.t_hold >= 0):
            raise InvalidInputError("schedule needs P_max, t_load, t_unload > 0 and t_hold >= 0")
        if self.profile == "triangular" and self.t_hold != 0:
            raise InvalidInputError("triangular profile has no hold segment")
        if self.profile == "trapezoidal" and self.t_hold <= 0:
            raise InvalidInputError("trapezoidal profile needs t_hold > 0")
        if self.n_samples < 3:
            raise InvalidInputError("n_samples must be at least 3")

    @classmethod
    def triangular(cls, P_max, t_ramp, n_samples=100):
        return cls("triangular", P_max, t_ramp, 0.0, t_ramp, n_samples)

    @property
    def duration(self):
        return self.t_load + self.t_hold + self.t_unload

    @property
    def unload_rate(self):
        return self.P_max / self.t_unload

    def segment_counts(self):
        """Number of sampling intervals per segment (load, hold, unload)."""
        n = self.n_samples - 1
        durations = np.array([self.t_load, self.t_hold, self.t_unload])
        active = durations > 0
        if n < active.sum():
            raise InvalidInputError("too few samples for the active segments")
        counts = np.where(active, 1, 0)
        remaining = n - counts.sum()
        share = durations / durations.sum() * remaining
        extra = np.floor(share).astype(int)
        counts += extra
        leftover = n - counts.sum()
        order = np.argsort(-(share - extra), kind="stable")
        for i in order[:leftover]:
            counts[i] += 1
        return tuple(int(c) for c in counts)

    def sample_times(self):
        k_load, k_hold, k_unload = self.segment_counts()
        t1 = self.t_load
        t2 = t1 + self.t_hold
        parts = [np.linspace(0.0, t1, k_load + 1)]
        if k_hold:
            parts.append(np.linspace(t1, t2, k_hold + 1)[1:])
        parts.append(np.linspace(t2, t2 + self.t_unload, k_unload + 1)[1:])
        return np.concatenate(parts)

    def load_at(self, t):
        t = np.asarray(t, dtype=float)
        t1 = self.t_load
        t2 = t1 + self.t_hold
        P = np.where(
            t <= t1,
            self.P_max * t / t1,
            np.where(t <= t2, self.P_max, self.P_max * (1.0 - (t - t2) / self.t_unload)),
        )
        return np.clip(P, 0.0, self.P_max)


@dataclass(frozen=True)
class LDCurve:
    """Ordered (time, load, displacement) samples."""

    t: np.ndarray
    P: np.ndarray
    h: np.ndarray

    def __post_init__(self):
        t, P, h = (np.asarray(a, dtype=float) for a in (self.t, self.P, self.h))
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "h", h)
        if not (t.ndim == P.ndim == h.ndim == 1 and len(t) == len(P) == len(h)):
            raise InvalidInputError("t, P, h must be 1-D arrays of equal length")
        if len(t) < 2:
            raise InvalidInputError("curve needs at least two samples")
        if not np.all(np.isfinite(t) & np.isfinite(P) & np.isfinite(h)):
            raise InvalidInputError("curve contains non-finite samples")
        if np.any(np.diff(t) <= 0):
            raise InvalidInputError("time must be strictly increasing")
        if np.any(P < 0):
            raise InvalidInputError("load must be non-negative")
        if P[0] != 0.0 or h[0] != 0.0:
            raise InvalidInputError("curve must start at P = 0, h = 0")

    def __len__(self):
        return len(self.t)

    @property
    def unload_start(self):
        """Index of the first unloading sample (last sample at peak load)."""
        return int(len(self.P) - 1 - np.argmax(self.P[::-1]))

    @property
    def h_max(self):
        return float(self.h[self.unload_start])

    @property
    def P_max(self):
        return float(self.P[self.unload_start])

    @property
    def residual_depth(self):
        return float(self.h[-1])

    def to_csv(self, path=None, comments=()):
        buf = io.StringIO(newline="")
        for line in comments:
            buf.write(f"# {line}\n")
        buf.write(CSV_HEADER + "\n")
        for row in zip(self.t, self.P, self.h):
            buf.write(",".join(repr(float(v)) for v in row) + "\n")
        text = buf.getvalue()
        if path is not None:
            write_text_atomic(path, text)
        return text

    @classmethod
    def from_csv(cls, path_or_text):
        if isinstance(path_or_text, (str, Path)) and Path(str(path_or_text)).exists():
            text = Path(path_or_text).read_text(encoding="utf-8")
        else:
            text = str(path_or_text)
        lines = [ln for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
        if not lines or lines[0].strip() != CSV_HEADER:
            raise InvalidInputError(f"expected header {CSV_HEADER!r}")
        data = np.array([[float(x) for x in ln.split(",")] for ln in lines[1:]], dtype=float)
        if data.ndim != 2 or data.shape[1] != 3:
            raise InvalidInputError("every row needs three comma-separated values")
        return cls(data[:, 0], data[:, 1], data[:, 2])


def write_text_atomic(path, text):
    """Write via a temporary sibling and rename."""
    path = Path(path)
    tmp = path.with_name(f".{path.name}.tmp")
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    tmp.replace(path)


@dataclass(frozen=True)
class AreaFunction:
    """``A = c0 h^2 + c1 h + c2 h^0.5 + c3 h^0.25`` (nm^2 for h in nm)."""

    c0: float = 24.5
    c1: float = 0.0
    c2: float = 0.0
    c3: float = 0.0

    def __post_init__(self):
        if self.c0 <= 0:
            raise InvalidInputError("c0 must be positive")

    @classmethod
    def cone(cls, half_angle_deg):
        """Ideal cone: projected area ``pi tan^2(alpha) h_c^2``."""
        return cls(math.pi * math.tan(math.radians(half_angle_deg)) ** 2)

    def __call__(self, h_c):
        return contact_area(self, h_c)


@dataclass(frozen=True)
class OliverPharrResult:
    S: float
    h_c: float
    A: float
    H: float
    E_r: float
    E_s: float
    S_e: float | None = None


# ---------------------------------------------------------------------------
# Oliver-Pharr pieces
# ---------------------------------------------------------------------------

def contact_depth(h_max, P_max, S, eps_geom=EPS_BERKOVICH):
    if not (S > 0 and h_max > 0):
        raise InvalidInputError("need S > 0 and h_max > 0")
    h_c = h_max - eps_geom * P_max / S
    if h_c <= 0:
        raise InvalidGeometryError(f"contact depth {h_c:g} nm is not positive; stiffness fit is suspect")
    return h_c


def contact_area(af: AreaFunction, h_c):
    h_c = np.asarray(h_c, dtype=float)
    if np.any(h_c <= 0):
        raise InvalidInputError("contact depth must be positive")
    A = af.c0 * h_c ** 2 + af.c1 * h_c + af.c2 * h_c ** 0.5 + af.c3 * h_c ** 0.25
    return float(A) if A.ndim == 0 else A


def hardness(P_max, A):
    if A <= 0:
        raise InvalidInputError("area must be positive")
    return P_max / A * _GPA


def reduced_modulus(S, A, beta=BETA_BERKOVICH):
    if not (S > 0 and A > 0):
        raise InvalidInputError("need S > 0 and A > 0")
    return (1.0 / beta) * (math.sqrt(math.pi) / 2.0) * S / math.sqrt(A) * _GPA


def sample_modulus(E_r, E_i=DIAMOND_E, nu_i=DIAMOND_NU, nu_s=0.3):
    tip = 0.0 if math.isinf(E_i) else (1.0 - nu_i ** 2) / E_i
    denom = 1.0 / E_r - tip
    if denom <= 0:
        raise TipStifferError(f"1/E_r - (1-nu_i^2)/E_i = {denom:g} <= 0; measurement stiffer than the tip allows")
    return (1.0 - nu_s ** 2) / denom


def ngan_corrected_stiffness(S, dh_dt_end_of_hold, unload_rate):
    """Creep-corrected stiffness ``1/S_e = 1/S + (dh/dt)/v_P``."""
    if unload_rate <= 0:
        raise InvalidInputError("unloading rate must be positive")
    inv = 1.0 / S + dh_dt_end_of_hold / unload_rate
    if inv <= 0:
        raise CorrectionInvalidError("corrected compliance is not positive")
    return 1.0 / inv


def _power_law(h, k, h_f, m):
    return k * np.clip(h - h_f, 0.0, None) ** m


def unloading_stiffness(curve: LDCurve, fit_fraction=0.5):
    """Slope dP/dh at the onset of unloading from a power-law fit.

    Fits ``P = k (h - h_f)**m`` to unloading samples with
    ``P >= (1 - fit_fraction) * P_max``.
    """
    if not 0 < fit_fraction <= 1:
        raise InvalidInputError("fit_fraction must lie in (0, 1]")
    i0 = curve.unload_start
    P_max, h_max = curve.P_max, curve.h_max
    P = curve.P[i0:]
    h = curve.h[i0:]
    if len(P) < 2:
        raise InvalidInputError("curve has no unloading segment")
    keep = P >= (1.0 - fit_fraction) * P_max - 1e-12 * P_max
    P, h = P[keep], h[keep]
    if len(P) < 2:
        raise InvalidInputError("fit window holds fewer than two samples")
    if np.any(np.diff(h) > 0):
        raise NoseDetectedError("displacement increases during unloading")
    slope, _ = np.polyfit(h, P, 1)
    if not slope > 0:
        raise NoseDetectedError(f"fitted unloading slope {slope:g} mN/nm is not positive")
    if len(P) < 4:
        return float(slope)
    # an exactly straight window needs no power law
    if np.max(np.abs(np.polyval(np.polyfit(h, P, 1), h) - P)) <= 1e-12 * P_max:
        return float(slope)
    h_f0 = h_max - P_max / slope
    lo_hf = -np.inf
    hi_hf = float(h.min()) - 1e-9 * max(abs(h_max), 1.0)
    p0 = [P_max / max(h_max - h_f0, 1e-12), min(h_f0, hi_hf - 1e-9), 1.0]
    try:
        (k, h_f, m), _ = curve_fit(
            _power_law, h, P, p0=p0, bounds=([0.0, lo_hf, 0.5], [np.inf, hi_hf, 6.0]), maxfev=20000,
            x_scale="jac", ftol=1e-15, xtol=1e-15, gtol=1e-15,
        )
    except RuntimeError:
        return float(slope)
    S = k * m * (h_max - h_f) ** (m - 1.0)
    if not S > 0:
        raise NoseDetectedError(f"fitted unloading slope {S:g} mN/nm is not positive")
    return float(S)


def hold_creep_rate(curve: LDCurve, window_fraction=0.2):
    """Displacement rate over the final part of the hold segment (nm/s)."""
    i_end = curve.unload_start
    at_peak = np.flatnonzero(curve.P == curve.P_max)
    i_start = int(at_peak[0])
    if i_end - i_start < 1:
        raise InvalidInputError("curve has no hold segment")
    n = max(2, int(math.ceil(window_fraction * (i_end - i_start + 1))))
    sl = slice(i_end - n + 1, i_end + 1)
    return float(np.polyfit(curve.t[sl], curve.h[sl], 1)[0])


def initial_unload_rate(curve: LDCurve, n_points=3):
    i0 = curve.unload_start
    sl = slice(i0, min(i0 + n_points, len(curve)))
    if sl.stop - sl.start < 2:
        raise InvalidInputError("curve has no unloading segment")
    return float(-np.polyfit(curve.t[sl], curve.P[sl], 1)[0])


def oliver_pharr(curve: LDCurve, area: AreaFunction = AreaFunction(), *, eps_geom=EPS_BERKOVICH,
                 beta=BETA_BERKOVICH, E_i=DIAMOND_E, nu_i=DIAMOND_NU, nu_s=0.3, fit_fraction=0.5,
                 ngan=False):
    """Full Oliver-Pharr analysis, optionally with the Ngan creep correction.

    When ``ngan`` is set, the corrected stiffness replaces ``S`` in the
    contact depth and modulus; the raw ``S`` is still reported.
    """
    S = unloading_stiffness(curve, fit_fraction)
    S_e = None
    S_used = S
    if ngan:
        S_e = ngan_corrected_stiffness(S, hold_creep_rate(curve), initial_unload_rate(curve))
        S_used = S_e
    h_c = contact_depth(curve.h_max, curve.P_max, S_used, eps_geom)
    A = contact_area(area, h_c)
    H = hardness(curve.P_max, A)
    E_r = reduced_modulus(S_used, A, beta)
    E_s = sample_modulus(E_r, E_i, nu_i, nu_s)
    return OliverPharrResult(S, h_c, A, H, E_r, E_s, S_e)


# ---------------------------------------------------------------------------
# Curve generators
# ---------------------------------------------------------------------------

def sneddon_conical_curve(E_s, nu_s, half_angle, schedule: LoadSchedule, E_i=math.inf, nu_i=DIAMOND_NU):
    """Elastic cone indentation: ``P = (2/pi) E_r tan(alpha) h^2``."""
    if not 0 < half_angle < 90:
        raise InvalidInputError("half angle must lie in (0, 90) degrees")
    E_r = 1.0 / ((1 - nu_s ** 2) / E_s + (0.0 if math.isinf(E_i) else (1 - nu_i ** 2) / E_i))
    t = schedule.sample_times()
    P = schedule.load_at(t)
    h = np.sqrt(P * _GPA * math.pi / (2.0 * E_r * math.tan(math.radians(half_angle))))
    return LDCurve(t, P, h)


def sneddon_depth(P, E_r, half_angle=BERKOVICH_CONE_ANGLE):
    return math.sqrt(P * _GPA * math.pi / (2.0 * E_r * math.tan(math.radians(half_angle))))


@dataclass(frozen=True)
class ForwardConfig:
    """Scales of the reduced forward model.

    Uniaxial stress ``sigma = P / A_rep`` drives a material point and the
    depth is ``h = L_rep * eps_xx``.  ``max_dt`` bounds the integration
    sub-step.
    """

    A_rep: float
    L_rep: float
    half_angle: float = BERKOVICH_CONE_ANGLE
    max_dt: float = 0.05

    def __post_init__(self):
        if not (self.A_rep > 0 and self.L_rep > 0 and self.max_dt > 0):
            raise InvalidInputError("A_rep, L_rep and max_dt must be positive")

    @classmethod
    def calibrated(cls, E_ref=3.28, nu_ref=0.34, P_ref=1.0, half_angle=BERKOVICH_CONE_ANGLE, max_dt=0.05):
        """Freeze scales so the elastic limit hits the Sneddon depth at ``P_ref``.

        ``A_rep`` is the cone's projected contact area at the Sneddon
        depth; ``L_rep`` then makes ``L_rep * sigma / E`` equal that depth.
        """
        h_ref = sneddon_depth(P_ref, E_ref / (1 - nu_ref ** 2), half_angle)
        A_rep = math.pi * math.tan(math.radians(half_angle)) ** 2 * h_ref ** 2
        sigma_ref = P_ref / A_rep * _GPA
        L_rep = h_ref * E_ref / sigma_ref
        return cls(A_rep, L_rep, half_angle, max_dt)


DEFAULT_FORWARD = ForwardConfig.calibrated()


def _substep_grid(sample_t, max_dt):
    """Fine time grid containing every sample time; returns (grid, sample index)."""
    pieces = [sample_t[:1]]
    idx = [0]
    for a, b in zip(sample_t[:-1], sample_t[1:]):
        n = max(1, int(math.ceil((b - a) / max_dt - 1e-9)))
        pieces.append(np.linspace(a, b, n + 1)[1:])
        idx.append(idx[-1] + n)
    return np.concatenate(pieces), np.array(idx)


def forward_depths(params: MaterialParams, schedule: LoadSchedule, cfg: ForwardConfig = DEFAULT_FORWARD):
    """Depth at every schedule sample; batched over array-valued params.

    Returns an array of shape ``batch + (n_samples,)``.
    """
    t_samples = schedule.sample_times()
    grid, idx = _substep_grid(t_samples, cfg.max_dt)
    sigma_xx = schedule.load_at(grid) / cfg.A_rep * _GPA
    stresses = np.zeros((len(grid), 6))
    stresses[:, 0] = sigma_xx
    eps = integrate_stress_history(params, grid, stresses, record=idx)
    return cfg.L_rep * eps[..., 0]


def forward_indentation(params: MaterialParams, schedule: LoadSchedule, cfg: ForwardConfig = DEFAULT_FORWARD):
    t = schedule.sample_times()
    h = forward_depths(params, schedule, cfg)
    return LDCurve(t, schedule.load_at(t), h)
