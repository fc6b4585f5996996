"""Device parameters and the derived effective magnon-qubit model.

Everything is in SI with angular frequencies in rad/s. The chain is

    ellipsoid geometry -> demagnetization factors -> (omega_m, xi)
    -> squeezing r -> Bogoliubov frame (omega_m', g_cm')
    -> cavity elimination (chi, omega_q', omega_m'', zeta)
    -> effective dissipation rates and thermal occupations.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field, replace
from typing import Optional

from scipy.constants import hbar, k as k_B

TWO_PI = 2 * math.pi
FN_LIMIT = 0.2  # large-detuning heuristic for |g/Delta|
STRONG_DRIVE_RATIO = 10.0


class PhysicsError(ValueError):
    """Inputs outside the regime where the model is defined."""


class InstabilityError(PhysicsError):
    """|xi| >= omega_m: the parametric term makes the magnon mode unstable."""


class SingularDetuningError(PhysicsError):
    """A detuning used in cavity elimination vanishes."""


class UnsupportedShapeError(PhysicsError):
    """Only prolate ellipsoids a >= b = c have the closed-form tensor."""


class ConsistencyWarning(UserWarning):
    """Directly specified values differ from the geometry-derived ones."""


@dataclass(frozen=True)
class EllipsoidGeometry:
    a: float
    b: float
    c: float

    def __post_init__(self):
        if min(self.a, self.b, self.c) <= 0:
            raise ValueError("ellipsoid semi-axes must be positive")

    @property
    def eccentricity(self) -> float:
        return math.sqrt(max(0.0, 1.0 - (self.c / self.a) ** 2))


@dataclass(frozen=True)
class MaterialParams:
    gamma0: float  # rad s^-1 T^-1
    mu0_Ms: float  # T
    B0: float  # T

    def __post_init__(self):
        if min(self.gamma0, self.mu0_Ms, self.B0) <= 0:
            raise ValueError("material parameters must be positive")


@dataclass(frozen=True)
class DeviceConfig:
    """Raw device inputs.

    The magnon frequency and parametric strength come either directly
    (``omega_m``/``xi``) or from ``geometry`` + ``material``. If both are
    present the direct values are used and a ConsistencyWarning reports the
    mismatch. ``omega_p`` defaults to the dressed qubit frequency.
    """

    omega_c: float
    omega_q: float
    g_cq: float
    g_cm: float
    omega_m: Optional[float] = None
    xi: Optional[float] = None
    geometry: Optional[EllipsoidGeometry] = None
    material: Optional[MaterialParams] = None
    kappa_m: float = 0.0
    gamma: float = 0.0
    gamma_phi: float = 0.0
    T: float = 0.0
    epsilon: float = 0.0
    omega_p: Optional[float] = None

    def __post_init__(self):
        for name in ("kappa_m", "gamma", "gamma_phi", "T", "epsilon"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative, got {getattr(self, name)}")
        direct = self.omega_m is not None
        derived = self.geometry is not None and self.material is not None
        if (self.geometry is None) != (self.material is None):
            raise ValueError("geometry and material must be given together")
        if not direct and not derived:
            raise ValueError("need omega_m (and optionally xi) or geometry + material")
        if not direct and self.xi is not None:
            raise ValueError("xi given without omega_m")

    def magnon_source(self) -> tuple[float, float]:
        """(omega_m, xi) actually used by the model."""
        if self.omega_m is not None:
            xi = 0.0 if self.xi is None else self.xi
            if self.geometry is not None:
                wm_g, xi_g = kittel_params(self.geometry, self.material)
                warnings.warn(
                    "direct omega_m/xi override geometry-derived values "
                    f"(geometry gives omega_m/2pi={wm_g / TWO_PI:.6g} Hz, xi/2pi={xi_g / TWO_PI:.6g} Hz)",
                    ConsistencyWarning,
                    stacklevel=2,
                )
            return float(self.omega_m), float(xi)
        return kittel_params(self.geometry, self.material)

    def with_noise(self, *, kappa_m=None, gamma=None, gamma_phi=None, T=None) -> DeviceConfig:
        upd = {k: v for k, v in dict(kappa_m=kappa_m, gamma=gamma, gamma_phi=gamma_phi, T=T).items()
               if v is not None}
        return replace(self, **upd)

    def noiseless(self) -> DeviceConfig:
        return replace(self, kappa_m=0.0, gamma=0.0, gamma_phi=0.0, T=0.0)


@dataclass(frozen=True)
class Validity:
    fn_max: float
    fn_ok: bool
    strong_drive_ok: bool
    zeta_ratio: float  # zeta / omega_m''

    @property
    def ok(self) -> bool:
        return self.fn_ok and self.strong_drive_ok


@dataclass(frozen=True)
class PhaseResiduals:
    """Distance of omega_p t1 from a multiple of 4 pi and of epsilon t1 from a multiple of 2 pi."""

    omega_p_turns: float  # omega_p t1 / 4pi
    omega_p_residual: float  # rad, in (-2pi, 2pi]
    epsilon_turns: float  # epsilon t1 / 2pi
    epsilon_residual: float  # rad, in (-pi, pi]


@dataclass(frozen=True)
class EffectiveModel:
    r: float
    mu: float
    nu: float
    omega_m: float
    xi: float
    omega_m_prime: float
    g_cm_prime: float
    omega_q_prime: float
    omega_m_dprime: float
    zeta: float
    chi: float
    mu_q: float
    nu_q: float
    mu_m: float
    nu_m: float
    kappa_m_prime: float
    kappa_m_dprime: float
    gamma_prime: float
    gamma_dprime: float
    nbar_m: float
    nbar_q: float
    nbar_c: float
    t1: float
    validity: Validity
    residuals: PhaseResiduals
    config: DeviceConfig = field(repr=False)

    @property
    def fn_coeffs(self) -> tuple[float, float, float, float]:
        return (self.mu_q, self.nu_q, self.mu_m, self.nu_m)

    @property
    def alpha_s(self) -> float:
        """In-frame displacement of one CD round of length t1."""
        return self.chi * self.t1 / 2

    def report(self) -> dict:
        """JSON-ready summary; frequencies also given in Hz (divided by 2 pi)."""
        out = {k: v for k, v in asdict(self).items() if k != "config"}
        out["validity"]["ok"] = self.validity.ok
        for name in ("omega_m", "xi", "omega_m_prime", "g_cm_prime", "omega_q_prime",
                     "omega_m_dprime", "zeta", "chi", "kappa_m_prime", "kappa_m_dprime",
                     "gamma_prime", "gamma_dprime"):
            out[name + "_hz"] = getattr(self, name) / TWO_PI
        return out


# ---------------------------------------------------------------------------

def demag_tensor(geom: EllipsoidGeometry) -> tuple[float, float, float]:
    """Demagnetization factors of a prolate ellipsoid a >= b = c."""
    if geom.a < geom.c or not math.isclose(geom.b, geom.c, rel_tol=1e-12):
        raise UnsupportedShapeError(f"closed form needs a >= b = c, got {geom}")
    e = geom.eccentricity
    if e < 0.05:
        # (1 - e^2) sum_j e^{2j}/(2j+3); avoids cancellation near the sphere
        s = sum(e ** (2 * j) / (2 * j + 3) for j in range(12))
        nx = (1 - e * e) * s
    else:
        nx = (1 - e * e) / (2 * e ** 3) * (2 * math.atanh(e) - 2 * e)
    ny = (1 - nx) / 2
    return nx, ny, 1 - nx - ny


def kittel_params(geom: EllipsoidGeometry, mat: MaterialParams) -> tuple[float, float]:
    nx, ny, nz = demag_tensor(geom)
    wm = mat.gamma0 * mat.B0 + mat.gamma0 * mat.mu0_Ms * (1 - 3 * nz) / 2
    xi = mat.gamma0 * mat.mu0_Ms * (nx - ny) / 2
    return wm, xi


def squeezing_r(omega_m: float, xi: float) -> float:
    if omega_m <= 0 or abs(xi) >= omega_m:
        raise InstabilityError(f"need |xi| < omega_m, got omega_m={omega_m:.6g}, xi={xi:.6g}")
    return 0.25 * math.log((omega_m + xi) / (omega_m - xi))


def bogoliubov_frame(omega_m: float, xi: float, g_cm: float) -> tuple[float, float]:
    r = squeezing_r(omega_m, xi)
    return (omega_m - xi) * math.exp(2 * r), g_cm * math.exp(-r)


@dataclass(frozen=True)
class Elimination:
    chi: float
    omega_q_prime: float
    omega_m_dprime: float
    zeta: float
    mu_q: float
    nu_q: float
    mu_m: float
    nu_m: float


def eliminate_cavity(omega_c: float, omega_q: float, g_cq: float,
                     omega_m_prime: float, g_cm_prime: float) -> Elimination:
    """Second-order elimination of the far-detuned cavity."""
    d_cq_m, d_cq_p = omega_c - omega_q, omega_c + omega_q
    d_cm_m, d_cm_p = omega_c - omega_m_prime, omega_c + omega_m_prime
    scale = max(abs(omega_c), abs(omega_q), abs(omega_m_prime))
    for name, d in (("omega_c - omega_q", d_cq_m), ("omega_c + omega_q", d_cq_p),
                    ("omega_c - omega_m'", d_cm_m), ("omega_c + omega_m'", d_cm_p)):
        if abs(d) <= 1e-12 * scale:
            raise SingularDetuningError(f"detuning {name} vanishes")
    chi = g_cq * g_cm_prime * (1 / d_cq_m + 1 / d_cq_p + 1 / d_cm_m + 1 / d_cm_p) / 2
    wq_p = omega_q - g_cq ** 2 * (1 / d_cq_m - 1 / d_cq_p) / 2
    zeta = g_cm_prime ** 2 * (1 / d_cm_m + 1 / d_cm_p) / 2
    return Elimination(
        chi=chi,
        omega_q_prime=wq_p,
        omega_m_dprime=omega_m_prime - 2 * zeta,
        zeta=zeta,
        mu_q=g_cq / d_cq_p,
        nu_q=g_cq / d_cq_m,
        mu_m=g_cm_prime / d_cm_p,
        nu_m=g_cm_prime / d_cm_m,
    )


def bose_einstein(omega: float, T: float) -> float:
    if T <= 0:
        return 0.0
    x = hbar * omega / (k_B * T)
    if x > 700:
        return 0.0
    return 1.0 / math.expm1(x)


def effective_rates(kappa_m, gamma, gamma_phi, r, nbar_m, nbar_q) -> tuple[float, float, float, float]:
    """(kappa_m', kappa_m'', gamma', gamma'') for the squeezed-frame master equation."""
    mu2, nu2 = math.cosh(r) ** 2, math.sinh(r) ** 2
    kp = kappa_m * ((nbar_m + 1) * mu2 + nbar_m * nu2)
    kpp = kappa_m * ((nbar_m + 1) * nu2 + nbar_m * mu2)
    gp = gamma * (2 * nbar_q + 1) / 4
    gpp = (gamma * (2 * nbar_q + 1) + 2 * gamma_phi) / 4
    return kp, kpp, gp, gpp


def half_lattice_time(chi: float, r: float) -> float:
    if chi <= 0:
        raise PhysicsError(f"half-lattice time needs chi > 0, got {chi}")
    return math.sqrt(TWO_PI) * math.exp(r) / chi


def _centered(x: float, period: float) -> float:
    return x - period * round(x / period)


def phase_residuals(omega_p: float, epsilon: float, t: float) -> PhaseResiduals:
    return PhaseResiduals(
        omega_p_turns=omega_p * t / (2 * TWO_PI),
        omega_p_residual=_centered(omega_p * t, 2 * TWO_PI),
        epsilon_turns=epsilon * t / TWO_PI,
        epsilon_residual=_centered(epsilon * t, TWO_PI),
    )


def derive_model(cfg: DeviceConfig) -> EffectiveModel:
    omega_m, xi = cfg.magnon_source()
    r = squeezing_r(omega_m, xi)
    wm_p, g_p = bogoliubov_frame(omega_m, xi, cfg.g_cm)
    el = eliminate_cavity(cfg.omega_c, cfg.omega_q, cfg.g_cq, wm_p, g_p)
    nbar_m = bose_einstein(omega_m, cfg.T)
    nbar_q = bose_einstein(cfg.omega_q, cfg.T)
    nbar_c = bose_einstein(cfg.omega_c, cfg.T)
    kp, kpp, gp, gpp = effective_rates(cfg.kappa_m, cfg.gamma, cfg.gamma_phi, r, nbar_m, nbar_q)
    t1 = half_lattice_time(el.chi, r)
    fn_max = max(abs(el.mu_q), abs(el.nu_q), abs(el.mu_m), abs(el.nu_m))
    validity = Validity(
        fn_max=fn_max,
        fn_ok=fn_max < FN_LIMIT,
        strong_drive_ok=2 * cfg.epsilon > STRONG_DRIVE_RATIO * abs(el.chi) / 2,
        zeta_ratio=el.zeta / el.omega_m_dprime,
    )
    omega_p = el.omega_q_prime if cfg.omega_p is None else cfg.omega_p
    return EffectiveModel(
        r=r, mu=math.cosh(r), nu=math.sinh(r),
        omega_m=omega_m, xi=xi,
        omega_m_prime=wm_p, g_cm_prime=g_p,
        omega_q_prime=el.omega_q_prime, omega_m_dprime=el.omega_m_dprime,
        zeta=el.zeta, chi=el.chi,
        mu_q=el.mu_q, nu_q=el.nu_q, mu_m=el.mu_m, nu_m=el.nu_m,
        kappa_m_prime=kp, kappa_m_dprime=kpp, gamma_prime=gp, gamma_dprime=gpp,
        nbar_m=nbar_m, nbar_q=nbar_q, nbar_c=nbar_c,
        t1=t1, validity=validity,
        residuals=phase_residuals(omega_p, cfg.epsilon, t1),
        config=cfg,
    )


def reference_device(noise: bool = True) -> DeviceConfig:
    """The reference device with its operating-point noise (kappa_m = 5 gamma, 10 mK)."""
    gamma = TWO_PI * 2e3
    cfg = DeviceConfig(
        omega_c=TWO_PI * 5.127e9,
        omega_q=TWO_PI * 4.790e9,
        omega_m=TWO_PI * 18.016e9,
        xi=TWO_PI * 17.368e9,
        g_cq=TWO_PI * 65e6,
        g_cm=TWO_PI * 103e6,
        kappa_m=5 * gamma,
        gamma=gamma,
        gamma_phi=gamma,
        T=10e-3,
        epsilon=TWO_PI * 55.63e6,
        omega_p=TWO_PI * 4.784e9,
    )
    return cfg if noise else cfg.noiseless()
