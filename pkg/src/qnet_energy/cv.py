"""Asymptotic secret key rates for continuous-variable protocols.

Covers Gaussian-modulated coherent states, M-PSK constellations and the
multi-Bob conference-key model, all under reverse reconciliation with a
trusted-noise detector. Noise is in shot-noise units; excess noise is
referenced at the channel input.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, NamedTuple, Union

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import gammaln, logsumexp

from .dv import RateResult
from .errors import NumericalDomainError, ValidationError

DETECTIONS = ("homodyne", "heterodyne")

EIG_TOL = 1e-9
IMAG_TOL = 1e-10
# PSK weights below this are recomputed from their exact power series
_SERIES_SWITCH = 1e-6


def _in_unit(name: str, value: float, *, open_low: bool = True) -> None:
    ok = (0.0 < value <= 1.0) if open_low else (0.0 <= value <= 1.0)
    if not ok:
        raise ValidationError(f"{name} out of range: {value}")


@dataclass(frozen=True)
class CvParams:
    v_a: float
    transmittance: float
    excess_noise: float = 0.01
    p_det: float = 0.7
    v_el: float = 0.005
    beta: float = 0.95
    detection: str = "homodyne"
    r_source_Hz: float = 100e6

    def __post_init__(self) -> None:
        if not self.v_a >= 0:
            raise ValidationError(f"v_a must be non-negative, got {self.v_a}")
        _in_unit("transmittance", self.transmittance)
        _in_unit("p_det", self.p_det)
        _in_unit("beta", self.beta)
        if not self.excess_noise >= 0:
            raise ValidationError("excess_noise must be non-negative")
        if not self.v_el >= 0:
            raise ValidationError("v_el must be non-negative")
        if self.detection not in DETECTIONS:
            raise ValidationError(f"detection must be one of {DETECTIONS}, got {self.detection!r}")
        if not self.r_source_Hz > 0:
            raise ValidationError("r_source_Hz must be positive")


@dataclass(frozen=True)
class PskParams:
    base: CvParams
    m: int = 4

    def __post_init__(self) -> None:
        if int(self.m) != self.m or self.m < 2:
            raise ValidationError(f"constellation size must be an integer >= 2, got {self.m}")

    @property
    def alpha_sq(self) -> float:
        return self.base.v_a / 2.0


@dataclass(frozen=True)
class CkaCvParams:
    m_mod: float
    n: int
    transmittance: float
    p_det: float = 0.7
    v_el: float = 0.005
    beta: float = 0.95
    r_source_Hz: float = 100e6

    def __post_init__(self) -> None:
        if not self.m_mod > 1:
            raise ValidationError(f"m_mod must exceed 1, got {self.m_mod}")
        if int(self.n) != self.n or self.n < 2:
            raise ValidationError(f"party count must be an integer >= 2, got {self.n}")
        _in_unit("transmittance", self.transmittance)
        _in_unit("p_det", self.p_det)
        _in_unit("beta", self.beta)
        if not self.v_el >= 0:
            raise ValidationError("v_el must be non-negative")
        if not self.r_source_Hz > 0:
            raise ValidationError("r_source_Hz must be positive")

    @property
    def delta(self) -> float:
        return (1.0 - self.p_det + self.v_el) / self.p_det

    @property
    def omega(self) -> float:
        return 2.0 * self.delta + 1.0


@dataclass(frozen=True)
class CvHolevoIntermediates:
    chi_line: float = math.nan
    chi_det: float = math.nan
    chi_tot: float = math.nan
    a: float = math.nan
    b: float = math.nan
    c: float = math.nan
    d: float = math.nan
    lambdas: tuple[float, ...] = field(default_factory=tuple)
    v: float = math.nan
    w: float = math.nan
    z: float = math.nan


def g_function(x: float) -> float:
    """Von Neumann entropy of a thermal state with mean photon number x."""
    if x < 0:
        raise NumericalDomainError(f"G is undefined for negative argument {x}")
    if x == 0:
        return 0.0
    return (x + 1.0) * math.log2(x + 1.0) - x * math.log2(x)


def _g_eig(lam: float) -> float:
    """G((lam-1)/2) for a symplectic eigenvalue, tolerating round-off just below 1."""
    if lam < 1.0 - EIG_TOL:
        raise NumericalDomainError(f"unphysical symplectic eigenvalue {lam}")
    return g_function(max(0.0, (lam - 1.0) / 2.0))


def _sqrt_nonneg(value: float, what: str, scale: float = 1.0) -> float:
    if value < 0:
        if value < -EIG_TOL * max(1.0, abs(scale)):
            raise NumericalDomainError(f"negative {what}: {value}")
        return 0.0
    return math.sqrt(value)


_SPLIT_EPS = 4.0 * math.sqrt(np.finfo(float).eps)


def _eig_pair(s: float, p: float, what: str, disc: float | None = None) -> tuple[float, float]:
    """Roots l1 >= l2 of l^2 = (s +- sqrt(s^2 - 4p))/2, taking the small one as sqrt(p)/l1.

    ``disc`` may supply sqrt(s^2 - 4p) computed without cancellation.
    """
    supplied = disc
    if disc is None:
        disc = _sqrt_nonneg(s * s - 4.0 * p, f"{what} discriminant", s * s)
    big_sq = 0.5 * (s + disc)
    if big_sq <= 0:
        raise NumericalDomainError(f"non-positive {what} eigenvalue")
    big = math.sqrt(big_sq)
    small = math.sqrt(max(p, 0.0)) / big
    if supplied is None and small < 1.0:
        # a rounded discriminant only fixes the split of a near-degenerate pair to ~sqrt(eps) * s
        if small >= 1.0 - _SPLIT_EPS * s:
            small = 1.0
    return big, small


def mutual_information(p: CvParams) -> float:
    """Alice-Bob mutual information in bits per symbol (per quadrature pair for heterodyne)."""
    signal = p.p_det * p.transmittance * p.v_a
    noise_in = p.p_det * p.transmittance * p.excess_noise
    if p.detection == "homodyne":
        return 0.5 * math.log2(1.0 + signal / (1.0 + p.v_el + noise_in))
    return math.log2(1.0 + signal / (2.0 + 2.0 * p.v_el + noise_in))


def gaussian_holevo_bound(p: CvParams) -> tuple[float, CvHolevoIntermediates]:
    """Eve's Holevo information on Bob's data for Gaussian modulation."""
    t = p.transmittance
    v = p.v_a + 1.0
    chi_line = 1.0 / t - 1.0 + p.excess_noise
    if p.detection == "homodyne":
        chi_det = (1.0 - p.p_det + p.v_el) / p.p_det
    else:
        chi_det = (2.0 - p.p_det + 2.0 * p.v_el) / p.p_det
    chi_tot = chi_line + chi_det / t

    a = v * v * (1.0 - 2.0 * t) + 2.0 * t + t * t * (v + chi_line) ** 2
    b = t * t * (v * chi_line + 1.0) ** 2
    sb = math.sqrt(b)
    denom = t * (v + chi_tot)
    if p.detection == "homodyne":
        c = (a * chi_det + v * sb + t * (v + chi_line)) / denom
        d = sb * (v + sb * chi_det) / denom
    else:
        c = (
            a * chi_det**2
            + b
            + 1.0
            + 2.0 * chi_det * (v * sb + t * (v + chi_line))
            + 2.0 * t * (v * v - 1.0)
        ) / denom**2
        d = ((v + sb * chi_det) / denom) ** 2

    # a^2 - 4b = (v - w)^2 ((v + w)^2 - 4 z^2) with w = t (v + chi_line), z^2 = t (v^2 - 1);
    # v - w is formed directly so near-degenerate pairs keep full precision
    w = t * (v + chi_line)
    v_minus_w = (1.0 - t) * p.v_a - t * p.excess_noise
    spread = _sqrt_nonneg((v + w) ** 2 - 4.0 * t * (v * v - 1.0), "pre-measurement spread", (v + w) ** 2)
    l1, l2 = _eig_pair(a, b, "pre-measurement", abs(v_minus_w) * spread)
    l3, l4 = _eig_pair(c, d, "conditional")
    lambdas = (l1, l2, l3, l4, 1.0)
    chi = _g_eig(l1) + _g_eig(l2) - _g_eig(l3) - _g_eig(l4)
    inter = CvHolevoIntermediates(
        chi_line=chi_line,
        chi_det=chi_det,
        chi_tot=chi_tot,
        a=a,
        b=b,
        c=c,
        d=d,
        lambdas=lambdas,
        v=v,
        w=w,
        z=math.sqrt(t * (v * v - 1.0)),
    )
    return max(chi, 0.0), inter


def _key_result(beta: float, i_ab: float, chi: float, rate_hz: float) -> RateResult:
    k = max(0.0, beta * i_ab - chi)
    return RateResult(raw_per_use=max(i_ab, 0.0), secret_per_use=k, secret_bps=k * rate_hz)


def gaussian_skr(p: CvParams) -> RateResult:
    i_ab = mutual_information(p)
    if p.v_a == 0:
        return _key_result(p.beta, i_ab, 0.0, p.r_source_Hz)
    chi, _ = gaussian_holevo_bound(p)
    return _key_result(p.beta, i_ab, chi, p.r_source_Hz)


# --- M-PSK -------------------------------------------------------------------


def psk_log_weights(alpha_sq: float, m: int) -> np.ndarray:
    """log of e^{-a^2} nu_k for k = 0..m-1.

    The weights are the probabilities that a coherent-state mixture of the
    constellation has photon number congruent to k mod m. They are evaluated
    as a complex discrete Fourier sum; weights too small to survive
    cancellation are replaced by their exact series.
    """
    if alpha_sq < 0:
        raise ValidationError("alpha_sq must be non-negative")
    if alpha_sq == 0:
        out = np.full(m, -np.inf)
        out[0] = 0.0
        return out
    j = np.arange(m)
    phase = np.exp(2j * np.pi * j / m)
    # scaled by e^{-a^2} so every summand has modulus <= 1
    terms = np.exp(alpha_sq * (phase - 1.0))
    kernel = np.exp(-2j * np.pi * np.outer(j, j) / m)
    weights = kernel @ terms / m
    if np.max(np.abs(weights.imag)) > IMAG_TOL:
        raise NumericalDomainError(
            f"PSK weights have imaginary part {np.max(np.abs(weights.imag)):.3e}"
        )
    logs = np.empty(m)
    for k in range(m):
        re = weights.real[k]
        logs[k] = math.log(re) if re > _SERIES_SWITCH else _log_weight_series(alpha_sq, m, k)
    return logs


def _log_weight_series(alpha_sq: float, m: int, k: int) -> float:
    # e^{-a^2} sum_{n = k mod m} a^{2n}/n!
    n_max = int(alpha_sq + 12.0 * math.sqrt(alpha_sq) + 60.0) + m
    n = np.arange(k, n_max + 1, m, dtype=float)
    return float(-alpha_sq + logsumexp(n * math.log(alpha_sq) - gammaln(n + 1.0)))


def psk_correlation(alpha_sq: float, m: int, transmittance: float, excess_noise: float) -> float:
    """Cross-correlation Z of the M-PSK entangled-equivalent state through a lossy noisy channel."""
    if alpha_sq == 0:
        return 0.0
    lw = psk_log_weights(alpha_sq, m)
    nxt = np.roll(lw, -1)
    s1 = float(np.sum(np.exp(1.5 * lw - 0.5 * nxt)))
    s2 = float(np.sum(np.exp(2.0 * lw - nxt)))
    inner = _sqrt_nonneg(s2 - s1 * s1, "PSK variance term", s2)
    return math.sqrt(transmittance) * (
        2.0 * alpha_sq * s1 - math.sqrt(2.0 * excess_noise * alpha_sq) * inner
    )


def symplectic_eigenvalues(gamma: np.ndarray) -> np.ndarray:
    """Symplectic spectrum of a covariance matrix in (x1, p1, x2, p2, ...) ordering, descending."""
    gamma = np.asarray(gamma, dtype=float)
    n = gamma.shape[0] // 2
    omega = np.kron(np.eye(n), np.array([[0.0, 1.0], [-1.0, 0.0]]))
    w, u = np.linalg.eigh(gamma)
    if w.min() <= 0:
        raise NumericalDomainError("covariance matrix is not positive definite")
    root = (u * np.sqrt(w)) @ u.T
    # gamma^(1/2) i Omega gamma^(1/2) is Hermitian with eigenvalues +-nu_k
    ev = np.linalg.eigvalsh(root @ (1j * omega) @ root)
    return np.sort(np.abs(ev))[::-1][::2]


def _two_mode(v: float, w: float, z: float) -> np.ndarray:
    sz = np.diag([1.0, -1.0])
    return np.block([[v * np.eye(2), z * sz], [z * sz, w * np.eye(2)]])


# p_det is capped here when electronic noise must be purified by a finite thermal mode
_MAX_NOISY_PDET = 1.0 - 1e-7


def trusted_detection_holevo(
    gamma_ab: np.ndarray, p_det: float, v_el: float, detection: str
) -> tuple[float, tuple[float, ...]]:
    """Holevo information for reverse reconciliation with a trusted noisy detector.

    ``gamma_ab`` is Alice-Bob's two-mode covariance at Bob's input. The
    detector is modelled as a beam splitter of transmission ``p_det`` whose
    other port carries one half of an EPR pair sized to reproduce the
    electronic noise; Eve's conditional entropy is that of Alice plus the
    detector modes after Bob's measurement.
    """
    gamma_ab = np.asarray(gamma_ab, dtype=float)
    l12 = tuple(float(x) for x in symplectic_eigenvalues(gamma_ab))
    noisy = v_el > 0 or p_det < 1.0
    if not noisy:
        g, x_idx, b_idx = gamma_ab, [0, 1], [2, 3]
    else:
        p = min(p_det, _MAX_NOISY_PDET) if v_el > 0 else p_det
        el = v_el if detection == "homodyne" else 2.0 * v_el
        v = 1.0 + el / (1.0 - p)
        eye, sz = np.eye(2), np.diag([1.0, -1.0])
        g = np.zeros((8, 8))
        g[:4, :4] = gamma_ab
        g[4:, 4:] = np.block([[v * eye, math.sqrt(v * v - 1.0) * sz], [math.sqrt(v * v - 1.0) * sz, v * eye]])
        s = np.eye(8)
        a, b = math.sqrt(p), math.sqrt(1.0 - p)
        s[2:4, 2:4], s[2:4, 4:6], s[4:6, 2:4], s[4:6, 4:6] = a * eye, b * eye, -b * eye, a * eye
        g = s @ g @ s.T
        x_idx, b_idx = [0, 1, 4, 5, 6, 7], [2, 3]
    gx = g[np.ix_(x_idx, x_idx)]
    gb = g[np.ix_(b_idx, b_idx)]
    cross = g[np.ix_(x_idx, b_idx)]
    if detection == "homodyne":
        cond = gx - cross @ np.diag([1.0 / gb[0, 0], 0.0]) @ cross.T
    else:
        cond = gx - cross @ np.linalg.inv(gb + np.eye(2)) @ cross.T
    l_cond = tuple(float(x) for x in symplectic_eigenvalues(cond))
    chi = sum(_g_eig(x) for x in l12) - sum(_g_eig(x) for x in l_cond)
    return chi, l12 + l_cond


def psk_holevo_bound(p: PskParams) -> tuple[float, CvHolevoIntermediates]:
    """Eve's Holevo information for an M-PSK constellation.

    The covariance at Bob's input is bounded with the Gaussian-extremal
    correlation Z; detector loss and electronic noise are trusted, exactly
    as in :func:`gaussian_holevo_bound`.
    """
    base = p.base
    t = base.transmittance
    v = base.v_a + 1.0
    w_in = 1.0 + t * base.v_a + t * base.excess_noise
    z = psk_correlation(p.alpha_sq, int(p.m), t, base.excess_noise)
    chi, lambdas = trusted_detection_holevo(_two_mode(v, w_in, z), base.p_det, base.v_el, base.detection)
    w_det = 1.0 + base.p_det * t * (base.v_a + base.excess_noise) + base.v_el
    inter = CvHolevoIntermediates(lambdas=lambdas, v=v, w=w_det, z=z)
    return max(chi, 0.0), inter


def psk_skr(p: PskParams) -> RateResult:
    i_ab = mutual_information(p.base)
    chi, _ = psk_holevo_bound(p)
    return _key_result(p.base.beta, i_ab, chi, p.base.r_source_Hz)


# --- conference key agreement -----------------------------------------------


@dataclass(frozen=True)
class CkaIntermediates:
    x: float
    y: float
    z_sq: float
    delta_diag: tuple[float, float]
    theta_diag: tuple[float, float]
    conditioned_diag: tuple[float, float]
    i_bb: float
    nu: float
    nu_n: float
    chi: float


def cka_intermediates(p: CkaCvParams) -> CkaIntermediates:
    n, mu, t, om = p.n, p.m_mod, p.transmittance, p.omega
    x = t * mu + (1.0 - t) * om
    y = mu
    z_sq = t * (mu * mu - 1.0)
    q = z_sq / (n * x)
    delta = np.diag([y - (n - 1) * q, y - q])
    theta = np.diag([q, -q])
    # homodyne on the first quadrature of one Bob: A - C (P B P)^+ C^T
    proj = np.diag([1.0, 0.0])
    cond = delta - theta @ np.linalg.pinv(proj @ delta @ proj) @ theta.T
    num = 1.0 + np.linalg.det(delta) + np.trace(delta)
    den = 1.0 + np.linalg.det(cond) + np.trace(cond)
    if num <= 0 or den <= 0:
        raise NumericalDomainError("non-positive argument in CKA mutual information")
    i_bb = 0.5 * math.log2(num / den)

    nu = _sqrt_nonneg(y * (y - z_sq / x), "CKA eigenvalue", y * y)
    lam = n * om * mu + t * (1.0 + (n - 1 - n * om) * mu)
    lam_b = n * om * mu + t * (n - 1 - (n * om - 1.0) * mu)
    tau = n * om * (1.0 - t) + t * (n - 1 + mu)
    tau_b = n * om * (1.0 - t) + t * ((n - 1) * mu + 1.0)
    ratio = (lam * lam_b) / (tau * tau_b)
    nu_n = _sqrt_nonneg(ratio, "CKA eigenvalue", 1.0)
    chi = 2.0 * _g_eig(nu) - _g_eig(nu_n)
    return CkaIntermediates(
        x=x,
        y=y,
        z_sq=z_sq,
        delta_diag=(float(delta[0, 0]), float(delta[1, 1])),
        theta_diag=(float(theta[0, 0]), float(theta[1, 1])),
        conditioned_diag=(float(cond[0, 0]), float(cond[1, 1])),
        i_bb=i_bb,
        nu=nu,
        nu_n=nu_n,
        chi=chi,
    )


def cv_cka_skr(p: CkaCvParams) -> RateResult:
    it = cka_intermediates(p)
    return _key_result(p.beta, it.i_bb, it.chi, p.r_source_Hz)


# --- modulation optimizer ----------------------------------------------------

AnyCvParams = Union[CvParams, PskParams, CkaCvParams]
DEFAULT_BRACKET = (0.01, 100.0)
DEFAULT_CKA_BRACKET = (1.001, 1000.0)


class ModulationOptimum(NamedTuple):
    v_a: float
    k: float
    boundary: bool


def modulation_of(p: AnyCvParams) -> float:
    if isinstance(p, PskParams):
        return p.base.v_a
    if isinstance(p, CkaCvParams):
        return p.m_mod
    return p.v_a


def with_modulation(p: AnyCvParams, value: float) -> AnyCvParams:
    if isinstance(p, PskParams):
        return replace(p, base=replace(p.base, v_a=value))
    if isinstance(p, CkaCvParams):
        return replace(p, m_mod=value)
    return replace(p, v_a=value)


def optimize_modulation(
    rate_fn: Callable[[AnyCvParams], RateResult],
    p: AnyCvParams,
    bracket: tuple[float, float] | None = None,
    n_grid: int = 200,
    rtol: float = 1e-4,
) -> ModulationOptimum:
    """Maximise the per-symbol key rate over the modulation strength.

    A log-spaced scan locates the best cell, then a bounded Brent search
    refines it. ``boundary`` is set when the optimum sits on a bracket edge.
    """
    if bracket is None:
        bracket = DEFAULT_CKA_BRACKET if isinstance(p, CkaCvParams) else DEFAULT_BRACKET
    lo, hi = float(bracket[0]), float(bracket[1])
    if not (lo > 0 and hi > lo):
        raise ValidationError(f"invalid modulation bracket {bracket}")

    def k_of(v: float) -> float:
        try:
            return rate_fn(with_modulation(p, v)).secret_per_use
        except NumericalDomainError:
            return 0.0

    grid = np.geomspace(lo, hi, n_grid)
    ks = np.array([k_of(v) for v in grid])
    i = int(np.argmax(ks))
    if ks[i] <= 0:
        return ModulationOptimum(lo, 0.0, True)
    a = grid[max(i - 1, 0)]
    b = grid[min(i + 1, n_grid - 1)]
    res = minimize_scalar(
        lambda v: -k_of(v), bounds=(a, b), method="bounded", options={"xatol": rtol * grid[i]}
    )
    v_best, k_best = float(grid[i]), float(ks[i])
    if res.success and -res.fun > k_best:
        v_best, k_best = float(res.x), float(-res.fun)
    # the grid includes both edges, so an edge optimum survives refinement
    boundary = abs(v_best - lo) <= 2 * rtol * lo or abs(v_best - hi) <= 2 * rtol * hi
    return ModulationOptimum(v_best, k_best, boundary)


def optimized_rate(
    rate_fn: Callable[[AnyCvParams], RateResult],
    p: AnyCvParams,
    bracket: tuple[float, float] | None = None,
) -> RateResult:
    opt = optimize_modulation(rate_fn, p, bracket)
    if opt.k <= 0:
        return RateResult(0.0, 0.0, 0.0)
    return rate_fn(with_modulation(p, opt.v_a))
