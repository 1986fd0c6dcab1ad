"""Detection chain: hologram projectors, coincidence tables, displacement
scans with their visibility, and the d = 3 CGLMP Bell value.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import optimize

from .errors import NotCorrelatedError, UndefinedQuantityError, UnsupportedDimensionError
from .states import NoisyState, PureBipartiteState, as_noisy

ROUTING_PROBABILITY = 1 / 3
# artifact defaults
PAIR_RATE = 1e5
INTEGRATION_TIME = 1.0
HOLOGRAM_SIGMA = 1e-3
OFFDIAGONAL_THRESHOLD = 0.05

# LG01 and LG02 scan visibilities before / after concentration
MEASURED_VISIBILITIES = {
    "initial": {1: 0.864, 2: 0.815},
    "concentrated": {1: 0.944, 2: 0.873},
}


@dataclass(frozen=True)
class Projector:
    """cos(theta)|0> + sin(theta) e^{i phi} ||l|>."""

    l_abs: int
    theta: float = math.pi / 2
    phi: float = 0.0

    def __post_init__(self):
        if self.l_abs < 0:
            raise ValueError(f"|l| must be non-negative, got {self.l_abs}")
        if not -1e-12 <= self.theta <= math.pi / 2 + 1e-12:
            raise ValueError(f"mixing angle must lie in [0, pi/2], got {self.theta}")

    @classmethod
    def mode(cls, l_abs: int) -> "Projector":
        """Projector onto the single mode ||l|>."""
        return cls(l_abs, 0.0 if l_abs == 0 else math.pi / 2, 0.0)

    def vector(self, d: int = 3) -> np.ndarray:
        if self.l_abs >= d:
            raise ValueError(f"|l| = {self.l_abs} outside a d={d} space")
        v = np.zeros(d, dtype=complex)
        if self.l_abs == 0:
            v[0] = 1.0
            return v
        # exact zero at theta = pi/2 keeps mode projectors orthogonal
        v[0] = 0.0 if self.theta == math.pi / 2 else math.cos(self.theta)
        v[self.l_abs] = math.sin(self.theta) * np.exp(1j * self.phi)
        return v


def gaussian_response(x: float, sigma_h: float) -> float:
    """Mixing angle of a hologram displaced by |x| from the beam axis."""
    return (math.pi / 2) * math.exp(-x * x / (2 * sigma_h * sigma_h))


def displacement_for_angle(theta: float, sigma_h: float) -> float:
    """Non-negative displacement at which `gaussian_response` equals theta."""
    if not 0 < theta <= math.pi / 2:
        raise ValueError("theta must lie in (0, pi/2]")
    return sigma_h * math.sqrt(2 * math.log(math.pi / (2 * theta)))


def projector_from_displacement(l_abs: int, x: float, sigma_h: float = HOLOGRAM_SIGMA,
                                response: Callable[[float, float], float] = gaussian_response,
                                theta_offset: float = 0.0) -> Projector:
    """Projector realized by a fork hologram shifted horizontally by x.

    Centred (x = 0) it selects ||l|> alone; far off axis it acts as a plain
    grating and selects |0>.  The relative phase stays 0 for x >= 0 and
    flips to pi on the other side of the dislocation.  `theta_offset` models
    an imperfect hologram.
    """
    if not sigma_h > 0:
        raise ValueError("sigma_h must be positive")
    theta = min(max(response(abs(x), sigma_h) + theta_offset, 0.0), math.pi / 2)
    return Projector(l_abs, theta, 0.0 if x >= 0 else math.pi)


@dataclass(frozen=True)
class DetectionModel:
    routing_probability: float = ROUTING_PROBABILITY
    efficiencies_a: tuple | None = None
    efficiencies_b: tuple | None = None
    pair_rate: float = PAIR_RATE
    integration_time: float = INTEGRATION_TIME
    rng_seed: int = 0

    def __post_init__(self):
        if not 0 < self.routing_probability <= 1:
            raise ValueError("routing probability must lie in (0, 1]")
        for eff in (self.efficiencies_a, self.efficiencies_b):
            if eff is not None and any(not 0 <= e <= 1 for e in eff):
                raise ValueError("detector efficiencies must lie in [0, 1]")
        if self.pair_rate < 0 or self.integration_time <= 0:
            raise ValueError("pair rate must be >= 0 and integration time > 0")

    def efficiency(self, arm: str, detector: int) -> float:
        eff = self.efficiencies_a if arm == "a" else self.efficiencies_b
        if eff is None:
            return 1.0
        if detector >= len(eff):
            raise ValueError(f"no efficiency given for detector {detector} on arm {arm}")
        return float(eff[detector])

    def rng(self) -> np.random.Generator:
        return np.random.default_rng(self.rng_seed)


def _pure_probability(state: NoisyState, pa: Projector, pb: Projector) -> float:
    d = state.d
    amp = pa.vector(d).conj() @ state.pure.amplitudes @ pb.vector(d).conj()
    return float(abs(amp) ** 2)


def coincidence_rate(state, pa: Projector, pb: Projector, dm: DetectionModel = DetectionModel()) -> float:
    """Expected coincidences per second between projector pa on A and pb on B."""
    state = as_noisy(state)
    eps = state.white_noise_fraction
    p = (1 - eps) * _pure_probability(state, pa, pb) + eps / state.d ** 2
    return (dm.pair_rate * dm.routing_probability ** 2 * dm.efficiency("a", pa.l_abs)
            * dm.efficiency("b", pb.l_abs) * p)


@dataclass(frozen=True)
class CoincidenceTable:
    """rates[i, j]: coincidences/s between mode detector i on A and j on B."""

    rates: np.ndarray
    integration_time: float = INTEGRATION_TIME

    @property
    def expected_counts(self) -> np.ndarray:
        return self.rates * self.integration_time

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        return rng.poisson(self.expected_counts)


def coincidence_table(state, dm: DetectionModel = DetectionModel()) -> CoincidenceTable:
    state = as_noisy(state)
    d = state.d
    rates = np.array([[coincidence_rate(state, Projector.mode(i), Projector.mode(j), dm)
                       for j in range(d)] for i in range(d)])
    return CoincidenceTable(rates, dm.integration_time)


def amplitudes_from_table(table, threshold: float = OFFDIAGONAL_THRESHOLD) -> PureBipartiteState:
    """Correlated state whose squared amplitudes are the normalized diagonal
    rates, all phases zero.

    `table` may be a CoincidenceTable or an array of rates or counts.
    """
    data = np.asarray(table.rates if isinstance(table, CoincidenceTable) else table, dtype=float)
    if data.ndim != 2 or data.shape[0] != data.shape[1]:
        raise ValueError("coincidence table must be square")
    total = data.sum()
    if total <= 0:
        raise UndefinedQuantityError("empty coincidence table")
    off = total - np.trace(data)
    if off / total > threshold:
        raise NotCorrelatedError(
            f"off-diagonal coincidences are {off / total:.1%} of the total (limit {threshold:.0%})")
    diag = np.clip(np.diag(data), 0, None)
    return PureBipartiteState.from_diagonal(np.sqrt(diag / diag.sum()))


@dataclass(frozen=True)
class ScanCurve:
    x: np.ndarray
    expected: np.ndarray
    counts: np.ndarray | None = None
    l_abs: int = 1
    label: str = ""


def balanced_projector(state, l_abs: int, sigma_h: float = HOLOGRAM_SIGMA) -> Projector:
    """Fixed displaced projector that leaves the other arm in an equal
    superposition of |0> and ||l|> (with a relative minus sign).

    It is realized by shifting the hologram to the negative side; for equal
    amplitudes the mixing angle is pi/4.
    """
    pure = as_noisy(state).pure
    c0, cl = abs(pure.amplitudes[0, 0]), abs(pure.amplitudes[l_abs, l_abs])
    theta = math.atan2(c0, cl) if c0 + cl > 0 else math.pi / 4
    if theta <= 0:
        return Projector(l_abs, math.pi / 2, math.pi)
    x = -displacement_for_angle(theta, sigma_h)
    return projector_from_displacement(l_abs, x, sigma_h)


def default_scan_positions(sigma_h: float = HOLOGRAM_SIGMA, points: int = 161, span: float = 4.0) -> np.ndarray:
    """0..span*sigma_h, plus the displacement giving a balanced superposition."""
    xs = np.linspace(0.0, span * sigma_h, points)
    return np.union1d(xs, [displacement_for_angle(math.pi / 4, sigma_h)])


def simulate_scan(state, fixed: Projector, l_abs: int | None = None, xs=None,
                  dm: DetectionModel = DetectionModel(), sigma_h: float = HOLOGRAM_SIGMA,
                  sample: bool = False, rng: np.random.Generator | None = None,
                  theta_offset: float = 0.0, label: str = "") -> ScanCurve:
    """Coincidence rate while the arm-B hologram for ||l|> scans across x.

    Arm A keeps the `fixed` projector.  With `sample` the expected counts are
    Poisson-sampled from `rng` (or from the detection model's seed).
    """
    state = as_noisy(state)
    l_abs = fixed.l_abs if l_abs is None else l_abs
    xs = default_scan_positions(sigma_h) if xs is None else np.asarray(xs, dtype=float)
    rates = np.array([
        coincidence_rate(state, fixed,
                         projector_from_displacement(l_abs, x, sigma_h, theta_offset=theta_offset), dm)
        for x in xs])
    counts = None
    if sample:
        rng = dm.rng() if rng is None else rng
        counts = rng.poisson(rates * dm.integration_time)
    return ScanCurve(xs, rates, counts, l_abs, label)


def visibility(curve: ScanCurve | np.ndarray, use_counts: bool = False) -> float:
    """(max - min) / (max + min) over the sampled curve."""
    if isinstance(curve, ScanCurve):
        values = curve.counts if use_counts else curve.expected
        if values is None:
            raise ValueError("curve carries no sampled counts")
    else:
        values = curve
    values = np.asarray(values, dtype=float)
    hi, lo = values.max(), values.min()
    if hi <= 0:
        raise UndefinedQuantityError("visibility of an all-zero curve is undefined")
    return float((hi - lo) / (hi + lo))


def scan_visibility(state, l_abs: int, noise: float = 0.0, sigma_h: float = HOLOGRAM_SIGMA,
                    xs=None, dm: DetectionModel = DetectionModel()) -> float:
    """Visibility of the balanced-projector scan of a pure state mixed with `noise`."""
    pure = as_noisy(state).pure
    noisy = NoisyState(pure, noise)
    curve = simulate_scan(noisy, balanced_projector(pure, l_abs, sigma_h), l_abs, xs, dm, sigma_h)
    return visibility(curve)


def calibrate_noise(state, l_abs: int, target_visibility: float, sigma_h: float = HOLOGRAM_SIGMA,
                    xs=None) -> float:
    """White-noise fraction at which the balanced scan has `target_visibility`."""
    if not 0 <= target_visibility <= 1:
        raise ValueError("target visibility must lie in [0, 1]")
    v0 = scan_visibility(state, l_abs, 0.0, sigma_h, xs)
    if target_visibility > v0:
        raise UndefinedQuantityError(
            f"noise-free visibility {v0:.4f} is already below the target {target_visibility}")
    if target_visibility == v0:
        return 0.0
    return float(optimize.brentq(lambda e: scan_visibility(state, l_abs, e, sigma_h, xs) - target_visibility,
                                 0.0, 1.0, xtol=1e-14, rtol=1e-14))


# --- CGLMP ---------------------------------------------------------------

CANONICAL_SETTINGS = ((0.0, 0.5), (0.25, -0.25))


def cglmp_bases(d: int, alphas, betas):
    """Fourier-type measurement bases, phases in units of 2 pi / d.

    Returns arrays A[a, k, :] and B[b, l, :] whose outcome probabilities on
    sum_j |jj> depend only on k - l + alpha_a + beta_b.
    """
    j = np.arange(d)
    k = np.arange(d)[:, None]
    A = np.array([np.exp(2j * np.pi / d * j * (k + a)) for a in alphas]) / np.sqrt(d)
    B = np.array([np.exp(-2j * np.pi / d * j * (k - b)) for b in betas]) / np.sqrt(d)
    return A, B


def joint_probabilities(rho: np.ndarray, A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """P[a, b, k, l] for density matrix rho on C^d (x) C^d."""
    na, d = A.shape[0], A.shape[1]
    nb = B.shape[0]
    out = np.empty((na, nb, d, d))
    for a in range(na):
        for b in range(nb):
            vecs = np.einsum("ki,lj->klij", A[a], B[b]).reshape(d * d, d * d)
            out[a, b] = np.real(np.einsum("ni,ij,nj->n", vecs.conj(), rho, vecs)).reshape(d, d)
    return out


def _p_shift(P: np.ndarray, shift: int) -> float:
    """Probability that outcome_A - outcome_B == shift (mod d)."""
    d = P.shape[0]
    k, l = np.indices((d, d))
    return float(P[(k - l - shift) % d == 0].sum())


def cglmp_value(P: np.ndarray) -> float:
    """I_3 from P[a, b, k, l]; local realistic models satisfy I_3 <= 2."""
    if P.shape[2] != 3:
        raise UnsupportedDimensionError("CGLMP functional implemented for d = 3 only")
    plus = _p_shift(P[0, 0], 0) + _p_shift(P[1, 0], -1) + _p_shift(P[1, 1], 0) + _p_shift(P[0, 1], 0)
    minus = _p_shift(P[0, 0], -1) + _p_shift(P[1, 0], 0) + _p_shift(P[1, 1], -1) + _p_shift(P[0, 1], 1)
    return plus - minus


def bell_i3(state, settings=CANONICAL_SETTINGS) -> float:
    """CGLMP I_3 of a (noisy) qutrit pair for the given phase settings."""
    state = as_noisy(state)
    if state.d != 3:
        raise UnsupportedDimensionError(f"I_3 needs d = 3, got d = {state.d}")
    alphas, betas = settings
    A, B = cglmp_bases(3, alphas, betas)
    return cglmp_value(joint_probabilities(state.density_matrix(), A, B))
