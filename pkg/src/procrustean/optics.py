"""Gaussian beam propagation and fiber coupling of LG_{0l} modes.

All lengths are in metres.  A coupling lens sits between the crystal and a
single-mode fiber; the fiber's fundamental mode, traced back through the
lens to the crystal plane, is the acceptance mode.  How well each down-
converted mode overlaps it sets that mode's coupling efficiency, and moving
the lens changes the efficiencies unequally: this is the filter.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence, Union

import numpy as np
from scipy import integrate, optimize

from .errors import IntegrationError, SingularConfigurationError

WAVELENGTH = 702e-9
HOLOGRAM_EFFICIENCY = 0.85
# artifact defaults; the experiment does not report its coupling geometry
SOURCE_WAIST = 100e-6
FIBER_WAIST = 2.3e-6
FOCAL_LENGTH = 10e-3

QUAD_RTOL = 1e-9
# amplitude error accepted regardless of rtol; strongly mismatched modes cancel
# down to tiny overlaps whose relative error is meaningless
QUAD_ABS_FLOOR = 1e-12
CUTOFF_RADII = 8.0


@dataclass(frozen=True)
class BeamParam:
    """Gaussian beam described at a reference plane.

    ``waist_position`` is where the waist lies relative to the reference
    plane, positive downstream, so the complex beam parameter at the plane is
    ``q = -waist_position + i z_R``.
    """

    wavelength: float
    waist: float
    waist_position: float = 0.0

    def __post_init__(self):
        if not self.wavelength > 0:
            raise ValueError(f"wavelength must be positive, got {self.wavelength}")
        if not self.waist > 0:
            raise ValueError(f"waist must be positive, got {self.waist}")

    @classmethod
    def from_q(cls, q: complex, wavelength: float) -> "BeamParam":
        if not (np.isfinite(q.real) and np.isfinite(q.imag)) or q.imag <= 0:
            raise SingularConfigurationError(f"degenerate complex beam parameter q = {q}")
        return cls(wavelength, math.sqrt(q.imag * wavelength / math.pi), -q.real)

    @property
    def rayleigh_range(self) -> float:
        return math.pi * self.waist ** 2 / self.wavelength

    @property
    def q(self) -> complex:
        return complex(-self.waist_position, self.rayleigh_range)

    @property
    def spot_size(self) -> float:
        """1/e^2 field radius at the reference plane."""
        return self.waist * math.hypot(1.0, self.waist_position / self.rayleigh_range)

    @property
    def curvature(self) -> float:
        """Wavefront curvature 1/R at the reference plane (0 when flat)."""
        return (1 / self.q).real

    @property
    def radius_of_curvature(self) -> float:
        c = self.curvature
        return math.inf if c == 0 else 1 / c

    def reversed(self) -> "BeamParam":
        """Same field travelling the other way (q -> -conj(q))."""
        return replace(self, waist_position=-self.waist_position)


@dataclass(frozen=True)
class Space:
    length: float

    def __post_init__(self):
        if not (self.length >= 0 and math.isfinite(self.length)):
            raise ValueError(f"free-space distance must be finite and >= 0, got {self.length}")

    @property
    def matrix(self):
        return ((1.0, self.length), (0.0, 1.0))


@dataclass(frozen=True)
class ThinLens:
    focal_length: float

    def __post_init__(self):
        if self.focal_length == 0 or not math.isfinite(self.focal_length):
            raise ValueError(f"focal length must be finite and nonzero, got {self.focal_length}")

    @property
    def matrix(self):
        return ((1.0, 0.0), (-1.0 / self.focal_length, 1.0))


Element = Union[Space, ThinLens]


def propagate(beam: BeamParam, elements: Sequence[Element]) -> BeamParam:
    """Carry `beam` through free-space sections and thin lenses (ABCD law)."""
    q = beam.q
    for element in elements:
        (a, b), (c, d) = element.matrix
        den = c * q + d
        if den == 0:
            raise SingularConfigurationError(f"beam parameter degenerates at {element}")
        q = (a * q + b) / den
    return BeamParam.from_q(q, beam.wavelength)


@dataclass(frozen=True)
class LensConfig:
    """One coupling arm: crystal -- z -- lens(f) -- d_f -- fiber facet."""

    focal_length: float
    lens_to_crystal: float
    lens_to_fiber: float
    fiber_waist: float = FIBER_WAIST

    def __post_init__(self):
        for name in ("focal_length", "lens_to_crystal", "lens_to_fiber", "fiber_waist"):
            value = getattr(self, name)
            if not (value > 0 and math.isfinite(value)):
                raise ValueError(f"{name} must be positive, got {value}")


def acceptance_mode_at_crystal(cfg: LensConfig, wavelength: float = WAVELENGTH) -> BeamParam:
    """Fiber mode traced back to the crystal, expressed as a forward-going beam."""
    fiber_mode = BeamParam(wavelength, cfg.fiber_waist, 0.0)
    back = propagate(fiber_mode, [Space(cfg.lens_to_fiber), ThinLens(cfg.focal_length),
                                  Space(cfg.lens_to_crystal)])
    return back.reversed()


def _gamma(source: BeamParam, acceptance: BeamParam) -> complex:
    # exponent of E_s * conj(E_a) is -gamma r^2
    k = 2 * math.pi / source.wavelength
    beta_s = 1 / source.spot_size ** 2 + 0.5j * k * source.curvature
    beta_a = 1 / acceptance.spot_size ** 2 + 0.5j * k * acceptance.curvature
    return beta_s + beta_a.conjugate()


def _check_pair(source: BeamParam, acceptance: BeamParam, l_abs: int):
    if not math.isclose(source.wavelength, acceptance.wavelength, rel_tol=1e-12):
        raise ValueError("overlap requires equal wavelengths")
    if l_abs < 0 or int(l_abs) != l_abs:
        raise ValueError(f"|l| must be a non-negative integer, got {l_abs}")


def lg_overlap_closed_form(source: BeamParam, acceptance: BeamParam, l_abs: int = 0) -> float:
    """|<LG_0l(acceptance)|LG_0l(source)>|^2 from the Gaussian moment integral."""
    _check_pair(source, acceptance, l_abs)
    g = _gamma(source, acceptance)
    amp = 2 / (source.spot_size * acceptance.spot_size * abs(g))
    return float(min(1.0, amp ** (2 * (l_abs + 1))))


def lg_overlap(source: BeamParam, acceptance: BeamParam, l_abs: int = 0,
               rtol: float = QUAD_RTOL) -> float:
    """Power coupling between two co-axial LG_{0l} modes, by radial quadrature.

    Both beams are taken at the same reference plane; the azimuthal factors
    cancel for equal |l| and the Gouy phase is global, so only the radial
    profile and wavefront curvature matter.

    Raises
    ------
    IntegrationError
        If the adaptive quadrature reaches neither `rtol` nor an absolute
        amplitude error of ``QUAD_ABS_FLOOR``.
    """
    _check_pair(source, acceptance, l_abs)
    l = int(l_abs)
    ws, wa = source.spot_size, acceptance.spot_size
    g = _gamma(source, acceptance)
    norm = 2 / (math.pi * ws * wa * math.factorial(l))
    # the integrand decays like exp(-Re(gamma) r^2); scale r to that width
    scale = 1 / math.sqrt(g.real)
    cutoff = CUTOFF_RADII * math.sqrt(l + 1)

    def integrand(s, part):
        r = s * scale
        val = norm * (2 * r * r / (ws * wa)) ** l * np.exp(-g * r * r) * 2 * math.pi * r * scale
        return val.real if part == 0 else val.imag

    total = 0j
    err = 0.0
    for part in (0, 1):
        val, abserr, *info = integrate.quad(integrand, 0.0, cutoff, args=(part,), epsabs=0.0,
                                            epsrel=rtol / 10, limit=2000, full_output=1)
        total += val if part == 0 else 1j * val
        err += abserr
    if err > max(rtol * abs(total), QUAD_ABS_FLOOR):
        raise IntegrationError(f"radial overlap did not converge (estimate {abs(total):.3e} +- {err:.1e})")
    return float(min(1.0, abs(total) ** 2))


def waist_mismatch_overlap(w1: float, w2: float, l_abs: int = 0) -> float:
    """[2 w1 w2 / (w1^2 + w2^2)]^(2(|l|+1)) for two flat-wavefront waists."""
    return (2 * w1 * w2 / (w1 ** 2 + w2 ** 2)) ** (2 * (l_abs + 1))


@dataclass(frozen=True)
class CouplingVector:
    eta: tuple
    hologram_efficiency: float = HOLOGRAM_EFFICIENCY

    def __post_init__(self):
        eta = tuple(float(e) for e in self.eta)
        if any(not 0.0 <= e <= 1.0 for e in eta):
            raise ValueError(f"coupling efficiencies must lie in [0, 1], got {eta}")
        if not 0.0 < self.hologram_efficiency <= 1.0:
            raise ValueError(f"hologram efficiency must lie in (0, 1], got {self.hologram_efficiency}")
        object.__setattr__(self, "eta", eta)

    @property
    def transmissions(self) -> tuple:
        """Per-mode amplitude transmissions sqrt(eta_l * hologram efficiency)."""
        return tuple(math.sqrt(e * self.hologram_efficiency) for e in self.eta)


COUPLING_MODELS = ("effective_waist", "lg")


def coupling_from_acceptance(acceptance: BeamParam, source_waist: float, d: int = 3,
                             hologram_efficiency: float = HOLOGRAM_EFFICIENCY,
                             model: str = "effective_waist", method: str = "closed") -> CouplingVector:
    """Per-|l| coupling efficiencies for a given acceptance mode at the crystal.

    ``effective_waist`` treats mode |l| as a Gaussian of waist
    w_s*sqrt(|l|+1) sitting at the crystal; ``lg`` overlaps true LG_{0l}
    modes of common waist w_s with the LG_{0l} version of the acceptance mode.
    ``method`` picks the exact moment formula or radial quadrature.
    """
    if model not in COUPLING_MODELS:
        raise ValueError(f"unknown coupling model {model!r}")
    overlap = {"closed": lg_overlap_closed_form, "quadrature": lg_overlap}[method]
    eta = []
    for l in range(d):
        if model == "effective_waist":
            src = BeamParam(acceptance.wavelength, source_waist * math.sqrt(l + 1), 0.0)
            eta.append(overlap(src, acceptance, 0))
        else:
            src = BeamParam(acceptance.wavelength, source_waist, 0.0)
            eta.append(overlap(src, acceptance, l))
    return CouplingVector(tuple(eta), hologram_efficiency)


def coupling_vector(cfg: LensConfig, source_waist: float = SOURCE_WAIST, wavelength: float = WAVELENGTH,
                    d: int = 3, hologram_efficiency: float = HOLOGRAM_EFFICIENCY,
                    model: str = "effective_waist", method: str = "closed") -> CouplingVector:
    acceptance = acceptance_mode_at_crystal(cfg, wavelength)
    return coupling_from_acceptance(acceptance, source_waist, d, hologram_efficiency, model, method)


def matched_geometry(source_waist: float, fiber_waist: float, focal_length: float,
                     wavelength: float = WAVELENGTH) -> tuple[float, float]:
    """Lens distances (z, d_f) that image the fiber mode onto a flat waist of
    size `source_waist` at the crystal, i.e. perfect LG_00 matching."""
    zr_f = math.pi * fiber_waist ** 2 / wavelength
    inv_m2 = (fiber_waist / source_waist) ** 2
    rad = inv_m2 - (zr_f / focal_length) ** 2
    if rad <= 0:
        raise SingularConfigurationError("lens too strong to reach the requested waist")
    d_f = focal_length * (1 + math.sqrt(rad))
    z = focal_length + (d_f - focal_length) / inv_m2
    return z, d_f


@dataclass(frozen=True)
class OpticsModel:
    """Both coupling arms share this geometry; only the lens position moves.

    The crystal-to-fiber distance (`track_length`) is fixed, so moving the
    lens by dz shortens one gap and lengthens the other.  By default it is
    set so that the LG_00-optimal lens position gives perfect matching.
    """

    wavelength: float = WAVELENGTH
    source_waist: float = SOURCE_WAIST
    focal_length: float = FOCAL_LENGTH
    fiber_waist: float = FIBER_WAIST
    hologram_efficiency: float = HOLOGRAM_EFFICIENCY
    coupling_model: str = "effective_waist"
    track_length: float | None = None
    method: str = "closed"
    _matched: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        for name in ("wavelength", "source_waist", "focal_length", "fiber_waist"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.coupling_model not in COUPLING_MODELS:
            raise ValueError(f"unknown coupling model {self.coupling_model!r}")
        if self.method not in ("closed", "quadrature"):
            raise ValueError(f"unknown overlap method {self.method!r}")
        matched = matched_geometry(self.source_waist, self.fiber_waist, self.focal_length, self.wavelength)
        object.__setattr__(self, "_matched", matched)
        if self.track_length is None:
            object.__setattr__(self, "track_length", matched[0] + matched[1])

    @property
    def matched_position(self) -> float:
        """Lens position with perfect LG_00 matching (for the default track)."""
        return self._matched[0]

    def default_bounds(self, half_width: float = 1e-3) -> tuple[float, float]:
        z0 = self.matched_position
        return (z0 - half_width, z0 + half_width)

    def config_at(self, z: float) -> LensConfig:
        return LensConfig(self.focal_length, z, self.track_length - z, self.fiber_waist)

    def coupling_at(self, z: float, d: int = 3) -> CouplingVector:
        return coupling_vector(self.config_at(z), self.source_waist, self.wavelength, d,
                               self.hologram_efficiency, self.coupling_model, self.method)

    def sweep(self, zs, d: int = 3) -> np.ndarray:
        """eta_l(z) as an array of shape (len(zs), d)."""
        return np.array([self.coupling_at(z, d).eta for z in zs], dtype=float).reshape(len(zs), d)

    def mode_optimal_position(self, l_abs: int, bounds=None, d: int = 3) -> float:
        """Lens position in `bounds` maximizing eta_l (grid seed + bounded refinement)."""
        lo, hi = self.default_bounds() if bounds is None else bounds
        zs = np.linspace(lo, hi, 401)
        etas = self.sweep(zs, d)[:, l_abs]
        i = int(np.argmax(etas))
        a, b = zs[max(i - 1, 0)], zs[min(i + 1, len(zs) - 1)]
        if a == b:
            return float(zs[i])
        res = optimize.minimize_scalar(lambda z: -self.coupling_at(z, d).eta[l_abs], bounds=(a, b),
                                       method="bounded", options={"xatol": 1e-12})
        return float(res.x) if -res.fun >= etas[i] else float(zs[i])
