"""Local mode filters and the Procrustean concentration algebra."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import AnnihilatedStateError, InfeasibleTargetError, UndefinedQuantityError
from .optics import LensConfig, OpticsModel, coupling_vector
from .states import PureBipartiteState, normalize, require_correlated


@dataclass(frozen=True)
class LocalFilter:
    """Amplitude transmission t_l for each |l| on one arm."""

    t: tuple

    def __post_init__(self):
        t = tuple(float(x) for x in np.ravel(self.t))
        if not t:
            raise ValueError("filter needs at least one mode")
        if any(not (0.0 <= x <= 1.0) for x in t):
            raise ValueError(f"transmissions must lie in [0, 1], got {t}")
        if max(t) == 0.0:
            raise ValueError("filter blocks every mode")
        object.__setattr__(self, "t", t)

    @classmethod
    def identity(cls, d: int = 3) -> "LocalFilter":
        return cls((1.0,) * d)

    @property
    def d(self) -> int:
        return len(self.t)

    def __mul__(self, other: "LocalFilter") -> "LocalFilter":
        if self.d != other.d:
            raise ValueError("filters act on different dimensions")
        return LocalFilter(tuple(a * b for a, b in zip(self.t, other.t)))

    def as_array(self) -> np.ndarray:
        return np.array(self.t)


@dataclass(frozen=True)
class FilterOutcome:
    state: PureBipartiteState
    success_probability: float


@dataclass(frozen=True)
class FilterDensityReport:
    density: tuple

    def __post_init__(self):
        object.__setattr__(self, "density", tuple(float(x) for x in self.density))


def apply_local_filter(state: PureBipartiteState, fa: LocalFilter, fb: LocalFilter) -> FilterOutcome:
    """C'_ij = tA_i tB_j C_ij, renormalized; success = |C'|^2 / |C|^2."""
    if fa.d != state.d or fb.d != state.d:
        raise ValueError(f"filters of dimension {fa.d}/{fb.d} on a d={state.d} state")
    amps = state.amplitudes
    out = fa.as_array()[:, None] * amps * fb.as_array()[None, :]
    kept = np.linalg.norm(out) ** 2
    total = np.linalg.norm(amps) ** 2
    if total == 0.0:
        raise AnnihilatedStateError("input state is zero")
    if kept == 0.0:
        raise AnnihilatedStateError("filters remove every populated mode")
    return FilterOutcome(normalize(PureBipartiteState(out)), float(kept / total))


def filter_density(c_filtered: float, c_initial: float) -> float:
    """Fraction of a mode's coincidences removed: 1 - C_LC / C_INT."""
    if c_initial == 0:
        raise UndefinedQuantityError("filter density needs a nonzero initial rate")
    return 1.0 - c_filtered / c_initial


def split_joint_transmission(tau, split: str = "A") -> tuple[LocalFilter, LocalFilter]:
    """Distribute joint amplitude transmissions tau_l = tA_l * tB_l over the arms."""
    tau = np.asarray(tau, dtype=float)
    if split == "A":
        return LocalFilter(tau), LocalFilter.identity(len(tau))
    if split == "B":
        return LocalFilter.identity(len(tau)), LocalFilter(tau)
    if split == "even":
        root = np.sqrt(tau)
        return LocalFilter(root), LocalFilter(root)
    raise ValueError(f"unknown split {split!r}")


def procrustean_filter_for(state: PureBipartiteState, target: PureBipartiteState | None = None,
                           split: str = "A") -> tuple[LocalFilter, LocalFilter, float]:
    """Maximal-yield local filter taking a correlated state to `target`.

    Joint transmissions are tau_l = |target_l| / |C_l|, rescaled so the
    largest is 1.  Only magnitudes are corrected; relative phases pass
    through unchanged.

    Returns
    -------
    (filter_a, filter_b, success_probability)
    """
    target = PureBipartiteState.max_entangled(state.d) if target is None else target
    if target.d != state.d:
        raise ValueError("state and target differ in dimension")
    src = np.abs(require_correlated(state, "source state"))
    tgt = np.abs(require_correlated(target, "target state"))
    if not tgt.any():
        raise InfeasibleTargetError("target is the zero state")
    needed = tgt > 0
    if np.any(needed & (src == 0)):
        missing = np.flatnonzero(needed & (src == 0)).tolist()
        raise InfeasibleTargetError(f"target populates modes {missing} that the source lacks")
    tau = np.zeros_like(src)
    tau[needed] = tgt[needed] / src[needed]
    tau /= tau.max()
    success = float(np.sum((tau * src) ** 2) / np.sum(src ** 2))
    fa, fb = split_joint_transmission(tau, split)
    return fa, fb, success


def density_report(fa: LocalFilter, fb: LocalFilter, reference: float = 1.0) -> FilterDensityReport:
    """Per-mode densities of a correlated-state filter.

    Rates of mode l scale with (tA_l tB_l)^2; `reference` is the joint
    intensity transmission of the unfiltered measurement.
    """
    joint = (fa.as_array() * fb.as_array()) ** 2
    return FilterDensityReport(tuple(filter_density(j, reference) for j in joint))


def lens_filters(cfg_a: LensConfig, cfg_b: LensConfig, d: int = 3,
                 model: OpticsModel | None = None) -> tuple[LocalFilter, LocalFilter]:
    model = OpticsModel() if model is None else model
    filters = []
    for cfg in (cfg_a, cfg_b):
        cv = coupling_vector(cfg, model.source_waist, model.wavelength, d, model.hologram_efficiency,
                             model.coupling_model, model.method)
        filters.append(LocalFilter(cv.transmissions))
    return filters[0], filters[1]


def filtered_state_from_lenses(state: PureBipartiteState, cfg_a: LensConfig, cfg_b: LensConfig,
                               model: OpticsModel | None = None) -> tuple[FilterOutcome, FilterDensityReport]:
    """Filter a state with the coupling of two physical lens arms.

    Densities are relative to ideal coupling (eta_l = 1) through the same
    holograms, so the hologram efficiency cancels from them.
    """
    model = OpticsModel() if model is None else model
    fa, fb = lens_filters(cfg_a, cfg_b, state.d, model)
    outcome = apply_local_filter(state, fa, fb)
    return outcome, density_report(fa, fb, reference=model.hologram_efficiency ** 2)
