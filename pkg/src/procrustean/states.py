"""Bipartite qudit states over the |l| = 0..d-1 OAM labels and their
entanglement measures.

A state is stored as its d x d amplitude matrix ``C[i, j]`` for the ket
``|i>_A |j>_B``.  The perfectly correlated states produced by a Gaussian
pump only populate the diagonal.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateStateError, NotCorrelatedError

NORM_TOL = 1e-12

# Measured qutrit amplitudes (rounded to two digits when reported, so their
# squared sums are 1.0017 and 0.9985 respectively).
MEASURED_INITIAL = (0.80, 0.44, 0.41)
MEASURED_CONCENTRATED = (0.60, 0.56, 0.57)
# Initial states that two of the lens configurations would have concentrated.
CONCENTRABLE_EXAMPLES = ((0.26, 0.50, 0.83), (0.73, 0.63, 0.27))


@dataclass(frozen=True)
class ModeLabel:
    l_abs: int
    d: int = 3

    def __post_init__(self):
        if self.d < 1:
            raise ValueError(f"dimension must be positive, got {self.d}")
        if not 0 <= self.l_abs < self.d:
            raise ValueError(f"|l| = {self.l_abs} outside 0..{self.d - 1}")


@dataclass(frozen=True, eq=False)
class PureBipartiteState:
    """Pure state of two qudits given by its (unnormalized) amplitude matrix."""

    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.array(self.amplitudes, dtype=complex)
        if amps.ndim != 2 or amps.shape[0] != amps.shape[1] or amps.shape[0] == 0:
            raise ValueError(f"amplitude matrix must be square, got shape {amps.shape}")
        if not np.all(np.isfinite(amps)):
            raise ValueError("amplitudes must be finite")
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def from_diagonal(cls, diagonal) -> "PureBipartiteState":
        """Correlated state sum_l C_l |ll>."""
        diagonal = np.asarray(diagonal, dtype=complex)
        if diagonal.ndim != 1:
            raise ValueError("diagonal amplitudes must be a flat sequence")
        return cls(np.diag(diagonal))

    @classmethod
    def max_entangled(cls, d: int = 3) -> "PureBipartiteState":
        return cls.from_diagonal(np.full(d, 1 / np.sqrt(d)))

    @property
    def d(self) -> int:
        return self.amplitudes.shape[0]

    @property
    def diagonal(self) -> np.ndarray:
        return np.diag(self.amplitudes).copy()

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def vector(self) -> np.ndarray:
        """Amplitudes flattened in |i>_A |j>_B order (A index major)."""
        return self.amplitudes.ravel().copy()

    def is_correlated(self, tol: float = 1e-12) -> bool:
        off = self.amplitudes - np.diag(np.diag(self.amplitudes))
        return bool(np.all(np.abs(off) <= tol * max(self.norm, 1.0)))

    def __eq__(self, other):
        if not isinstance(other, PureBipartiteState):
            return NotImplemented
        return self.amplitudes.shape == other.amplitudes.shape and bool(
            np.array_equal(self.amplitudes, other.amplitudes))

    def __hash__(self):
        return hash(self.amplitudes.tobytes())

    def to_dict(self) -> dict:
        return {
            "dimension": self.d,
            "real": self.amplitudes.real.tolist(),
            "imag": self.amplitudes.imag.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PureBipartiteState":
        real = np.asarray(data["real"], dtype=float)
        imag = np.asarray(data.get("imag", np.zeros_like(real)), dtype=float)
        if real.shape != imag.shape:
            raise ValueError("real and imaginary parts differ in shape")
        state = cls(real + 1j * imag)
        if "dimension" in data and data["dimension"] != state.d:
            raise ValueError(f"dimension {data['dimension']} does not match {state.d}x{state.d} amplitudes")
        return state


@dataclass(frozen=True)
class NoisyState:
    """(1 - eps) |psi><psi| + eps * 1/d^2, i.e. the pure state mixed with white noise."""

    pure: PureBipartiteState
    white_noise_fraction: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.white_noise_fraction <= 1.0:
            raise ValueError(f"noise fraction must lie in [0, 1], got {self.white_noise_fraction}")
        object.__setattr__(self, "pure", normalize(self.pure))

    @property
    def d(self) -> int:
        return self.pure.d

    def density_matrix(self) -> np.ndarray:
        psi = self.pure.vector()
        eps = self.white_noise_fraction
        n = psi.size
        return (1 - eps) * np.outer(psi, psi.conj()) + eps * np.eye(n) / n

    def to_dict(self) -> dict:
        out = self.pure.to_dict()
        out["noise_fraction"] = self.white_noise_fraction
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "NoisyState":
        return cls(PureBipartiteState.from_dict(data), float(data.get("noise_fraction", 0.0)))


def as_noisy(state) -> NoisyState:
    if isinstance(state, NoisyState):
        return state
    return NoisyState(state, 0.0)


def normalize(state: PureBipartiteState) -> PureBipartiteState:
    """Rescale to unit norm, keeping amplitude ratios.

    Raises
    ------
    DegenerateStateError
        If every amplitude is zero.
    """
    norm = state.norm
    if norm == 0.0:
        raise DegenerateStateError("cannot normalize the zero state")
    if abs(norm - 1.0) <= NORM_TOL / 4:
        return state
    return PureBipartiteState(state.amplitudes / norm)


def schmidt_coefficients(state: PureBipartiteState) -> np.ndarray:
    """Schmidt weights (squared singular values), sorted descending, summing to 1."""
    amps = normalize(state).amplitudes
    if state.is_correlated(tol=0.0):
        weights = np.abs(np.diag(amps)) ** 2
    else:
        # spectrum of the reduced density matrix of arm A
        weights = np.linalg.eigvalsh(amps @ amps.conj().T)
        weights = np.clip(weights, 0.0, None)
    weights = np.sort(weights)[::-1]
    return weights / weights.sum()


def entanglement_entropy(state: PureBipartiteState, log_base: float | None = None) -> float:
    """Von Neumann entropy of either reduced state.

    The default base is the dimension d, so the result is in [0, 1] with 1
    for a maximally entangled state.
    """
    base = state.d if log_base is None else log_base
    if state.d == 1:
        return 0.0
    p = schmidt_coefficients(state)
    p = p[p > 0]
    return float(max(0.0, -np.sum(p * np.log(p)) / np.log(base)))


def fidelity(state: PureBipartiteState, target: PureBipartiteState) -> float:
    """|<target|state>|^2 after normalizing both."""
    a = normalize(state).vector()
    b = normalize(target).vector()
    if a.size != b.size:
        raise ValueError("states have different dimensions")
    return float(min(1.0, abs(np.vdot(b, a)) ** 2))


def fidelity_to_max_entangled(state: PureBipartiteState) -> float:
    norm2 = state.norm ** 2
    if norm2 == 0.0:
        raise DegenerateStateError("fidelity of the zero state is undefined")
    overlap = np.trace(state.amplitudes) / np.sqrt(state.d)
    return float(min(1.0, abs(overlap) ** 2 / norm2))


def require_correlated(state: PureBipartiteState, what: str = "state") -> np.ndarray:
    """Diagonal of `state`, raising if it has off-diagonal amplitudes."""
    if not state.is_correlated():
        raise NotCorrelatedError(f"{what} must be a correlated (diagonal) state")
    return state.diagonal


def local_unitary(state: PureBipartiteState, ua=None, ub=None) -> PureBipartiteState:
    """Apply U_A (x) U_B to the state."""
    amps = state.amplitudes
    if ua is not None:
        amps = ua @ amps
    if ub is not None:
        amps = amps @ np.asarray(ub).T
    return PureBipartiteState(amps)


PRESETS = {
    "initial": MEASURED_INITIAL,
    "concentrated": MEASURED_CONCENTRATED,
    "max": tuple([1 / np.sqrt(3)] * 3),
    "example_1": CONCENTRABLE_EXAMPLES[0],
    "example_7": CONCENTRABLE_EXAMPLES[1],
}
