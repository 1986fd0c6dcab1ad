"""Forward problem (which lens pair concentrates a state) and inverse problem
(which initial states a given filter concentrates)."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .errors import InfeasibleInversionError
from .filtering import (FilterDensityReport, FilterOutcome, LocalFilter, apply_local_filter,
                        filtered_state_from_lenses)
from .optics import OpticsModel
from .states import (PureBipartiteState, entanglement_entropy, fidelity, normalize,
                     require_correlated)

OBJECTIVES = ("fidelity", "entropy")


@dataclass(frozen=True)
class OptimizationProblem:
    initial: PureBipartiteState
    target: PureBipartiteState | None = None
    bounds: tuple | None = None
    objective: str = "fidelity"
    tolerance: float = 1e-9
    max_evaluations: int = 5000
    grid: int = 32
    symmetric: bool = False
    model: OpticsModel = field(default_factory=OpticsModel)

    def __post_init__(self):
        if self.objective not in OBJECTIVES:
            raise ValueError(f"objective must be one of {OBJECTIVES}")
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")
        if self.grid < 2 or self.max_evaluations < 1:
            raise ValueError("need a grid of at least 2 points and a positive evaluation budget")
        if self.target is None:
            object.__setattr__(self, "target", PureBipartiteState.max_entangled(self.initial.d))
        if self.bounds is None:
            b = self.model.default_bounds()
            object.__setattr__(self, "bounds", (b, b))
        bounds = tuple((float(lo), float(hi)) for lo, hi in self.bounds)
        if len(bounds) != 2 or any(not lo < hi for lo, hi in bounds):
            raise ValueError(f"bounds must be two non-empty intervals, got {self.bounds}")
        if any(lo <= 0 or hi >= self.model.track_length for lo, hi in bounds):
            raise ValueError(f"lens positions must lie inside (0, {self.model.track_length}) m")
        if self.symmetric and bounds[0] != bounds[1]:
            raise ValueError("a symmetric search needs identical bounds on both arms")
        object.__setattr__(self, "bounds", bounds)


@dataclass(frozen=True)
class Evaluation:
    z_a: float
    z_b: float
    outcome: FilterOutcome
    densities: FilterDensityReport
    fidelity: float
    entropy: float

    @property
    def state(self) -> PureBipartiteState:
        return self.outcome.state

    @property
    def success_probability(self) -> float:
        return self.outcome.success_probability


@dataclass(frozen=True)
class OptimizationResult:
    z_a: float
    z_b: float
    state: PureBipartiteState
    fidelity: float
    entropy: float
    success_probability: float
    densities: tuple
    objective_value: float
    grid_best: float
    evaluation_count: int
    converged: bool


def evaluate_lenses(initial: PureBipartiteState, z_a: float, z_b: float, model: OpticsModel | None = None,
                    target: PureBipartiteState | None = None) -> Evaluation:
    model = OpticsModel() if model is None else model
    target = PureBipartiteState.max_entangled(initial.d) if target is None else target
    outcome, densities = filtered_state_from_lenses(initial, model.config_at(z_a), model.config_at(z_b), model)
    return Evaluation(z_a, z_b, outcome, densities, fidelity(outcome.state, target),
                      entanglement_entropy(outcome.state))


def objective_grid(problem: OptimizationProblem, zs_a, zs_b) -> np.ndarray:
    """Objective over the outer product of lens positions, shape (len(zs_a), len(zs_b))."""
    model, d = problem.model, problem.initial.d
    t_a = np.sqrt(model.sweep(zs_a, d) * model.hologram_efficiency)
    t_b = np.sqrt(model.sweep(zs_b, d) * model.hologram_efficiency)
    amps = normalize(problem.initial).amplitudes
    out = t_a[:, None, :, None] * amps[None, None] * t_b[None, :, None, :]
    norms = np.linalg.norm(out, axis=(2, 3))
    out = out / norms[..., None, None]
    if problem.objective == "fidelity":
        tgt = normalize(problem.target).amplitudes
        return np.abs(np.einsum("ij,abij->ab", tgt.conj(), out)) ** 2
    rho_a = np.einsum("abij,abkj->abik", out, out.conj())
    w = np.clip(np.linalg.eigvalsh(rho_a), 1e-300, None)
    return -np.sum(w * np.log(w), axis=-1) / math.log(d)


class _Counter:
    def __init__(self, fn):
        self.fn = fn
        self.calls = 0

    def __call__(self, *args):
        self.calls += 1
        return self.fn(*args)


def _objective_value(problem: OptimizationProblem, z_a: float, z_b: float) -> float:
    ev = evaluate_lenses(problem.initial, z_a, z_b, problem.model, problem.target)
    return ev.fidelity if problem.objective == "fidelity" else ev.entropy


def optimize_lens_config(problem: OptimizationProblem, seeds: int = 3) -> OptimizationResult:
    """Coarse grid over (z_A, z_B) followed by bounded Nelder-Mead refinement
    from the best few grid points.

    Deterministic: ties go to the lexicographically smaller (z_A, z_B).
    ``converged`` is False when the evaluation budget runs out, the local
    search fails, or the optimum sits on the boundary of the box.
    """
    (a_lo, a_hi), (b_lo, b_hi) = problem.bounds
    n = problem.grid
    zs_a = np.linspace(a_lo, a_hi, n)
    zs_b = np.linspace(b_lo, b_hi, n)
    if problem.symmetric:
        values = np.diag(objective_grid(problem, zs_a, zs_a)) if n <= 64 else np.array(
            [objective_grid(problem, [z], [z])[0, 0] for z in zs_a])
        order = sorted(range(n), key=lambda i: (-values[i], zs_a[i]))
        grid_best = float(values[order[0]])
        evals = n
    else:
        values = objective_grid(problem, zs_a, zs_b)
        order = sorted(np.ndindex(n, n), key=lambda ij: (-values[ij], zs_a[ij[0]], zs_b[ij[1]]))
        grid_best = float(values[order[0]])
        evals = n * n

    span = np.array([a_hi - a_lo, b_hi - b_lo])
    lower = np.array([a_lo, b_lo])
    counter = _Counter(lambda za, zb: _objective_value(problem, za, zb))
    budget = max(problem.max_evaluations - evals, 1)
    candidates = []
    for idx in order[:seeds]:
        if problem.symmetric:
            i = idx
            lo, hi = zs_a[max(i - 1, 0)], zs_a[min(i + 1, n - 1)]
            res = optimize.minimize_scalar(lambda z: -counter(z, z), bounds=(lo, hi), method="bounded",
                                           options={"xatol": 1e-12 * (a_hi - a_lo), "maxiter": budget})
            z = float(res.x)
            candidates.append((-float(res.fun), z, z, bool(res.success)))
        else:
            u0 = (np.array([zs_a[idx[0]], zs_b[idx[1]]]) - lower) / span
            step = 1.0 / (n - 1)
            simplex = np.array([u0, u0 + [step, 0], u0 + [0, step]])
            simplex = np.where(simplex > 1, simplex - 2 * step, simplex)
            res = optimize.minimize(lambda u: -counter(*(lower + np.clip(u, 0, 1) * span)), u0,
                                    method="Nelder-Mead", bounds=[(0, 1), (0, 1)],
                                    options={"initial_simplex": simplex, "xatol": 1e-10,
                                             "fatol": problem.tolerance * 1e-3, "maxfev": budget})
            za, zb = lower + np.clip(res.x, 0, 1) * span
            candidates.append((-float(res.fun), float(za), float(zb), bool(res.success)))
        if counter.calls >= budget:
            break
    # grid points themselves are valid candidates too
    if problem.symmetric:
        candidates.append((grid_best, float(zs_a[order[0]]), float(zs_a[order[0]]), True))
    else:
        i, j = order[0]
        candidates.append((grid_best, float(zs_a[i]), float(zs_b[j]), True))
    best = sorted(candidates, key=lambda c: (-c[0], c[1], c[2]))[0]
    _, za, zb, ok = best

    ev = evaluate_lenses(problem.initial, za, zb, problem.model, problem.target)
    value = ev.fidelity if problem.objective == "fidelity" else ev.entropy
    total = evals + counter.calls
    edge = 1e-9
    interior = all(lo + edge * (hi - lo) < z < hi - edge * (hi - lo)
                   for z, (lo, hi) in zip((za, zb), problem.bounds))
    exhausted = counter.calls >= budget
    converged = (ok and interior and not exhausted and total <= problem.max_evaluations
                 and value >= grid_best - problem.tolerance)
    return OptimizationResult(za, zb, ev.state, ev.fidelity, ev.entropy, ev.success_probability,
                              ev.densities.density, value, grid_best, total, converged)


def invert_initial_states(fa: LocalFilter, fb: LocalFilter, target: PureBipartiteState | None = None
                          ) -> PureBipartiteState:
    """Correlated initial state that the filters turn into `target`:
    C_l proportional to target_l / (tA_l tB_l)."""
    d = fa.d
    target = PureBipartiteState.max_entangled(d) if target is None else target
    if target.d != d or fb.d != d:
        raise ValueError("filters and target differ in dimension")
    tgt = require_correlated(target, "target")
    joint = fa.as_array() * fb.as_array()
    needed = tgt != 0
    if np.any(needed & (joint == 0)):
        raise InfeasibleInversionError(
            f"filter blocks modes {np.flatnonzero(needed & (joint == 0)).tolist()} that the target needs")
    amps = np.zeros(d, dtype=complex)
    amps[needed] = tgt[needed] / joint[needed]
    return normalize(PureBipartiteState.from_diagonal(amps))


def amplitude_spread(state: PureBipartiteState) -> float:
    """Largest difference between normalized diagonal amplitude magnitudes."""
    diag = np.abs(normalize(state).diagonal)
    return float(diag.max() - diag.min())


@dataclass(frozen=True)
class ConfigurationRow:
    config_id: int
    z_a: float
    z_b: float
    densities: tuple
    amplitudes: tuple
    fidelity: float
    entropy: float
    success_probability: float
    best: bool = False

    @property
    def reported_amplitudes(self) -> tuple:
        """Amplitudes at the 0.01 precision of the measurement."""
        return tuple(round(a, 2) for a in self.amplitudes)


def configuration_table(initial: PureBipartiteState, configs, model: OpticsModel | None = None,
                        target: PureBipartiteState | None = None, objective: str = "fidelity"
                        ) -> list[ConfigurationRow]:
    """One row per (z_A, z_B) lens pair; the row with the highest objective
    (first one on ties) is flagged best."""
    if objective not in OBJECTIVES:
        raise ValueError(f"objective must be one of {OBJECTIVES}")
    model = OpticsModel() if model is None else model
    rows = []
    for k, (za, zb) in enumerate(configs, start=1):
        ev = evaluate_lenses(initial, za, zb, model, target)
        amps = tuple(float(a) for a in np.abs(ev.state.diagonal)) if ev.state.is_correlated() else ()
        rows.append(ConfigurationRow(k, float(za), float(zb), ev.densities.density, amps, ev.fidelity,
                                     ev.entropy, ev.success_probability))
    if rows:
        key = (lambda r: r.fidelity) if objective == "fidelity" else (lambda r: r.entropy)
        best = max(range(len(rows)), key=lambda i: (key(rows[i]), -i))
        rows[best] = ConfigurationRow(**{**rows[best].__dict__, "best": True})
    return rows


def default_configurations(initial: PureBipartiteState, model: OpticsModel | None = None,
                           bounds=None, optimum: OptimizationResult | None = None) -> list[tuple]:
    """Seven lens pairs built from the per-mode optimal positions, with the
    concentrating optimum in fifth place."""
    model = OpticsModel() if model is None else model
    bounds = model.default_bounds() if bounds is None else bounds
    p0, p1, p2 = (model.mode_optimal_position(l, bounds) for l in range(3))
    if optimum is None:
        optimum = optimize_lens_config(OptimizationProblem(initial, bounds=(bounds, bounds), model=model))
    return [(p0, p0), (p1, p0), (p1, p1), (p2, p1), (optimum.z_a, optimum.z_b), (p2, p2), (p0, p2)]
