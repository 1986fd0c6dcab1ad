import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from procrustean.errors import InfeasibleInversionError
from procrustean.filtering import LocalFilter, apply_local_filter, procrustean_filter_for
from procrustean.optics import OpticsModel
from procrustean.optimize import (OptimizationProblem, amplitude_spread, configuration_table,
                                  default_configurations, evaluate_lenses, invert_initial_states,
                                  objective_grid, optimize_lens_config)
from procrustean.states import (CONCENTRABLE_EXAMPLES, MEASURED_INITIAL, PureBipartiteState, entanglement_entropy,
                                fidelity, normalize)

INITIAL = PureBipartiteState.from_diagonal(MEASURED_INITIAL)
PSI_MAX = PureBipartiteState.max_entangled(3)
MODEL = OpticsModel()


@pytest.fixture(scope="module")
def optimum():
    return optimize_lens_config(OptimizationProblem(INITIAL))


def grid_oracle(initial, n=200, model=MODEL, bounds=None):
    """Fidelity to psi_max on an n x n lens grid, from the coupling sweep alone."""
    lo, hi = model.default_bounds() if bounds is None else bounds
    zs = np.linspace(lo, hi, n)
    t = np.sqrt(model.sweep(zs))
    c = np.abs(np.diag(initial.amplitudes))
    amp = t[:, None, :] * t[None, :, :] * c
    fid = amp.sum(axis=2) ** 2 / (3 * (amp ** 2).sum(axis=2))
    return zs, fid


def test_optimum_beats_exhaustive_grid(optimum):
    _, fid = grid_oracle(INITIAL)
    assert optimum.fidelity >= fid.max() - 1e-9
    assert optimum.fidelity >= 0.99
    assert optimum.converged


def test_result_is_recomputed_not_cached(optimum):
    ev = evaluate_lenses(INITIAL, optimum.z_a, optimum.z_b, MODEL)
    assert ev.fidelity == optimum.fidelity
    assert np.array_equal(ev.state.amplitudes, optimum.state.amplitudes)
    assert ev.success_probability == optimum.success_probability


def test_vectorized_grid_matches_pointwise():
    problem = OptimizationProblem(INITIAL)
    zs = np.linspace(*MODEL.default_bounds(), 7)
    grid = objective_grid(problem, zs, zs[::-1])
    for i, za in enumerate(zs):
        for j, zb in enumerate(zs[::-1]):
            assert grid[i, j] == pytest.approx(evaluate_lenses(INITIAL, za, zb).fidelity, abs=1e-12)
    ent = objective_grid(OptimizationProblem(INITIAL, objective="entropy"), zs[:3], zs[:3])
    assert ent[1, 2] == pytest.approx(evaluate_lenses(INITIAL, zs[1], zs[2]).entropy, abs=1e-12)


def test_swap_invariance():
    z0 = MODEL.matched_position
    ba, bb = (z0 - 1e-3, z0 + 5e-4), (z0 - 6e-4, z0 + 1e-3)
    one = optimize_lens_config(OptimizationProblem(INITIAL, bounds=(ba, bb)))
    two = optimize_lens_config(OptimizationProblem(INITIAL, bounds=(bb, ba)))
    assert two.fidelity == pytest.approx(one.fidelity, abs=1e-9)
    swapped = evaluate_lenses(INITIAL, one.z_b, one.z_a)
    assert swapped.fidelity == pytest.approx(one.fidelity, abs=1e-15)


def test_deterministic(optimum):
    again = optimize_lens_config(OptimizationProblem(INITIAL))
    assert (again.z_a, again.z_b, again.fidelity) == (optimum.z_a, optimum.z_b, optimum.fidelity)


def test_symmetric_search_stays_on_diagonal():
    res = optimize_lens_config(OptimizationProblem(INITIAL, symmetric=True))
    assert res.z_a == res.z_b
    zs = np.linspace(*MODEL.default_bounds(), 2001)
    t = np.sqrt(MODEL.sweep(zs))
    amp = t ** 2 * np.abs(INITIAL.diagonal)
    diag_fid = amp.sum(axis=1) ** 2 / (3 * (amp ** 2).sum(axis=1))
    assert res.fidelity >= diag_fid.max() - 1e-9


def test_maximal_input_needs_no_concentration():
    res = optimize_lens_config(OptimizationProblem(PSI_MAX))
    z0 = MODEL.matched_position
    plain = evaluate_lenses(PSI_MAX, z0, z0).fidelity
    assert res.fidelity > plain
    assert res.fidelity > 0.998


def test_entropy_objective():
    res = optimize_lens_config(OptimizationProblem(INITIAL, objective="entropy"))
    assert res.objective_value == res.entropy
    assert res.entropy > entanglement_entropy(INITIAL)


def test_budget_exhaustion_is_reported():
    res = optimize_lens_config(OptimizationProblem(INITIAL, max_evaluations=1030))
    assert not res.converged
    assert res.fidelity >= res.grid_best - 1e-12


def test_boundary_optimum_is_not_converged():
    z0 = MODEL.matched_position
    # box beside the concentrating region: the best point sits on an edge
    box = (z0 + 5e-4, z0 + 1e-3)
    res = optimize_lens_config(OptimizationProblem(INITIAL, bounds=(box, box)))
    assert not res.converged
    assert res.z_a == pytest.approx(box[0]) or res.z_a == pytest.approx(box[1])


def test_problem_validation():
    with pytest.raises(ValueError):
        OptimizationProblem(INITIAL, objective="purity")
    with pytest.raises(ValueError):
        OptimizationProblem(INITIAL, bounds=((1.0, 0.5), (0.4, 0.5)))
    with pytest.raises(ValueError):
        OptimizationProblem(INITIAL, tolerance=0)
    with pytest.raises(ValueError):
        OptimizationProblem(INITIAL, symmetric=True, bounds=((0.4, 0.5), (0.41, 0.5)))


# --- inverse problem ---------------------------------------------------------

def test_identity_filters_invert_to_target():
    back = invert_initial_states(LocalFilter.identity(), LocalFilter.identity())
    assert np.allclose(back.amplitudes, PSI_MAX.amplitudes, atol=1e-15)


@pytest.mark.parametrize("amps", CONCENTRABLE_EXAMPLES)
def test_inversion_round_trip_examples(amps):
    s = PureBipartiteState.from_diagonal(amps)
    fa, fb, _ = procrustean_filter_for(s)
    back = invert_initial_states(fa, fb)
    assert np.allclose(back.diagonal, normalize(s).diagonal, atol=1e-10)
    out = apply_local_filter(back, fa, fb)
    assert fidelity(out.state, PSI_MAX) >= 1 - 1e-10


diag = st.tuples(*[st.floats(0.05, 1.0)] * 3)


@settings(max_examples=100)
@given(diag, diag)
def test_inversion_identities(src, tgt):
    s, t = PureBipartiteState.from_diagonal(src), PureBipartiteState.from_diagonal(tgt)
    fa, fb, _ = procrustean_filter_for(s, t)
    assert np.allclose(invert_initial_states(fa, fb, t).amplitudes, normalize(s).amplitudes, atol=1e-10)
    back = invert_initial_states(fa, fb, t)
    assert np.allclose(apply_local_filter(back, fa, fb).state.amplitudes, normalize(t).amplitudes, atol=1e-10)


def test_inversion_infeasible():
    with pytest.raises(InfeasibleInversionError):
        invert_initial_states(LocalFilter((0, 1, 1)), LocalFilter.identity())


# --- configuration table -----------------------------------------------------

@pytest.fixture(scope="module")
def table(optimum):
    return configuration_table(INITIAL, default_configurations(INITIAL, MODEL, optimum=optimum))


def test_default_table_shape(table, optimum):
    assert len(table) == 7
    assert [r.best for r in table].count(True) == 1
    best = next(r for r in table if r.best)
    assert best.config_id == 5 and best.fidelity == optimum.fidelity
    assert sum(r.fidelity >= 0.99 for r in table) == 1


def test_some_configuration_reduces_entanglement(table):
    assert any(r.entropy < entanglement_entropy(INITIAL) for r in table)


def test_reported_amplitudes_precision(table):
    for r in table:
        assert all(abs(a - b) <= 0.005 + 1e-12 for a, b in zip(r.amplitudes, r.reported_amplitudes))
        assert all(round(a, 2) == a for a in r.reported_amplitudes)


def test_identical_configs_give_identical_rows():
    z = MODEL.matched_position
    rows = configuration_table(INITIAL, [(z, z + 1e-4)] * 3)
    for r in rows[1:]:
        assert (r.amplitudes, r.fidelity, r.densities) == (rows[0].amplitudes, rows[0].fidelity, rows[0].densities)


def test_amplitude_spread():
    assert amplitude_spread(PSI_MAX) == pytest.approx(0.0, abs=1e-15)
    assert amplitude_spread(INITIAL) == pytest.approx((0.80 - 0.41) / np.sqrt(1.0017))


def test_bounds_must_fit_the_track():
    with pytest.raises(ValueError):
        OptimizationProblem(INITIAL, bounds=((0.1, MODEL.track_length + 0.01), (0.1, 0.2)))
