from __future__ import annotations

import logging
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import solve_ivp

from fracchemo.densities import WaitingTimeLaw
from fracchemo.fracops import FieldHistory
from fracchemo.solvers import (
    LatticeField,
    Model,
    ModelSpec,
    NumericalError,
    _Integrator,
    delta_field,
    solve,
    step_model1,
    step_model2,
    step_model3,
    step_model4,
)
from oracles import run_model

PARETO = WaitingTimeLaw.pareto(0.1, 0.5)
EXPO = WaitingTimeLaw.exponential(0.1)
STEPPERS = {1: step_model1, 2: step_model2, 3: step_model3, 4: step_model4}
RAGGED = np.array([0.1, 0.3, 1.0, 0.2, 0.05, 0.0, 0.4])


def classical_ks(beta, tau, n0, t_eval):
    """Exponential-waiting master equation dn/dt = (P(c) - I) n / tau, integrated tightly."""

    def rhs(t, n):
        c = n / n.sum()
        v = np.exp(beta * c)
        pl = np.roll(v, 1) / (np.roll(v, 1) + np.roll(v, -1))
        pr = 1 - pl
        return (np.roll(pr * n, 1) + np.roll(pl * n, -1) - n) / tau

    sol = solve_ivp(rhs, (0, max(t_eval)), n0, method="DOP853", rtol=1e-12, atol=1e-14, t_eval=t_eval)
    return sol.y.T


# ------------------------------------------------------------ basic objects


def test_lattice_field():
    f = delta_field(11, dx=0.5, mass=3.0)
    assert f.mass == 3.0 and f.values[5] == 3.0
    assert f.x[5] == 0.0 and f.x[0] == -2.5
    with pytest.raises(ValueError):
        f.values[0] = 1.0
    with pytest.raises(ValueError):
        LatticeField([1.0, np.nan, 0.0])


def test_model_parse():
    assert Model.parse("III") is Model.III
    assert Model.parse(4) is Model.IV
    assert Model.parse("2") is Model.II
    with pytest.raises(ValueError):
        Model.parse(5)


def test_derived_coefficients():
    spec = ModelSpec(3, PARETO, 2.0, dx=0.5)
    A = 1 / math.sqrt(math.pi) / math.sqrt(0.1)
    assert spec.rate == pytest.approx(A, rel=1e-14)
    assert spec.d_gamma == pytest.approx(A * 0.25 / 2, rel=1e-14)
    assert spec.chi_gamma == pytest.approx(A * 2.0 * 0.25, rel=1e-14)


def test_model_one_has_no_reactions():
    with pytest.raises(ValueError):
        ModelSpec(1, PARETO, 1.0, reaction_k=0.1)


def test_probability_default_per_model():
    assert not ModelSpec(2, PARETO).implicit_probabilities
    assert ModelSpec(4, PARETO).implicit_probabilities


# ------------------------------------------------------------ single steps


@pytest.mark.parametrize("model", [1, 2, 3, 4])
@pytest.mark.parametrize("beta", [0.0, 5.0])
def test_uniform_field_is_stationary(model, beta):
    hist = FieldHistory.from_array(0.01, np.full((1, 9), 0.3))
    spec = ModelSpec(model, PARETO, beta)
    hist.append(STEPPERS[model](hist, spec, 0).values)
    out = STEPPERS[model](hist, spec, 1)
    assert np.allclose(out.values, 0.3, rtol=1e-13)


def test_model1_gamma_one_is_implicit_diffusion():
    n0 = np.zeros(8)
    n0[3] = 1.0
    dt, tau = 0.05, 0.1
    lap = np.roll(np.eye(8), 1, 0) + np.roll(np.eye(8), -1, 0)
    want = np.linalg.solve(np.eye(8) - (dt / tau) * (0.5 * lap - np.eye(8)), n0)
    got = step_model1(FieldHistory.from_array(dt, n0[None]), ModelSpec(1, EXPO, 0.0), 0)
    assert np.allclose(got.values, want, rtol=1e-13, atol=1e-16)


@pytest.mark.parametrize("model", [1, 2, 3, 4])
def test_first_step_matches_dense_assembly(model):
    n0 = np.zeros(5)
    n0[2] = 1.0
    want = run_model(model, PARETO, 0.0, n0, 0.01, 1)[1]
    got = STEPPERS[model](FieldHistory.from_array(0.01, n0[None]), ModelSpec(model, PARETO, 0.0), 0)
    assert np.allclose(got.values, want, rtol=1e-10, atol=1e-13)


@pytest.mark.parametrize("model, k", [(1, 0.0), (2, 0.0), (2, 0.7), (3, 0.0), (3, -0.6), (4, 0.0), (4, 0.7)])
def test_trajectory_matches_dense_assembly(model, k):
    """Several coupled steps with memory, self-chemotaxis and reactions."""
    dt, steps = 0.05, 6
    want = run_model(model, PARETO, 2.0, RAGGED, dt, steps, k=k)
    spec = ModelSpec(model, PARETO, 2.0, k)
    got = solve(spec, LatticeField(RAGGED), dt, steps * dt, list(dt * np.arange(steps + 1)))
    assert np.allclose(got.profiles, want, rtol=1e-10, atol=1e-13)


def test_step_functions_agree_with_solve():
    dt = 0.02
    spec = ModelSpec(3, PARETO, 1.5)
    tr = solve(spec, LatticeField(RAGGED), dt, 0.2, [0.2])
    hist = FieldHistory.from_array(dt, tr.history.values[:10])
    assert np.allclose(step_model3(hist, spec, 9).values, tr.profile(0.2), rtol=1e-14)
    with pytest.raises(ValueError):
        step_model2(hist, spec, 9)


# ------------------------------------------------------------ invariants


@pytest.mark.parametrize("model", [1, 2, 3, 4])
def test_mass_conserved(model):
    tr = solve(ModelSpec(model, PARETO, 1.0), delta_field(), 0.01, 2.0, [0.5, 1.0, 2.0])
    assert np.allclose(tr.profiles.sum(1), 1.0, rtol=1e-10 if model > 1 else 1e-8)


@pytest.mark.parametrize("model", [1, 2, 3, 4])
def test_unbiased_symmetry(model):
    spec = ModelSpec(model, PARETO, 0.0, preserve_symmetry=False)
    tr = solve(spec, delta_field(41), 0.02, 4.0, [4.0])
    p = tr.profile(4.0)
    assert np.max(np.abs(p - p[::-1])) < 1e-12


def test_model2_unbiased_symmetric_at_long_time():
    tr = solve(ModelSpec(2, PARETO, 0.0, preserve_symmetry=False), delta_field(), 0.01, 20.0, [20.0])
    p = tr.profile(20.0)
    assert np.max(np.abs(p - p[::-1])) < 1e-9


def test_model2_strong_aggregation_amplifies_rounding():
    """Without the mirror reduction Model II at beta=10 drifts into a lopsided state."""
    free = solve(ModelSpec(2, PARETO, 10.0, preserve_symmetry=False), delta_field(), 0.01, 10.0, [10.0])
    kept = solve(ModelSpec(2, PARETO, 10.0), delta_field(), 0.01, 10.0, [10.0])
    p, q = free.profile(10.0), kept.profile(10.0)
    assert np.abs(p - p[::-1]).sum() > 0.1
    assert np.array_equal(q, q[::-1])


def test_asymmetric_data_not_symmetrised():
    n0 = np.zeros(21)
    n0[8] = 1.0
    tr = solve(ModelSpec(3, PARETO, 1.0), LatticeField(n0), 0.02, 1.0, [1.0])
    assert tr.profile(1.0)[8] > tr.profile(1.0)[12]
    # centred on site 8, up to the pull of the wrapped lattice
    assert tr.x @ tr.profile(1.0) == pytest.approx(-2.0, abs=1e-3)


def test_model4_survival_dominated_start():
    tr = solve(ModelSpec(4, PARETO, 3.0), delta_field(21), 1e-4, 1e-3, [1e-3])
    p = tr.profile(1e-3)
    assert p[10] == pytest.approx(PARETO.survival(1e-3), rel=2e-3)
    assert p[10] < 1.0


def test_boundary_occupancy_negligible():
    tr = solve(ModelSpec(3, PARETO, 0.1), delta_field(), 0.01, 20.0, [20.0])
    p = tr.profile(20.0)
    assert p[:3].sum() + p[-3:].sum() < 1e-6


@settings(max_examples=10, deadline=None)
@given(st.lists(st.floats(0.0, 5.0), min_size=5, max_size=12).filter(lambda v: sum(v) > 0.1),
       st.sampled_from([1, 2, 3, 4]), st.floats(0.0, 4.0))
def test_positivity_and_mass_random_data(values, model, beta):
    tr = solve(ModelSpec(model, PARETO, beta), LatticeField(values), 0.02, 0.4, [0.2, 0.4])
    assert np.all(tr.profiles >= 0.0)
    assert np.allclose(tr.profiles.sum(1), sum(values), rtol=1e-8)


# ------------------------------------------------------------ gamma = 1


def test_models_two_and_three_coincide_at_gamma_one():
    a = solve(ModelSpec(2, EXPO, 1.0), delta_field(), 0.01, 2.0, [0.01, 1.0, 2.0])
    b = solve(ModelSpec(3, EXPO, 1.0), delta_field(), 0.01, 2.0, [0.01, 1.0, 2.0])
    assert np.max(np.abs(a.profiles - b.profiles)) < 1e-12


def test_gamma_one_against_classical_stepper():
    ref = classical_ks(1.0, 0.1, delta_field().values, [1.0, 20.0])
    for dt in (0.01, 0.005):
        got = solve(ModelSpec(3, EXPO, 1.0), delta_field(), dt, 20.0, [1.0, 20.0])
        err = np.abs(got.profiles - ref).sum(1)
        assert err[1] < 1e-4
    # lagged probabilities: first order in dt
    assert err[0] < 1e-3


def model4_gamma_one_reference(beta, tau, n0, t):
    """Model IV with exponential waiting: m' = (n - m)/tau, n = n0 e^{-t/tau} + P(c(n)) m."""
    state = {"n": n0.copy()}

    def field(s, m):
        base = n0 * math.exp(-s / tau)
        n = state["n"]
        for _ in range(200):
            c = n / n.sum()
            v = np.exp(beta * c)
            pl = np.roll(v, 1) / (np.roll(v, 1) + np.roll(v, -1))
            nxt = base + np.roll((1 - pl) * m, 1) + np.roll(pl * m, -1)
            if np.max(np.abs(nxt - n)) < 1e-15:
                break
            n = nxt
        state["n"] = nxt
        return nxt

    sol = solve_ivp(lambda s, m: (field(s, m) - m) / tau, (0, t), np.zeros_like(n0), method="DOP853",
                    rtol=1e-11, atol=1e-14, dense_output=True)
    return field(t, sol.sol(t))


def test_model4_gamma_one_second_order():
    n0 = delta_field(41).values
    ref = model4_gamma_one_reference(1.0, 0.1, n0, 1.0)
    errs = []
    for dt in (0.01, 0.005):
        tr = solve(ModelSpec(4, EXPO, 1.0), LatticeField(n0), dt, 1.0, [1.0])
        errs.append(np.abs(tr.profile(1.0) - ref).sum())
    assert errs[0] < 1e-4
    assert math.log2(errs[0] / errs[1]) == pytest.approx(2.0, abs=0.15)


def test_implicit_and_lagged_converge_together():
    out = {}
    for imp in (False, True):
        tr = solve(ModelSpec(3, PARETO, 1.0, implicit_probabilities=imp), delta_field(), 0.0025, 2.0, [2.0])
        out[imp] = tr.profile(2.0)
    assert np.abs(out[True] - out[False]).sum() < 2e-3


# ------------------------------------------------------------ reactions


@pytest.mark.parametrize("model, rtol", [(2, 1e-6), (3, 1e-6), (4, 1e-5)])
def test_reaction_factorisation_external(model, rtol):
    # II and III factorise exactly; for IV the tilted product integration
    # interpolates n rather than exp(-kt) n, which costs O(dt^2)
    c = np.exp(-0.5 * ((np.arange(41) - 24) / 4.0) ** 2)
    c /= c.sum()
    k = 0.5
    base = solve(ModelSpec(model, PARETO, 10.0, 0.0, external_c=c), delta_field(41), 0.01, 1.0, [0.5, 1.0])
    grown = solve(ModelSpec(model, PARETO, 10.0, k, external_c=c), delta_field(41), 0.01, 1.0, [0.5, 1.0])
    for j, t in enumerate((0.5, 1.0)):
        want = math.exp(k * t) * base.profiles[j]
        assert np.abs(grown.profiles[j] - want).sum() <= rtol * want.sum()
        assert grown.profiles[j].sum() == pytest.approx(math.exp(k * t), rel=rtol)


def test_reaction_factorisation_self_chemotactic():
    # the proportion c = n / sum(n) ignores uniform growth, so the factorisation survives
    k = -0.4
    base = solve(ModelSpec(3, PARETO, 2.0), delta_field(41), 0.01, 1.0, [1.0])
    grown = solve(ModelSpec(3, PARETO, 2.0, k), delta_field(41), 0.01, 1.0, [1.0])
    assert np.allclose(grown.profile(1.0), math.exp(k) * base.profile(1.0), rtol=1e-9, atol=1e-15)


# ------------------------------------------------------------ failures


def test_input_validation():
    spec = ModelSpec(3, PARETO, 1.0)
    with pytest.raises(ValueError):
        solve(spec, LatticeField(np.zeros(9)), 0.01, 1.0)
    with pytest.raises(ValueError):
        solve(spec, LatticeField([1.0, -0.1, 0.0]), 0.01, 1.0)
    with pytest.raises(ValueError):
        solve(spec, delta_field(9), 0.01, 1.0, [0.123])
    with pytest.raises(ValueError):
        solve(spec, delta_field(9), 0.03, 1.0)
    with pytest.raises(ValueError):
        solve(ModelSpec(3, PARETO, 1.0, external_c=np.ones(5) / 5), delta_field(9), 0.01, 0.1)


def test_numerical_checks(caplog):
    integ = _Integrator(ModelSpec(3, PARETO, 1.0), 0.01, 5, 3)
    with pytest.raises(NumericalError) as err:
        integ._check(np.array([1.0, np.nan, 0.0, 0.0, 0.0]), 6)
    assert err.value.step == 7
    with pytest.raises(NumericalError):
        integ._check(np.array([1.0, -1e-6, 0.0, 0.0, 0.0]), 0)
    with caplog.at_level(logging.DEBUG, logger="fracchemo.solvers"):
        fixed = integ._check(np.array([1.0, -1e-14, 0.0, 0.0, 0.0]), 0)
    assert fixed.min() == 0.0
    assert any("clamped" in r.getMessage() for r in caplog.records)
