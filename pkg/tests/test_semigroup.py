import math

import numpy as np
import pytest

from r0kit import (Grid, InstabilityError, RateFunction, assemble_operator,
                   evolve, grid_for_model, initial_state, malthus_estimate,
                   sign_consistency, step)
from conftest import (ModelSpec, age_model, const, size_model,
                      uniform_family)


def _no_birth_model(mu=0.0, D=0.3, x_max=10.0):
    return ModelSpec(0.0, x_max, const(1.0), const(mu), const(0.0), D=D)


def test_mass_conserved_without_mortality_or_births():
    m = _no_birth_model()
    g = Grid(0.0, 10.0, 512)
    state = evolve(m, None, 0, initial_state(m, g), dt=1e-3, n_steps=1000)
    mass = state.mass_history[:, 1]
    assert np.max(np.abs(mass - mass[0])) / mass[0] < 1e-12


def test_mass_decay_matches_exact_ode():
    # total mass of the no-birth run solves m' = -mu m exactly; the implicit
    # scheme reproduces its own product formula to roundoff and
    # Crank-Nicolson hits the continuum exponential to 1e-6 at t = 1
    mu = 1.0
    m = _no_birth_model(mu=mu)
    g = Grid(0.0, 10.0, 256)
    dt, steps = 1e-4, 10_000

    state = evolve(m, None, 0, initial_state(m, g), dt=dt, n_steps=steps)
    mass = state.mass_history[:, 1]
    discrete_law = mass[0] * (1.0 + mu * dt) ** (-steps)
    assert mass[-1] == pytest.approx(discrete_law, rel=1e-10)

    state_cn = evolve(m, None, 0, initial_state(m, g), dt=dt, n_steps=steps,
                      scheme="crank-nicolson")
    mass_cn = state_cn.mass_history[:, 1]
    assert mass_cn[-1] == pytest.approx(mass_cn[0] * math.exp(-mu), rel=1e-6)


def test_positivity_preserved(rng):
    for _ in range(100):
        mu = float(rng.uniform(0.1, 2.0))
        gam = float(rng.uniform(0.3, 2.0))
        D = float(rng.choice([0.0, rng.uniform(0.05, 2.0)]))
        btilde = float(rng.uniform(0.0, 3.0))
        m = ModelSpec(0.0, 15.0, const(gam), const(mu),
                      RateFunction.proportional_to_mu(btilde), D=D)
        g = Grid(0.0, 15.0, 128)
        st = initial_state(m, g)
        st = st.__class__(field=st.field.__class__(
            values=rng.random(g.n_cells), grid=g), time=0.0,
            mass_history=st.mass_history)
        out = evolve(m, uniform_family(m), 8, st, dt=5e-3, n_steps=1000)
        assert np.all(out.field.values >= 0.0)


def test_step_advances_time_and_history():
    m = _no_birth_model(mu=1.0)
    g = Grid(0.0, 10.0, 128)
    s0 = initial_state(m, g)
    s1 = step(m, None, 0, s0, dt=0.01)
    assert s1.time == pytest.approx(0.01)
    assert s1.mass_history.shape == (2, 2)
    s2 = step(m, None, 0, s1, dt=0.01)
    assert s2.time == pytest.approx(0.02)
    assert s2.mass_history.shape == (3, 2)


def test_per_step_mass_ledger():
    # mass change = -dt * integral(mu u_new) + dt * (L u_old) exactly
    # (interior fluxes telescope; both walls are closed here)
    m = age_model(RateFunction.proportional_to_mu(1.5), mu=1.0, D=2.0)
    g = grid_for_model(m, 512)
    op = assemble_operator(m, g)
    fam = uniform_family(m)
    from r0kit.nextgen import birth_functional, mollifier_density
    weights = birth_functional(m, g).weights
    phi = mollifier_density(fam, 8, g)
    state = initial_state(m, g)
    h = g.spacing
    for _ in range(50):
        new = step(m, fam, 8, state, dt=2e-3)
        births = float(weights @ state.field.values)
        deaths = h * float(op.mu_values @ new.field.values)
        delta = new.field.mass() - state.field.mass()
        assert delta == pytest.approx(2e-3 * (births - deaths),
                                      abs=1e-12 * max(1.0, state.field.mass()))
        state = new


def test_malthus_sign_supercritical_and_subcritical():
    sup = age_model(const(2.0), mu=1.0, D=2.0)
    sub = age_model(const(0.5), mu=1.0, D=2.0)
    g = grid_for_model(sup, 1024)
    assert malthus_estimate(sup, uniform_family(sup), 16, T=30.0, dt=2e-3, g=g) > 0
    assert malthus_estimate(sub, uniform_family(sub), 16, T=30.0, dt=2e-3, g=g) < 0


def test_malthus_critical_proportional_case():
    m = age_model(RateFunction.proportional_to_mu(1.0), mu=1.0, D=2.0)
    est = malthus_estimate(m, uniform_family(m), 16, grid_n=1024)
    assert abs(est) < 5e-3


def test_sign_consistency_reports():
    sup = age_model(RateFunction.proportional_to_mu(3.0), mu=1.0, D=2.0)
    rep = sign_consistency(sup, uniform_family(sup), 8, grid_n=2048,
                           T=30.0, dt=2e-3)
    assert rep.consistent and rep.r0_k > 1 and rep.malthus > 0

    zero = age_model(const(0.0), mu=1.0, D=2.0)
    rep0 = sign_consistency(zero, uniform_family(zero), 8, grid_n=2048,
                            T=20.0, dt=2e-3)
    assert rep0.consistent and rep0.r0_k == 0.0 and rep0.malthus < 0


def test_instability_guard_trips():
    # births amplifying mass faster than exp(10 t) abort the run
    m = age_model(RateFunction.proportional_to_mu(60.0), mu=1.0, D=2.0)
    g = grid_for_model(m, 256)
    with pytest.warns(UserWarning):
        with pytest.raises(InstabilityError):
            evolve(m, uniform_family(m), 8, initial_state(m, g),
                   dt=0.05, n_steps=2000)


def test_underflow_raises_degenerate_fit():
    from r0kit import ConvergenceError
    dead = size_model(const(0.0), mu=4.0)
    g = Grid(0.0, 12.0, 128)
    with pytest.raises(ConvergenceError):
        malthus_estimate(dead, uniform_family(dead), 8, T=500.0, dt=0.05, g=g)
