"""Backend parity: the compiled kernels and the pure-Python fallback must
agree to solver roundoff on the same inputs."""

import numpy as np
import pytest

from r0kit._kernels import _fallback

try:
    from r0kit._kernels import _core
except ImportError:
    _core = None

BACKENDS = [_fallback] + ([_core] if _core is not None else [])


def _random_m_matrix_system(rng, n):
    lower = -rng.random(n)
    upper = -rng.random(n)
    lower[0] = upper[-1] = 0.0
    diag = 1.0 + np.abs(lower) + np.abs(upper) + rng.random(n)
    rhs = rng.standard_normal(n)
    return lower, diag, upper, rhs


def _dense(lower, diag, upper):
    return np.diag(diag) + np.diag(upper[:-1], 1) + np.diag(lower[1:], -1)


@pytest.mark.parametrize("backend", BACKENDS, ids=lambda b: b.backend_name())
def test_thomas_solve_matches_dense(backend, rng):
    for n in (16, 257, 2048):
        lower, diag, upper, rhs = _random_m_matrix_system(rng, n)
        x = backend.thomas_solve(lower, diag, upper, rhs)
        ref = np.linalg.solve(_dense(lower, diag, upper), rhs)
        assert np.allclose(x, ref, rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize("backend", BACKENDS, ids=lambda b: b.backend_name())
def test_thomas_singular_pivot_raises(backend):
    n = 8
    lower = np.zeros(n)
    diag = np.ones(n)
    diag[3] = 0.0
    upper = np.zeros(n)
    with pytest.raises(_fallback.SingularSolve):
        backend.thomas_solve(lower, diag, upper, np.ones(n))


@pytest.mark.parametrize("backend", BACKENDS, ids=lambda b: b.backend_name())
def test_factored_solve_matches_direct(backend, rng):
    n = 512
    lower, diag, upper, rhs = _random_m_matrix_system(rng, n)
    factors = backend.thomas_factor(lower, diag, upper)
    x1 = backend.thomas_solve_factored(factors, rhs)
    x2 = backend.thomas_solve(lower, diag, upper, rhs)
    assert np.allclose(x1, x2, rtol=1e-12, atol=1e-13)


@pytest.mark.skipif(_core is None, reason="compiled kernels not built")
def test_backends_agree_on_evolution(rng):
    n = 256
    lower, diag, upper, _ = _random_m_matrix_system(rng, n)
    phi = rng.random(n)
    phi /= phi.sum() * 0.01
    weights = 0.01 * rng.random(n)
    u0 = rng.random(n)
    out = {}
    for backend in (_fallback, _core):
        u, mass = backend.evolve_implicit(lower, diag, upper, 1e-3, 0.01,
                                          weights, phi, u0, 500, 10.0)
        out[backend.backend_name()] = (u, mass)
    u_f, mass_f = out["python"]
    u_c, mass_c = out["compiled"]
    assert np.allclose(u_f, u_c, rtol=1e-10, atol=1e-12)
    assert np.allclose(mass_f, mass_c, rtol=1e-10)
    assert len(mass_f) == 501


@pytest.mark.parametrize("backend", BACKENDS, ids=lambda b: b.backend_name())
def test_evolution_growth_guard(backend, rng):
    n = 64
    lower = np.zeros(n)
    diag = np.full(n, 1e-9)
    upper = np.zeros(n)
    phi = np.full(n, 1.0)
    weights = np.full(n, 30.0)  # violent birth feedback
    u0 = np.ones(n)
    with pytest.raises(RuntimeError):
        backend.evolve_implicit(lower, diag, upper, 0.1, 1.0 / n,
                                weights, phi, u0, 200, 10.0)


def test_selected_backend_reported():
    from r0kit import _kernels
    assert _kernels.backend_name() in ("compiled", "python")
    assert "python" in _kernels.available_backends()
