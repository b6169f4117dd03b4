import math

import numpy as np
import pytest

from pmcont.errors import ConfigError, DimensionError
from pmcont.lindblad import (
    IntegratorConfig,
    SystemSpec,
    bloch_vector,
    build_generator,
    ensemble_average,
    expectation,
    initial_state,
    pm_correlation_dynamic,
    propagate,
    reduce_to_system,
)
from pmcont.params import Mode, PseudomodeSet

TIGHT = IntegratorConfig(rtol=1e-10, atol=1e-12)
EMPTY = PseudomodeSet(())


def test_free_sz_constant_without_tunnelling():
    sysm = SystemSpec(1.3, 0.0)
    t = np.linspace(0, 5, 11)
    rho = propagate(build_generator(sysm, EMPTY), sysm.initial_rho(), t, opts=TIGHT)
    assert np.allclose(expectation(rho, "z"), 1.0, atol=1e-12)


@pytest.mark.parametrize("ws,delta", [(0.0, 1.0), (1.0, 1.0), (0.4, 2.0)])
def test_rabi_oscillation(ws, delta):
    sysm = SystemSpec(ws, delta)
    t = np.linspace(0, 10, 41)
    rho = propagate(build_generator(sysm, EMPTY), sysm.initial_rho(), t, opts=TIGHT)
    w = math.hypot(ws, delta)
    exact = 1 - 2 * (delta / w) ** 2 * np.sin(w * t / 2) ** 2
    assert np.max(np.abs(expectation(rho, "z") - exact)) <= 1e-8


def test_number_decay():
    pm = PseudomodeSet((Mode(0.7, 0.0, 0.25, fock_dim=4),))
    gen = build_generator(None, pm)
    rho0 = np.diag([0, 1, 0, 0]).astype(complex)
    num = np.diag(np.arange(4.0))
    t = np.linspace(0, 6, 13)
    n_t = propagate(gen, rho0, t, opts=TIGHT, output=lambda Y: np.trace(num @ Y[:, 0].reshape(4, 4)))
    assert np.allclose(n_t, np.exp(-2 * 0.25 * t), atol=1e-9)


def test_physical_sets_keep_a_valid_state():
    rng = np.random.default_rng(3)
    for _ in range(3):
        modes = tuple(
            Mode(rng.uniform(0, 2), rng.uniform(0, 0.2), rng.uniform(0.05, 1), rng.uniform(0, 0.3), fock_dim=4)
            for _ in range(2)
        )
        sysm = SystemSpec(rng.uniform(0, 1), rng.uniform(0, 1), coupling="x", initial="plus")
        pm = PseudomodeSet(modes)
        gen = build_generator(sysm, pm)
        t = np.linspace(0, 4, 9)
        full = propagate(gen, initial_state(sysm, pm), t, opts=TIGHT, output=lambda Y: Y[:, 0].reshape(gen.D, gen.D))
        for rho in full:
            assert abs(np.trace(rho) - 1) < 1e-9
            assert np.allclose(rho, rho.conj().T, atol=1e-9)
            assert np.linalg.eigvalsh(0.5 * (rho + rho.conj().T)).min() > -1e-8
            red = reduce_to_system(rho.reshape(-1, 1), gen.dims)[0]
            assert abs(np.trace(red) - 1) < 1e-9


def test_partial_trace_of_product_state():
    a = np.array([[0.7, 0.2 - 0.1j], [0.2 + 0.1j, 0.3]])
    b = np.diag([0.5, 0.3, 0.2])
    red = reduce_to_system(np.kron(a, b).reshape(-1, 1), (2, 3))
    assert np.allclose(red[0], a)


def test_expectation_examples():
    up = SystemSpec(0, 0, initial="up").initial_rho()
    plus = SystemSpec(0, 0, initial="plus").initial_rho()
    assert expectation(up, "z") == pytest.approx(1)
    assert expectation(plus, "x") == pytest.approx(1)
    assert np.allclose(bloch_vector(plus), [1, 0, 0])
    assert np.allclose(bloch_vector(SystemSpec(0, 0, initial="plus_y").initial_rho()), [0, 1, 0])


@pytest.mark.parametrize(
    "mode",
    [Mode(1.0, 0.04, 0.3, 0.0, fock_dim=4), Mode(1.0, 0.04, 0.3 - 0.5j, 0.0, fock_dim=4), Mode(0.5, 0.1, 0.4, 0.2, fock_dim=12)],
)
def test_dynamic_correlation_matches_closed_form(mode):
    pm = PseudomodeSet((mode,))
    t = np.linspace(0, 8, 33)
    dyn = pm_correlation_dynamic(pm, t, TIGHT)
    assert np.max(np.abs(dyn - pm.correlation(t))) < 1e-7


def test_dynamic_correlation_at_zero():
    pm = PseudomodeSet((Mode(1.0, 0.04, 0.3, 0.1, fock_dim=10), Mode(2.0, 0.02, 0.5, 0.0, fock_dim=3)))
    c0 = pm_correlation_dynamic(pm, [0.0])[0]
    assert c0 == pytest.approx(0.04 * 1.2 + 0.02, abs=1e-4)


def test_linearity_in_initial_state():
    sysm = SystemSpec(1.0, 0.5)
    pm = PseudomodeSet((Mode(1.0, 0.05, 0.3, fock_dim=4),))
    gen = build_generator(sysm, pm)
    r1 = initial_state(SystemSpec(1.0, 0.5, initial="up"), pm)
    r2 = initial_state(SystemSpec(1.0, 0.5, initial="plus"), pm)
    t = np.linspace(0, 3, 4)
    a = propagate(gen, r1, t, opts=TIGHT)
    b = propagate(gen, r2, t, opts=TIGHT)
    c = propagate(gen, 0.3 * r1 + 0.7 * r2, t, opts=TIGHT)
    assert np.allclose(c, 0.3 * a + 0.7 * b, atol=1e-8)


def test_batched_columns_match_single_runs():
    sysm = SystemSpec(1.0, 0.5)
    pm = PseudomodeSet((Mode(1.0, 0.05, 0.3, fock_dim=3),))
    gen = build_generator(sysm, pm)
    rho0 = initial_state(sysm, pm).reshape(-1, 1)
    xs = np.array([0.0, 0.4, -0.2])
    t = np.linspace(0, 2, 5)
    batch = propagate(gen, np.repeat(rho0, 3, axis=1), t, drive=lambda s: xs * np.cos(s), opts=TIGHT)
    for k, x in enumerate(xs):
        single = propagate(gen, rho0[:, 0].reshape(gen.D, gen.D), t, drive=lambda s, x=x: x * np.cos(s), opts=TIGHT)
        assert np.allclose(batch[:, k], single, atol=1e-8)


def test_dimension_cap():
    pm = PseudomodeSet(tuple(Mode(1.0, 0.1, 0.2, fock_dim=10) for _ in range(4)))
    with pytest.raises(DimensionError):
        build_generator(SystemSpec(1, 1), pm)


def test_bad_time_grid():
    sysm = SystemSpec(1, 1)
    with pytest.raises(ConfigError):
        propagate(build_generator(sysm, EMPTY), sysm.initial_rho(), [0.0, 1.0, 0.5])


def test_ensemble_average():
    x = np.array([1.0, 2.0, 3.0, 4.0])
    mean, err = ensemble_average(x)
    assert mean == 2.5 and err == pytest.approx(np.std(x, ddof=1) / 2)
    m1, e1 = ensemble_average(np.array([[1 + 1j]]))
    assert m1[0] == 1 + 1j and e1[0] == 0
