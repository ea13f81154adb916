import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from osplit.boundary import BoundaryFace, ProblemSpec, assemble_operator
from osplit.flows import (
    LinearFlow,
    ReactionBlowUpError,
    ReactionFlow,
    diffusion_substep,
    phi1_apply,
    reaction_substep,
)
from osplit.grid import Field, make_uniform_grid
from osplit.presets import get_preset, square
from oracles import oracle_linear_step, taylor_expm


def _problem(faces):
    return ProblemSpec(tuple(faces), square, lambda u: 2 * u, lambda *c: 0 * c[0])


BOUNDARY_TYPES = {
    "dirichlet": [BoundaryFace("left", 1.0, 0.0, 0.5), BoundaryFace("right", 1.0, 0.0, -1.0)],
    "neumann": [BoundaryFace("left", 0.0, 1.0, 0.3), BoundaryFace("right", 0.0, 1.0, 1.0)],
    "robin": [BoundaryFace("left", 1.0, 1.0, 0.2), BoundaryFace("right", 1.0, 1.0, 1.5)],
    "mixed": [BoundaryFace("left", 1.0, 0.0, 1.0), BoundaryFace("right", 0.0, 1.0, 1.0)],
}


def _setup(kind, n=50, seed=0):
    g = make_uniform_grid(n, (0.0, 1.0))
    op = assemble_operator(_problem(BOUNDARY_TYPES[kind]), g)
    rng = np.random.default_rng(seed)
    v0 = op.impose_dirichlet(rng.normal(size=n), 0.0)
    q = rng.normal(size=n)
    return g, op, v0, q


# -- phi1 ----------------------------------------------------------------------


def test_phi1_of_zero_matrix():
    v = np.array([1.0, -2.0, 3.5])
    np.testing.assert_allclose(phi1_apply(np.zeros((3, 3)), v), v, rtol=1e-15)


def test_phi1_scalar():
    assert phi1_apply(np.array([[-1.0]]), [1.0])[0] == pytest.approx(0.6321205588, abs=1e-10)
    assert phi1_apply(np.array([[-1.0]]), [1.0])[0] == pytest.approx(1 - math.exp(-1), rel=1e-14)


def test_phi1_dirichlet_laplacian_against_series():
    g, op, v, _ = _setup("dirichlet")
    a = 1e-3 * op.matrix.toarray()[1:-1, 1:-1]
    n = a.shape[0]
    aug = np.zeros((n + 1, n + 1))
    aug[:n, :n] = a
    aug[:n, n] = v[1:-1]
    oracle = taylor_expm(aug)[:n, n]
    got = phi1_apply(a, v[1:-1])
    assert np.max(np.abs(got - oracle)) <= 1e-10 * np.max(np.abs(oracle))


def test_phi1_size_limit():
    with pytest.raises(ValueError, match="implicit"):
        phi1_apply(np.zeros((2001, 2001)), np.zeros(2001))


# -- linear substep --------------------------------------------------------------


@pytest.mark.parametrize("kind", sorted(BOUNDARY_TYPES))
def test_exact_flow_matches_series_oracle(kind):
    g, op, v0, q = _setup(kind)
    tau = 2e-3
    got = diffusion_substep(LinearFlow(op, "exact_phi"), Field(g, v0), Field(g, q), 0.0, tau)
    oracle = op.impose_dirichlet(oracle_linear_step(op, v0, q, tau), 0.0)
    assert np.max(np.abs(got - oracle)) <= 1e-10 * np.max(np.abs(oracle))


def test_zero_data_stays_zero():
    g = make_uniform_grid(20, (0.0, 1.0))
    op = assemble_operator(_problem([BoundaryFace("left", 1.0, 1.0), BoundaryFace("right", 0.0, 1.0)]), g)
    out = LinearFlow(op).step(np.zeros(20), np.zeros(20), 0.0, 0.1)
    assert not np.any(out)


def test_discrete_eigenvector_decays_exactly():
    n = 50
    g = make_uniform_grid(n, (0.0, 1.0))
    h = g.spacing[0]
    op = assemble_operator(_problem([BoundaryFace("left", 1.0, 0.0), BoundaryFace("right", 1.0, 0.0)]), g)
    v0 = np.sin(np.pi * g.axis(0))
    v0[[0, -1]] = 0.0
    lam = -(4 / h**2) * math.sin(math.pi * h / 2) ** 2
    tau = 0.05
    for mode in ("exact_phi", "sparse_expm"):
        out = LinearFlow(op, mode).step(v0, None, 0.0, tau)
        np.testing.assert_allclose(out, math.exp(lam * tau) * v0, rtol=1e-10, atol=1e-14)


def test_steady_state_is_preserved():
    # u = 1 + x satisfies u'' = 0 with u(0) = 1 and u'(1) = 1
    g = make_uniform_grid(30, (0.0, 1.0))
    op = assemble_operator(_problem([BoundaryFace("left", 1.0, 0.0, 1.0), BoundaryFace("right", 0.0, 1.0, 1.0)]), g)
    v0 = 1 + g.axis(0)
    assert np.max(np.abs(op.apply(v0, 0.0))) < 1e-9
    np.testing.assert_allclose(LinearFlow(op).step(v0, np.zeros(30), 0.0, 0.3), v0, rtol=1e-12)


@pytest.mark.parametrize("kind", sorted(BOUNDARY_TYPES))
def test_exact_and_implicit_modes_agree(kind):
    g, op, v0, q = _setup(kind, seed=5)
    tau = 0.01
    exact = LinearFlow(op, "exact_phi").step(v0, q, 0.0, tau)
    implicit = LinearFlow(op, "implicit_adaptive", rtol=1e-10).step(v0, q, 0.0, tau)
    krylov = LinearFlow(op, "sparse_expm").step(v0, q, 0.0, tau)
    assert np.max(np.abs(exact - implicit)) <= 1e-8
    assert np.max(np.abs(exact - krylov)) <= 1e-10 * np.max(np.abs(exact))


@pytest.mark.parametrize("mode", ["exact_phi", "sparse_expm"])
@pytest.mark.parametrize("kind", sorted(BOUNDARY_TYPES))
def test_semigroup_property(kind, mode):
    g, op, v0, q = _setup(kind, seed=2)
    flow = LinearFlow(op, mode)
    tau = 0.02
    full = flow.step(v0, q, 0.0, tau)
    halves = flow.step(flow.step(v0, q, 0.0, tau / 2), q, 0.0, tau / 2)
    assert np.max(np.abs(full - halves)) <= 1e-10 * np.max(np.abs(full))


def test_dirichlet_nodes_are_reslaved():
    g, op, v0, q = _setup("mixed")
    v0[0] = 123.0
    assert LinearFlow(op).step(v0, q, 0.0, 1e-3)[0] == 1.0


def test_mode_selection_and_validation():
    small = assemble_operator(_problem(BOUNDARY_TYPES["robin"]), make_uniform_grid(50, (0.0, 1.0)))
    assert LinearFlow(small).mode == "exact_phi"
    p = get_preset("mixed2d")
    big = assemble_operator(p.problem, p.grid())
    assert LinearFlow(big).mode == "sparse_expm"
    with pytest.raises(ValueError):
        LinearFlow(big, "exact_phi")
    with pytest.raises(ValueError):
        LinearFlow(small, "implicit_adaptive", rtol=1e-6)
    with pytest.raises(ValueError):
        LinearFlow(small, "euler")


def test_zero_step_is_identity():
    g, op, v0, q = _setup("robin")
    np.testing.assert_array_equal(LinearFlow(op).step(v0, q, 0.0, 0.0), v0)


# -- reaction substep --------------------------------------------------------------


def test_zero_reaction_drifts_linearly():
    flow = ReactionFlow(lambda u: 0 * u)
    w0 = np.array([1.0, -2.0, 0.5])
    np.testing.assert_allclose(flow.step(w0, np.full(3, 0.7), 0.4), w0 - 0.4 * 0.7, rtol=1e-14)


def test_riccati_closed_form():
    flow = ReactionFlow(square)
    out = reaction_substep(flow, np.array([1.0]), np.array([0.0]), 0.5)
    assert out[0] == pytest.approx(2.0, rel=1e-9)
    w0 = np.linspace(-2.0, 1.5, 15)
    tau = 0.3
    np.testing.assert_allclose(flow.step(w0, None, tau), w0 / (1 - tau * w0), rtol=1e-9)


def test_riccati_with_constant_forcing():
    # w' = w^2 - c^2 has w = -c tanh(c t - artanh(w0 / c)) for |w0| < c
    c, w0, tau = 2.0, 0.5, 0.7
    exact = -c * math.tanh(c * tau - math.atanh(w0 / c))
    assert ReactionFlow(square).step(np.array([w0]), np.array([c * c]), tau)[0] == pytest.approx(exact, rel=1e-9)


def test_blow_up_names_the_node():
    w0 = np.array([0.1, 0.2, 1.0, 0.3])
    with pytest.raises(ReactionBlowUpError) as info:
        ReactionFlow(square).step(w0, None, 1.0)
    assert info.value.node == 2
    assert "node 2" in str(info.value)


def test_blow_up_bound_is_configurable():
    with pytest.raises(ReactionBlowUpError):
        ReactionFlow(square, bound=1.5).step(np.array([1.0]), None, 0.5)


@settings(max_examples=30, deadline=None)
@given(st.permutations(list(range(8))), st.floats(0.01, 0.4))
def test_reaction_commutes_with_permutations(perm, tau):
    rng = np.random.default_rng(4)
    w0 = rng.uniform(-1.0, 1.0, 8)
    q = rng.uniform(-1.0, 1.0, 8)
    perm = np.array(perm)
    flow = ReactionFlow(square)
    np.testing.assert_array_equal(flow.step(w0, q, tau)[perm], flow.step(w0[perm], q[perm], tau))


def test_reaction_nodes_are_decoupled():
    flow = ReactionFlow(square)
    w0 = np.array([0.2, -0.4, 0.9])
    q = np.array([0.1, 0.0, -0.3])
    joint = flow.step(w0, q, 0.25)
    for i in range(3):
        assert joint[i] == flow.step(w0[i : i + 1], q[i : i + 1], 0.25)[0]
