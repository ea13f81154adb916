import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from osplit.boundary import BoundaryFace, ProblemSpec, assemble_operator, closure_residual
from osplit.correction import ZERO_CORRECTION, AnalyticPolynomial, boundary_targets
from osplit.flows import LinearFlow
from osplit.grid import eval_on_grid, grid_norm, make_uniform_grid
from osplit.presets import get_preset, square, square_prime
from osplit.steppers import IntegrationError, Scheme, Splitting, StepperConfig, integrate, step_count

ALL_1D = ("lie", "lie-mod", "strang", "strang-mod")


def _run(preset, scheme, tau, strategy=None, u0=None, **kw):
    cfg = StepperConfig(tau, preset.final_time if "final_time" not in kw else kw.pop("final_time"), strategy or preset.strategy, **kw)
    return Splitting(preset.problem, preset.grid(), cfg).integrate(u0, scheme)


def test_scheme_properties():
    assert [s.value for s in Scheme] == ["lie", "lie-mod", "strang", "strang-mod", "strang-dir"]
    assert not Scheme.LIE.corrected and Scheme.LIE_MODIFIED.corrected
    assert Scheme.STRANG_DIRICHLET.corrected and Scheme.STRANG_DIRICHLET.symmetric
    assert not Scheme.LIE_MODIFIED.symmetric


def test_step_count():
    assert step_count(0.5, 1 / 32) == 16
    assert step_count(0.1, 0.1 / 67) == 67
    assert step_count(0.0, 0.1) == 0
    with pytest.raises(ValueError):
        step_count(0.5, 0.3)
    with pytest.raises(ValueError):
        step_count(0.5, 0.0)
    with pytest.raises(ValueError):
        StepperConfig(-0.1, 1.0).steps


def _heat_problem(faces):
    return ProblemSpec(tuple(faces), lambda u: 0 * u, lambda u: 0 * u, lambda x: np.sin(3 * x) + 1)


@pytest.mark.parametrize("scheme", ["lie", "strang"])
def test_classic_without_reaction_is_the_diffusion_flow(scheme):
    faces = [BoundaryFace("left", 1.0, 1.0, 0.5), BoundaryFace("right", 0.0, 1.0, 1.0)]
    p = _heat_problem(faces)
    g = make_uniform_grid(40, (0.0, 1.0))
    u0 = eval_on_grid(p.initial, g).values
    tau = 0.01
    flow = LinearFlow(assemble_operator(p, g))
    out = integrate(p, g, scheme, StepperConfig(tau, tau)).solution.values
    np.testing.assert_allclose(out, flow.step(u0, None, 0.0, tau), rtol=1e-12)


def test_zero_equilibrium():
    faces = [BoundaryFace("left", 0.0, 1.0, 0.0), BoundaryFace("right", 1.0, 1.0, 0.0)]
    p = ProblemSpec(tuple(faces), square, square_prime, lambda x: 0 * x)
    g = make_uniform_grid(30, (0.0, 1.0))
    for scheme in ALL_1D:
        out = integrate(p, g, scheme, StepperConfig(0.05, 0.5)).solution.values
        assert not np.any(out)


def _mol_oracle(problem, grid, u0, t):
    op = assemble_operator(problem, grid)
    a, g, rows = op.matrix, op.injection(0.0), op.pde_rows

    def rhs(_t, u):
        du = a @ u + g
        du[rows] += problem.reaction(u[rows])
        return du

    return solve_ivp(rhs, (0.0, t), u0, method="DOP853", rtol=1e-12, atol=1e-14).y[:, -1]


def test_modified_strang_local_order_against_unsplit_oracle():
    p = get_preset("mixed1d").with_nodes(10)
    g = p.grid()
    u0 = eval_on_grid(p.problem.initial, g).values
    errs = []
    for tau in (2.5e-3, 1.25e-3):
        one = integrate(p.problem, g, "strang-mod", StepperConfig(tau, tau, AnalyticPolynomial()), u0).solution.values
        errs.append(np.max(np.abs(one - _mol_oracle(p.problem, g, u0, tau))))
    assert errs[0] / errs[1] >= 6.0


def test_zero_time_returns_initial_value():
    p = get_preset("robin1d")
    res = _run(p, "strang-mod", 0.1, final_time=0.0)
    np.testing.assert_array_equal(res.solution.values, eval_on_grid(p.problem.initial, p.grid()).values)


@pytest.mark.parametrize("name", ["neumann1d", "mixed1d", "robin1d"])
@pytest.mark.parametrize("pair", [("lie", "lie-mod"), ("strang", "strang-mod")])
def test_zero_correction_reproduces_classic_bitwise(name, pair):
    p = get_preset(name)
    tau = p.taus[1]
    classic = _run(p, pair[0], tau).solution.values
    modified = _run(p, pair[1], tau, strategy=ZERO_CORRECTION).solution.values
    assert np.array_equal(classic, modified)


@pytest.mark.parametrize("name", ["neumann1d", "mixed1d", "robin1d"])
@pytest.mark.parametrize("scheme", ["lie-mod", "strang-mod"])
def test_correction_conforms_at_every_step(name, scheme):
    p = get_preset(name)
    res = _run(p, scheme, p.taus[0], diagnostics=True)
    assert len(res.diagnostics) == step_count(p.final_time, p.taus[0])
    assert max(d.correction_residual for d in res.diagnostics) <= 1e-8


def _reaction_residual(name, n):
    p = get_preset(name).with_nodes(n)
    res = _run(p, "strang-mod", p.taus[0], diagnostics=True)
    return max(d.reaction_residual for d in res.diagnostics)


@pytest.mark.parametrize("name", ["neumann1d", "mixed1d", "robin1d"])
def test_reaction_field_residual_is_second_order_in_space(name):
    # f(u_n) - q_n meets homogeneous conditions up to the product-rule error
    # of the one-sided difference, which is O(h^2)
    coarse, fine = _reaction_residual(name, 126), _reaction_residual(name, 251)
    assert 3.5 < coarse / fine < 4.5
    assert _reaction_residual(name, 500) <= 5e-5


def test_reaction_field_residual_vanishes_on_dirichlet_faces():
    p = get_preset("dirichlet1d_smoothness")
    res = _run(p, "strang-mod", p.taus[0], diagnostics=True)
    assert max(d.reaction_residual for d in res.diagnostics) <= 1e-9


@pytest.mark.parametrize("scheme", ALL_1D)
def test_determinism(scheme):
    p = get_preset("robin1d")
    a = _run(p, scheme, p.taus[2]).solution.values
    b = _run(p, scheme, p.taus[2]).solution.values
    assert np.array_equal(a, b)


def test_snapshots_and_interchanged_lie():
    p = get_preset("mixed1d")
    res = _run(p, "lie-mod", p.taus[0], snapshots=True)
    assert len(res.snapshots) == 17
    assert res.snapshots[-1][0] == pytest.approx(p.final_time)
    np.testing.assert_array_equal(res.snapshots[-1][1], res.solution.values)
    # both flow orders are first-order approximations of the same solution
    gaps = []
    for tau in p.taus[:2]:
        a = _run(p, "lie-mod", tau).solution.values
        b = _run(p, "lie-mod", tau, reaction_first=False).solution.values
        gaps.append(np.max(np.abs(a - b)))
    assert gaps[0] > 0
    assert 1.7 < gaps[0] / gaps[1] < 2.3


def test_blow_up_reports_step():
    faces = [BoundaryFace("left", 0.0, 1.0, 0.0), BoundaryFace("right", 0.0, 1.0, 0.0)]
    p = ProblemSpec(tuple(faces), square, square_prime, lambda x: 3 + 0 * x)
    g = make_uniform_grid(10, (0.0, 1.0))
    with pytest.raises(IntegrationError) as info:
        integrate(p, g, "lie", StepperConfig(0.1, 1.0))
    assert info.value.step == 3


# -- reference runs on the presets ---------------------------------------------


@pytest.fixture(scope="module")
def neumann_runs():
    p = get_preset("neumann1d")
    g = p.grid()
    ref = _run(p, "strang-mod", p.tau_ref).solution.values
    tau = p.taus[-1]
    return {s: grid_norm(_run(p, s, tau).solution.values - ref, g) for s in ("lie", "lie-mod")}


def test_neumann_lie_errors_near_reference_values(neumann_runs):
    # reference magnitudes 3.202e-4 (classic) and 1.898e-4 (modified), factor-2 band
    assert 3.202e-4 / 2 <= neumann_runs["lie"] <= 3.202e-4 * 2
    assert 1.898e-4 / 2 <= neumann_runs["lie-mod"] <= 1.898e-4 * 2


@pytest.fixture(scope="module")
def mixed_runs():
    p = get_preset("mixed1d")
    g = p.grid()
    ref = _run(p, "strang-mod", p.tau_ref).solution.values
    out = {}
    for s in ("strang", "strang-mod"):
        for tau in p.taus[:2]:
            out[s, tau] = grid_norm(_run(p, s, tau).solution.values - ref, g)
    return p, out


def test_mixed_modified_strang_beats_classic(mixed_runs):
    p, err = mixed_runs
    tau = p.taus[0]
    assert tau == 1.25e-2
    assert err["strang-mod", tau] <= err["strang", tau] / 10


def test_mixed_modified_strang_halving_ratio(mixed_runs):
    p, err = mixed_runs
    ratio = err["strang-mod", p.taus[0]] / err["strang-mod", p.taus[1]]
    assert 3.5 <= ratio <= 4.5


def test_2d_dirichlet_only_variant_runs():
    p = get_preset("mixed2d").with_nodes(20)
    g = p.grid()
    outs = {s: _run(p, s, 0.025).solution.values for s in ("strang", "strang-dir", "strang-mod")}
    assert len({o.tobytes() for o in outs.values()}) == 3
    # Dirichlet data is held on the bottom and top rows
    u0 = eval_on_grid(p.problem.initial, g).values.reshape(20, 20)
    for o in outs.values():
        np.testing.assert_allclose(o.reshape(20, 20)[[0, -1]], u0[[0, -1]], rtol=1e-14)
