import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from coupledvi import orlicz as oz
from coupledvi.fem import contact as fc
from coupledvi.fem.mesh import load_mesh, unit_square_mesh
from test_mesh import TWO_TRIANGLES


@pytest.fixture(scope="module")
def square4():
    return unit_square_mesh(4)


def hand_stiffness(mesh):
    """Dense P1 stiffness from per-triangle affine solves."""
    K = np.zeros((mesh.num_nodes,) * 2)
    for tri in mesh.triangles:
        V = np.column_stack([np.ones(3), mesh.nodes[tri]])
        G = np.linalg.inv(V)[1:].T
        area = 0.5 * abs(np.linalg.det(V))
        K[np.ix_(tri, tri)] += area * G @ G.T
    return K


def test_residual_zero_field(square4):
    assert np.all(fc.assemble_phi_residual(square4, oz.power(3.0), np.zeros(square4.num_nodes)) == 0)


def test_power2_residual_is_stiffness(tmp_path):
    p = tmp_path / "two.msh"
    p.write_text(TWO_TRIANGLES)
    mesh = load_mesh(p)
    u = mesh.nodes[:, 0]  # vanishes on the clamped left edge
    np.testing.assert_allclose(fc.assemble_phi_residual(mesh, oz.power(2.0), u), hand_stiffness(mesh) @ u,
                               atol=1e-14)
    np.testing.assert_allclose(fc.stiffness_matrix(mesh).toarray(), hand_stiffness(mesh), atol=1e-14)


def test_residual_rejects_clamped_values(square4):
    with pytest.raises(ValueError):
        fc.assemble_phi_residual(square4, oz.power(2.0), np.ones(square4.num_nodes))


@pytest.mark.parametrize("p", [1.5, 3.0])
def test_residual_homogeneity(square4, rng, p):
    u = fc.embed(square4, rng.standard_normal(square4.free_nodes.size))
    r1 = fc.assemble_phi_residual(square4, oz.power(p), u)
    r2 = fc.assemble_phi_residual(square4, oz.power(p), 2 * u)
    np.testing.assert_allclose(r2, 2 ** (p - 1) * r1, rtol=1e-12, atol=1e-14)


def test_tresca_weights():
    mesh = unit_square_mesh(2)
    np.testing.assert_allclose(fc.tresca_weights(mesh, 1.0), [0.25, 0.5, 0.25])
    assert np.all(fc.tresca_weights(mesh, 0.0) == 0)
    np.testing.assert_allclose(fc.tresca_weights(mesh, 2.0), 2 * fc.tresca_weights(mesh, 1.0))


def test_discretize_two_triangles(tmp_path):
    p = tmp_path / "two.msh"
    p.write_text(TWO_TRIANGLES)
    sys = fc.discretize_contact(fc.FemProblem(load_mesh(p), oz.power(2.0), f2=1.0, g=1.0))
    assert sys.n == 2 and sys.m == 1
    assert sys.meta["ynodes"].tolist() == [1]


def test_zero_friction_gives_trivial_multiplier_set(square4):
    sys = fc.discretize_contact(fc.FemProblem(square4, oz.power(2.0), f2=1.0, g=0.0))
    assert np.all(sys.Lambda.project(np.ones(sys.m)) == 0)


def test_load_sums_to_traction():
    # part 2 is the right edge (length 1) and shares no node with the clamped left edge
    mesh = unit_square_mesh(4, top=3, right=2, bottom=3)
    sys = fc.discretize_contact(fc.FemProblem(mesh, oz.power(2.0), f2=0.7, g=0.0))
    assert sys.f.sum() == pytest.approx(0.7, abs=1e-12)
    # on the default mesh part 2 touches a clamped corner; the full nodal load still sums to c * length
    default = unit_square_mesh(4)
    assert fc.boundary_load(default, 0.7).sum() == pytest.approx(0.7 * default.part_length(2), abs=1e-12)


HOUSE = """\
NODES
0 0 0
1 1 0
2 1 1
3 0.5 1.5
4 0 1
TRIANGLES
0 0 1 2
1 0 2 4
2 4 2 3
BOUNDARY
0 1 3
1 2 1
2 3 2
3 4 2
4 0 1
"""


def test_empty_multiplier_space(tmp_path):
    # the only contact edge joins two clamped nodes
    p = tmp_path / "house.msh"
    p.write_text(HOUSE)
    with pytest.raises(fc.EmptyMultiplierSpaceError):
        fc.discretize_contact(fc.FemProblem(load_mesh(p), oz.power(2.0), f2=1.0, g=1.0))
    mesh = unit_square_mesh(1)
    assert fc.discretize_contact(fc.FemProblem(mesh, oz.power(2.0), f2=1.0, g=1.0)).m == 1


def test_negative_friction_rejected(square4):
    with pytest.raises(ValueError):
        fc.FemProblem(square4, oz.power(2.0), g=-1.0)


def test_solve_contact_zero_friction(square4):
    fem = fc.FemProblem(square4, oz.power(2.0), f2=1.0, g=0.0)
    sol = fc.solve_contact(fem)
    assert np.max(np.abs(sol.u.values - fc.linear_reference(fem))) <= 1e-8
    assert np.all(sol.lam == 0)


def test_solve_contact_stick_regime(square4):
    fem = fc.FemProblem(square4, oz.power(2.0), f2=1.0, g=1e3)
    sol = fc.solve_contact(fem)
    assert np.max(np.abs(sol.u.values - fc.linear_reference(fem, clamp_contact=True))) <= 1e-4


@pytest.mark.parametrize("phi", [oz.power(2.0), oz.power(3.0), oz.hencky(2.0)])
def test_solve_contact_matches_energy_oracle(square4, phi):
    fem = fc.FemProblem(square4, phi, f2=1.0 if phi.kind == "power" else 0.3, g=0.5)
    sol = fc.solve_contact(fem)
    ref, hist = fc.energy_oracle(fem, return_history=True)
    assert np.max(np.abs(sol.u.values - ref.values)) <= 1e-4
    assert np.all(np.diff(hist) <= 0)
    comp = fc.complementarity_report(sol.u.values[sol.ynodes], sol.lam, sol.weights)
    assert comp.feasible and 0 <= comp.gap <= 1e-7
    assert np.all(np.abs(sol.lam) <= sol.weights + 1e-9)


def test_solve_with_h_terms(square4):
    for h in (fc.HIntegrand("quadratic", 2.0), fc.HIntegrand("abs", 0.3)):
        fem = fc.FemProblem(square4, oz.power(2.0), h, f2=1.0, g=0.2)
        sol = fc.solve_contact(fem)
        ref = fc.energy_oracle(fem)
        assert np.max(np.abs(sol.u.values - ref.values)) <= 1e-4


def test_energy_oracle_linear(square4):
    fem = fc.FemProblem(square4, oz.power(2.0), f2=1.0, g=0.0)
    assert np.max(np.abs(fc.energy_oracle(fem).values - fc.linear_reference(fem))) <= 1e-8


def test_complementarity_examples(rng):
    w = rng.uniform(0, 1, 6)
    u = rng.standard_normal(6)
    assert fc.complementarity_report(np.zeros(6), w, w).gap == 0
    assert fc.complementarity_report(u, w * np.sign(u), w).gap == pytest.approx(0, abs=1e-14)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_complementarity_gap_nonnegative(seed):
    rng = np.random.default_rng(seed)
    w = rng.uniform(0, 2, 5)
    lam = w * rng.uniform(-1, 1, 5)
    rep = fc.complementarity_report(rng.standard_normal(5) * 10, lam, w)
    assert rep.feasible and rep.gap >= 0


@pytest.mark.parametrize("phi", [oz.power(1.5), oz.power(3.0), oz.hencky(2.0)])
def test_lower_index_inequality(phi):
    lo, _ = oz.index_bounds(phi)
    t = np.logspace(-6, 6, 2001)
    assert np.all(t * oz.eval_phi(phi, t) >= lo * oz.eval_big_phi(phi, t) * (1 - 1e-12))


@pytest.mark.parametrize("phi", [oz.power(1.5), oz.power(3.0), oz.hencky(2.0)])
def test_discrete_coercivity_chain(square4, rng, phi):
    lo, _ = oz.index_bounds(phi)
    for _ in range(100):
        u = fc.embed(square4, rng.standard_normal(square4.free_nodes.size))
        s = np.linalg.norm(square4.gradients(u), axis=-1)
        norm = oz.luxemburg_norm(s, square4.areas, phi)
        scale = rng.uniform(1.01, 20.0) / norm
        s *= scale
        norm = oz.luxemburg_norm(s, square4.areas, phi)
        assert norm > 1
        energy = square4.areas @ oz.eval_big_phi(phi, s)
        assert energy >= norm ** lo - 1e-8


def test_norm_equivalence_probe(square4):
    lo, hi = fc.norm_equivalence_probe(square4, oz.power(2.0))
    assert 0.05 < lo <= hi < np.inf
    mesh = unit_square_mesh(2)
    const = np.ones(mesh.num_nodes)
    assert mesh.boundary_mass(1) @ const > 0
    with pytest.raises(ValueError):
        fc.norm_equivalence_probe(square4, oz.power(2.0), samples=5)


def test_refinement_trend():
    """Shared-node change of the p = 2, g = 0 solution shrinks under refinement."""
    levels = [2, 4, 8, 16]
    sols = {}
    for n in levels:
        fem = fc.FemProblem(unit_square_mesh(n), oz.power(2.0), f2=1.0, g=0.0)
        # the contact solve equals the linear solve at g = 0 (checked above); use it beyond n = 8
        sols[n] = fc.solve_contact(fem).u.values if n <= 8 else fc.linear_reference(fem)
    diffs = []
    for a, b in zip(levels, levels[1:]):
        fine = sols[b].reshape(b + 1, b + 1)[::2, ::2].ravel()
        diffs.append(np.max(np.abs(fine - sols[a])))
    assert np.all(np.diff(diffs) < 0), diffs
