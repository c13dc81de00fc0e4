# tests/test_knr.py
import math

import numpy as np
import pytest

from plapkit import knr
from plapkit.dgraph import (
    GraphError,
    chain_graph,
    divergence,
    lattice_ball_graph,
    path_graph,
    random_connected_graph,
)
from plapkit.storage import save_graph


# ---- Cutoff alpha and h_T ----
def test_alpha_examples():
    a = knr.CutoffAlpha(0.0)
    assert knr.alpha_eval(a, -1.0) == 0.0
    assert knr.alpha_eval(a, 1.0) == 1.0
    assert knr.alpha_eval(a, 0.0) == 0.5
    assert knr.alpha_slope(a, -2.0, -1.5) == 0.0
    assert knr.alpha_slope(a, -1.0, 1.0) == 0.5
    assert knr.alpha_slope(a, 0.0, 0.0) == 0.5
    assert knr.alpha_slope(a, 3.0, 3.0) == 0.0
    np.testing.assert_array_equal(knr.alpha_eval(knr.CutoffAlpha(2.0), [0.0, 2.0, 5.0]), [0.0, 0.5, 1.0])


def test_ht_examples():
    h = knr.HTFunction(1.0, (0.0,))
    assert knr.ht_eval(h, [0.5]) == pytest.approx(0.125)
    assert knr.ht_eval(h, [2.0]) == pytest.approx(1.5)
    assert knr.ht_eval(h, [1.0]) == pytest.approx(0.5)
    plane = knr.HTFunction(2.0, (1.0, 1.0))
    np.testing.assert_allclose(knr.ht_grad(plane, [[1.5, 1.0], [7.0, 1.0]]), [[0.5, 0.0], [2.0, 0.0]])
    with pytest.raises(ValueError):
        knr.HTFunction(0.0, (0.0,))
    with pytest.raises(ValueError):
        knr.ht_eval(plane, [1.0, 2.0, 3.0])


# ---- Fields ----
def test_build_X_vanishing_cases():
    g = path_graph(5)
    u = np.linspace(-1.0, 1.0, g.n_nodes)
    np.testing.assert_array_equal(knr.build_X(g, u, u, 0.0, 3.0), np.zeros(g.n_edges))
    v = u + 4.0
    np.testing.assert_array_equal(knr.build_X(g, u, v, 0.0, 3.0), np.zeros(g.n_edges))


def test_build_X_on_slope():
    g = chain_graph(3)
    u = np.array([0.0, 1.0, 2.0])
    X = knr.build_X(g, u, np.zeros(3), 0.0, 2.0)
    # alpha(u) = (0.5, 1, 1), flux difference 1 on both edges
    np.testing.assert_allclose(X, [0.75, 1.0])


def test_build_X_T_examples():
    g = chain_graph(2)
    np.testing.assert_array_equal(knr.build_X_T(g, [0.0, 1.0], [0.0, 1.0], 0.0, 1.0, 3.0), [0.0])
    # T large: X_T = <mean of (u - v - C), flux difference>
    X = knr.build_X_T(g, [1.0, 3.0], [0.0, 0.0], 0.5, 100.0, 2.0)
    np.testing.assert_allclose(X, [0.5 * ((1.0 - 0.5) + (3.0 - 0.5)) * 2.0])
    # |u - v - C| >= T everywhere: |psi| = T at both ends
    far = np.array([[10.0, 0.0], [0.0, 12.0]])
    X_far = knr.build_X_T(g, far, np.zeros((2, 2)), [0.0, 0.0], 1.0, 2.0)
    np.testing.assert_allclose(X_far, [0.5 * np.array([1.0, 1.0]) @ (far[1] - far[0])])


def test_negative_part_mass():
    g = chain_graph(3)
    assert knr.negative_part_mass(g, [0.0, 0.0]) == 0.0
    assert knr.negative_part_mass(g, [1.0, 1.0]) == pytest.approx(1.0)
    assert knr.negative_part_mass(g, [1.0, 1.0], interior_only=True) == 0.0
    assert knr.interior_divergence(g, [2.0, 1.0]) == pytest.approx(-1.0)


@pytest.mark.parametrize("seed", range(10))
def test_product_rule_and_pairing_identity(seed):
    rng = np.random.default_rng(seed)
    g = random_connected_graph(rng, 40)
    u = rng.standard_normal(g.n_nodes)
    v = rng.standard_normal(g.n_nodes)
    p = [2.0, 2.5, 3.0, 4.0][seed % 4]
    A = float(rng.uniform(-1, 1))
    scale = max(1.0, float(np.max(np.abs(knr.build_X(g, u, v, A, p)))))
    assert knr.product_rule_residual(g, u, v, A, p) <= 1e-10 * scale * np.max(g.weights) / np.min(g.measure)
    total, magnitude = knr.cutoff_pairing_identity(g, u, v, A, p)
    assert total <= 1e-10 * max(1.0, magnitude)
    lhs, rhs = knr.cutoff_coercivity(g, u, v, A, p)
    assert lhs >= rhs - 1e-10 * max(1.0, abs(rhs))


# ---- X_T estimates ----
def test_check_X_T_on_shifted_maps():
    g = lattice_ball_graph(2, 4)
    u = np.stack([g.coords[:, 0] ** 2, g.coords[:, 1]], axis=1).astype(float)
    v = u - np.array([5.0, -3.0])
    for n in range(1, 7):
        check = knr.check_X_T(g, u, v, [5.0, -3.0], 2.0**n, 3.0, n)
        assert check.norm_q_power == 0.0
        assert check.negative_mass == 0.0
        assert check.tail_energy == 0.0
        assert check.norm_ok and check.negative_ok and check.coercivity_ok


@pytest.mark.parametrize("seed", range(6))
def test_check_X_T_bounds_hold_for_arbitrary_maps(seed):
    rng = np.random.default_rng(100 + seed)
    g = lattice_ball_graph(2, 5)
    p = [2.0, 3.0, 4.0][seed % 3]
    u = rng.standard_normal((g.n_nodes, 2))
    v = rng.standard_normal((g.n_nodes, 2))
    C = rng.standard_normal(2)
    for n in range(1, 5):
        check = knr.check_X_T(g, u, v, C, 2.0**n, p, n)
        assert check.norm_ok
        assert check.negative_ok
        assert check.coercivity_ok


@pytest.mark.parametrize("a, expected", [(0.6, True), (0.8, False)])
def test_tail_criterion_compares_tail_energy_with_one_over_n(a, expected):
    # only the edge (1, 2) reaches |u - v| >= T, so the tail energy is a^2
    g = chain_graph(3)
    check = knr.check_X_T(g, [0.0, 0.0, a], np.zeros(3), 0.0, 0.5, 2.0, 2)
    assert check.tail_energy == pytest.approx(a**2)
    assert check.tail_below_one_over_n is expected


def test_tail_energy_vanishes_for_large_T():
    g = path_graph(6)
    u = np.sin(np.arange(g.n_nodes, dtype=float))
    v = np.zeros(g.n_nodes)
    assert not knr.tail_edges(g, u, v, 0.0, 2.0).any()
    assert knr.tail_energy(g, u, v, 0.0, 2.0, 3.0) == 0.0
    assert knr.tail_energy(g, u, v, 0.0, 0.5, 3.0) > 0.0


# ---- Families ----
def test_family_parsing(tmp_path):
    assert knr.ExhaustionFamily.parse("z3") == knr.ExhaustionFamily(kind="lattice", dim=3)
    assert knr.ExhaustionFamily.parse("lattice:4").dim == 4
    assert knr.ExhaustionFamily.parse("path").label == "path"
    assert knr.ExhaustionFamily.parse("Z2").label == "z2"
    custom = knr.ExhaustionFamily.parse(str(tmp_path))
    assert custom.kind == "custom"
    with pytest.raises(knr.AuditError):
        knr.ExhaustionFamily.parse("torus")
    with pytest.raises(knr.AuditError):
        knr.ExhaustionFamily(kind="custom")


def test_custom_family_reads_truncations(tmp_path):
    for N in (2, 3, 5):
        save_graph(path_graph(N), tmp_path / f"truncation_{N}.json")
    fam = knr.ExhaustionFamily.parse(str(tmp_path))
    assert fam.levels() == [2, 3, 5]
    assert fam.graph(3).n_nodes == 7
    with pytest.raises(knr.AuditError):
        fam.graph(4)
    assert knr.knr_audit(fam, knr.zero_field, 2.0, [2, 3, 5]).verdict == "FailsC"


def test_check_levels():
    assert knr.check_levels([4, 8, 16]) == [4, 8, 16]
    with pytest.raises(knr.AuditError):
        knr.check_levels([4, 8])
    with pytest.raises(knr.AuditError):
        knr.check_levels([4, 4, 8])


# ---- Potentials & capacity ----
def test_green_field_divergence():
    g = lattice_ball_graph(2, 4)
    X = knr.green_field(g)
    div = divergence(g, X)
    interior = g.interior.copy()
    interior[g.root] = False
    np.testing.assert_allclose(div[interior], 0.0, atol=1e-12)
    assert div[g.root] * g.measure[g.root] == pytest.approx(1.0)
    assert knr.interior_divergence(g, X) == pytest.approx(1.0)


def test_green_potential_errors():
    g = chain_graph(3)
    with pytest.raises(GraphError):
        knr.green_potential(g, root=0)
    with pytest.raises(GraphError):
        knr.green_potential(g.without_boundary(), root=1)


@pytest.mark.parametrize("p", [2.0, 3.0, 4.0])
@pytest.mark.parametrize("N", [4, 8, 16, 32, 64])
def test_ray_capacity_closed_form(p, N):
    ray = knr.ExhaustionFamily(kind="ray")
    assert knr.capacity(ray, p, N) * N ** (p - 1.0) == pytest.approx(1.0, abs=1e-9)


def test_capacity_examples():
    ray = knr.ExhaustionFamily(kind="ray")
    assert knr.capacity(ray, 2.0, 10) == pytest.approx(0.1, rel=1e-9)
    assert knr.capacity(ray, 3.0, 10) == pytest.approx(0.01, rel=1e-9)
    # both ends grounded
    assert knr.capacity(knr.ExhaustionFamily(kind="path"), 2.0, 10) == pytest.approx(0.2, rel=1e-9)
    with pytest.raises(knr.AuditError):
        knr.capacity(ray, 2.0, 1)


def test_z3_capacity_does_not_vanish():
    profile = knr.capacity_profile(knr.ExhaustionFamily.parse("z3"), 2.0, [6, 10, 14])
    caps = [cap for _, cap in profile]
    assert caps == sorted(caps, reverse=True)
    assert caps[-1] > 0.2 * caps[0]


# ---- Audit ----
def test_audit_zero_field_fails_c():
    report = knr.knr_audit(knr.ExhaustionFamily(kind="path"), knr.zero_field, 2.0, [4, 8, 16])
    assert report.verdict == "FailsC"
    assert report.q == 2.0
    assert [row.N for row in report.rows] == [4, 8, 16]


def test_audit_constant_field_fails_a():
    report = knr.knr_audit(knr.ExhaustionFamily(kind="path"), knr.constant_field, 2.0, [4, 8, 16])
    assert report.verdict == "FailsA"
    assert report.rows[-1].norm == pytest.approx(math.sqrt(32.0))


def test_audit_z3_green_field_is_witness():
    report = knr.knr_audit(knr.ExhaustionFamily.parse("z3"), knr.green_field, 2.0, [6, 10, 14])
    assert report.verdict == "WitnessNonParabolic"
    for row in report.rows:
        assert row.total_divergence == pytest.approx(1.0)
        assert row.negative_mass <= 1e-9


def test_audit_non_finite_is_undetermined():
    def broken(g, N):
        return np.full(g.n_edges, np.inf)

    report = knr.knr_audit(knr.ExhaustionFamily(kind="path"), broken, 2.0, [4, 8, 16])
    assert report.verdict == "Undetermined"


def test_audit_rejects_short_level_lists():
    with pytest.raises(knr.AuditError):
        knr.knr_audit(knr.ExhaustionFamily(kind="path"), knr.zero_field, 2.0, [4, 8])
