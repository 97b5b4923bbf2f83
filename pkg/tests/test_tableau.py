import numpy as np
import pytest

from geork.tableau import (
    ButcherTableau,
    MethodSpec,
    build_X,
    build_Xhat,
    build_equip_tableau,
    build_gauss,
    build_hbvm,
    build_tableau,
    format_tableau,
    symplecticity_residual,
    tableau_csv,
    xi,
)

TOL = 1e-12  # elementwise tableau comparison tolerance


def collocation_gauss(s):
    """Independent Gauss tableau from the collocation conditions.

    Nodes/weights come from numpy's leggauss mapped to [0, 1]; each row of A
    solves sum_j a_ij c_j^(q-1) = c_i^q / q for q = 1..s.
    """
    x, w = np.polynomial.legendre.leggauss(s)
    c = np.sort(0.5 * (x + 1.0))
    b = 0.5 * w
    V = np.vander(c, increasing=True)  # V[i, q] = c_i^q
    rhs = np.column_stack([c ** q / q for q in range(1, s + 1)])
    A = np.linalg.solve(V.T, rhs.T).T
    return A, b, c


# ---------------------------------------------------------------------------
# xi and the core matrices


def test_xi_values():
    assert xi(1) == pytest.approx(1 / (2 * np.sqrt(3)), rel=1e-15)
    assert xi(2) == pytest.approx(1 / (2 * np.sqrt(15)), rel=1e-15)
    assert xi(3) == pytest.approx(1 / (2 * np.sqrt(35)), rel=1e-15)
    with pytest.raises(ValueError):
        xi(0)


def test_core_matrix_s1_ignores_alpha():
    core = build_X(1, 123.0)
    np.testing.assert_array_equal(core.entries, [[0.5]])
    assert core.alpha == 0.0


def test_core_matrix_s2():
    core = build_X(2, 0.0)
    np.testing.assert_allclose(
        core.entries, [[0.5, -0.28867513459481287], [0.28867513459481287, 0.0]],
        atol=1e-14)


def test_core_matrix_s3_alpha_placement():
    X0 = build_X(3, 0.0).entries
    X = build_X(3, 0.1).entries
    assert X[1, 2] == pytest.approx(-(xi(2) + 0.1), rel=1e-15)
    assert X[2, 1] == pytest.approx(xi(2) + 0.1, rel=1e-15)
    # alpha touches only the outermost pair
    mask = np.ones_like(X, dtype=bool)
    mask[1, 2] = mask[2, 1] = False
    np.testing.assert_array_equal(X[mask], X0[mask])


def test_core_matrix_skew_structure():
    rng = np.random.default_rng(7)
    e1e1 = None
    for s in range(1, 7):
        for alpha in rng.uniform(-2, 2, size=3):
            X = build_X(s, alpha).entries
            e1e1 = np.zeros((s, s))
            e1e1[0, 0] = 1.0
            np.testing.assert_allclose(X + X.T, e1e1, atol=1e-15)
            assert np.all(np.diag(X)[1:] == 0.0)


def test_extended_core_matrix():
    np.testing.assert_allclose(
        build_Xhat(1).entries, [[0.5], [xi(1)]], atol=1e-15)
    np.testing.assert_allclose(
        build_Xhat(2).entries,
        [[0.5, -xi(1)], [xi(1), 0.0], [0.0, xi(2)]], atol=1e-15)
    for s in range(1, 7):
        Xhat = build_Xhat(s).entries
        np.testing.assert_array_equal(Xhat[:s], build_X(s, 0.0).entries)
        bottom = np.zeros(s)
        bottom[-1] = xi(s)
        np.testing.assert_array_equal(Xhat[s], bottom)


def test_core_matrix_rejects_s0():
    with pytest.raises(ValueError):
        build_X(0, 0.0)
    with pytest.raises(ValueError):
        build_Xhat(0)


# ---------------------------------------------------------------------------
# Gauss / EQUIP construction


def test_gauss_s1_is_implicit_midpoint():
    t = build_gauss(1)
    np.testing.assert_allclose(t.A, [[0.5]], atol=1e-15)
    np.testing.assert_allclose(t.b, [1.0], atol=1e-15)
    np.testing.assert_allclose(t.c, [0.5], atol=1e-15)


def test_gauss_s2_closed_form():
    t = build_gauss(2)
    r = np.sqrt(3) / 6
    np.testing.assert_allclose(
        t.A, [[0.25, 0.25 - r], [0.25 + r, 0.25]], atol=TOL)


@pytest.mark.parametrize("s", [1, 2, 3, 4])
def test_gauss_matches_collocation_oracle(s):
    t = build_gauss(s)
    A, b, c = collocation_gauss(s)
    np.testing.assert_allclose(t.A, A, atol=TOL)
    np.testing.assert_allclose(t.b, b, atol=TOL)
    np.testing.assert_allclose(t.c, c, atol=TOL)


@pytest.mark.parametrize("s", [1, 2, 3, 4])
def test_equip_alpha0_and_hbvm_ks_reduce_to_gauss(s):
    g = build_gauss(s)
    for t in (build_equip_tableau(s, 0.0), build_hbvm(s, s)):
        np.testing.assert_allclose(t.A, g.A, atol=TOL)
        np.testing.assert_allclose(t.b, g.b, atol=TOL)
        np.testing.assert_allclose(t.c, g.c, atol=TOL)


def test_tableau_metadata():
    t = build_hbvm(6, 3)
    assert t.n_stages == 6
    assert t.order == 6
    assert t.spec == MethodSpec(kind="hbvm", s=3, k=6)
    assert abs(t.b.sum() - 1.0) <= 1e-14
    t2 = build_equip_tableau(3, 0.25)
    assert t2.alpha == 0.25
    assert t2.order == 6


# ---------------------------------------------------------------------------
# HBVM construction


def test_hbvm_2_1_hand_product():
    t = build_hbvm(2, 1)
    c = t.c
    np.testing.assert_allclose(
        t.A, [[c[0] / 2, c[0] / 2], [c[1] / 2, c[1] / 2]], atol=TOL)


def test_hbvm_row_sums_equal_c():
    for s in range(1, 5):
        for k in range(s, 13):
            t = build_hbvm(k, s)
            np.testing.assert_allclose(t.A.sum(axis=1), t.c, atol=1e-12)


def test_hbvm_rejects_k_below_s():
    with pytest.raises(ValueError):
        build_hbvm(2, 3)


# ---------------------------------------------------------------------------
# symplecticity and order conditions


def test_gauss_symplecticity_residual():
    assert symplecticity_residual(build_gauss(3)) <= 1e-14


def test_equip_symplectic_for_every_alpha():
    for alpha in (-0.5, 0.01, 2.0):
        assert symplecticity_residual(build_equip_tableau(3, alpha)) <= 1e-13
    rng = np.random.default_rng(2024)
    for s in (2, 3, 4):
        for alpha in rng.uniform(-1, 1, size=20):
            assert symplecticity_residual(build_equip_tableau(s, alpha)) <= 1e-12


def test_hbvm_above_s_is_not_symplectic():
    res = symplecticity_residual(build_hbvm(6, 3))
    assert res > 1e-4  # order 1e-2 in practice


def test_equip_row_sums():
    rng = np.random.default_rng(5)
    for s in (3, 4, 5):
        for alpha in rng.uniform(-1, 1, size=5):
            t = build_equip_tableau(s, alpha)
            np.testing.assert_allclose(t.A.sum(axis=1), t.c, atol=1e-12)
    # for s = 2 the perturbation touches the constant mode: row sums move
    t = build_equip_tableau(2, 0.3)
    assert np.max(np.abs(t.A.sum(axis=1) - t.c)) > 1e-3


def quadrature_order_conditions(t: ButcherTableau, order: int) -> float:
    worst = 0.0
    for q in range(1, order + 1):
        worst = max(worst, abs(float(t.b @ t.c ** (q - 1)) - 1.0 / q))
    return worst


def test_b2s_quadrature_conditions():
    specs = [build_gauss(1), build_gauss(2), build_gauss(3), build_gauss(4),
             build_hbvm(6, 3), build_hbvm(9, 3), build_hbvm(12, 3),
             build_equip_tableau(3, 0.2), build_equip_tableau(4, -0.7)]
    for t in specs:
        assert quadrature_order_conditions(t, t.order) <= 1e-12


def test_gauss_stage_order_conditions():
    for s in (1, 2, 3, 4):
        t = build_gauss(s)
        for q in range(1, s + 1):
            lhs = t.A @ t.c ** (q - 1)
            np.testing.assert_allclose(lhs, t.c**q / q, atol=1e-12)


# ---------------------------------------------------------------------------
# MethodSpec and formatting


def test_method_spec_validation():
    with pytest.raises(ValueError):
        MethodSpec(kind="hbvm", s=3, k=2)
    with pytest.raises(ValueError):
        MethodSpec(kind="hbvm", s=3)
    with pytest.raises(ValueError):
        MethodSpec(kind="gauss", s=3, k=5)
    with pytest.raises(ValueError):
        MethodSpec(kind="radau", s=3)
    with pytest.raises(ValueError):
        MethodSpec(kind="gauss", s=0)
    spec = MethodSpec(kind="hbvm", s=3, k=9)
    assert spec.n_stages == 9
    assert spec.order == 6
    assert MethodSpec(kind="equip", s=2).n_stages == 2


def test_build_tableau_dispatch():
    assert build_tableau(MethodSpec("gauss", 3)).spec.kind == "gauss"
    assert build_tableau(MethodSpec("hbvm", 3, 6)).n_stages == 6
    assert build_tableau(MethodSpec("equip", 3), alpha=0.1).alpha == 0.1


def test_format_tableau_shape():
    text = format_tableau(build_gauss(2))
    lines = text.splitlines()
    assert len(lines) == 4  # comment, two stage rows, weights row
    assert "|" in lines[1] and "|" in lines[2]
    # 15 significant digits in fixed-point form
    assert "0.25000000000000" in text.replace(" ", "")


def test_tableau_csv_shape():
    text = tableau_csv(build_hbvm(2, 1))
    lines = text.splitlines()
    assert lines[0] == "# method hbvm"
    assert lines[1] == "# s 1"
    assert lines[2] == "# k 2"
    assert lines[3] == "# alpha 0"
    assert len(lines) == 4 + 2 + 1  # headers + stage rows + weights row
    assert lines[-1].startswith(",")
    # round-trip exactness of one entry
    t = build_hbvm(2, 1)
    assert float(lines[4].split(",")[0]) == t.c[0]
