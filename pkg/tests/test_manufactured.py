import numpy as np
import pytest

from magnetocontrol.manufactured import (CONTROL, DOMAIN, E_bar, E_full, H_bar, H_d,
                                         ExactSolution, J_AMPLITUDE, eval_exact, fd_curl,
                                         fd_div, in_column, j_bar, manufactured_data, mu,
                                         rot_E_full, triple_norm_error, verify_consistency)
from magnetocontrol.mesh import build_structured_cube
from magnetocontrol.quadrature import collapsed_tet_rule


def sample(box, n, rng, margin=1e-3):
    lo, hi = np.asarray(box.lo) + margin, np.asarray(box.hi) - margin
    return lo + (hi - lo) * rng.random((n, 3))


def test_permeability_regions():
    assert eval_exact([-0.25, -0.25, 0.5])["mu"] == 10.0
    assert eval_exact([0.5, 0.5, 0.5])["mu"] == 1.0


def test_control_zero_on_diagonal():
    for z in (0.0, 0.1, 0.5):
        assert np.abs(eval_exact([0.25, 0.25, z])["j"]).max() <= 1e-12


def test_eval_exact_domain_checks():
    assert eval_exact([0.9, 0.9, 0.9])["j"] is None
    with pytest.raises(ValueError):
        eval_exact([1.5, 0.0, 0.0])


def test_divergence_free_control(rng):
    x = sample(CONTROL, 20, rng)
    assert np.abs(fd_div(j_bar, x, h=1e-3)).max() <= 1e-10


def test_curl_of_adjoint_by_finite_differences(rng):
    for box in ([(-0.5, -0.5, -0.5), (0.0, 0.0, 1.0)], [(0.0, 0.0, -0.5), (1.0, 1.0, 1.0)]):
        from magnetocontrol.mesh import Box
        x = sample(Box(*box), 50, rng)
        ref = rot_E_full(x)
        assert np.abs(fd_curl(E_full, x) - ref).max() <= 1e-6 * max(1.0, np.abs(ref).max())


def test_consistency_identities():
    rep = verify_consistency(n=50, seed=3)
    assert rep.passed, rep.failures()


def test_tangential_trace_vanishes(rng):
    worst = 0.0
    for k in range(3):
        for side in (DOMAIN.lo[k], DOMAIN.hi[k]):
            x = sample(DOMAIN, 100, rng, margin=0.0)
            x[:, k] = side
            n = np.zeros(3)
            n[k] = 1.0
            worst = max(worst, np.abs(np.cross(E_bar(x), n)).max())
    assert worst <= 1e-12


def test_desired_field_support(rng):
    x = sample(DOMAIN, 400, rng)
    inside = in_column(x)
    assert np.all(H_d(x)[~inside] == 0.0)
    assert np.array_equal(H_d(x)[inside], H_bar(x)[inside])


def test_control_amplitude_bound(rng):
    x = sample(CONTROL, 500, rng, margin=0.0)
    assert np.linalg.norm(j_bar(x), axis=1).max() <= J_AMPLITUDE * np.sqrt(2)
    assert np.array_equal(manufactured_data().j_d(x), j_bar(x))


def test_kappa_positive():
    with pytest.raises(ValueError):
        manufactured_data(kappa=0.0)


@pytest.fixture(scope="module")
def mesh3():
    return build_structured_cube(DOMAIN, 3, control=CONTROL, mu=mu)


def _sampler(field, mesh, cells=None):
    def f(bary):
        x = mesh.map_points(bary)
        if cells is not None:
            x = x[cells]
        return field(x.reshape(-1, 3)).reshape(x.shape)
    return f


def test_exact_fields_give_zero_error(mesh3):
    om = np.flatnonzero(mesh3.in_omega)
    r = triple_norm_error(mesh3, _sampler(H_bar, mesh3), _sampler(j_bar, mesh3, om), 1.0)
    assert r.total <= 1e-10 and r.err_H <= 1e-10 and r.err_j <= 1e-10


def test_zero_fields_give_exact_norms():
    m = build_structured_cube(DOMAIN, 12, control=CONTROL, mu=mu)
    om = np.flatnonzero(m.in_omega)
    r = triple_norm_error(m, lambda b: np.zeros((m.n_cells, len(b), 3)),
                          lambda b: np.zeros((om.size, len(b), 3)), 1.0)
    assert r.total ** 2 == pytest.approx(r.err_H ** 2 + r.err_j ** 2, rel=1e-14)
    # independent degree-10 rule on the same cells
    rule = collapsed_tet_rule(10)
    x = m.map_points(rule.points)
    h2 = (H_bar(x.reshape(-1, 3)) ** 2).sum(-1).reshape(x.shape[:2]) * m.mu[:, None]
    j2 = (j_bar(x.reshape(-1, 3)) ** 2).sum(-1).reshape(x.shape[:2]) * m.in_omega[:, None]
    assert r.err_H ** 2 == pytest.approx((h2 @ rule.weights) @ m.volumes, rel=1e-10)
    assert r.err_j ** 2 == pytest.approx((j2 @ rule.weights) @ m.volumes, rel=1e-10)
    # closed forms: sin^4 averages to 3/8 and sin^2 to 1/2 over half periods
    H_norm2 = 1.5 * 3 / 8 * (1000 * 0.25 + 1 * 2.0) / (16 * np.pi ** 2)
    assert r.err_H ** 2 == pytest.approx(H_norm2, rel=1e-10)
    assert r.err_j ** 2 == pytest.approx(J_AMPLITUDE ** 2 * 2 / 16 * 0.5, rel=1e-10)


def test_kappa_scaling_exact(mesh3):
    om = np.flatnonzero(mesh3.in_omega)
    zero_all = lambda b: np.zeros((mesh3.n_cells, len(b), 3))
    zero_om = lambda b: np.zeros((om.size, len(b), 3))
    r1 = triple_norm_error(mesh3, zero_all, zero_om, 1.0)
    r2 = triple_norm_error(mesh3, zero_all, zero_om, 2.0)
    assert r2.total ** 2 - r1.total ** 2 == pytest.approx(r1.err_j ** 2, rel=1e-13)
    assert np.allclose(r2.cell_total(2.0) ** 2, r2.cell_H + 2 * r2.cell_j)


def test_exact_solution_defaults():
    ex = ExactSolution()
    assert ex.E is E_bar and ex.H is H_bar and ex.j is j_bar
