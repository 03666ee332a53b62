import numpy as np
import pytest

from plqsqp.errors import BadParams
from plqsqp.generators import generate, generate_elqp, generate_minmax, generate_nlp
from plqsqp.kkt import kkt_residual
from plqsqp.plq import DualLQ, dual_lq_eval_prox, evaluate
from plqsqp.polyhedral import Polyhedron


@pytest.mark.parametrize("kind,params", [
    ("nlp", dict(n=3, n_eq=1, n_ineq=2)),
    ("nlp", dict(n=4, n_eq=0, n_ineq=3, n_active=2)),
    ("elqp", dict(n=2, m=2)),
    ("elqp", dict(n=4, m=3)),
    ("minmax", dict(n=3, m=3, n_active=2)),
    ("critical_showcase", dict()),
])
def test_generated_kkt_point_is_exact(kind, params):
    gp = generate(kind, seed=11, **params)
    assert kkt_residual(gp.problem, gp.xbar, gp.lambdabar) <= 1e-10


def test_generator_determinism():
    a = generate_elqp(n=3, m=2, seed=5)
    b = generate_elqp(n=3, m=2, seed=5)
    assert np.array_equal(a.xbar, b.xbar)
    assert np.array_equal(a.problem.phi.l, b.problem.phi.l)
    c = generate_elqp(n=3, m=2, seed=6)
    assert not np.array_equal(a.problem.phi.l, c.problem.phi.l)


def test_nlp_constraint_encoding():
    gp = generate_nlp(n=3, n_eq=1, n_ineq=2, n_active=1, seed=0)
    z = gp.problem.Phi.value(gp.xbar)
    assert abs(z[0]) <= 1e-12  # equality row active
    assert z[1] <= 1e-12  # active inequality at the boundary
    assert z[2] < -0.1  # inactive inequality strictly slack
    assert gp.lambdabar[2] == 0.0


def test_nlp_rejects_overconstrained():
    with pytest.raises(BadParams):
        generate_nlp(n=2, n_eq=2, n_ineq=2, n_active=2, seed=0)


def test_elqp_piece_representation_matches_dual_form():
    gp = generate_elqp(n=2, m=2, seed=9)
    lo, hi = gp.info["Omega_box"]
    beta = np.asarray(gp.info["dual_B_diag"])
    h = DualLQ(Polyhedron.box([lo] * 2, [hi] * 2), np.diag(beta))
    rng = np.random.default_rng(0)
    for _ in range(50):
        z = 2.0 * rng.standard_normal(2)
        value, _ = dual_lq_eval_prox(h, z)
        assert abs(value - evaluate(gp.problem.g, z)) <= 1e-9


def test_minmax_multiplier_on_simplex():
    gp = generate_minmax(n=3, m=4, n_active=2, seed=3)
    lam = gp.lambdabar
    assert abs(lam.sum() - 1.0) <= 1e-12
    assert np.all(lam >= 0.0)
    assert np.count_nonzero(lam) == 2


def test_critical_showcase_matches_p2():
    gp = generate("critical_showcase", seed=0)
    assert gp.info["critical_lambda"] == -1.0
    z = gp.problem.Phi.value([0.5])
    assert abs(z[0] - 0.25) <= 1e-12  # Phi = x^2


def test_metadata_roundtrip(tmp_path):
    from plqsqp.probio import load_problem, save_problem
    gp = generate_elqp(n=2, m=2, seed=4)
    path = tmp_path / "prob.json"
    save_problem(path, gp.problem, gp.metadata())
    problem, md = load_problem(path)
    assert np.allclose(md["xbar"], gp.xbar)
    assert kkt_residual(problem, np.asarray(md["xbar"]),
                        np.asarray(md["lambdabar"])) <= 1e-10
