"""Residual checks for admissible electromagnetic fields."""

from symlab import catalog, expr as ex
from symlab.emfield import (
    FieldTensor,
    KgfChecker,
    Potential,
    admissibility_residual,
    algebraic_constraint_residual,
    bianchi_residual,
    bianchi_satisfied,
    compatibility_residual,
    field_from_potential,
    gamma_of,
)
from symlab.expr import is_zero, parse
from symlab.geometry import VectorField


def all_zero(matrix) -> bool:
    return all(is_zero(v) for row in matrix for v in row)


class TestFieldFromPotential:
    def test_zero_potential(self):
        F = field_from_potential(Potential.make(0, 0, 0, 0))
        assert all(is_zero(F[i, j]) for i in range(4) for j in range(4))

    def test_exponential_model(self, models):
        F = field_from_potential(models["V"].potential)
        assert F[0, 1] == parse("alpha0'*exp(u3)")
        assert F[1, 3] == parse("-alpha0*exp(u3)")
        assert is_zero(F[1, 2])
        assert F[2, 3] == parse("-beta0*exp(u3)")

    def test_rotation_model_component_table(self, models):
        F = field_from_potential(models["IX"].potential)
        assert F[0, 1] == parse("alpha0'*cos(u3) - beta0'*sin(u3)")
        assert is_zero(F[0, 2] - parse("(alpha0'*sin(u3) + beta0'*cos(u3))*sin(u1)"))
        assert is_zero(F[0, 3])
        assert is_zero(F[1, 2] - parse("(alpha0*sin(u3) + beta0*cos(u3))*cos(u1)"))
        assert is_zero(F[1, 3] - parse("alpha0*sin(u3) + beta0*cos(u3)"))
        assert is_zero(F[2, 3] - parse("(-alpha0*cos(u3) + beta0*sin(u3))*sin(u1)"))

    def test_gauge_covariance(self, models):
        f = parse("u1*u3")
        for tag in ("II", "V", "IX"):
            m = models[tag]
            shifted = m.potential.shifted_by_gradient(f)
            F2 = field_from_potential(shifted)
            assert all(
                is_zero(F2[i, j] - m.field[i, j]) for i in range(4) for j in range(4)
            )


class TestBianchi:
    def test_derived_fields_are_closed(self, models):
        for m in models.values():
            assert bianchi_satisfied(m.field)

    def test_non_closed_counterexample(self):
        F = FieldTensor.from_upper({(1, 2): parse("u3")})
        res = bianchi_residual(F)
        assert res[(1, 2, 3)] == ex.number(1)
        assert not bianchi_satisfied(F)


class TestAdmissibility:
    def test_all_models_all_generators(self, models):
        for m in models.values():
            for X in m.frame:
                res = admissibility_residual(m.potential, m.field, X)
                assert all(is_zero(r) for r in res), m.type_tag

    def test_zero_potential(self, models):
        A = Potential.make(0, 0, 0, 0)
        F = field_from_potential(A)
        for X in models["III"].frame:
            assert all(is_zero(r) for r in admissibility_residual(A, F, X))

    def test_perturbation_detected(self, models):
        m = models["I"]
        A = Potential.make(0, m.potential[1], m.potential[2] + parse("u1^2"), m.potential[3])
        F = field_from_potential(A)
        res = admissibility_residual(A, F, m.frame[0])
        assert any(not is_zero(r) for r in res)


class TestCompatibility:
    def test_catalog_fields_invariant(self, models):
        for tag in ("III", "VIII"):
            m = models[tag]
            for X in m.frame:
                assert all_zero(compatibility_residual(m.field, X)), tag

    def test_crafted_field_not_invariant(self, models):
        m = models["III"]
        F = FieldTensor.from_upper({(0, 1): parse("u3")})
        res = compatibility_residual(F, m.frame[2])
        assert any(not is_zero(v) for row in res for v in row)


class TestGamma:
    def test_zero_potential(self):
        X = VectorField.spatial(1, 0, 0)
        assert is_zero(gamma_of(X, Potential.make(0, 0, 0, 0)))

    def test_translation_contraction(self, models):
        m = models["I"]
        assert is_zero(gamma_of(m.frame[0], m.potential) + parse("alpha0"))

    def test_shear_generator(self, models):
        m = models["II"]
        gam = gamma_of(m.frame[2], m.potential)
        assert is_zero(gam - parse("-u2*alpha0 + gamma0"))

    def test_reduction_identity(self, models):
        # d_i gamma = xi^j F_ji for every catalog pair
        for m in models.values():
            for integral in m.integrals:
                for i in range(4):
                    lhs = ex.differentiate(integral.gamma, i)
                    rhs = sum(
                        (integral.xi[j] * m.field[j, i] for j in range(4)),
                        ex.number(0),
                    )
                    assert is_zero(lhs - rhs), m.type_tag


class TestAlgebraicConstraints:
    def test_catalog_potentials_satisfy(self, models):
        for m in models.values():
            res = algebraic_constraint_residual(m.potential, m.frame, m.constants)
            assert all_zero(res), m.type_tag

    def test_shear_model_with_leftover_constant(self, models):
        # re-introducing the eliminated constant violates the constraints
        m = models["II"]
        A = Potential.make(
            0, m.potential[1], m.potential[2] + parse("u1"), m.potential[3]
        )
        res = algebraic_constraint_residual(A, m.frame, m.constants)
        assert any(not is_zero(v) for row in res for v in row)


class TestSecondOrderConditions:
    def test_one_shot_wrapper(self, models, rng):
        from symlab.emfield import kgf_extra_residual_at

        m = models["I"]
        checker = KgfChecker(m.metric, m.potential)
        point = catalog.random_model_assignment(m, rng, symbols=checker.required_symbols())
        r1, r2 = kgf_extra_residual_at(m.metric, m.potential, m.frame[0], point)
        assert abs(r1) < 1e-8 and abs(r2) < 1e-8

    def test_all_models_small_residuals(self, models, rng):
        for m in models.values():
            checker = KgfChecker(m.metric, m.potential)
            for _ in range(15):
                point = catalog.random_model_assignment(
                    m, rng, symbols=checker.required_symbols()
                )
                for X in m.frame:
                    r1, r2 = checker.residuals(X, point)
                    assert abs(r1) < 1e-8 and abs(r2) < 1e-8, m.type_tag

    def test_zero_potential_exact(self, models, rng):
        m = models["II"]
        checker = KgfChecker(m.metric, Potential.make(0, 0, 0, 0))
        point = catalog.random_model_assignment(m, rng, symbols=checker.required_symbols())
        r1, r2 = checker.residuals(m.frame[2], point)
        assert r1 == 0.0 and r2 == 0.0

    def test_non_admissible_perturbation_detected(self, models, rng):
        m = models["V"]
        pert = Potential.make(
            0, m.potential[1], m.potential[2] + ex.coord(1), m.potential[3]
        )
        checker = KgfChecker(m.metric, pert)
        big = 0.0
        for _ in range(10):
            point = catalog.random_model_assignment(
                m, rng, symbols=checker.required_symbols()
            )
            r1, _r2 = checker.residuals(m.frame[2], point)
            big = max(big, abs(r1))
        assert big > 1e-3

    def test_admissible_symbolic_implies_numeric(self, models, rng):
        # the consequence structure: symbolic admissibility propagates to the
        # second-order conditions at every sampled point
        m = models["VII"]
        for X in m.frame:
            res = admissibility_residual(m.potential, m.field, X)
            assert all(is_zero(r) for r in res)
        checker = KgfChecker(m.metric, m.potential)
        for _ in range(20):
            point = catalog.random_model_assignment(m, rng, symbols=checker.required_symbols())
            for X in m.frame:
                r1, r2 = checker.residuals(X, point)
                assert abs(r1) < 1e-8 and abs(r2) < 1e-8
