"""The nine built-in homogeneous models.

Each model bundles a generator frame, frame-derived structure constants, an
invariant metric built from an invariant coframe, the admissible potential
in the A_0 = 0 gauge, the induced field tensor, and the three motion
integrals.  The frame is the source of truth: printed tables that fail the
bracket, Jacobi, or exterior-derivative checks are recorded as errata with a
reproducible evidence check rather than silently transcribed.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dataclass_field
from fractions import Fraction
from typing import Callable, Dict, Optional, Tuple

from . import expr as ex
from .expr import Expr, FuncSymbol, free_symbols, is_zero, differentiate, parse
from .geometry import (
    Coframe,
    Metric,
    StructureConstants,
    VectorField,
    invariant_coframe,
    jacobi_satisfied,
    lie_bracket,
    metric_from_coframe,
    structure_constants_from_frame,
)
from .emfield import (
    FieldTensor,
    Potential,
    SymmetryIntegral,
    field_from_potential,
    gamma_of,
)

__all__ = [
    "TAGS",
    "BianchiModel",
    "ErrataNote",
    "ModelDescriptor",
    "get_model",
    "list_models",
    "printed_vs_consistent",
    "random_model_assignment",
]

TAGS = ("I", "II", "III", "IV", "V", "VI", "VII", "VIII", "IX")
SOLVABLE = ("I", "II", "III", "IV", "V", "VI", "VII")


@dataclass(frozen=True)
class ErrataNote:
    """One divergence between a printed formula and the consistent form."""

    location: str
    printed_form: str
    consistent_form: str
    evidence: str
    check: Optional[Callable[[], bool]] = dataclass_field(
        default=None, repr=False, compare=False
    )

    def reproduce(self) -> bool:
        """Run the evidence check: True when the printed form fails and the
        consistent form passes.  Notes without a machine-parseable printed
        form return True vacuously."""
        if self.check is None:
            return True
        return self.check()


@dataclass(frozen=True)
class BianchiModel:
    type_tag: str
    params: Dict[str, object]
    frame: Tuple[VectorField, VectorField, VectorField]
    constants: StructureConstants
    coframe: Coframe
    metric: Metric
    potential: Potential
    field: FieldTensor
    integrals: Tuple[SymmetryIntegral, SymmetryIntegral, SymmetryIntegral]
    errata: Tuple[ErrataNote, ...]

    @property
    def solvable(self) -> bool:
        return self.type_tag in SOLVABLE


@dataclass(frozen=True)
class ModelDescriptor:
    type_tag: str
    solvable: bool
    note: str


# ---------------------------------------------------------------------------
# frames and potentials (consistent forms)
# ---------------------------------------------------------------------------


def _vf(c1: str, c2: str, c3: str) -> VectorField:
    return VectorField.spatial(parse(c1), parse(c2), parse(c3))


def _translation_frame(k: Fraction, n: Fraction, eps: Fraction):
    """Generators (d1, d2, (k u1 + eps u2) d1 + n u2 d2 - d3)."""
    u1, u2 = ex.coord(1), ex.coord(2)
    third = VectorField.spatial(
        ex.number(k) * u1 + ex.number(eps) * u2, ex.number(n) * u2, ex.number(-1)
    )
    return (_vf("1", "0", "0"), _vf("0", "1", "0"), third)


def _solvable_params(tag: str, q: Fraction):
    table = {
        "I": (0, 0, 0),
        "II": (0, 0, 1),
        "III": (1, 0, 0),
        "IV": (1, 1, 1),
        "V": (1, 1, 0),
    }
    if tag in table:
        k, n, eps = table[tag]
        return Fraction(k), Fraction(n), Fraction(eps)
    if tag == "VI":
        return Fraction(1), Fraction(q), Fraction(0)
    raise ValueError(tag)


def _frame_for(tag: str, q: Fraction):
    if tag in ("I", "II", "III", "IV", "V", "VI"):
        return _translation_frame(*_solvable_params(tag, q))
    if tag == "VII":
        return (
            _vf("1", "0", "0"),
            _vf("0", "1", "0"),
            _vf("-u2", "2*cos(alpha)*u2 + u1", "1"),
        )
    if tag == "VIII":
        return (
            _vf("0", "1", "0"),
            _vf("0", "u2", "1"),
            _vf("exp(u3)", "u2^2", "2*u2"),
        )
    if tag == "IX":
        return (
            _vf("0", "1", "0"),
            _vf(
                "cos(u2)",
                "-cos(u1)*sin(u2)/sin(u1)",
                "sin(u2)/sin(u1)",
            ),
            _vf(
                "-sin(u2)",
                "-cos(u1)*cos(u2)/sin(u1)",
                "cos(u2)/sin(u1)",
            ),
        )
    raise ValueError(f"unknown type tag {tag!r}")


def _potential_for(tag: str, q: Fraction) -> Potential:
    a0, b0, g0 = ex.func("alpha0"), ex.func("beta0"), ex.func("gamma0")
    u1, u3 = ex.coord(1), ex.coord(3)
    e3 = ex.exp(u3)
    if tag == "I":
        return Potential.make(0, a0, b0, g0)
    if tag == "II":
        return Potential.make(0, a0, a0 * u3 + b0, g0)
    if tag == "III":
        return Potential.make(0, a0 * e3, b0, g0)
    if tag == "IV":
        return Potential.make(0, a0 * e3, (a0 * u3 + b0) * e3, g0)
    if tag == "V":
        return Potential.make(0, a0 * e3, b0 * e3, g0)
    if tag == "VI":
        return Potential.make(0, a0 * e3, b0 * ex.exp(ex.number(q) * u3), g0)
    if tag == "VII":
        damp = parse("exp(-cos(alpha)*u3)")
        a1 = (
            a0 * parse("sin(sin(alpha)*u3 + alpha)")
            + b0 * parse("cos(sin(alpha)*u3 + alpha)")
        ) * damp
        a2 = (a0 * parse("sin(sin(alpha)*u3)") + b0 * parse("cos(sin(alpha)*u3)")) * damp
        return Potential.make(0, a1, a2, g0)
    if tag == "VIII":
        em = ex.exp(-u3)
        return Potential.make(
            0,
            a0,
            (a0 * u1 * u1 + 2 * b0 * u1 + g0) * em,
            -(a0 * u1 + b0),
        )
    if tag == "IX":
        # the third free function is forced to zero by the cross equation
        # F_{02,3} = F_01 sin u1; see the type-IX errata note
        s1, s3, c3 = ex.sin(u1), ex.sin(u3), ex.cos(u3)
        return Potential.make(0, a0 * c3 - b0 * s3, (a0 * s3 + b0 * c3) * s1, 0)
    raise ValueError(f"unknown type tag {tag!r}")


def _params_for(tag: str, q: Fraction) -> Dict[str, object]:
    if tag in ("I", "II", "III", "IV", "V"):
        k, n, eps = _solvable_params(tag, q)
        return {"k": k, "n": n, "eps": eps}
    if tag == "VI":
        return {"k": Fraction(1), "n": Fraction(q), "eps": Fraction(0), "q": Fraction(q)}
    if tag == "VII":
        return {"alpha": "symbolic", "q": "2*cos(alpha)"}
    return {}


# ---------------------------------------------------------------------------
# errata ledger
# ---------------------------------------------------------------------------


def _ode_residual_vii(f13: Expr) -> Expr:
    """Residual of f'' + 2 cos(alpha) f' + f = 0 in u3, which the four
    oscillating components of the type-VII system must satisfy."""
    c = parse("cos(alpha)")
    d1 = differentiate(f13, 3)
    d2 = differentiate(d1, 3)
    return d2 + 2 * c * d1 + f13


def _errata_for(tag: str) -> Tuple[ErrataNote, ...]:
    notes = []

    def superscript_note():
        return ErrataNote(
            location=f"appendix metric block, type {tag}",
            printed_form="line element ending in 'du^{32} a_33 + e du^{32}'",
            consistent_form="a_33 (du^3)^2 + e (du^0)^2",
            evidence="reading both terms as (du^3)^2 leaves g_00 = 0, a singular metric",
            check=lambda: is_zero(_degenerate_reading_det(tag)),
        )

    if tag in ("II", "III", "IV", "V", "VI", "VII"):
        notes.append(superscript_note())
    if tag == "II":
        notes.append(
            ErrataNote(
                location="per-type system listing, type II",
                printed_form="F_{23,3} + F_{13} = 0",
                consistent_form="F_{23,3} - F_{13} = 0 (generic reduction with eps = 1)",
                evidence="the closed-form solution satisfies the generic sign only",
                check=_check_ii_system_sign,
            )
        )
    if tag == "III":
        notes.append(
            ErrataNote(
                location="solvable-group walkthrough, type III parameters",
                printed_form="'k = 0, n = eps = 0'",
                consistent_form="k = 1, n = eps = 0 (parameter table and frame)",
                evidence="with k = 0 the frame degenerates to the type-I algebra",
                check=_check_iii_parameter_typo,
            )
        )
    if tag == "V":
        notes.append(
            ErrataNote(
                location="appendix metric block, type V cross term",
                printed_form="2 du^2 du^3 a_23 u^3 exp u^3",
                consistent_form="2 du^2 du^3 a_23 exp u^3",
                evidence="killing_residual is nonzero with the spurious u^3 factor",
                check=lambda: _check_spurious_u3("V"),
            )
        )
    if tag == "VI":
        notes.append(
            ErrataNote(
                location="appendix metric block, type VI cross term",
                printed_form="2 du^2 du^3 a_23 u^3 exp 2u^3",
                consistent_form="2 du^2 du^3 a_23 exp 2u^3",
                evidence="killing_residual is nonzero with the spurious u^3 factor",
                check=lambda: _check_spurious_u3("VI"),
            )
        )
    if tag == "VII":
        notes.append(
            ErrataNote(
                location="structure-constant table, type VII line",
                printed_form="C_13 = delta_1, C_23 = 2 delta_2 cos(alpha)",
                consistent_form=(
                    "frame brackets give [xi1,xi3] = xi2 and "
                    "[xi2,xi3] = -xi1 + 2 cos(alpha) xi2"
                ),
                evidence="structure_constants_from_frame disagrees with the printed line",
                check=_check_vii_constants,
            )
        )
        notes.append(
            ErrataNote(
                location="type VII field-tensor block, oscillatory arguments",
                printed_form="cos(u3 cos(alpha)) mixed with sin(u3 sin(alpha))",
                consistent_form="all oscillatory arguments are u3 sin(alpha)",
                evidence="the printed argument fails the second-order component equation",
                check=_check_vii_trig,
            )
        )
        notes.append(
            ErrataNote(
                location="type VII field-tensor block, F_03",
                printed_form="F_03 = gamma_0",
                consistent_form="F_03 = gamma_0' (time derivative), matching F = dA",
                evidence="field_from_potential gives the derivative form",
                check=_check_vii_f03,
            )
        )
    if tag == "VIII":
        notes.append(
            ErrataNote(
                location="structure-constant list, type VIII",
                printed_form="C_23 = -delta_3",
                consistent_form="C_23 = +delta_3 (bracket expansion and Jacobi identity)",
                evidence="jacobi_residual is nonzero for the printed sign",
                check=_check_viii_constants,
            )
        )
    if tag == "IX":
        notes.append(
            ErrataNote(
                location="final-solution block, type IX",
                printed_form=(
                    "F_01 = gamma_0' + alpha_0' cos u^3 - beta_0' sin u^3 and "
                    "A_1 = gamma_0 + alpha_0 cos u^3 - beta_0 sin u^3"
                ),
                consistent_form=(
                    "gamma_0 = 0 (as in the appendix block): the component "
                    "equation F_{02,3} = F_01 sin u1 eliminates it"
                ),
                evidence=(
                    "admissibility_residual and compatibility_residual are "
                    "nonzero for the second generator when gamma_0 is kept"
                ),
                check=_check_ix_potential,
            )
        )
        notes.append(
            ErrataNote(
                location="appendix metric block, type IX",
                printed_form="grouping-ambiguous superscripts (cos u^{1^2}, ...)",
                consistent_form="metric assembled from the invariant coframe",
                evidence="killing_residual vanishes for the coframe-built metric",
                check=None,
            )
        )
    return tuple(notes)


def _degenerate_reading_det(tag: str) -> Expr:
    """Determinant of the metric under the printed '(du^3)^2' reading."""
    m = get_model(tag).metric
    entries = [list(row) for row in m.entries]
    entries[3][3] = entries[3][3] + m.sign
    entries[0][0] = ex.number(0)
    bad = Metric(entries, ex.number(0))
    return bad.determinant()


def _check_spurious_u3(tag: str) -> bool:
    from .geometry import killing_satisfied, killing_residual

    m = get_model(tag)
    u3 = ex.coord(3)
    entries = [list(row) for row in m.metric.entries]
    entries[2][3] = entries[2][3] * u3
    entries[3][2] = entries[2][3]
    bad = Metric(entries, m.metric.sign)
    bad_res = killing_residual(bad, m.frame[2])
    bad_fails = any(not is_zero(bad_res[i][j]) for i in range(4) for j in range(i, 4))
    good_passes = killing_satisfied(m.metric, m.frame[2])
    return bad_fails and good_passes


def _check_ii_system_sign() -> bool:
    # the discrepancy involves the constant later removed by the algebraic
    # constraints, so check the pre-elimination family
    from .solver import solve_solvable

    fam = solve_solvable("II")
    f23, f13 = fam.components[(2, 3)], fam.components[(1, 3)]
    generic = differentiate(f23, 3) - f13
    printed = differentiate(f23, 3) + f13
    return is_zero(generic) and not is_zero(printed)


def _check_iii_parameter_typo() -> bool:
    frame = _translation_frame(Fraction(0), Fraction(0), Fraction(0))
    degenerate = structure_constants_from_frame(frame)
    derived = get_model("III").constants
    return degenerate != derived and bool(derived.nonzero_entries())


def _check_vii_constants() -> bool:
    z = ex.number(0)
    printed = StructureConstants(
        [
            [[z] * 3, [z] * 3, [ex.number(1), z, z]],
            [[z] * 3, [z] * 3, [z, parse("2*cos(alpha)"), z]],
            [[ex.number(-1), z, z], [z, parse("-2*cos(alpha)"), z], [z] * 3],
        ]
    )
    model = get_model("VII")
    derived = model.constants
    bracket13 = lie_bracket(model.frame[0], model.frame[2])
    matches_xi2 = all(
        is_zero(bracket13[i] - model.frame[1][i]) for i in range(4)
    )
    return printed != derived and matches_xi2


def _check_vii_trig() -> bool:
    printed = parse(
        "(alpha0*sin(sin(alpha)*u3) + beta0*cos(cos(alpha)*u3))*exp(-cos(alpha)*u3)"
    )
    consistent = get_model("VII").field[1, 3]
    return not is_zero(_ode_residual_vii(printed)) and is_zero(
        _ode_residual_vii(consistent)
    )


def _check_vii_f03() -> bool:
    derived = get_model("VII").field[0, 3]
    return is_zero(derived - ex.func("gamma0", 1)) and not is_zero(
        derived - ex.func("gamma0", 0)
    )


def _check_viii_constants() -> bool:
    z = ex.number(0)
    one = ex.number(1)
    printed = StructureConstants(
        [
            [[z] * 3, [one, z, z], [z, ex.number(2), z]],
            [[-one, z, z], [z] * 3, [z, z, -one]],
            [[z, ex.number(-2), z], [z, z, one], [z] * 3],
        ]
    )
    model = get_model("VIII")
    return (not jacobi_satisfied(printed)) and jacobi_satisfied(model.constants)


def _check_ix_potential() -> bool:
    from .emfield import admissibility_residual

    model = get_model("IX")
    printed = Potential.make(
        0,
        ex.func("gamma0") + model.potential[1],
        model.potential[2],
        0,
    )
    printed_field = field_from_potential(printed)
    bad = admissibility_residual(printed, printed_field, model.frame[1])
    printed_fails = any(not is_zero(r) for r in bad)
    good = admissibility_residual(model.potential, model.field, model.frame[1])
    good_passes = all(is_zero(r) for r in good)
    return printed_fails and good_passes


# ---------------------------------------------------------------------------
# model construction
# ---------------------------------------------------------------------------

_CACHE: Dict[Tuple[str, Fraction], BianchiModel] = {}


def get_model(type_tag: str, q=None) -> BianchiModel:
    """Fully populated model for the given type.

    ``q`` selects the free structure constant of type VI (default 2; any
    rational except 0 and 1).  The type-VII angle stays symbolic, entering
    expressions through sin(alpha) and cos(alpha) with the unit-circle
    relation applied during canonicalization.
    """
    tag = str(type_tag).strip().upper()
    if tag not in TAGS:
        raise ValueError(f"unknown type tag {type_tag!r}; expected one of {TAGS}")
    if q is not None and tag != "VI":
        raise ValueError("parameter q only applies to type VI")
    qv = Fraction(q) if q is not None else Fraction(2)
    if tag == "VI" and qv in (0, 1):
        raise ValueError("type VI requires q outside {0, 1}")
    key = (tag, qv if tag == "VI" else Fraction(0))
    if key in _CACHE:
        return _CACHE[key]

    frame = _frame_for(tag, qv)
    constants = structure_constants_from_frame(frame)
    coframe = invariant_coframe(frame)
    metric = metric_from_coframe(coframe)
    potential = _potential_for(tag, qv)
    field = field_from_potential(potential)
    integrals = tuple(
        SymmetryIntegral(xi=frame[a], gamma=gamma_of(frame[a], potential))
        for a in range(3)
    )
    model = BianchiModel(
        type_tag=tag,
        params=_params_for(tag, qv),
        frame=frame,
        constants=constants,
        coframe=coframe,
        metric=metric,
        potential=potential,
        field=field,
        integrals=integrals,
        errata=_errata_for(tag),
    )
    _CACHE[key] = model
    return model


def list_models() -> Tuple[ModelDescriptor, ...]:
    """Descriptors of the nine built-in types, solvable first."""
    out = []
    for tag in TAGS:
        if tag in SOLVABLE:
            note = "solvable; contains the Abelian translation pair"
        else:
            note = "not solvable; does not contain the Abelian translation pair"
        out.append(ModelDescriptor(tag, tag in SOLVABLE, note))
    return tuple(out)


def printed_vs_consistent(type_tag: str) -> Tuple[ErrataNote, ...]:
    """Errata ledger for one type; empty when nothing diverges."""
    return get_model(type_tag).errata


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------

_A_NAMES = ("a11", "a12", "a13", "a22", "a23", "a33")


def random_model_assignment(
    model: BianchiModel, rng, symbols=None
) -> ex.Assignment:
    """Random evaluation point for a model's expressions.

    Coordinates are uniform in [-1, 1] (type IX resamples away from
    sin(u1) = 0); metric coefficient functions get a random symmetric matrix
    with |det| > 0.1; other function values are uniform in [-2, 2]; the
    signature parameter e is +-1 and the type-VII angle stays clear of the
    degenerate sin(alpha) = 0.
    """
    if symbols is None:
        params, funcs = set(), set()
        exprs = (
            [model.metric[i, j] for i in range(4) for j in range(i, 4)]
            + list(model.potential)
            + [model.field[i, j] for i in range(4) for j in range(i + 1, 4)]
            + [c for f in model.frame for c in f]
        )
        for e in exprs:
            sym = free_symbols(e)
            params |= sym["params"]
            funcs |= sym["funcs"]
            funcs |= {FuncSymbol(f.name, f.order + 1) for f in sym["funcs"]}
        symbols = tuple(sorted(params)) + tuple(sorted(funcs))

    while True:
        coords = [rng.uniform(-1.0, 1.0) for _ in range(4)]
        if model.type_tag != "IX" or abs(__import__("math").sin(coords[1])) >= 0.1:
            break

    params_out: Dict[str, float] = {}
    funcs_out: Dict[Tuple[str, int], float] = {}
    a_vals = _random_spatial_matrix(rng)
    for s in symbols:
        if isinstance(s, str):
            if s == "e":
                params_out[s] = rng.choice((1.0, -1.0))
            elif s == "alpha":
                params_out[s] = rng.uniform(0.3, 1.25)
            else:
                params_out[s] = _nonzero_uniform(rng)
        else:
            name, order = s.name, s.order
            if name in _A_NAMES and order == 0:
                funcs_out[(name, 0)] = a_vals[name]
            else:
                funcs_out[(name, order)] = rng.uniform(-2.0, 2.0)
    return ex.Assignment(coords, params_out, funcs_out)


def _nonzero_uniform(rng, lo=-2.0, hi=2.0, min_abs=0.2):
    while True:
        v = rng.uniform(lo, hi)
        if abs(v) >= min_abs:
            return v


def _random_spatial_matrix(rng):
    import numpy as np

    while True:
        vals = {name: rng.uniform(-2.0, 2.0) for name in _A_NAMES}
        m = np.array(
            [
                [vals["a11"], vals["a12"], vals["a13"]],
                [vals["a12"], vals["a22"], vals["a23"]],
                [vals["a13"], vals["a23"], vals["a33"]],
            ]
        )
        if abs(np.linalg.det(m)) > 0.1:
            return vals
