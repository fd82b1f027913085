"""Lie-algebra and metric machinery on a four-dimensional chart.

Coordinate ``u0`` is the non-ignorable direction; a three-parameter symmetry
group acts on the ``u1..u3`` slice, so group generators have vanishing ``u0``
component.  Invariant metrics are assembled from an invariant coframe with
abstract coefficient functions of ``u0``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from . import expr as ex
from ._symint import fundamental_matrix
from .expr import Expr, Assignment, is_zero, differentiate

__all__ = [
    "VectorField",
    "StructureConstants",
    "Coframe",
    "Metric",
    "MetricSample",
    "GeometryError",
    "DegenerateFrameError",
    "NonClosingFrameError",
    "SingularMetricError",
    "lie_bracket",
    "structure_constants_from_frame",
    "jacobi_residual",
    "jacobi_satisfied",
    "killing_residual",
    "killing_satisfied",
    "invariant_coframe",
    "coframe_is_invariant",
    "metric_from_coframe",
    "metric_sample",
]


class GeometryError(Exception):
    pass


class DegenerateFrameError(GeometryError):
    """The three fields do not span the group slice."""


class NonClosingFrameError(GeometryError):
    """Brackets leave the span of the frame or have non-constant coefficients."""


class SingularMetricError(GeometryError):
    """The metric determinant vanishes at the requested point."""


@dataclass(frozen=True)
class VectorField:
    """Contravariant components over (u0, u1, u2, u3)."""

    components: Tuple[Expr, Expr, Expr, Expr]

    @staticmethod
    def make(c0, c1, c2, c3) -> "VectorField":
        return VectorField(tuple(ex.Expr._coerce(c) for c in (c0, c1, c2, c3)))

    @staticmethod
    def spatial(c1, c2, c3) -> "VectorField":
        return VectorField.make(0, c1, c2, c3)

    def __getitem__(self, i: int) -> Expr:
        return self.components[i]

    def __iter__(self):
        return iter(self.components)

    def is_group_generator(self) -> bool:
        return not self.components[0]

    def __str__(self) -> str:
        return "(" + ", ".join(str(c) for c in self.components) + ")"


def lie_bracket(X: VectorField, Y: VectorField) -> VectorField:
    """[X, Y]^i = X^j d_j Y^i - Y^j d_j X^i, exact and canonical."""
    comps = []
    for i in range(4):
        acc = ex.number(0)
        for j in range(4):
            if X[j]:
                acc = acc + X[j] * differentiate(Y[i], j)
            if Y[j]:
                acc = acc - Y[j] * differentiate(X[i], j)
        comps.append(acc)
    return VectorField(tuple(comps))


class StructureConstants:
    """Exact constants c[a][b][g] with [xi_a, xi_b] = sum_g c[a][b][g] xi_g.

    Entries are exact scalars: rationals, or constant-angle combinations for
    the one family whose algebra carries an angle parameter.
    """

    def __init__(self, c):
        self.c = tuple(
            tuple(tuple(ex.Expr._coerce(c[a][b][g]) for g in range(3)) for b in range(3))
            for a in range(3)
        )
        for a in range(3):
            for b in range(3):
                for g in range(3):
                    if not is_zero(self.c[a][b][g] + self.c[b][a][g]):
                        raise NonClosingFrameError("structure constants must be antisymmetric")

    def __getitem__(self, idx):
        a, b, g = idx
        return self.c[a][b][g]

    def __eq__(self, other):
        return isinstance(other, StructureConstants) and self.c == other.c

    def nonzero_entries(self):
        out = []
        for a in range(3):
            for b in range(a + 1, 3):
                for g in range(3):
                    if self.c[a][b][g]:
                        out.append((a, b, g, self.c[a][b][g]))
        return out

    def __str__(self) -> str:
        parts = [
            f"C^{g + 1}_{{{a + 1}{b + 1}}} = {v}" for a, b, g, v in self.nonzero_entries()
        ]
        return "; ".join(parts) if parts else "all zero"


def _spatial_matrix(fields: Sequence[VectorField]):
    return [[fields[a][b + 1] for b in range(3)] for a in range(3)]


def _det3(m):
    return (
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    )


def _det4(g):
    total = ex.number(0)
    rows = [1, 2, 3]
    for j in range(4):
        minor = [[g[r][c] for c in range(4) if c != j] for r in rows]
        term = g[0][j] * _det3(minor)
        total = total + term if j % 2 == 0 else total - term
    return total


def _solve3(m, rhs, det):
    """Cramer solution of the 3x3 system m[i][j] x_j = rhs_i."""
    cols = []
    for j in range(3):
        mm = [[m[i][j2] if j2 != j else rhs[i] for j2 in range(3)] for i in range(3)]
        cols.append(_det3(mm) / det)
    return cols


def structure_constants_from_frame(fields: Sequence[VectorField]) -> StructureConstants:
    """Recover exact structure constants from a frame of generators.

    Each pairwise bracket must lie in the constant-coefficient span of the
    frame with a unique solution; otherwise NonClosingFrameError is raised.
    Frames that are not pointwise three-dimensional are still accepted when
    the constants are uniquely determined, but a frame collapsing to a
    one-dimensional distribution is rejected as degenerate.
    """
    fields = list(fields)
    if len(fields) != 3:
        raise DegenerateFrameError("need exactly three generators")
    for f in fields:
        if not f.is_group_generator():
            raise NonClosingFrameError("group generators must have zero u0 component")
    mat = [[fields[g][i + 1] for g in range(3)] for i in range(3)]
    det = _det3(mat)
    invertible = not is_zero(det)
    if not invertible and _pointwise_rank(mat) < 2:
        raise DegenerateFrameError("frame collapses to a one-dimensional distribution")
    c = [[[ex.number(0)] * 3 for _ in range(3)] for _ in range(3)]
    for a in range(3):
        for b in range(a + 1, 3):
            br = lie_bracket(fields[a], fields[b])
            if not is_zero(br[0]):
                raise NonClosingFrameError("bracket leaves the group slice")
            if invertible:
                coeffs = _solve3(mat, [br[i + 1] for i in range(3)], det)
            else:
                coeffs = _solve_in_span(fields, br, a, b)
            for g in range(3):
                cg = coeffs[g]
                if not cg.is_constant():
                    raise NonClosingFrameError(
                        f"bracket [{a + 1},{b + 1}] has non-constant coefficient {cg}"
                    )
                c[a][b][g] = cg
                c[b][a][g] = -cg
            for i in range(4):
                resid = br[i]
                for g in range(3):
                    resid = resid - c[a][b][g] * fields[g][i]
                if not is_zero(resid):
                    raise NonClosingFrameError("bracket reconstruction residual is nonzero")
    return StructureConstants(c)


def _pointwise_rank(mat) -> int:
    """Symbolic rank of the 3x3 component matrix (largest nonzero minor)."""
    for size in (3, 2, 1):
        import itertools

        for rows in itertools.combinations(range(3), size):
            for cols in itertools.combinations(range(3), size):
                if size == 3:
                    minor = _det3(mat)
                elif size == 2:
                    (r1, r2), (c1, c2) = rows, cols
                    minor = mat[r1][c1] * mat[r2][c2] - mat[r1][c2] * mat[r2][c1]
                else:
                    minor = mat[rows[0]][cols[0]]
                if not is_zero(minor):
                    return size
    return 0


def _solve_in_span(fields, bracket, a, b):
    """Unique constant coefficients with [xi_a, xi_b] = sum c_g xi_g, solved
    by matching monomial profiles when the frame matrix is singular."""
    # each monomial profile of sum c_g xi_g^i = bracket^i gives one linear
    # equation over the three unknown constants
    rows: dict = {}
    for i in range(4):
        for g in range(3):
            e = fields[g][i]
            if e.den != ex.SUM_ONE:
                raise NonClosingFrameError("degenerate-frame solve needs polynomial components")
            for m in e.num:
                row = rows.setdefault((i, m.key()), [ex.number(0)] * 4)
                row[g] = row[g] + ex.number(m.coeff)
        be = bracket[i]
        if be.den != ex.SUM_ONE:
            raise NonClosingFrameError("degenerate-frame solve needs polynomial components")
        for m in be.num:
            row = rows.setdefault((i, m.key()), [ex.number(0)] * 4)
            row[3] = row[3] + ex.number(m.coeff)
    # single-unknown rows resolve directly; iterate substitutions to fixpoint
    system = [list(r) for r in rows.values()]
    sol: dict = {}
    for _ in range(4):
        progress = False
        remaining = []
        for row in system:
            active = [g for g in range(3) if g not in sol and not is_zero(row[g])]
            rhs = row[3]
            for g in sol:
                if row[g]:
                    rhs = rhs - row[g] * sol[g]
            if not active:
                if not is_zero(rhs):
                    raise NonClosingFrameError(
                        f"bracket [{a + 1},{b + 1}] lies outside the frame span"
                    )
                continue
            if len(active) == 1:
                g = active[0]
                sol[g] = rhs / row[g]
                progress = True
            else:
                remaining.append(row)
        system = remaining
        if len(sol) == 3:
            break
        if not progress:
            raise NonClosingFrameError(
                f"cannot uniquely resolve bracket [{a + 1},{b + 1}] in the frame span"
            )
    if len(sol) < 3:
        raise DegenerateFrameError(
            f"bracket [{a + 1},{b + 1}] has no unique expansion in the frame"
        )
    return [sol[g] for g in range(3)]


def jacobi_residual(C: StructureConstants):
    """Exact residual array of the Jacobi identity, indexed [a][b][g][s]."""
    res = []
    for a in range(3):
        plane = []
        for b in range(3):
            row = []
            for g in range(3):
                entry = []
                for s in range(3):
                    acc = ex.number(0)
                    for t in range(3):
                        acc = acc + C[a, b, t] * C[g, t, s]
                        acc = acc + C[b, g, t] * C[a, t, s]
                        acc = acc + C[g, a, t] * C[b, t, s]
                    entry.append(acc)
                row.append(tuple(entry))
            plane.append(tuple(row))
        res.append(tuple(plane))
    return tuple(res)


def jacobi_satisfied(C: StructureConstants) -> bool:
    res = jacobi_residual(C)
    return all(
        is_zero(res[a][b][g][s])
        for a in range(3)
        for b in range(3)
        for g in range(3)
        for s in range(3)
    )


# ---------------------------------------------------------------------------
# coframes
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Coframe:
    """Three invariant one-forms; components over (du1, du2, du3)."""

    forms: Tuple[Tuple[Expr, Expr, Expr], ...]

    def component(self, a: int, i: int) -> Expr:
        """Component of form ``a`` (0-based) on du_i (i in 1..3)."""
        return self.forms[a][i - 1]

    def matrix(self):
        return [[self.forms[a][i] for i in range(3)] for a in range(3)]


def lie_derivative_oneform(X: VectorField, form: Sequence[Expr]) -> Tuple[Expr, ...]:
    """(L_X s)_g for a u0-independent spatial one-form."""
    out = []
    for g in range(1, 4):
        acc = ex.number(0)
        for b in range(1, 4):
            acc = acc + X[b] * differentiate(form[g - 1], b)
            acc = acc + form[b - 1] * differentiate(X[b], g)
        out.append(acc)
    return tuple(out)


def coframe_is_invariant(cf: Coframe, fields: Sequence[VectorField]) -> bool:
    for X in fields:
        for form in cf.forms:
            if any(not is_zero(c) for c in lie_derivative_oneform(X, form)):
                return False
    return True


def _is_translation(f: VectorField) -> Optional[int]:
    """Coordinate index j (1..3) when the field is exactly d/du_j."""
    for j in range(1, 4):
        if f[j] == ex.number(1) and all(not f[i] for i in range(4) if i != j):
            return j
    return None


def _closed_form_candidates():
    """Verified invariant coframes for the two frame shapes that have no
    pair of coordinate translations."""
    u1, u3 = ex.coord(1), ex.coord(3)
    em = ex.exp(-u3)
    s1, c1 = ex.sin(u1), ex.cos(u1)
    s3, c3 = ex.sin(u3), ex.cos(u3)
    return [
        Coframe(
            (
                (ex.number(1), u1 * u1 * em, -u1),
                (ex.number(0), em, ex.number(0)),
                (ex.number(0), -2 * u1 * em, ex.number(1)),
            )
        ),
        Coframe(
            (
                (c3, s3 * s1, ex.number(0)),
                (-s3, c3 * s1, ex.number(0)),
                (ex.number(0), c1, ex.number(1)),
            )
        ),
    ]


def invariant_coframe(fields: Sequence[VectorField]) -> Coframe:
    """Invariant coframe of a simply transitive frame on the group slice.

    Frames containing two coordinate translations reduce the invariance
    equations to a constant-coefficient linear system in the remaining
    coordinate, solved exactly.  The two classical frames without such a
    pair are matched against verified closed forms.  Everything returned
    has been checked to satisfy L_X s = 0 for every generator.
    """
    fields = list(fields)
    if len(fields) != 3:
        raise DegenerateFrameError("need exactly three generators")
    for f in fields:
        if not f.is_group_generator():
            raise DegenerateFrameError("generators must have zero u0 component")
    det = _det3(_spatial_matrix(fields))
    if is_zero(det):
        raise DegenerateFrameError("frame is degenerate on the group slice")

    if all(all(c.is_constant() for c in f) for f in fields):
        cf = Coframe(
            tuple(
                tuple(ex.number(1 if i == a else 0) for i in range(3)) for a in range(3)
            )
        )
        if coframe_is_invariant(cf, fields):
            return cf

    translations = {}
    others = []
    for f in fields:
        j = _is_translation(f)
        if j is not None and j not in translations:
            translations[j] = f
        else:
            others.append(f)

    if len(translations) == 2 and len(others) == 1:
        r = next(j for j in range(1, 4) if j not in translations)
        X = others[0]
        xr = X[r]
        if xr.is_constant() and xr:
            grad = [[differentiate(X[b + 1], g + 1) for b in range(3)] for g in range(3)]
            if all(e.is_constant() for row in grad for e in row):
                scale = ex.number(-1) / xr
                N = [[grad[g][b] * scale for b in range(3)] for g in range(3)]
                E = fundamental_matrix(N, r)
                cf = Coframe(tuple(tuple(E[g][a] for g in range(3)) for a in range(3)))
                if not coframe_is_invariant(cf, fields):
                    raise GeometryError("constructed coframe failed the invariance check")
                if is_zero(_det3(cf.matrix())):
                    raise DegenerateFrameError("constructed coframe is degenerate")
                return cf

    for cand in _closed_form_candidates():
        if coframe_is_invariant(cand, fields):
            return cand

    raise GeometryError("no invariant coframe construction available for this frame shape")


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------


class Metric:
    """Symmetric metric; catalog metrics have g00 = e and g0a = 0."""

    def __init__(self, entries, sign: Expr):
        self.entries = tuple(tuple(ex.Expr._coerce(v) for v in row) for row in entries)
        self.sign = ex.Expr._coerce(sign)
        for i in range(4):
            for j in range(i + 1, 4):
                if self.entries[i][j] != self.entries[j][i]:
                    raise GeometryError("metric entries must be symmetric")
        self._det: Optional[Expr] = None
        self._ddet: Optional[Tuple[Expr, ...]] = None

    def __getitem__(self, idx):
        i, j = idx
        return self.entries[i][j]

    def __eq__(self, other):
        return isinstance(other, Metric) and self.entries == other.entries

    def determinant(self) -> Expr:
        if self._det is None:
            g = self.entries
            if all(not g[0][a] for a in range(1, 4)):
                spatial = [[g[i][j] for j in range(1, 4)] for i in range(1, 4)]
                self._det = g[0][0] * _det3(spatial)
            else:
                self._det = _det4(g)
        return self._det

    def determinant_gradient(self) -> Tuple[Expr, ...]:
        if self._ddet is None:
            det = self.determinant()
            self._ddet = tuple(differentiate(det, i) for i in range(4))
        return self._ddet


DEFAULT_SPATIAL_FUNCTIONS = (
    ("a11", "a12", "a13"),
    ("a12", "a22", "a23"),
    ("a13", "a23", "a33"),
)


def metric_from_coframe(cf: Coframe, sign: Expr = None, names=DEFAULT_SPATIAL_FUNCTIONS) -> Metric:
    """Invariant metric a_st(u0) s^s s^t + e (du0)^2 from a coframe."""
    if sign is None:
        sign = ex.param("e")
    a = [[ex.func(names[s][t]) for t in range(3)] for s in range(3)]
    entries = [[ex.number(0)] * 4 for _ in range(4)]
    entries[0][0] = ex.Expr._coerce(sign)
    for i in range(1, 4):
        for j in range(i, 4):
            acc = ex.number(0)
            for s in range(3):
                for t in range(3):
                    acc = acc + a[s][t] * cf.component(s, i) * cf.component(t, j)
            entries[i][j] = acc
            entries[j][i] = acc
    return Metric(entries, sign)


def killing_residual(g: Metric, X: VectorField):
    """(L_X g)_ij as a symmetric 4x4 array of canonical expressions."""
    res = [[ex.number(0)] * 4 for _ in range(4)]
    for i in range(4):
        for j in range(i, 4):
            acc = ex.number(0)
            for k in range(4):
                if X[k]:
                    acc = acc + X[k] * differentiate(g[i, j], k)
                acc = acc + g[k, j] * differentiate(X[k], i)
                acc = acc + g[i, k] * differentiate(X[k], j)
            res[i][j] = acc
            res[j][i] = acc
    return tuple(tuple(row) for row in res)


def killing_satisfied(g: Metric, X: VectorField) -> bool:
    res = killing_residual(g, X)
    return all(is_zero(res[i][j]) for i in range(4) for j in range(i, 4))


@dataclass
class MetricSample:
    """Numeric snapshot of a metric at one point."""

    point: Assignment
    g: np.ndarray
    ginv: np.ndarray
    chi_grad: np.ndarray


def metric_sample(metric: Metric, point: Assignment) -> MetricSample:
    """Numeric metric, inverse, and the gradient of chi = (1/2) ln|det g|.

    The determinant is differentiated exactly; only the final ratio is
    evaluated in floating point.
    """
    g = np.empty((4, 4))
    for i in range(4):
        for j in range(4):
            g[i, j] = ex.evaluate(metric[i, j], point)
    det_val = ex.evaluate(metric.determinant(), point)
    if abs(det_val) < 1e-12:
        raise SingularMetricError(f"metric is singular at {point.coords}")
    ginv = np.linalg.inv(g)
    ddet = metric.determinant_gradient()
    chi = np.array([0.5 * ex.evaluate(ddet[i], point) / det_val for i in range(4)])
    return MetricSample(point, g, ginv, chi)
