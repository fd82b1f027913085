"""Exact symbolic expressions for homogeneous-spacetime verification.

The engine works on a deliberately closed class: finite sums of monomials,
each a rational coefficient times a product of

* integer powers of the coordinates ``u0..u3``,
* integer powers of named parameters (``k``, ``n``, ``eps``, ``q``, ``alpha``, ...),
* integer powers of sines/cosines of constant angles (``sin(alpha)`` and
  ``cos(alpha)`` are kept as paired symbols subject to ``sin^2 + cos^2 = 1``),
* integer powers of abstract functions of ``u0`` tagged with a derivative
  order (``alpha0``, ``alpha0'``, ``alpha0''`` are independent symbols),
* one exponential of a linear form in the coordinates,
* sines/cosines of linear forms in the coordinates.

Products of trigonometric factors are rewritten into sums (product-to-sum),
so a canonical monomial carries at most one positive trigonometric power.
Because of that, structural equality of canonical forms is a sound equality
test, and an expression is identically zero exactly when its canonical sum
is empty (after clearing single-monomial denominators).

Quotients are kept as ``numerator / denominator`` pairs.  A denominator that
canonicalizes to a single monomial is folded into the numerator as negative
powers; anything else stays as a guard that must be nonzero when evaluating.
"""

from __future__ import annotations

import math
from fractions import Fraction
from typing import Callable, Iterable, Mapping, NamedTuple, Optional, Sequence, Union

__all__ = [
    "Expr",
    "Assignment",
    "FuncSymbol",
    "ExprError",
    "ParseError",
    "UnsupportedExpressionError",
    "EvaluationError",
    "InternalInconsistencyError",
    "parse",
    "differentiate",
    "canonicalize",
    "is_zero",
    "evaluate",
    "coord",
    "param",
    "func",
    "number",
    "exp",
    "sin",
    "cos",
    "substitute",
    "free_symbols",
    "random_assignment",
    "compile_numeric",
]

NCOORDS = 4
COORD_NAMES = ("u0", "u1", "u2", "u3")

Rat = Fraction
_ZERO = Fraction(0)
_ONE = Fraction(1)
_HALF = Fraction(1, 2)


class ExprError(Exception):
    """Base class for expression-engine errors."""


class ParseError(ExprError):
    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (at position {position})")
        self.position = position


class UnsupportedExpressionError(ExprError):
    """The operation would leave the supported expression class."""


class EvaluationError(ExprError):
    """Unbound symbol or zero denominator at the evaluation point."""


class InternalInconsistencyError(ExprError):
    """Symbolic and numeric zero-verdicts disagree: canonicalization defect."""


class FuncSymbol(NamedTuple):
    """Abstract function of u0; distinct derivative orders are independent."""

    name: str
    order: int

    def __str__(self) -> str:
        return self.name + "'" * self.order


# ---------------------------------------------------------------------------
# sort keys: every canonical container is a sorted tuple, so all factor keys
# need a total order built from plain (int, str) tuples.
# ---------------------------------------------------------------------------


def _skey(obj):
    if isinstance(obj, Fraction):
        return (0, "", obj.numerator, obj.denominator)
    if isinstance(obj, int):
        return (0, "", obj, 1)
    if isinstance(obj, str):
        return (1, obj, 0, 0)
    if isinstance(obj, tuple):
        return (2, "", 0, 0) + tuple(_skey(x) for x in obj)
    raise TypeError(f"unsortable {obj!r}")


def _sorted(items):
    return tuple(sorted(items, key=_skey))


# ---------------------------------------------------------------------------
# constant polynomials: exact scalars built from parameters and constant-angle
# sines/cosines.  Used for linear-form coefficients and structure constants.
#
# cmono: sorted tuple of (key, exponent); key is ('p', name) or
#        ('tc', 'sin'|'cos', base, Fraction multiple)  with base '' meaning a
#        pure rational angle.
# cpoly: sorted tuple of (cmono, Fraction coefficient).
# ---------------------------------------------------------------------------

CP_ZERO = ()
CP_ONE = (((), _ONE),)


def _tc_reduce(powdict):
    """Rewrite cos(x)^m (m >= 2) as (1 - sin(x)^2)^(m//2) * cos(x)^(m%2).

    Returns a list of (Fraction, powdict) terms.  Works on any factor dict;
    only constant-angle cosine keys with exponent >= 2 are touched.
    """
    target = None
    for key, e in powdict.items():
        if key[0] == "tc" and key[1] == "cos" and e >= 2:
            target = key
            break
    if target is None:
        return [(_ONE, powdict)]
    e = powdict[target]
    half, rem = divmod(e, 2)
    sin_key = ("tc", "sin", target[2], target[3])
    out = []
    # (1 - s^2)^half expanded binomially
    for j in range(half + 1):
        coeff = Fraction(math.comb(half, j)) * (_ONE if j % 2 == 0 else -_ONE)
        d = dict(powdict)
        if rem:
            d[target] = rem
        else:
            del d[target]
        if j:
            e2 = d.get(sin_key, 0) + 2 * j
            if e2:
                d[sin_key] = e2
            elif sin_key in d:
                del d[sin_key]
        out.extend((coeff * c2, d2) for c2, d2 in _tc_reduce(d))
    return out


def _cp_norm(terms: Iterable) -> tuple:
    acc = {}
    for cmono, coeff in terms:
        if coeff:
            acc[cmono] = acc.get(cmono, _ZERO) + coeff
    return _sorted((m, c) for m, c in acc.items() if c)


def cp_add(a, b):
    return _cp_norm(list(a) + list(b))


def cp_neg(a):
    return tuple((m, -c) for m, c in a)


def cp_scale(a, r: Fraction):
    if not r:
        return CP_ZERO
    return _cp_norm((m, c * r) for m, c in a)


def cp_mul(a, b):
    terms = []
    for ma, ca in a:
        for mb, cb in b:
            d = dict(ma)
            for key, e in mb:
                e2 = d.get(key, 0) + e
                if e2:
                    d[key] = e2
                else:
                    del d[key]
            for extra, d2 in _tc_reduce(d):
                terms.append((_sorted(d2.items()), ca * cb * extra))
    return _cp_norm(terms)


def cp_from_rat(r: Fraction):
    return (((), Fraction(r)),) if r else CP_ZERO


def cp_rational(a) -> Optional[Fraction]:
    """The value of a cpoly if it is a plain rational, else None."""
    if not a:
        return _ZERO
    if len(a) == 1 and a[0][0] == ():
        return a[0][1]
    return None


def _cp_lead_sign(a) -> int:
    return 1 if a[0][1] > 0 else -1


def _cp_eval(a, binding: Callable[[tuple], float]) -> float:
    total = 0.0
    for cmono, coeff in a:
        v = float(coeff)
        for key, e in cmono:
            v *= binding(key) ** e
        total += v
    return total


def _cp_str(a) -> str:
    if not a:
        return "0"
    parts = []
    for cmono, coeff in a:
        factors = [_factor_str(key, e) for key, e in cmono]
        if coeff == 1 and factors:
            s = "*".join(factors)
        elif coeff == -1 and factors:
            s = "-" + "*".join(factors)
        else:
            s = _rat_str(coeff) + ("*" + "*".join(factors) if factors else "")
        parts.append(s)
    out = parts[0]
    for p in parts[1:]:
        out += " - " + p[1:] if p.startswith("-") else " + " + p
    return out


# ---------------------------------------------------------------------------
# linear forms in the coordinates, with cpoly coefficients and no constant
# part (constant pieces of trig arguments are split off at construction).
# ---------------------------------------------------------------------------

LF_ZERO = (CP_ZERO,) * NCOORDS


def lf_add(a, b):
    return tuple(cp_add(x, y) for x, y in zip(a, b))


def lf_neg(a):
    return tuple(cp_neg(x) for x in a)


def lf_scale(a, r: Fraction):
    return tuple(cp_scale(x, r) for x in a)


def lf_is_zero(a) -> bool:
    return all(not x for x in a)


def _lf_norm_sign(a):
    """Canonical sign for trig arguments: returns (sign, normalized form)."""
    for cp in a:
        if cp:
            if _cp_lead_sign(cp) < 0:
                return -1, lf_neg(a)
            return 1, a
    return 1, a


def _lf_str(a) -> str:
    parts = []
    for i, cp in enumerate(a):
        if not cp:
            continue
        r = cp_rational(cp)
        if r == 1:
            parts.append(COORD_NAMES[i])
        elif r == -1:
            parts.append("-" + COORD_NAMES[i])
        elif r is not None:
            parts.append(_rat_str(r) + "*" + COORD_NAMES[i])
        elif len(cp) == 1:
            parts.append(_cp_str(cp) + "*" + COORD_NAMES[i])
        else:
            parts.append("(" + _cp_str(cp) + ")*" + COORD_NAMES[i])
    if not parts:
        return "0"
    out = parts[0]
    for p in parts[1:]:
        out += " - " + p[1:] if p.startswith("-") else " + " + p
    return out


# ---------------------------------------------------------------------------
# monomials
#
# pows: sorted tuple of (key, exponent) with key one of
#       ('u', i) | ('p', name) | ('tc', fn, base, Fraction) | ('f', name, order)
# expl: linear form, the argument of a single exponential factor
# trig: sorted tuple of (fn, linform, exponent); at most one positive exponent
#       survives normalization and it is always 1.
# ---------------------------------------------------------------------------


class Mono(NamedTuple):
    coeff: Fraction
    pows: tuple
    expl: tuple
    trig: tuple

    def key(self):
        return (self.pows, self.expl, self.trig)


MONO_ONE = Mono(_ONE, (), LF_ZERO, ())


def _mono_sort_key(m: Mono):
    return _skey((m.pows, m.expl, m.trig))


def _expand_raw(coeff, powdict, expl, trigdict):
    """Normalize one raw monomial into canonical monomials (list)."""
    if not coeff:
        return []
    powdict = {k: e for k, e in powdict.items() if e}
    out = []
    for extra, d in _tc_reduce(powdict):
        out.extend(_expand_trig(coeff * extra, d, expl, trigdict))
    return out


def _expand_trig(coeff, powdict, expl, trigdict):
    trigdict = {k: e for k, e in trigdict.items() if e}
    positives = [k for k, e in trigdict.items() if e > 0]
    mult = sum(trigdict[k] for k in positives)
    if mult <= 1:
        return [Mono(coeff, _sorted(powdict.items()), expl, _sorted((fn, lf, e) for (fn, lf), e in trigdict.items()))]
    # pick two positive units and rewrite their product as a sum
    ka = positives[0]
    kb = ka if trigdict[ka] >= 2 else positives[1]
    base = dict(trigdict)
    base[ka] -= 1
    base[kb] -= 1
    (fa, la), (fb, lb) = ka, kb
    plus = lf_add(la, lb)
    minus = lf_add(la, lf_neg(lb))
    out = []
    if fa == "sin" and fb == "sin":
        combos = [(_HALF, "cos", minus), (-_HALF, "cos", plus)]
    elif fa == "cos" and fb == "cos":
        combos = [(_HALF, "cos", minus), (_HALF, "cos", plus)]
    elif fa == "sin":
        combos = [(_HALF, "sin", plus), (_HALF, "sin", minus)]
    else:  # cos * sin
        combos = [(_HALF, "sin", plus), (-_HALF, "sin", minus)]
    for c, fn, lf in combos:
        s, lf = _lf_norm_sign(lf)
        if lf_is_zero(lf):
            if fn == "sin":
                continue
            out.extend(_expand_trig(coeff * c, powdict, expl, dict(base)))
            continue
        if s < 0 and fn == "sin":
            c = -c
        d = dict(base)
        d[(fn, lf)] = d.get((fn, lf), 0) + 1
        out.extend(_expand_trig(coeff * c, powdict, expl, d))
    return out


def _combine(monos: Iterable[Mono]):
    acc = {}
    for m in monos:
        k = m.key()
        acc[k] = acc.get(k, _ZERO) + m.coeff
    out = [Mono(c, *k) for k, c in acc.items() if c]
    out.sort(key=_mono_sort_key)
    return tuple(out)


def _mono_mul(a: Mono, b: Mono):
    d = dict(a.pows)
    for key, e in b.pows:
        e2 = d.get(key, 0) + e
        if e2:
            d[key] = e2
        else:
            del d[key]
    trig = {}
    for fn, lf, e in a.trig + b.trig:
        k = (fn, lf)
        trig[k] = trig.get(k, 0) + e
    return _expand_raw(a.coeff * b.coeff, d, lf_add(a.expl, b.expl), trig)


def _mono_inv(m: Mono) -> Mono:
    pows = tuple((k, -e) for k, e in m.pows)
    trig = tuple((fn, lf, -e) for fn, lf, e in m.trig)
    return Mono(_ONE / m.coeff, pows, lf_neg(m.expl), trig)


def _sum_mul(xs, ys):
    out = []
    for a in xs:
        for b in ys:
            out.extend(_mono_mul(a, b))
    return _combine(out)


SUM_ONE = (MONO_ONE,)


# ---------------------------------------------------------------------------
# Expr
# ---------------------------------------------------------------------------

Number = Union[int, Fraction]


class Expr:
    """Immutable canonical expression: a sum of monomials over a denominator.

    All arithmetic keeps the canonical form, so ``canonicalize`` is the
    identity on ``Expr`` values and structural equality is meaningful.
    """

    __slots__ = ("num", "den", "_hash")

    def __init__(self, num, den=SUM_ONE):
        object.__setattr__(self, "num", num)
        object.__setattr__(self, "den", den)
        object.__setattr__(self, "_hash", None)

    def __setattr__(self, *_):
        raise AttributeError("Expr is immutable")

    # -- construction helpers ------------------------------------------------

    @staticmethod
    def _make(num, den) -> "Expr":
        if not den:
            raise ZeroDivisionError("denominator is identically zero")
        if not num:
            return Expr((), SUM_ONE)
        if len(den) == 1:
            inv = _mono_inv(den[0])
            num = _combine(m2 for m in num for m2 in _mono_mul(m, inv))
            return Expr(num, SUM_ONE)
        lead = den[0].coeff
        if lead != 1:
            scale = Mono(_ONE / lead, (), LF_ZERO, ())
            num = _combine(m2 for m in num for m2 in _mono_mul(m, scale))
            den = _combine(m2 for m in den for m2 in _mono_mul(m, scale))
        return Expr(num, den)

    @staticmethod
    def from_number(value: Number) -> "Expr":
        r = Fraction(value)
        if not r:
            return Expr(())
        return Expr((Mono(r, (), LF_ZERO, ()),))

    # -- basic protocol -------------------------------------------------------

    def __eq__(self, other) -> bool:
        if not isinstance(other, Expr):
            if isinstance(other, (int, Fraction)):
                other = Expr.from_number(other)
            else:
                return NotImplemented
        return self.num == other.num and self.den == other.den

    def __hash__(self):
        h = self._hash
        if h is None:
            h = hash((self.num, self.den))
            object.__setattr__(self, "_hash", h)
        return h

    def __repr__(self) -> str:
        return f"Expr({self})"

    def __str__(self) -> str:
        return _expr_str(self)

    def __bool__(self) -> bool:
        return bool(self.num)

    # -- arithmetic -----------------------------------------------------------

    @staticmethod
    def _coerce(value) -> "Expr":
        if isinstance(value, Expr):
            return value
        if isinstance(value, (int, Fraction)):
            return Expr.from_number(value)
        raise TypeError(f"cannot use {type(value).__name__} in Expr arithmetic")

    def __add__(self, other):
        other = Expr._coerce(other)
        if self.den == other.den:
            return Expr._make(_combine(self.num + other.num), self.den)
        num = _combine(
            list(_sum_mul(self.num, other.den)) + list(_sum_mul(other.num, self.den))
        )
        return Expr._make(num, _sum_mul(self.den, other.den))

    __radd__ = __add__

    def __neg__(self):
        return Expr(tuple(Mono(-m.coeff, m.pows, m.expl, m.trig) for m in self.num), self.den)

    def __sub__(self, other):
        return self + (-Expr._coerce(other))

    def __rsub__(self, other):
        return (-self) + Expr._coerce(other)

    def __mul__(self, other):
        other = Expr._coerce(other)
        return Expr._make(_sum_mul(self.num, other.num), _sum_mul(self.den, other.den))

    __rmul__ = __mul__

    def reciprocal(self) -> "Expr":
        if not self.num:
            raise ZeroDivisionError("division by the zero expression")
        return Expr._make(self.den, self.num)

    def __truediv__(self, other):
        return self * Expr._coerce(other).reciprocal()

    def __rtruediv__(self, other):
        return Expr._coerce(other) * self.reciprocal()

    def __pow__(self, n: int):
        if not isinstance(n, int):
            raise UnsupportedExpressionError("only integer powers are supported")
        if n < 0:
            return self.reciprocal() ** (-n)
        out = Expr.from_number(1)
        base = self
        while n:
            if n & 1:
                out = out * base
            base = base * base if n > 1 else base
            n >>= 1
        return out

    # -- inspection -----------------------------------------------------------

    def as_rational(self) -> Optional[Fraction]:
        """The exact rational value, or None when not a plain number."""
        if self.den != SUM_ONE:
            return None
        if not self.num:
            return _ZERO
        if len(self.num) == 1 and self.num[0].key() == ((), LF_ZERO, ()):
            return self.num[0].coeff
        return None

    def is_constant(self) -> bool:
        """True when no coordinate, function, exp or trig factor occurs."""
        for part in (self.num, self.den):
            for m in part:
                if m.trig or not lf_is_zero(m.expl):
                    return False
                if any(k[0] in ("u", "f") for k, _ in m.pows):
                    return False
        return True


# ---------------------------------------------------------------------------
# symbol constructors
# ---------------------------------------------------------------------------


def number(value: Number) -> Expr:
    return Expr.from_number(value)


ZERO = number(0)
ONE = number(1)


def coord(i: int) -> Expr:
    if not 0 <= i < NCOORDS:
        raise ValueError(f"coordinate index out of range: {i}")
    return Expr((Mono(_ONE, ((("u", i), 1),), LF_ZERO, ()),))


def param(name: str) -> Expr:
    return Expr((Mono(_ONE, ((("p", name), 1),), LF_ZERO, ()),))


def func(name: str, order: int = 0) -> Expr:
    if order < 0:
        raise ValueError("derivative order must be non-negative")
    return Expr((Mono(_ONE, ((("f", name, order), 1),), LF_ZERO, ()),))


def _linear_parts(e: Expr):
    """Split an expression into (linear form, constant pieces).

    Accepts sums of ``c * u_i`` terms with constant-factor coefficients plus
    purely constant terms.  The constant part is returned as a list of
    (Fraction multiple, base name or '') pieces suitable for angle addition.
    Raises UnsupportedExpressionError otherwise.
    """
    if e.den != SUM_ONE:
        raise UnsupportedExpressionError("argument must be polynomial, not a quotient")
    lf = list(LF_ZERO)
    const_acc = {}
    for m in e.num:
        if m.trig or not lf_is_zero(m.expl):
            raise UnsupportedExpressionError("argument must be linear in the coordinates")
        coords = [(k, ex) for k, ex in m.pows if k[0] == "u"]
        others = [(k, ex) for k, ex in m.pows if k[0] != "u"]
        if any(k[0] == "f" for k, _ in others):
            raise UnsupportedExpressionError("abstract functions cannot appear in exp/sin/cos arguments")
        if len(coords) > 1 or (coords and coords[0][1] != 1):
            raise UnsupportedExpressionError("argument must be linear in the coordinates")
        cmono = _sorted(others)
        if coords:
            i = coords[0][0][1]
            lf[i] = cp_add(lf[i], ((cmono, m.coeff),))
        else:
            const_acc[cmono] = const_acc.get(cmono, _ZERO) + m.coeff
    pieces = []
    for cmono, r in const_acc.items():
        if not r:
            continue
        if cmono == ():
            pieces.append((r, ""))
        elif len(cmono) == 1 and cmono[0][0][0] == "p" and cmono[0][1] == 1:
            pieces.append((r, cmono[0][0][1]))
        else:
            raise UnsupportedExpressionError(
                "constant part of a trig/exp argument must be rational or a rational multiple of a single parameter"
            )
    return tuple(lf), pieces


def exp(e: Expr) -> Expr:
    lf, pieces = _linear_parts(Expr._coerce(e))
    if pieces:
        raise UnsupportedExpressionError("exp argument must have no constant part")
    return Expr((Mono(_ONE, (), lf, ()),))


def _tc_factor(fn: str, r: Fraction, base: str) -> Expr:
    """sin/cos of the constant angle r*base, reduced for integer multiples."""
    if r < 0:
        inner = _tc_factor(fn, -r, base)
        return -inner if fn == "sin" else inner
    if not r:
        return ZERO if fn == "sin" else ONE
    if base and r.denominator == 1 and r > 1:
        # multiple-angle expansion keeps all integer multiples comparable
        n = int(r)
        s1 = _tc_factor("sin", _ONE, base)
        c1 = _tc_factor("cos", _ONE, base)
        s_prev, c_prev = s1, c1
        for _ in range(n - 1):
            s_prev, c_prev = s_prev * c1 + c_prev * s1, c_prev * c1 - s_prev * s1
        return s_prev if fn == "sin" else c_prev
    return Expr((Mono(_ONE, ((("tc", fn, base, r), 1),), LF_ZERO, ()),))


def _trig(fn: str, e: Expr) -> Expr:
    lf, pieces = _linear_parts(Expr._coerce(e))
    sign, lf = _lf_norm_sign(lf)
    # accumulate sin/cos of the constant part by angle addition
    s_acc, c_acc = ZERO, ONE
    for r, base in pieces:
        s_p = _tc_factor("sin", r, base)
        c_p = _tc_factor("cos", r, base)
        s_acc, c_acc = s_acc * c_p + c_acc * s_p, c_acc * c_p - s_acc * s_p
    if lf_is_zero(lf):
        return s_acc if fn == "sin" else c_acc
    sin_l = Expr((Mono(_ONE if sign > 0 else -_ONE, (), LF_ZERO, (("sin", lf, 1),)),))
    cos_l = Expr((Mono(_ONE, (), LF_ZERO, (("cos", lf, 1),)),))
    if fn == "sin":
        return s_acc * cos_l + c_acc * sin_l
    return c_acc * cos_l - s_acc * sin_l


def sin(e: Expr) -> Expr:
    return _trig("sin", e)


def cos(e: Expr) -> Expr:
    return _trig("cos", e)


# ---------------------------------------------------------------------------
# differentiation
# ---------------------------------------------------------------------------


def _mono_diff(m: Mono, i: int):
    """Exact partial derivative of one monomial; returns raw monomial list."""
    out = []
    pows = dict(m.pows)
    base_trig = {(fn, lf): e for fn, lf, e in m.trig}
    for key, e in m.pows:
        if key[0] == "u" and key[1] == i:
            d = dict(pows)
            d[key] = e - 1
            out.extend(_expand_raw(m.coeff * e, d, m.expl, dict(base_trig)))
        elif key[0] == "f" and i == 0:
            up = ("f", key[1], key[2] + 1)
            d = dict(pows)
            d[key] = e - 1
            d[up] = d.get(up, 0) + 1
            out.extend(_expand_raw(m.coeff * e, d, m.expl, dict(base_trig)))
    ci = m.expl[i]
    if ci:
        for cmono, r in ci:
            d = dict(pows)
            for key, e in cmono:
                d[key] = d.get(key, 0) + e
            out.extend(_expand_raw(m.coeff * r, d, m.expl, dict(base_trig)))
    for fn, lf, e in m.trig:
        ci = lf[i]
        if not ci:
            continue
        other = "cos" if fn == "sin" else "sin"
        sgn = _ONE if fn == "sin" else -_ONE
        for cmono, r in ci:
            d = dict(pows)
            for key, ex in cmono:
                d[key] = d.get(key, 0) + ex
            trig = dict(base_trig)
            trig[(fn, lf)] -= 1
            trig[(other, lf)] = trig.get((other, lf), 0) + 1
            out.extend(_expand_raw(m.coeff * e * sgn * r, d, m.expl, trig))
    return out


def differentiate(e: Expr, i: int) -> Expr:
    """Exact partial derivative with respect to coordinate ``u_i``."""
    if not 0 <= i < NCOORDS:
        raise ValueError(f"coordinate index out of range: {i}")
    dnum = Expr(_combine(x for m in e.num for x in _mono_diff(m, i)))
    if e.den == SUM_ONE:
        return dnum
    dden = Expr(_combine(x for m in e.den for x in _mono_diff(m, i)))
    den = Expr(e.den)
    return (dnum * den - Expr(e.num) * dden) / (den * den)


def canonicalize(e: Expr) -> Expr:
    """Identity on Expr values: every Expr is kept in canonical form."""
    return Expr._coerce(e)


# ---------------------------------------------------------------------------
# zero-testing and evaluation
# ---------------------------------------------------------------------------


def _clear_negative_powers(num) -> tuple:
    """Multiply through by enough positive powers to clear negative exponents."""
    need_pows: dict = {}
    need_trig: dict = {}
    for m in num:
        for key, e in m.pows:
            if e < 0:
                need_pows[key] = max(need_pows.get(key, 0), -e)
        for fn, lf, e in m.trig:
            if e < 0:
                need_trig[(fn, lf)] = max(need_trig.get((fn, lf), 0), -e)
    if not need_pows and not need_trig:
        return num
    out = list(num)
    for key, e in need_pows.items():
        factor = Mono(_ONE, ((key, e),), LF_ZERO, ())
        out = [x for m in out for x in _mono_mul(m, factor)]
    for (fn, lf), e in need_trig.items():
        factor = Mono(_ONE, (), LF_ZERO, ((fn, lf, e),))
        out = [x for m in out for x in _mono_mul(m, factor)]
    return _combine(out)


class Assignment:
    """Numeric bindings for coordinates, parameters and function symbols."""

    def __init__(
        self,
        coords: Sequence[float] = (0.0, 0.0, 0.0, 0.0),
        params: Optional[Mapping[str, float]] = None,
        funcs: Optional[Mapping] = None,
    ):
        if len(coords) != NCOORDS:
            raise ValueError("need exactly four coordinate values")
        self.coords = tuple(float(c) for c in coords)
        self.params = dict(params or {})
        self.funcs = {}
        for key, v in (funcs or {}).items():
            if isinstance(key, FuncSymbol):
                self.funcs[(key.name, key.order)] = float(v)
            else:
                name, order = key
                self.funcs[(name, order)] = float(v)

    def _factor(self, key) -> float:
        kind = key[0]
        if kind == "u":
            return self.coords[key[1]]
        if kind == "p":
            try:
                return self.params[key[1]]
            except KeyError:
                raise EvaluationError(f"unbound parameter {key[1]!r}") from None
        if kind == "tc":
            _, fn, base, r = key
            angle = float(r) * (self._factor(("p", base)) if base else 1.0)
            return math.sin(angle) if fn == "sin" else math.cos(angle)
        if kind == "f":
            try:
                return self.funcs[(key[1], key[2])]
            except KeyError:
                raise EvaluationError(
                    f"unbound function symbol {key[1]}{'′' * key[2]}"
                ) from None
        raise EvaluationError(f"unknown factor {key!r}")

    def __repr__(self):
        return f"Assignment(coords={self.coords}, params={self.params}, funcs={self.funcs})"


def _lf_eval(lf, a: Assignment) -> float:
    return sum(_cp_eval(cp, a._factor) * a.coords[i] for i, cp in enumerate(lf) if cp)


def _mono_eval(m: Mono, a: Assignment) -> float:
    v = float(m.coeff)
    for key, e in m.pows:
        v *= a._factor(key) ** e
    if not lf_is_zero(m.expl):
        v *= math.exp(_lf_eval(m.expl, a))
    for fn, lf, e in m.trig:
        x = _lf_eval(lf, a)
        t = math.sin(x) if fn == "sin" else math.cos(x)
        v *= t**e
    return v


def _sum_eval(monos, a: Assignment) -> float:
    return math.fsum(_mono_eval(m, a) for m in monos)


def evaluate(e: Expr, a: Assignment) -> float:
    """Floating-point value of ``e`` under the assignment."""
    try:
        num = _sum_eval(e.num, a)
    except (ZeroDivisionError, OverflowError) as err:
        raise EvaluationError(str(err)) from None
    if e.den == SUM_ONE:
        return num
    den = _sum_eval(e.den, a)
    if abs(den) < 1e-300:
        raise EvaluationError("denominator vanishes at the evaluation point")
    return num / den


def free_symbols(e: Expr):
    """All factor keys appearing in the expression (params, funcs, tc bases)."""
    coords, params, funcs = set(), set(), set()
    def visit_lf(lf):
        for i, cp in enumerate(lf):
            if cp:
                coords.add(i)
                for cmono, _ in cp:
                    for key, _e in cmono:
                        if key[0] == "p":
                            params.add(key[1])
                        elif key[0] == "tc" and key[2]:
                            params.add(key[2])
    for part in (e.num, e.den):
        for m in part:
            for key, _ex in m.pows:
                if key[0] == "u":
                    coords.add(key[1])
                elif key[0] == "p":
                    params.add(key[1])
                elif key[0] == "tc" and key[2]:
                    params.add(key[2])
                elif key[0] == "f":
                    funcs.add(FuncSymbol(key[1], key[2]))
            visit_lf(m.expl)
            for _fn, lf, _ex in m.trig:
                visit_lf(lf)
    return {"coords": coords, "params": params, "funcs": funcs}


def random_assignment(
    exprs: Iterable[Expr],
    rng,
    coord_range=(-1.0, 1.0),
    value_range=(-2.0, 2.0),
    min_abs=0.15,
) -> Assignment:
    """Generic random binding for every free symbol of the expressions.

    Nonzero magnitudes are enforced on parameters and function values so that
    denominators and cancellation checks stay well-conditioned.
    """
    params, funcs = set(), set()
    for e in exprs:
        sym = free_symbols(e)
        params |= sym["params"]
        funcs |= sym["funcs"]

    def draw():
        while True:
            v = rng.uniform(*value_range)
            if abs(v) >= min_abs:
                return v

    coords = [rng.uniform(*coord_range) for _ in range(NCOORDS)]
    return Assignment(
        coords,
        {p: draw() for p in params},
        {f: draw() for f in funcs},
    )


def is_zero(e: Expr, rng=None, samples: int = 8) -> bool:
    """True iff the canonical form is the empty sum (after clearing
    single-factor denominators), cross-checked numerically at random points.

    A disagreement between the symbolic and numeric verdicts raises
    InternalInconsistencyError: it would mean the canonical form is broken.
    """
    e = Expr._coerce(e)
    cleared = _clear_negative_powers(e.num)
    verdict = not cleared
    if rng is None:
        import random as _random

        rng = _random.Random(0xC0FFEE)
    checked = 0
    tries = 0
    while checked < samples and tries < samples * 20:
        tries += 1
        a = random_assignment([e], rng)
        try:
            scale = math.fsum(abs(_mono_eval(m, a)) for m in e.num) + 1.0
            value = _sum_eval(e.num, a)
            if e.den != SUM_ONE:
                den = _sum_eval(e.den, a)
                if abs(den) < 1e-6:
                    continue
        except (EvaluationError, OverflowError, ZeroDivisionError):
            continue
        checked += 1
        if verdict and abs(value) > 1e-8 * scale:
            raise InternalInconsistencyError(
                f"symbolically zero but evaluates to {value!r} at {a!r}"
            )
        if not verdict and abs(value) > 1e-12 * scale:
            return False
    if not verdict and checked == samples and len(e.num) > 1:
        # a multi-term sum that cancels numerically at every sample point
        # means the canonical form failed to collapse an identity
        raise InternalInconsistencyError(
            "canonical form is nonempty but vanishes at all sample points"
        )
    return verdict


# ---------------------------------------------------------------------------
# substitution
# ---------------------------------------------------------------------------


def substitute(
    e: Expr,
    coords: Optional[Mapping[int, Union[Expr, Number]]] = None,
    funcs: Optional[Mapping[str, Expr]] = None,
    params: Optional[Mapping[str, Union[Expr, Number]]] = None,
) -> Expr:
    """Symbolic substitution, rebuilding the expression through the algebra.

    ``funcs`` maps base names to replacement expressions in ``u0``; a symbol
    of derivative order k is replaced by the k-th derivative of the
    replacement.  Substituted coordinate values inside exp/sin/cos arguments
    must keep the argument in the supported linear class.
    """
    coords = {i: Expr._coerce(v) for i, v in (coords or {}).items()}
    funcs = dict(funcs or {})
    params = {k: Expr._coerce(v) for k, v in (params or {}).items()}

    func_cache: dict = {}

    def func_value(name, order):
        if (name, order) not in func_cache:
            if order == 0:
                func_cache[(name, 0)] = Expr._coerce(funcs[name])
            else:
                func_cache[(name, order)] = differentiate(func_value(name, order - 1), 0)
        return func_cache[(name, order)]

    def rebuild_cp(cp) -> Expr:
        out = ZERO
        for cmono, r in cp:
            term = number(r)
            for key, ex in cmono:
                term = term * rebuild_key(key) ** ex
            out = out + term
        return out

    def rebuild_lf(lf) -> Expr:
        out = ZERO
        for i, cp in enumerate(lf):
            if cp:
                base = coords.get(i, coord(i))
                out = out + rebuild_cp(cp) * base
        return out

    def rebuild_key(key) -> Expr:
        kind = key[0]
        if kind == "u":
            return coords.get(key[1], coord(key[1]))
        if kind == "p":
            return params.get(key[1], param(key[1]))
        if kind == "tc":
            _, fn, base, r = key
            if base in params or base == "":
                arg = number(r) * (params.get(base) if base else ONE)
            else:
                arg = number(r) * param(base)
            return _trig(fn, arg)
        if kind == "f":
            _, name, order = key
            if name in funcs:
                return func_value(name, order)
            return func(name, order)
        raise ExprError(f"unknown factor {key!r}")

    def rebuild_sum(monos) -> Expr:
        out = ZERO
        for m in monos:
            term = number(m.coeff)
            for key, ex in m.pows:
                term = term * rebuild_key(key) ** ex
            if not lf_is_zero(m.expl):
                term = term * exp(rebuild_lf(m.expl))
            for fn, lf, ex in m.trig:
                term = term * _trig(fn, rebuild_lf(lf)) ** ex
            out = out + term
        return out

    num = rebuild_sum(e.num)
    if e.den == SUM_ONE:
        return num
    return num / rebuild_sum(e.den)


# ---------------------------------------------------------------------------
# numeric compilation (used heavily by the trajectory integrator)
# ---------------------------------------------------------------------------


def compile_numeric(
    exprs: Sequence[Expr],
    param_values: Optional[Mapping[str, float]] = None,
    symbols: Sequence = (),
) -> Callable[..., list]:
    """Compile expressions to one fast ``f(u0,u1,u2,u3, *symbols) -> [values]``.

    ``param_values`` are folded in as floating constants.  ``symbols`` is an
    ordered sequence of remaining free symbols -- parameter names, FuncSymbol
    instances, or raw factor keys -- exposed as extra positional arguments.
    """
    param_values = dict(param_values or {})
    slot: dict = {}
    for idx, s in enumerate(symbols):
        if isinstance(s, FuncSymbol):
            key = ("f", s.name, s.order)
        elif isinstance(s, str):
            key = ("p", s)
        else:
            key = tuple(s)
        slot[key] = f"s{idx}"

    def base_src(name: str) -> str:
        if ("p", name) in slot:
            return slot[("p", name)]
        return repr(param_values[name])

    def factor_src(key, e: int):
        """Returns (constant factor or None, source or None)."""
        kind = key[0]
        if key in slot:
            s = slot[key]
            return None, (s if e == 1 else f"{s}**{e}")
        if kind == "u":
            s = f"u{key[1]}"
            return None, (s if e == 1 else f"{s}**{e}")
        if kind == "p":
            return param_values[key[1]] ** e, None
        if kind == "tc":
            _, fn, base, rr = key
            if base and ("p", base) in slot:
                s = f"{fn}({float(rr)!r}*{slot[('p', base)]})"
                return None, (s if e == 1 else f"{s}**{e}")
            ang = float(rr) * (param_values[base] if base else 1.0)
            return (math.sin(ang) if fn == "sin" else math.cos(ang)) ** e, None
        raise UnsupportedExpressionError(
            f"cannot compile factor {key!r}: bind it via param_values or symbols"
        )

    def cp_src(cp) -> str:
        parts = []
        for cmono, r in cp:
            v = float(r)
            srcs = []
            for key, e in cmono:
                c, s = factor_src(key, e)
                if c is not None:
                    v *= c
                else:
                    srcs.append(s)
            parts.append("*".join([repr(v)] + srcs))
        return "+".join(parts) if parts else "0.0"

    def lf_src(lf) -> str:
        parts = [f"({cp_src(cp)})*u{i}" for i, cp in enumerate(lf) if cp]
        return "+".join(parts) if parts else "0.0"

    def mono_src(m: Mono) -> str:
        factors = []
        const = float(m.coeff)
        for key, e in m.pows:
            c, s = factor_src(key, e)
            if c is not None:
                const *= c
            else:
                factors.append(s)
        if not lf_is_zero(m.expl):
            factors.append(f"exp({lf_src(m.expl)})")
        for fn, lf, e in m.trig:
            t = f"{fn}({lf_src(lf)})"
            factors.append(f"{t}**{e}" if e != 1 else t)
        src = repr(const)
        if factors:
            src += "*" + "*".join(factors)
        return src

    def sum_src(monos) -> str:
        if not monos:
            return "0.0"
        return "+".join(mono_src(m) for m in monos)

    body = []
    for idx, e in enumerate(exprs):
        if e.den == SUM_ONE:
            body.append(f"    v{idx} = {sum_src(e.num)}")
        else:
            body.append(f"    v{idx} = ({sum_src(e.num)})/({sum_src(e.den)})")
    names = ", ".join(f"v{idx}" for idx in range(len(exprs)))
    args = ", ".join(["u0", "u1", "u2", "u3"] + [f"s{i}" for i in range(len(symbols))])
    src = f"def _compiled({args}):\n" + "\n".join(body) + f"\n    return [{names}]\n"
    scope = {"exp": math.exp, "sin": math.sin, "cos": math.cos}
    exec(src, scope)  # noqa: S102 - source is generated from canonical forms
    return scope["_compiled"]


# ---------------------------------------------------------------------------
# parsing
# ---------------------------------------------------------------------------

DEFAULT_PARAMETERS = frozenset({"k", "n", "q", "eps", "alpha", "e", "m"})


class _Token(NamedTuple):
    kind: str
    value: object
    pos: int


def _tokenize(text: str):
    tokens = []
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch.isspace():
            i += 1
            continue
        if ch.isdigit() or (ch == "." and i + 1 < n and text[i + 1].isdigit()):
            j = i
            seen_dot = False
            while j < n and (text[j].isdigit() or (text[j] == "." and not seen_dot)):
                seen_dot = seen_dot or text[j] == "."
                j += 1
            tokens.append(_Token("number", Fraction(text[i:j]), i))
            i = j
            continue
        if ch.isalpha():
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            name = text[i:j]
            primes = 0
            while j < n and text[j] == "'":
                primes += 1
                j += 1
            tokens.append(_Token("ident", (name, primes), i))
            i = j
            continue
        if ch in "+-*/^(),":
            tokens.append(_Token(ch, ch, i))
            i += 1
            continue
        raise ParseError(f"unexpected character {ch!r}", i)
    tokens.append(_Token("end", None, n))
    return tokens


class _Parser:
    """Precedence-climbing parser for the expression grammar."""

    def __init__(self, tokens, parameters, functions):
        self.tokens = tokens
        self.pos = 0
        self.parameters = parameters
        self.functions = functions

    def peek(self) -> _Token:
        return self.tokens[self.pos]

    def next(self) -> _Token:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect(self, kind: str) -> _Token:
        tok = self.next()
        if tok.kind != kind:
            raise ParseError(f"expected {kind!r}, found {tok.kind!r}", tok.pos)
        return tok

    def parse_expr(self, min_bp: int = 0) -> Expr:
        tok = self.next()
        if tok.kind == "number":
            left = number(tok.value)
        elif tok.kind == "ident":
            left = self.resolve(tok)
        elif tok.kind == "(":
            left = self.parse_expr(0)
            self.expect(")")
        elif tok.kind == "-":
            left = -self.parse_expr(30)
        elif tok.kind == "+":
            left = self.parse_expr(30)
        else:
            raise ParseError(f"unexpected token {tok.kind!r}", tok.pos)
        while True:
            op = self.peek()
            if op.kind in ("+", "-") and min_bp <= 10:
                self.next()
                right = self.parse_expr(11)
                left = left + right if op.kind == "+" else left - right
            elif op.kind in ("*", "/") and min_bp <= 20:
                self.next()
                right = self.parse_expr(21)
                try:
                    left = left * right if op.kind == "*" else left / right
                except ZeroDivisionError:
                    raise ParseError("division by zero", op.pos) from None
            elif op.kind == "^" and min_bp <= 40:
                self.next()
                left = left ** self.parse_exponent()
            else:
                return left

    def parse_exponent(self) -> int:
        tok = self.next()
        sign = 1
        if tok.kind == "-":
            sign = -1
            tok = self.next()
        if tok.kind == "(":
            inner = self.parse_expr(0)
            self.expect(")")
            r = inner.as_rational()
            if r is None or r.denominator != 1:
                raise ParseError("exponent must be an integer", tok.pos)
            return sign * int(r)
        if tok.kind != "number" or tok.value.denominator != 1:
            raise ParseError("exponent must be an integer", tok.pos)
        return sign * int(tok.value)

    def resolve(self, tok: _Token) -> Expr:
        name, primes = tok.value
        if name in ("exp", "sin", "cos"):
            if primes:
                raise ParseError(f"{name} cannot carry derivative marks", tok.pos)
            self.expect("(")
            arg = self.parse_expr(0)
            self.expect(")")
            try:
                return {"exp": exp, "sin": sin, "cos": cos}[name](arg)
            except UnsupportedExpressionError as err:
                raise ParseError(str(err), tok.pos) from None
        if self.peek().kind == "(":
            raise ParseError(f"unknown function {name!r}", tok.pos)
        if name in COORD_NAMES:
            if primes:
                raise ParseError("coordinates cannot carry derivative marks", tok.pos)
            return coord(COORD_NAMES.index(name))
        if name in self.functions:
            return func(name, primes)
        if name in self.parameters:
            if primes:
                raise ParseError(f"parameter {name!r} cannot carry derivative marks", tok.pos)
            return param(name)
        # default classification: a trailing digit marks an abstract function
        # of u0 (alpha0, beta0, a11, ...); bare words are parameters.
        if name[-1].isdigit():
            return func(name, primes)
        if primes:
            raise ParseError(f"unknown function symbol {name!r}", tok.pos)
        return param(name)


def parse(
    text: str,
    parameters: Iterable[str] = DEFAULT_PARAMETERS,
    functions: Iterable[str] = (),
) -> Expr:
    """Parse the expression grammar into a canonical Expr.

    ``parameters`` and ``functions`` pre-classify identifiers; anything else
    is classified by the trailing-digit convention.
    """
    parser = _Parser(_tokenize(text), frozenset(parameters), frozenset(functions))
    result = parser.parse_expr(0)
    end = parser.next()
    if end.kind != "end":
        raise ParseError("trailing input", end.pos)
    return result


# ---------------------------------------------------------------------------
# printing (grammar-compatible, round-trip stable)
# ---------------------------------------------------------------------------


def _rat_str(r: Fraction) -> str:
    if r.denominator == 1:
        return str(r.numerator)
    return f"({r.numerator}/{r.denominator})"


def _factor_str(key, e: int) -> str:
    kind = key[0]
    if kind == "u":
        base = COORD_NAMES[key[1]]
    elif kind == "p":
        base = key[1]
    elif kind == "tc":
        _, fn, name, r = key
        if not name:
            base = f"{fn}({_rat_str(r)})"
        elif r == 1:
            base = f"{fn}({name})"
        else:
            base = f"{fn}({_rat_str(r)}*{name})"
    elif kind == "f":
        base = key[1] + "'" * key[2]
    else:
        raise ExprError(f"unknown factor {key!r}")
    if e == 1:
        return base
    return f"{base}^({e})" if e < 0 else f"{base}^{e}"


def _mono_str(m: Mono) -> str:
    factors = [_factor_str(key, e) for key, e in m.pows]
    if not lf_is_zero(m.expl):
        factors.append(f"exp({_lf_str(m.expl)})")
    for fn, lf, e in m.trig:
        base = f"{fn}({_lf_str(lf)})"
        factors.append(base if e == 1 else f"{base}^({e})" if e < 0 else f"{base}^{e}")
    coeff = m.coeff
    if not factors:
        return _rat_str(coeff)
    body = "*".join(factors)
    if coeff == 1:
        return body
    if coeff == -1:
        return "-" + body
    return _rat_str(coeff) + "*" + body


def _sum_str(monos) -> str:
    if not monos:
        return "0"
    parts = [_mono_str(m) for m in monos]
    out = parts[0]
    for p in parts[1:]:
        out += " - " + p[1:] if p.startswith("-") else " + " + p
    return out


def _expr_str(e: Expr) -> str:
    if e.den == SUM_ONE:
        return _sum_str(e.num)
    return f"({_sum_str(e.num)}) / ({_sum_str(e.den)})"
