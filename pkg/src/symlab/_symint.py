"""Closed-form antiderivatives and constant-coefficient linear ODE solutions.

Internal helpers shared by the coframe construction and the field-tensor
solver.  Everything stays inside the expression engine's closed class:
polynomials times one exponential of a linear form times at most one sine or
cosine of a linear form, with exact scalar coefficients.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Optional, Sequence

from .expr import (
    CP_ZERO,
    Expr,
    LF_ZERO,
    Mono,
    SUM_ONE,
    UnsupportedExpressionError,
    _combine,
    _expand_raw,
    _mono_mul,
    _sorted,
    cp_add,
    cp_mul,
    cp_neg,
    cp_rational,
    cp_scale,
    cp_from_rat,
    lf_is_zero,
    number,
    substitute,
)

_ONE = Fraction(1)


# ---------------------------------------------------------------------------
# exact scalar helpers (cpoly level)
# ---------------------------------------------------------------------------


def cp_invert(cp) -> tuple:
    """Inverse of a single-term scalar; raises for sums."""
    r = cp_rational(cp)
    if r is not None:
        if not r:
            raise ZeroDivisionError("inverting the zero scalar")
        return cp_from_rat(1 / r)
    if len(cp) != 1:
        raise UnsupportedExpressionError(f"cannot invert scalar sum {cp!r}")
    cmono, coeff = cp[0]
    inv_mono = tuple((key, -e) for key, e in cmono)
    return ((inv_mono, 1 / coeff),)


def cp_sqrt(cp) -> Optional[tuple]:
    """Exact square root of a single-term scalar, or None."""
    r = cp_rational(cp)
    if r is not None:
        if r < 0:
            return None
        num = _isqrt_exact(r.numerator)
        den = _isqrt_exact(r.denominator)
        if num is None or den is None:
            return None
        return cp_from_rat(Fraction(num, den))
    if len(cp) != 1:
        return None
    cmono, coeff = cp[0]
    if coeff < 0 or any(e % 2 for _k, e in cmono):
        return None
    num = _isqrt_exact(coeff.numerator)
    den = _isqrt_exact(coeff.denominator)
    if num is None or den is None:
        return None
    half = tuple((key, e // 2) for key, e in cmono)
    return ((half, Fraction(num, den)),)


def _isqrt_exact(n: int) -> Optional[int]:
    import math

    r = math.isqrt(n)
    return r if r * r == n else None


def cp_to_expr(cp) -> Expr:
    return Expr(_combine([Mono(c, m, LF_ZERO, ()) for m, c in cp]))


def expr_to_cp(e: Expr):
    """Constant expression -> scalar polynomial; raises if not constant."""
    if e.den != SUM_ONE:
        raise UnsupportedExpressionError("scalar must not be a quotient")
    out = CP_ZERO
    for m in e.num:
        if m.trig or not lf_is_zero(m.expl):
            raise UnsupportedExpressionError("scalar contains exp/trig of coordinates")
        if any(k[0] in ("u", "f") for k, _e in m.pows):
            raise UnsupportedExpressionError("scalar contains coordinates or functions")
        out = cp_add(out, ((m.pows, m.coeff),))
    return out


# ---------------------------------------------------------------------------
# antiderivatives
# ---------------------------------------------------------------------------


def antiderivative(e: Expr, i: int) -> Expr:
    """An antiderivative of ``e`` in coordinate ``u_i`` (integration constant 0).

    Supports the closed class (polynomial x exponential x single trig factor
    in ``u_i``); for ``i == 0`` a monomial containing an abstract function is
    integrated by lowering the derivative order, which requires order >= 1.
    """
    if e.den != SUM_ONE:
        raise UnsupportedExpressionError("cannot integrate a quotient of sums")
    out = []
    for m in e.num:
        out.extend(_mono_antiderivative(m, i).num)
    return Expr(_combine(out))


def definite_integral(e: Expr, i: int, upper: Expr) -> Expr:
    """Integral of ``e`` d(u_i) from 0 to ``upper`` (an Expr, often u_i)."""
    anti = antiderivative(e, i)
    hi = substitute(anti, coords={i: upper})
    lo = substitute(anti, coords={i: number(0)})
    return hi - lo


def _mono_antiderivative(m: Mono, i: int) -> Expr:
    # split off the u_i-dependent structure
    power = 0
    rest_pows = {}
    func_key = None
    for key, ex in m.pows:
        if key[0] == "u" and key[1] == i:
            power = ex
        else:
            rest_pows[key] = ex
            if key[0] == "f" and i == 0:
                func_key = key if func_key is None or ex != 0 else func_key
    if power < 0:
        raise UnsupportedExpressionError("negative coordinate powers cannot be integrated")

    lam = m.expl[i]
    trig_dep = [(fn, lf, ex) for fn, lf, ex in m.trig if lf[i]]
    trig_rest = tuple((fn, lf, ex) for fn, lf, ex in m.trig if not lf[i])

    if i == 0 and any(k[0] == "f" for k in rest_pows):
        # abstract functions of u0: integrate by lowering one derivative order
        fkeys = [(k, ex) for k, ex in rest_pows.items() if k[0] == "f"]
        if power or lam or trig_dep or len(fkeys) != 1 or fkeys[0][1] != 1:
            raise UnsupportedExpressionError(
                "cannot integrate this combination of u0-dependent factors"
            )
        key, _ = fkeys[0]
        if key[2] < 1:
            raise UnsupportedExpressionError(
                f"no antiderivative symbol for order-0 function {key[1]!r}"
            )
        d = dict(rest_pows)
        del d[key]
        lowered = ("f", key[1], key[2] - 1)
        d[lowered] = d.get(lowered, 0) + 1
        return Expr(_combine(_expand_raw(m.coeff, d, m.expl, {(fn, lf): ex for fn, lf, ex in m.trig})))

    if len(trig_dep) > 1 or (trig_dep and trig_dep[0][2] != 1):
        raise UnsupportedExpressionError("cannot integrate trig powers in the integration variable")

    rest = Mono(m.coeff, _sorted(rest_pows.items()), _strip_lf(m.expl, i), trig_rest)

    if not trig_dep and not lam:
        # plain power rule
        t_new = Mono(_ONE / (power + 1), ((("u", i), power + 1),), LF_ZERO, ())
        return Expr(_combine(_mono_mul(rest, t_new)))

    if not trig_dep:
        # t^m exp(lam t): downward recursion in the power
        lam_inv = cp_invert(lam)
        terms = []
        coeff = cp_from_rat(_ONE)
        for j in range(power, -1, -1):
            coeff = cp_mul(coeff, lam_inv)
            terms.append((j, coeff))
            coeff = cp_scale(coeff, Fraction(-j))
        out = []
        for j, cpc in terms:
            t_part = Mono(_ONE, ((("u", i), j),) if j else (), _lf_with(i, lam), ())
            scaled = [Mono(c2, mm, LF_ZERO, ()) for mm, c2 in cpc]
            for s in scaled:
                for x in _mono_mul(s, t_part):
                    out.extend(_mono_mul(x, rest))
        # drop factorial-style falling coefficients that vanished
        return Expr(_combine(out))

    # t^m exp(lam t) trig(mu t + rho): solve the two-dimensional recursion
    fn, lf, _ = trig_dep[0]
    mu = lf[i]
    # D = lam^2 + mu^2 must be exactly invertible (rational after the
    # sin^2+cos^2 reduction in the catalog's cases)
    D = cp_add(cp_mul(lam, lam), cp_mul(mu, mu))
    D_inv = cp_invert(D)
    ps = [CP_ZERO] * (power + 1)
    qs = [CP_ZERO] * (power + 1)
    want_sin = fn == "sin"
    for j in range(power, -1, -1):
        if j == power:
            r_s = cp_from_rat(_ONE) if want_sin else CP_ZERO
            r_c = CP_ZERO if want_sin else cp_from_rat(_ONE)
        else:
            r_s = cp_scale(ps[j + 1], Fraction(-(j + 1)))
            r_c = cp_scale(qs[j + 1], Fraction(-(j + 1)))
        # [[lam, -mu], [mu, lam]] (p_j, q_j)^T = (r_s, r_c)^T
        ps[j] = cp_mul(D_inv, cp_add(cp_mul(lam, r_s), cp_mul(mu, r_c)))
        qs[j] = cp_mul(D_inv, cp_add(cp_mul(lam, r_c), cp_neg(cp_mul(mu, r_s))))
    out = []
    for j in range(power + 1):
        for trig_fn, cpc in (("sin", ps[j]), ("cos", qs[j])):
            if not cpc:
                continue
            base = Mono(
                _ONE,
                ((("u", i), j),) if j else (),
                _lf_with(i, lam),
                ((trig_fn, lf, 1),),
            )
            for mm, c2 in cpc:
                s = Mono(c2, mm, LF_ZERO, ())
                for x in _mono_mul(s, base):
                    out.extend(_mono_mul(x, rest))
    return Expr(_combine(out))


def _strip_lf(lf, i):
    return tuple(CP_ZERO if j == i else cp for j, cp in enumerate(lf))


def _lf_with(i, cp):
    return tuple(cp if j == i else CP_ZERO for j in range(4))


# ---------------------------------------------------------------------------
# fundamental matrices of constant-coefficient linear systems
# ---------------------------------------------------------------------------


def fundamental_matrix(N: Sequence[Sequence[Expr]], i: int) -> list:
    """E(u_i) with E' = N E and E(0) = I, for exact constant matrices N.

    Supports systems whose strongly connected blocks are single equations or
    2x2 blocks with an exactly representable eigenstructure (real rational
    roots, a double root, or a complex pair whose imaginary part is an exact
    square root, e.g. trace -2*cos(a) and determinant 1).
    """
    n = len(N)
    cp = [[expr_to_cp(N[r][c]) for c in range(n)] for r in range(n)]
    blocks = _scc_blocks(cp)
    t = _coord_expr(i)
    zero, one = number(0), number(1)
    cols = []
    for a in range(n):
        y = [zero] * n
        solved = {}
        for block in blocks:
            rhs = []
            for r in block:
                acc = zero
                for c in range(n):
                    if c not in block and cp[r][c]:
                        acc = acc + cp_to_expr(cp[r][c]) * solved.get(c, zero)
                rhs.append(acc)
            init = [one if r == a else zero for r in block]
            sol = _solve_block([[cp[r][c] for c in block] for r in block], rhs, init, i)
            for r, val in zip(block, sol):
                solved[r] = val
        for r in range(n):
            y[r] = solved[r]
        cols.append(y)
    return [[cols[a][r] for a in range(n)] for r in range(n)]  # E[r][a]


def _coord_expr(i):
    from .expr import coord

    return coord(i)


def _scc_blocks(cp):
    """Dependency-ordered strongly connected components of the system."""
    n = len(cp)
    adj = {r: [c for c in range(n) if c != r and cp[r][c]] for r in range(n)}
    index = {}
    low = {}
    stack, onstack = [], set()
    sccs = []
    counter = [0]

    def strongconnect(v):
        index[v] = low[v] = counter[0]
        counter[0] += 1
        stack.append(v)
        onstack.add(v)
        for w in adj[v]:
            if w not in index:
                strongconnect(w)
                low[v] = min(low[v], low[w])
            elif w in onstack:
                low[v] = min(low[v], index[w])
        if low[v] == index[v]:
            comp = []
            while True:
                w = stack.pop()
                onstack.discard(w)
                comp.append(w)
                if w == v:
                    break
            sccs.append(sorted(comp))

    for v in range(n):
        if v not in index:
            strongconnect(v)
    # Tarjan emits components in reverse topological order of the condensation
    # along edges r -> c (r depends on c), so the emitted order already has
    # dependencies first.
    return sccs


def _solve_block(A, rhs, init, i):
    """Solve y' = A y + rhs(t), y(0) = init, for a 1x1 or 2x2 exact block."""
    from .expr import exp as expr_exp

    t = _coord_expr(i)
    if len(A) == 1:
        a_cp = A[0][0]
        a_expr = cp_to_expr(a_cp)
        growth = expr_exp(a_expr * t) if a_cp else number(1)
        decay = expr_exp(-a_expr * t) if a_cp else number(1)
        particular = number(0)
        if rhs[0]:
            particular = definite_integral(decay * rhs[0], i, t)
        return [growth * (init[0] + particular)]
    if len(A) == 2:
        Phi, Phi_inv = _block_exponentials(A, i)
        y0 = [Expr._coerce(init[0]), Expr._coerce(init[1])]
        if any(bool(r) for r in rhs):
            conv = []
            for r in range(2):
                integrand = Phi_inv[r][0] * rhs[0] + Phi_inv[r][1] * rhs[1]
                conv.append(definite_integral(integrand, i, t))
            y0 = [y0[0] + conv[0], y0[1] + conv[1]]
        return [Phi[r][0] * y0[0] + Phi[r][1] * y0[1] for r in range(2)]
    raise UnsupportedExpressionError(
        f"coupled blocks of size {len(A)} are outside the supported class"
    )


def _block_exponentials(A, i):
    """exp(t A) and exp(-t A) for an exact 2x2 block."""
    from .expr import cos as expr_cos
    from .expr import exp as expr_exp
    from .expr import sin as expr_sin

    t = _coord_expr(i)
    tr = cp_add(A[0][0], A[1][1])
    det = cp_add(cp_mul(A[0][0], A[1][1]), cp_neg(cp_mul(A[0][1], A[1][0])))
    mu = cp_scale(tr, Fraction(1, 2))
    disc = cp_add(cp_mul(mu, mu), cp_neg(det))  # mu^2 - det = (lam1-lam2)^2/4

    mu_e = cp_to_expr(mu)
    B = [
        [cp_to_expr(A[0][0]) - mu_e, cp_to_expr(A[0][1])],
        [cp_to_expr(A[1][0]), cp_to_expr(A[1][1]) - mu_e],
    ]

    def build(sign):
        tt = t if sign > 0 else -t
        scale = expr_exp(mu_e * tt) if mu else number(1)
        if not disc:
            # double root: exp = e^{mu t} (I + t B)
            c0, c1 = number(1), tt
        else:
            omega2 = cp_add(CP_ZERO, disc)
            root = cp_sqrt(omega2)
            if root is not None:
                w = cp_to_expr(root)
                # real pair mu +- w: cosh/sinh written with exponentials
                ep = expr_exp(w * tt)
                em = expr_exp(-(w * tt))
                half = Fraction(1, 2)
                c0 = (ep + em) * half
                c1 = (ep - em) * half / w
            else:
                root = cp_sqrt(cp_neg(disc))
                if root is None:
                    raise UnsupportedExpressionError(
                        "block eigenvalues are not exactly representable"
                    )
                w = cp_to_expr(root)
                c0 = expr_cos(w * tt)
                c1 = expr_sin(w * tt) / w
        return [
            [scale * (c0 + c1 * B[0][0]), scale * c1 * B[0][1]],
            [scale * c1 * B[1][0], scale * (c0 + c1 * B[1][1])],
        ]

    return build(1), build(-1)
