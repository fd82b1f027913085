"""Charged test-particle trajectories and conservation checks.

The canonical equations are integrated with an embedded Verner 6(5) pair.
Metric and potential derivatives are exact: the symbolic entries are
compiled to fast numeric kernels after substituting concrete bindings for
the abstract functions of u0, and the inverse-metric gradient uses the
closed form d(g^-1) = -g^-1 dg g^-1.  The monitored quantities are the
Hamiltonian and the three generator contractions xi_a^i p_i.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Tuple

import numpy as np

from . import expr as ex
from .expr import Expr, differentiate, free_symbols, parse, substitute
from .catalog import BianchiModel

__all__ = [
    "ModelInstance",
    "PhaseState",
    "Trajectory",
    "IntegrationError",
    "standard_bindings",
    "standard_instance",
    "hamiltonian_at",
    "integrate",
    "conserved_drift",
    "trajectory_rows",
    "random_initial_states",
]


class IntegrationError(Exception):
    pass


def standard_bindings() -> Dict[str, Expr]:
    """The deterministic bindings used by the conservation suite."""
    b = {
        "alpha0": parse("sin(u0)"),
        "beta0": parse("cos(u0)"),
        "gamma0": parse("u0"),
    }
    for s in range(1, 4):
        for t in range(s, 4):
            b[f"a{s}{t}"] = ex.number(-1 if s == t else 0)
    return b


@dataclass
class ModelInstance:
    """A model with concrete function bindings and parameter values.

    ``bindings`` maps abstract-function names to expressions in u0 (their
    derivatives are taken symbolically); ``params`` binds the signature e
    and, for the angle-carrying type, the angle itself.
    """

    model: BianchiModel
    bindings: Dict[str, Expr]
    params: Dict[str, float]

    def __post_init__(self):
        metric = self.model.metric
        pot = self.model.potential
        g_exprs = []
        for i in range(4):
            for j in range(4):
                g_exprs.append(self._bind(metric[i, j]))
        a_exprs = [self._bind(pot[i]) for i in range(4)]
        dg_exprs = [differentiate(e, k) for k in range(4) for e in g_exprs]
        da_exprs = [differentiate(e, k) for k in range(4) for e in a_exprs]
        xi_exprs = [self._bind(c) for f in self.model.frame for c in f]
        self._needed_params = set()
        for e in g_exprs + a_exprs + dg_exprs + da_exprs + xi_exprs:
            sym = free_symbols(e)
            if sym["funcs"]:
                missing = sorted(str(f) for f in sym["funcs"])
                raise IntegrationError(f"unbound function symbols: {missing}")
            self._needed_params |= sym["params"]
        missing = self._needed_params - set(self.params)
        if missing:
            raise IntegrationError(f"unbound parameters: {sorted(missing)}")
        self._ga = ex.compile_numeric(g_exprs + a_exprs, self.params)
        self._dgda = ex.compile_numeric(dg_exprs + da_exprs, self.params)
        self._xi = ex.compile_numeric(xi_exprs, self.params)

    def _bind(self, e: Expr) -> Expr:
        return substitute(e, funcs=self.bindings)

    # -- numeric kernels ------------------------------------------------------

    def metric_and_potential(self, u):
        out = self._ga(float(u[0]), float(u[1]), float(u[2]), float(u[3]))
        g = np.array(out[:16]).reshape(4, 4)
        a = np.array(out[16:20])
        return g, a

    def gradients(self, u):
        out = self._dgda(float(u[0]), float(u[1]), float(u[2]), float(u[3]))
        dg = np.array(out[:64]).reshape(4, 4, 4)
        da = np.array(out[64:80]).reshape(4, 4)
        return dg, da

    def generators(self, u):
        out = self._xi(float(u[0]), float(u[1]), float(u[2]), float(u[3]))
        return np.array(out).reshape(3, 4)

    def rhs(self, y):
        u = [float(v) for v in y[:4]]
        p = y[4:]
        try:
            g, a = self.metric_and_potential(u)
            dg, da = self.gradients(u)
        except (OverflowError, ValueError) as err:
            raise IntegrationError(f"state left the representable domain: {err}") from None
        if not (np.all(np.isfinite(g)) and np.all(np.isfinite(dg))):
            raise IntegrationError("state left the representable domain: non-finite metric")
        try:
            ginv = np.linalg.inv(g)
        except np.linalg.LinAlgError:
            raise IntegrationError(f"metric singular at u = {u.tolist()}") from None
        P = p + a
        du = 2.0 * ginv @ P
        # d(g^-1)/du_i = -g^-1 dg_i g^-1; dp_i = P (g^-1 dg_i g^-1) P - 2 (g^-1 P) . dA_i
        temp = np.einsum("ab,ibc,cd->iad", ginv, dg, ginv)
        dp = np.einsum("iab,a,b->i", temp, P, P) - 2.0 * da @ (ginv @ P)
        return np.concatenate((du, dp))

    def hamiltonian(self, y) -> float:
        u = y[:4]
        p = y[4:]
        g, a = self.metric_and_potential(u)
        ginv = np.linalg.inv(g)
        P = p + a
        return float(P @ ginv @ P)

    def integrals(self, y) -> np.ndarray:
        xi = self.generators(y[:4])
        return xi @ y[4:]


def standard_instance(model: BianchiModel, bindings: Optional[Mapping[str, Expr]] = None,
                      params: Optional[Mapping[str, float]] = None) -> ModelInstance:
    """Instance with the deterministic standard bindings (overridable)."""
    b = standard_bindings()
    if bindings:
        b.update(bindings)
    pr = {"e": 1.0}
    if model.type_tag == "VII":
        pr["alpha"] = math.pi / 3.0
    if params:
        pr.update(params)
    return ModelInstance(model, b, pr)


@dataclass(frozen=True)
class PhaseState:
    coordinates: Tuple[float, float, float, float]
    momenta: Tuple[float, float, float, float]

    def as_vector(self) -> np.ndarray:
        return np.array(self.coordinates + self.momenta, dtype=float)

    @staticmethod
    def from_vector(y) -> "PhaseState":
        return PhaseState(tuple(float(v) for v in y[:4]), tuple(float(v) for v in y[4:]))


@dataclass
class Trajectory:
    taus: List[float]
    states: List[np.ndarray]
    accepted: int = 0
    rejected: int = 0
    tolerance: float = 0.0

    def final_state(self) -> PhaseState:
        return PhaseState.from_vector(self.states[-1])


def hamiltonian_at(inst: ModelInstance, state: PhaseState) -> float:
    """H = g^{ij} (p_i + A_i)(p_j + A_j) at the state."""
    return inst.hamiltonian(state.as_vector())


# Verner 6(5) embedded pair: 9 stages, FSAL, 6th-order propagation.
# Stage times are listed for completeness; the flow is autonomous.
_V65_C = (0.0, 9 / 50, 1 / 6, 1 / 4, 53 / 100, 3 / 5, 4 / 5, 1.0, 1.0)
_V65_A = (
    (),
    (9 / 50,),
    (29 / 324, 25 / 324),
    (1 / 16, 0.0, 3 / 16),
    (79129 / 250000, 0.0, -261237 / 250000, 19663 / 15625),
    (1336883 / 4909125, 0.0, -25476 / 30875, 194159 / 185250, 8225 / 78546),
    (-2459386 / 14727375, 0.0, 19504 / 30875, 2377474 / 13615875, -6157250 / 5773131, 902 / 735),
    (2699 / 7410, 0.0, -252 / 1235, -1393253 / 3993990, 236875 / 72618, -135 / 49, 15 / 22),
    (11 / 144, 0.0, 0.0, 256 / 693, 0.0, 125 / 504, 125 / 528, 5 / 72),
)
_V65_B = (11 / 144, 0.0, 0.0, 256 / 693, 0.0, 125 / 504, 125 / 528, 5 / 72, 0.0)
_V65_BHAT = (
    28 / 477, 0.0, 0.0, 212 / 441, -312500 / 366177, 2125 / 1764, 0.0,
    -2105 / 35532, 2995 / 17766,
)
_V65_E = tuple(b - bh for b, bh in zip(_V65_B, _V65_BHAT))

# Cap on the step length as a function of the tolerance.  The pair's local
# error at these step sizes is far below the tolerance, so the cap is what
# links the tolerance to the observed drift: drift ~ h^6 ~ tol^3.6, which
# makes tolerance-halving convergence checks decisive.
_HMAX_REF = 0.04
_HMAX_EXPONENT = 0.6


def _hmax(tol: float) -> float:
    return _HMAX_REF * (tol / 1e-10) ** _HMAX_EXPONENT


def integrate(
    inst: ModelInstance,
    state0: PhaseState,
    tau_span: Tuple[float, float] = (0.0, 10.0),
    tol: float = 1e-10,
    max_steps: int = 200_000,
) -> Trajectory:
    """Adaptive embedded Runge-Kutta trajectory with local error <= tol.

    The error estimate uses a mixed absolute/relative norm with the
    tolerance as both floors; the step length is additionally capped by a
    tolerance-dependent bound (see _hmax).  Trajectories whose stiffness
    exhausts the step budget raise IntegrationError instead of spinning.
    """
    if tol <= 0:
        raise ValueError("tolerance must be positive")
    t0, t1 = float(tau_span[0]), float(tau_span[1])
    if t0 == t1:
        raise ValueError("empty integration span")
    direction = 1.0 if t1 > t0 else -1.0
    y = state0.as_vector()
    t = t0
    hmax = _hmax(tol)
    h = direction * min(hmax, abs(t1 - t0) / 10.0)
    traj = Trajectory(taus=[t0], states=[y.copy()], tolerance=tol)
    k = [None] * 9
    k0 = inst.rhs(y)
    span = abs(t1 - t0)
    end_eps = 1e-12 * max(1.0, span)
    min_step = 1e-13 * max(1.0, span)
    while (t1 - t) * direction > end_eps:
        clamped = abs(h) >= abs(t1 - t)
        if clamped:
            h = t1 - t
        k[0] = k0
        for s in range(1, 9):
            ys = y.copy()
            for j, a in enumerate(_V65_A[s]):
                if a:
                    ys += (h * a) * k[j]
            k[s] = inst.rhs(ys)
        ynew = y.copy()
        for j, b in enumerate(_V65_B):
            if b:
                ynew += (h * b) * k[j]
        err = np.zeros_like(y)
        for j, e in enumerate(_V65_E):
            if e:
                err += (h * e) * k[j]
        scale = tol + tol * np.maximum(np.abs(y), np.abs(ynew))
        err_norm = float(np.max(np.abs(err) / scale))
        if err_norm <= 1.0:
            t += h
            y = ynew
            k0 = k[8]  # FSAL: the last stage is the derivative at the new point
            traj.taus.append(t)
            traj.states.append(y.copy())
            traj.accepted += 1
        else:
            traj.rejected += 1
            k0 = k[0]
        factor = 0.9 * err_norm ** (-1.0 / 6.0) if err_norm > 0 else 5.0
        h = direction * min(abs(h) * min(5.0, max(0.2, factor)), hmax)
        if abs(h) < min_step and (t1 - t) * direction > abs(h):
            raise IntegrationError(f"step size underflow at tau = {t}")
        if traj.accepted + traj.rejected > max_steps:
            raise IntegrationError(
                f"step budget exhausted at tau = {t:.6g}: the trajectory has "
                f"become numerically intractable (|y| up to {float(np.max(np.abs(y))):.3g})"
            )
    return traj


def conserved_drift(traj: Trajectory, inst: ModelInstance) -> Dict[str, float]:
    """Max relative drift of H and the three generator integrals."""
    names = ("H", "Y1", "Y2", "Y3")
    ref = None
    worst = dict.fromkeys(names, 0.0)
    for y in traj.states:
        vals = [inst.hamiltonian(y), *inst.integrals(y)]
        if ref is None:
            ref = vals
            continue
        for name, v, v0 in zip(names, vals, ref):
            drift = abs(v - v0) / max(1.0, abs(v0))
            if drift > worst[name]:
                worst[name] = drift
    return worst


def trajectory_rows(traj: Trajectory, inst: ModelInstance):
    """Rows (tau, u0..u3, p0..p3, H, Y1..Y3) for delimited-text export."""
    rows = []
    for t, y in zip(traj.taus, traj.states):
        rows.append(
            (t, *y.tolist(), inst.hamiltonian(y), *inst.integrals(y).tolist())
        )
    return rows


def random_initial_states(model: BianchiModel, count: int, seed: int, radius: float = 0.3):
    """Deterministic random initial states with |p| bounded by the radius.

    Starting coordinates sit at the chart origin, except the rotation-type
    chart which starts away from its coordinate singularity.
    """
    rng = np.random.default_rng(seed)
    u0 = (0.0, math.pi / 2, 0.0, 0.0) if model.type_tag == "IX" else (0.0, 0.0, 0.0, 0.0)
    states = []
    for _ in range(count):
        p = rng.uniform(-1.0, 1.0, size=4)
        norm = np.linalg.norm(p)
        if norm > 0:
            p = p / norm * rng.uniform(0.1, 1.0) * radius
        states.append(PhaseState(u0, tuple(p.tolist())))
    return states
