"""Floating-point cross-checks on periodic rings.

Systems with one continuous variable t and one lattice variable n are
integrated with classical RK4 after writing the solved form
u^(k) = f as a first-order system in (u, u', ..., u^(k-1)).  Conservation
laws are then checked through the drift of sum_n P1 and the pointwise value
of D_t P1 + (S - id) P2.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Mapping, Sequence

import numpy as np
import sympy as sp
from sympy.core.function import AppliedUndef

from .calculus import total_derivative
from .expr import Context, ExprError, Jet, jets, normalize
from .symmetry import DDESystem, reduce_mod
from .variational import ConservationLaw

__all__ = [
    "NumericError",
    "LatticeState",
    "Trajectory",
    "NumericReport",
    "random_state",
    "eval_on_lattice",
    "integrate",
    "check_cl_numeric",
    "numeric_verify",
    "drift_ratio",
]

DEFAULT_RING = 20
DEFAULT_DT = 1e-3
DEFAULT_T_END = 1.0
DEFAULT_SEED = 42
NUMERIC_RESIDUAL_TOL = 1e-10     # pointwise residual of an exact law is round-off only


class NumericError(ExprError):
    pass


@dataclass
class LatticeState:
    """Values of the state components on a ring of N sites.

    ``components`` are the zero-shift jets stored per site, e.g. (u,) for a
    first-order system or (u, u') for a second-order one.
    """

    ring: int
    values: np.ndarray          # shape (N, len(components))
    time: float = 0.0
    components: tuple = ()

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim == 1:
            self.values = self.values.reshape(-1, 1)
        if self.values.shape[0] != self.ring:
            raise NumericError(f"state has {self.values.shape[0]} sites, ring is {self.ring}")
        if self.ring < 1:
            raise NumericError("ring size must be positive")

    def copy(self, values=None, time=None) -> "LatticeState":
        return LatticeState(self.ring, self.values.copy() if values is None else values,
                            self.time if time is None else time, self.components)


@dataclass
class Trajectory:
    times: list
    states: list                # arrays of shape (N, ncomp)
    components: tuple
    ring: int
    dt: float
    seed: int | None = None

    def state(self, k: int) -> LatticeState:
        return LatticeState(self.ring, self.states[k], self.times[k], self.components)


@dataclass
class NumericReport:
    max_density_drift: float
    pointwise_divergence_residual: float
    steps: int
    dt: float
    seed: int | None
    ring: int = 0
    t_end: float = 0.0
    initial_density: float = 0.0
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        for k in ("max_density_drift", "pointwise_divergence_residual"):
            if not np.isfinite(getattr(self, k)):
                raise NumericError(f"{k} is not finite")

    def to_text(self) -> str:
        d = asdict(self)
        d["params"] = ",".join(f"{k}:{v!r}" for k, v in sorted(self.params.items())) or "-"
        return "\n".join(f"{k}={_fmt(v)}" for k, v in d.items())

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.6e}"
    return str(v)


# ---------------------------------------------------------------------------
# compilation of expressions to ring functions

def _components_for(ctx: Context, order: int) -> tuple:
    return tuple(ctx.jet(f, (k,), ctx.zero_shift) for f in ctx.dependent for k in range(order))


def _check_dims(ctx: Context):
    if ctx.p1 > 1 or ctx.p2 != 1:
        raise NumericError("numeric checks need at most one continuous and exactly one"
                           " discrete variable")


class _RingFunction:
    """Vectorized evaluation of an expression at every site of a ring."""

    def __init__(self, e, ctx: Context, components: Sequence[Jet],
                 params: Mapping[str, float] | None = None):
        _check_dims(ctx)
        e = sp.sympify(e)
        calls = e.atoms(AppliedUndef)
        if calls:
            raise NumericError(f"cannot evaluate unknown function {sorted(map(str, calls))[0]}")
        self.components = tuple(components)
        index = {c: k for k, c in enumerate(self.components)}
        self.atoms = []
        rep = {}
        for a in sorted(jets(e), key=lambda a: a.name):
            base = Jet(a.field, a.deriv, (0,) * len(a.shift))
            if base not in index:
                raise NumericError(f"unreduced derivative atom {a.name}")
            d = sp.Dummy()
            rep[a] = d
            self.atoms.append((d, index[base], a.shift[0]))
        params = dict(params or {})
        psyms = {}
        for s in e.free_symbols - set(rep):
            if s.name in ctx.continuous or s.name in ctx.discrete:
                continue
            if s.name not in params:
                if s.name in ctx.parameters:
                    params[s.name] = 1.0
                else:
                    raise NumericError(f"no value for symbol {s.name}")
            psyms[s] = params[s.name]
        self.params = params
        body = e.xreplace(rep).xreplace({s: sp.Float(v) for s, v in psyms.items()})
        self.t = ctx.xs[0] if ctx.p1 else sp.Dummy("t")
        self.n = ctx.ns[0]
        args = [self.t, self.n] + [d for d, _, _ in self.atoms]
        self.fn = sp.lambdify(args, body, modules="numpy")

    def __call__(self, values: np.ndarray, time: float) -> np.ndarray:
        N = values.shape[0]
        sites = np.arange(N)
        cols = [np.roll(values[:, c], -s) for _, c, s in self.atoms]
        out = self.fn(time, sites, *cols)
        return np.broadcast_to(np.asarray(out, dtype=float), (N,)).copy()


def eval_on_lattice(e, state: LatticeState, site: int, ctx: Context,
                    params: Mapping[str, float] | None = None) -> float:
    """Value of ``e`` at one site, with periodic wrapping of shifts."""
    comps = state.components or _components_for(ctx, state.values.shape[1])
    val = float(_RingFunction(e, ctx, comps, params)(state.values, state.time)[site % state.ring])
    if not np.isfinite(val):
        raise NumericError(f"non-finite value at site {site}")
    return val


# ---------------------------------------------------------------------------
# integration

def _time_solved_form(sys: DDESystem):
    ctx = sys.ctx
    if ctx.p1 != 1:
        raise NumericError("integration needs one continuous variable")
    forms = {}
    for sf in sys.solved_forms:
        if sf.lead.deriv[0] > 0 and not any(sf.lead.shift):
            forms[sf.lead.field] = sf
    missing = [f for f in ctx.dependent if f not in forms]
    if missing:
        raise NumericError(f"no solved form u^(k) = f for {missing}")
    return forms


def random_state(ctx: Context, ring: int = DEFAULT_RING, seed: int = DEFAULT_SEED,
                 order: int = 1, low: float = 0.5, high: float = 1.5) -> LatticeState:
    """Uniform random data in [low, high] from a seeded PCG64 generator."""
    rng = np.random.default_rng(seed)
    comps = _components_for(ctx, order)
    return LatticeState(ring, rng.uniform(low, high, size=(ring, len(comps))), 0.0, comps)


def integrate(sys: DDESystem, state0: LatticeState, dt: float, steps: int,
              params: Mapping[str, float] | None = None, seed: int | None = None) -> Trajectory:
    """Classical RK4 on the N*q(k)-dimensional ODE; all steps are stored."""
    if dt <= 0:
        raise NumericError("dt must be positive")
    ctx = sys.ctx
    _check_dims(ctx)
    forms = _time_solved_form(sys)
    order = max(sf.lead.deriv[0] for sf in forms.values())
    comps = _components_for(ctx, order)
    span = max([abs(s) for F in sys.equations for a in jets(F) for s in a.shift] + [0])
    if state0.ring < span + 1:
        raise NumericError(f"ring of {state0.ring} sites is smaller than the stencil span + 1")
    if state0.values.shape[1] != len(comps):
        raise NumericError(f"state needs {len(comps)} components per site")
    # y'[c] = next component, or the rhs for the top derivative
    rules = []
    for k, c in enumerate(comps):
        sf = forms[c.field]
        if c.deriv[0] + 1 < sf.lead.deriv[0]:
            rules.append(("copy", comps.index(c.bumped(0))))
        else:
            rules.append(("rhs", _RingFunction(sf.rhs, ctx, comps, params)))

    def f(t, y):
        out = np.empty_like(y)
        for k, (kind, r) in enumerate(rules):
            out[:, k] = y[:, r] if kind == "copy" else r(y, t)
        return out

    y = state0.values.copy()
    t = state0.time
    times, states = [t], [y.copy()]
    for step in range(1, steps + 1):
        k1 = f(t, y)
        k2 = f(t + dt / 2, y + dt / 2 * k1)
        k3 = f(t + dt / 2, y + dt / 2 * k2)
        k4 = f(t + dt, y + dt * k3)
        y = y + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        t = state0.time + step * dt
        if not np.all(np.isfinite(y)):
            raise NumericError(f"non-finite state at step {step}")
        times.append(t)
        states.append(y.copy())
    return Trajectory(times, states, comps, state0.ring, dt, seed)


# ---------------------------------------------------------------------------
# conservation-law checks

def check_cl_numeric(cl: ConservationLaw, traj: Trajectory,
                     params: Mapping[str, float] | None = None) -> NumericReport:
    """Drift of sum_n P1 (relative to its initial value) and max |D_t P1 + (S-id) P2|.

    The relative drift falls back to the absolute one when the initial
    density vanishes.
    """
    sys = cl.system
    if sys is None:
        raise NumericError("conservation law has no system attached")
    ctx = sys.ctx
    _check_dims(ctx)
    P1 = cl.P.p1[0] if ctx.p1 else sp.Integer(0)
    P2 = cl.P.p2[0]
    dens = _RingFunction(P1, ctx, traj.components, params)
    dtP1 = reduce_mod(total_derivative(P1, 0, ctx), sys) if ctx.p1 else sp.Integer(0)
    rate = _RingFunction(dtP1, ctx, traj.components, params)
    flux = _RingFunction(P2, ctx, traj.components, params)
    totals = []
    resid = 0.0
    for t, y in zip(traj.times, traj.states):
        totals.append(float(np.sum(dens(y, t))))
        p2 = flux(y, t)
        r = rate(y, t) + np.roll(p2, -1) - p2
        resid = max(resid, float(np.max(np.abs(r))))
    totals = np.asarray(totals)
    scale = abs(totals[0]) if totals[0] != 0 else 1.0
    drift = float(np.max(np.abs(totals - totals[0])) / scale)
    used = dict(dens.params)
    used.update(rate.params)
    used.update(flux.params)
    return NumericReport(drift, resid, len(traj.times) - 1, traj.dt, traj.seed, traj.ring,
                         float(traj.times[-1]), float(totals[0]), used)


def _order_of(sys: DDESystem) -> int:
    return max(sf.lead.deriv[0] for sf in _time_solved_form(sys).values())


def numeric_verify(cl: ConservationLaw, ring: int = DEFAULT_RING, dt: float = DEFAULT_DT,
                   t_end: float = DEFAULT_T_END, seed: int = DEFAULT_SEED,
                   params: Mapping[str, float] | None = None) -> NumericReport:
    """Random seeded ring data, RK4 to ``t_end``, then :func:`check_cl_numeric`."""
    sys = cl.system
    if sys is None:
        raise NumericError("conservation law has no system attached")
    steps = int(round(t_end / dt))
    if steps < 1:
        raise NumericError("t_end must be at least one step")
    s0 = random_state(sys.ctx, ring, seed, _order_of(sys))
    traj = integrate(sys, s0, dt, steps, params, seed)
    return check_cl_numeric(cl, traj, params)


def drift_ratio(cl: ConservationLaw, dt: float = DEFAULT_DT, **kw) -> tuple:
    """(drift at dt, drift at dt/2, ratio); RK4 should give a ratio near 16."""
    a = numeric_verify(cl, dt=dt, **kw).max_density_drift
    b = numeric_verify(cl, dt=dt / 2, **kw).max_density_drift
    return a, b, (a / b if b > 0 else float("inf"))
