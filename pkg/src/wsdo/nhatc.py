"""Nonhierarchical target-cascading coordinator.

Subproblem nodes exchange per-link target vectors ``t`` and response vectors
``r``; the coordinator penalizes the scaled inconsistency ``c = (t - r) / s``
with an augmented-Lagrangian term ``v'c + |w o c|^2`` and updates the
multipliers between outer iterations (``v += 2 w*w*c``; ``w`` grows by
``beta`` on elements whose inconsistency is not shrinking by at least
``gamma``).

Scheduling is Jacobi style: within an outer iteration every active node
solves against the previous iteration's link values, so node solves are
independent and may run anywhere (the dispatcher decides); a barrier
precedes each penalty update.

Two node flavors exist.  Continuous nodes own part of the decision space
per link (index selectors into their local vector) and minimize the
augmented objective with the SQP solver.  Evaluator nodes run a procedure
and report the values their side of each link currently produces; penalties
do not alter them, but their link inconsistencies still drive convergence
measurement.

A link participates in the convergence norm and in penalty updates exactly
when its target-owning node is active; links whose target side is frozen
are reported but cannot be driven to consistency.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import ConfigurationError, ValidationError
from .sqp import NlpProblem, sqp_solve

BETA_DEFAULT = 2.2
GAMMA_DEFAULT = 0.4


# ------------------------------------------------------------------ links --

@dataclass
class LinkSpec:
    link_id: str
    target_node: str
    response_node: str
    dim: int
    scale: float = 1.0
    t0: Optional[Sequence[float]] = None
    r0: Optional[Sequence[float]] = None


@dataclass
class CouplingState:
    """Runtime state of one link.

    ``t``/``r`` hold what the owning nodes last reported; the inconsistency,
    multiplier updates and the report all use them.  ``t_ex``/``r_ex`` are
    the under-relaxed values actually handed to the neighbors.
    """

    spec: LinkSpec
    t: np.ndarray
    r: np.ndarray
    t_ex: np.ndarray
    r_ex: np.ndarray
    v: np.ndarray
    w: np.ndarray
    c_prev: Optional[np.ndarray] = None

    @property
    def c(self) -> np.ndarray:
        return (self.t - self.r) / self.spec.scale

    def to_dict(self) -> dict:
        return {
            "link_id": self.spec.link_id,
            "t": self.t.tolist(),
            "r": self.r.tolist(),
            "c": self.c.tolist(),
            "v": self.v.tolist(),
            "w": self.w.tolist(),
        }


def init_coupling(spec: LinkSpec) -> CouplingState:
    t = np.zeros(spec.dim) if spec.t0 is None else np.asarray(spec.t0, dtype=float)
    r = np.zeros(spec.dim) if spec.r0 is None else np.asarray(spec.r0, dtype=float)
    if t.size != spec.dim or r.size != spec.dim:
        raise ValidationError(f"link {spec.link_id}: t0/r0 dimension mismatch")
    return CouplingState(spec=spec, t=t.copy(), r=r.copy(),
                         t_ex=t.copy(), r_ex=r.copy(),
                         v=np.zeros(spec.dim), w=np.ones(spec.dim))


# -------------------------------------------------------- penalty function --

@dataclass
class CouplingTerm:
    """One link's contribution to a penalized objective.

    ``c`` may be a constant vector or a callable of the decision vector.
    """

    c: object
    v: Sequence[float]
    w: Sequence[float]

    def value(self, x=None) -> float:
        c = np.atleast_1d(np.asarray(self.c(x) if callable(self.c) else self.c, dtype=float))
        v = np.atleast_1d(np.asarray(self.v, dtype=float))
        w = np.atleast_1d(np.asarray(self.w, dtype=float))
        if c.shape != v.shape or c.shape != w.shape:
            raise ValidationError(
                f"coupling dimension mismatch: c{c.shape}, v{v.shape}, w{w.shape}"
            )
        return float(v @ c) + float(np.sum((w * c) ** 2))


def augment_objective(f: Callable, couplings: Sequence[CouplingTerm]) -> Callable:
    """Penalized objective: f(x) + sum of v'c + |w o c|^2 over the links."""

    def penalized(x=None):
        total = f(x) if x is not None else f()
        for term in couplings:
            total += term.value(x)
        return float(total)

    return penalized


# ------------------------------------------------------------------ nodes --

@dataclass
class NodeResult:
    node_id: str
    values: Dict[str, List[float]]       # link id -> this node's side
    objective: float
    status: str = "ok"                   # ok | converged | max-iter | infeasible | error
    x: Optional[List[float]] = None
    payload: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "node_id": self.node_id,
            "values": {k: list(map(float, v)) for k, v in self.values.items()},
            "objective": self.objective,
            "status": self.status,
            "x": None if self.x is None else list(map(float, self.x)),
            "payload": self.payload,
        }

    @staticmethod
    def from_dict(d: dict) -> "NodeResult":
        return NodeResult(
            node_id=d["node_id"],
            values={k: list(v) for k, v in d["values"].items()},
            objective=float(d["objective"]),
            status=d.get("status", "ok"),
            x=None if d.get("x") is None else list(d["x"]),
            payload=d.get("payload", {}),
        )


class ContinuousNodeImpl:
    """Local NLP whose decision vector embeds outgoing targets and responses.

    ``t_idx`` / ``r_idx`` map link ids to index lists into the decision
    vector; the penalty pulls those components toward the neighbor values.
    """

    def __init__(self, dim: int, objective: Callable, gradient: Optional[Callable] = None,
                 ineq: Optional[Callable] = None, ineq_jac: Optional[Callable] = None,
                 eq: Optional[Callable] = None, eq_jac: Optional[Callable] = None,
                 lb=None, ub=None, x0=None,
                 t_idx: Optional[Dict[str, Sequence[int]]] = None,
                 r_idx: Optional[Dict[str, Sequence[int]]] = None,
                 sqp_tol: float = 1e-9, sqp_max_iter: int = 200):
        self.dim = dim
        self.objective = objective
        self.gradient = gradient
        self.ineq, self.ineq_jac = ineq, ineq_jac
        self.eq, self.eq_jac = eq, eq_jac
        self.lb, self.ub = lb, ub
        self.x0 = np.zeros(dim) if x0 is None else np.asarray(x0, dtype=float)
        self.t_idx = {k: list(v) for k, v in (t_idx or {}).items()}
        self.r_idx = {k: list(v) for k, v in (r_idx or {}).items()}
        self.sqp_tol = sqp_tol
        self.sqp_max_iter = sqp_max_iter

    def link_sides(self):
        sides = {link: "t" for link in self.t_idx}
        sides.update({link: "r" for link in self.r_idx})
        return sides

    def solve(self, incoming: Dict[str, Sequence[float]],
              penalties: Dict[str, dict], context: dict,
              x_prev: Optional[Sequence[float]], seed: int) -> NodeResult:
        terms = []   # (idx array, neighbor vector, sign, v, w, scale)
        for link, idx in self.t_idx.items():
            pen = penalties.get(link)
            if pen is None:
                continue
            terms.append((np.asarray(idx, dtype=int),
                          np.asarray(incoming[link], dtype=float), 1.0,
                          np.asarray(pen["v"], dtype=float),
                          np.asarray(pen["w"], dtype=float),
                          float(pen.get("scale", 1.0))))
        for link, idx in self.r_idx.items():
            pen = penalties.get(link)
            if pen is None:
                continue
            terms.append((np.asarray(idx, dtype=int),
                          np.asarray(incoming[link], dtype=float), -1.0,
                          np.asarray(pen["v"], dtype=float),
                          np.asarray(pen["w"], dtype=float),
                          float(pen.get("scale", 1.0))))

        def aug_objective(x):
            total = float(self.objective(x))
            for idx, other, sign, v, w, scale in terms:
                c = sign * (x[idx] - other) / scale
                total += float(v @ c) + float(np.sum((w * c) ** 2))
            return total

        aug_gradient = None
        if self.gradient is not None:
            def aug_gradient(x):
                grad = np.asarray(self.gradient(x), dtype=float).copy()
                for idx, other, sign, v, w, scale in terms:
                    c = sign * (x[idx] - other) / scale
                    grad[idx] += sign * (v + 2.0 * w * w * c) / scale
                return grad

        problem = NlpProblem(
            objective=aug_objective, gradient=aug_gradient,
            ineq=self.ineq, ineq_jac=self.ineq_jac,
            eq=self.eq, eq_jac=self.eq_jac,
            lb=self.lb, ub=self.ub,
        )
        x_start = self.x0 if x_prev is None else np.asarray(x_prev, dtype=float)
        res = sqp_solve(problem, x_start, tol=self.sqp_tol, max_iter=self.sqp_max_iter)
        x = np.asarray(res.x, dtype=float)
        values = {link: x[np.asarray(idx, dtype=int)].tolist()
                  for link, idx in list(self.t_idx.items()) + list(self.r_idx.items())}
        return NodeResult(
            node_id="", values=values, objective=float(self.objective(x)),
            status=res.status, x=x.tolist(),
            payload={"kkt_residual": res.kkt_residual, "sqp_iterations": res.iterations},
        )


class EvaluatorNodeImpl:
    """Procedure node: computes its link values from incoming data."""

    def __init__(self, fn: Callable, link_sides_map: Dict[str, str]):
        self.fn = fn
        self._sides = dict(link_sides_map)

    def link_sides(self):
        return dict(self._sides)

    def solve(self, incoming, penalties, context, x_prev, seed) -> NodeResult:
        values, objective, payload = self.fn(incoming, context, seed)
        return NodeResult(node_id="", values={k: list(map(float, np.atleast_1d(v)))
                                              for k, v in values.items()},
                          objective=float(objective), status="ok", payload=payload or {})


@dataclass
class SubproblemNode:
    """Coordinator-side node description.

    ``kind``/``params`` rebuild the solver from the registry (required for
    remote execution); ``impl`` may hold a ready instance for in-process use.
    """

    node_id: str
    kind: str = "custom"
    params: dict = field(default_factory=dict)
    impl: object = None

    def build_impl(self):
        if self.impl is not None:
            return self.impl
        factory = NODE_KINDS.get(self.kind)
        if factory is None:
            raise ConfigurationError(f"unknown node kind {self.kind!r}")
        self.impl = factory(self.params)
        return self.impl


NODE_KINDS: Dict[str, Callable[[dict], object]] = {}


def register_node_kind(kind: str, factory: Callable[[dict], object]) -> None:
    NODE_KINDS[kind] = factory


def build_node_impl(kind: str, params: dict):
    factory = NODE_KINDS.get(kind)
    if factory is None:
        raise ConfigurationError(f"unknown node kind {kind!r}")
    return factory(params)


def _quadratic_factory(params: dict):
    center = np.asarray(params["center"], dtype=float)
    dim = center.size

    def objective(x):
        return float(np.sum((x - center) ** 2))

    def gradient(x):
        return 2.0 * (x - center)

    return ContinuousNodeImpl(
        dim=dim, objective=objective, gradient=gradient,
        lb=params.get("lb"), ub=params.get("ub"),
        x0=params.get("x0", center.tolist()),
        t_idx=params.get("t_idx"), r_idx=params.get("r_idx"),
    )


register_node_kind("quadratic", _quadratic_factory)


# -------------------------------------------------------------- active set --

@dataclass
class ActiveSet:
    active: frozenset
    frozen: Dict[str, Dict[str, List[float]]] = field(default_factory=dict)

    def is_active(self, node_id: str) -> bool:
        return node_id in self.active


def configure_active_set(nodes: Sequence[SubproblemNode], links: Sequence[LinkSpec],
                         active_ids: Sequence[str],
                         frozen_values: Optional[Dict[str, Dict[str, Sequence[float]]]] = None,
                         ) -> ActiveSet:
    """Validate that every active-inactive link has its frozen side supplied."""
    ids = {n.node_id for n in nodes}
    unknown = set(active_ids) - ids
    if unknown:
        raise ConfigurationError(f"active ids not in graph: {sorted(unknown)}")
    active = frozenset(active_ids)
    frozen = {k: {side: list(map(float, vec)) for side, vec in v.items()}
              for k, v in (frozen_values or {}).items()}
    for spec in links:
        for side, owner in (("t", spec.target_node), ("r", spec.response_node)):
            other = spec.response_node if side == "t" else spec.target_node
            if owner not in active and other in active:
                supplied = frozen.get(spec.link_id, {})
                if side not in supplied:
                    raise ConfigurationError(
                        f"link {spec.link_id}: node {owner} is frozen but no "
                        f"frozen {'response' if side == 'r' else 'target'} was supplied"
                    )
                if len(supplied[side]) != spec.dim:
                    raise ConfigurationError(
                        f"link {spec.link_id}: frozen {side} has wrong dimension"
                    )
    return ActiveSet(active=active, frozen=frozen)


# -------------------------------------------------------------- dispatcher --

@dataclass
class SolveJob:
    node_id: str
    kind: str
    params: dict
    incoming: Dict[str, List[float]]
    penalties: Dict[str, dict]
    context: dict
    x_prev: Optional[List[float]]
    seed: int

    def to_dict(self) -> dict:
        return {
            "node_id": self.node_id, "kind": self.kind, "params": self.params,
            "incoming": self.incoming, "penalties": self.penalties,
            "context": self.context, "x_prev": self.x_prev, "seed": self.seed,
        }

    @staticmethod
    def from_dict(d: dict) -> "SolveJob":
        return SolveJob(
            node_id=d["node_id"], kind=d["kind"], params=d["params"],
            incoming=d["incoming"], penalties=d["penalties"],
            context=d.get("context", {}), x_prev=d.get("x_prev"),
            seed=int(d.get("seed", 0)),
        )


def execute_job(job: SolveJob, impl=None) -> NodeResult:
    """Run one node solve; shared by the in-process path and remote workers.

    Domain-level infeasibility becomes a status (the outer loop keeps the
    node's previous iterate); programming errors still raise.
    """
    from .errors import WsdoError   # local import: errors has no numpy dependency

    impl = impl or build_node_impl(job.kind, job.params)
    try:
        result = impl.solve(job.incoming, job.penalties, job.context, job.x_prev, job.seed)
    except WsdoError as exc:
        result = NodeResult(node_id=job.node_id, values={}, objective=float("nan"),
                            status="infeasible", payload={"error": str(exc)})
    result.node_id = job.node_id
    return result


class InProcessDispatcher:
    """Sequential local execution (Jacobi semantics make order irrelevant)."""

    def __init__(self):
        self.placements: Dict[str, str] = {}

    def dispatch(self, jobs: Sequence[SolveJob], impls: Dict[str, object]) -> List[NodeResult]:
        results = []
        for job in jobs:
            results.append(execute_job(job, impls.get(job.node_id)))
            self.placements[job.node_id] = "in-process"
        return results

    def describe(self) -> dict:
        return {"mode": "in-process"}

    def close(self):
        pass


# ------------------------------------------------------------- coordinator --

@dataclass
class NhatcReport:
    converged: bool
    iterations: int
    tol_c: float
    c_inf_history: List[float]
    node_objectives: Dict[str, List[float]]
    node_status: Dict[str, List[str]]
    link_c_history: Dict[str, List[float]]
    link_state_history: Dict[str, List[dict]]
    final_x: Dict[str, Optional[List[float]]]
    links: List[dict]
    measured_links: List[str]
    meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "numerics": {
                "converged": self.converged,
                "iterations": self.iterations,
                "tol_c": self.tol_c,
                "c_inf_history": self.c_inf_history,
                "node_objectives": self.node_objectives,
                "node_status": self.node_status,
                "link_c_history": self.link_c_history,
                "link_state_history": self.link_state_history,
                "final_x": self.final_x,
                "links": self.links,
                "measured_links": self.measured_links,
            },
            "meta": self.meta,
        }


def nhatc_solve(nodes: Sequence[SubproblemNode], links: Sequence[LinkSpec],
                tol_c: float = 1e-4, max_outer: int = 50,
                active: Optional[ActiveSet] = None,
                dispatcher=None,
                context_fn: Optional[Callable] = None,
                on_sweep: Optional[Callable] = None,
                on_iteration: Optional[Callable] = None,
                beta: float = BETA_DEFAULT, gamma: float = GAMMA_DEFAULT,
                relaxation: float = 0.5,
                inner_cap: int = 25, inner_tol: Optional[float] = None,
                seed: int = 0) -> NhatcReport:
    """Run the outer coordination loop until the inconsistency norm closes.

    Each outer iteration holds the multipliers fixed and sweeps the nodes
    Jacobi style (all solve against the previous sweep's exchange values,
    barrier, repeat) until the exchanged values stop moving, then applies
    the multiplier update once.  The exchange is under-relaxed by
    ``relaxation`` (new = relaxation * solved + rest * old), which leaves
    every fixpoint unchanged but stops simultaneous solves from
    swap-oscillating once penalty weights grow.

    ``context_fn(node_id) -> dict`` feeds non-link data to evaluator nodes at
    every sweep; ``on_sweep(results)`` folds results into caller state;
    ``on_iteration(iteration, results)`` fires at outer boundaries.
    Non-convergence is reported, never raised.
    """
    if tol_c <= 0:
        raise ValidationError("tol_c must be positive")
    t_start = time.monotonic()
    node_map = {n.node_id: n for n in nodes}
    if active is None:
        active = ActiveSet(active=frozenset(node_map))
    for spec in links:
        if spec.target_node not in node_map or spec.response_node not in node_map:
            raise ConfigurationError(f"link {spec.link_id} references unknown nodes")

    coupling = {spec.link_id: init_coupling(spec) for spec in links}
    for link_id, sides in active.frozen.items():
        if link_id not in coupling:
            raise ConfigurationError(f"frozen values for unknown link {link_id}")
        if "t" in sides:
            frozen_t = np.asarray(sides["t"], dtype=float)
            coupling[link_id].t = frozen_t.copy()
            coupling[link_id].t_ex = frozen_t.copy()
        if "r" in sides:
            frozen_r = np.asarray(sides["r"], dtype=float)
            coupling[link_id].r = frozen_r.copy()
            coupling[link_id].r_ex = frozen_r.copy()

    node_links: Dict[str, Dict[str, str]] = {}   # node -> link -> side
    impls: Dict[str, object] = {}
    for node in nodes:
        impls[node.node_id] = node.build_impl()
        node_links[node.node_id] = impls[node.node_id].link_sides()
    for node_id, sides in node_links.items():
        for link_id, side in sides.items():
            spec = coupling[link_id].spec
            owner = spec.target_node if side == "t" else spec.response_node
            if owner != node_id:
                raise ConfigurationError(
                    f"node {node_id} claims {side} side of link {link_id} "
                    f"but the spec assigns it to {owner}"
                )

    active_ids = sorted(nid for nid in node_map if active.is_active(nid))
    # a link is measurable/drivable iff its target owner is active
    measured = [spec.link_id for spec in links
                if active.is_active(spec.target_node)]

    x_prev: Dict[str, Optional[List[float]]] = {nid: None for nid in node_map}

    def build_jobs(zero_penalty: bool) -> List[SolveJob]:
        jobs = []
        for nid in active_ids:
            sides = node_links[nid]
            incoming = {}
            penalties = {}
            for link_id, side in sides.items():
                state = coupling[link_id]
                incoming[link_id] = (state.r_ex if side == "t" else state.t_ex).tolist()
                penalties[link_id] = {
                    "v": (np.zeros(state.spec.dim) if zero_penalty else state.v).tolist(),
                    "w": (np.zeros(state.spec.dim) if zero_penalty else state.w).tolist(),
                    "scale": state.spec.scale,
                }
            node = node_map[nid]
            jobs.append(SolveJob(
                node_id=nid, kind=node.kind, params=node.params,
                incoming=incoming, penalties=penalties,
                context=context_fn(nid) if context_fn else {},
                x_prev=x_prev[nid], seed=seed,
            ))
        return jobs

    def apply_results(results: Sequence[NodeResult], theta: float):
        for res in results:
            if res.status == "infeasible" or res.status == "error":
                continue   # keep previous iterate for this node
            for link_id, vec in res.values.items():
                side = node_links[res.node_id].get(link_id)
                state = coupling[link_id]
                arr = np.asarray(vec, dtype=float)
                if arr.size != state.spec.dim:
                    raise ValidationError(
                        f"node {res.node_id} returned dim {arr.size} for link "
                        f"{link_id} (expected {state.spec.dim})"
                    )
                if side == "t":
                    state.t = arr
                    state.t_ex = theta * arr + (1.0 - theta) * state.t_ex
                else:
                    state.r = arr
                    state.r_ex = theta * arr + (1.0 - theta) * state.r_ex
            if res.x is not None:
                x_prev[res.node_id] = list(res.x)

    dispatcher = dispatcher or InProcessDispatcher()
    objectives: Dict[str, List[float]] = {nid: [] for nid in node_map}
    statuses: Dict[str, List[str]] = {nid: [] for nid in node_map}
    link_hist: Dict[str, List[float]] = {l.link_id: [] for l in links}
    link_states: Dict[str, List[dict]] = {l.link_id: [] for l in links}
    c_inf_history: List[float] = []
    sweep_counts: List[int] = []
    if inner_tol is None:
        inner_tol = min(0.1 * tol_c, 1e-6)

    def run_sweeps(zero_penalty: bool) -> List[NodeResult]:
        """Jacobi sweeps to the exchange fixpoint for the current penalties."""
        results: List[NodeResult] = []
        prev_snapshot = None
        sweeps = 0
        for _ in range(max(1, inner_cap)):
            results = dispatcher.dispatch(build_jobs(zero_penalty), impls)
            apply_results(results, theta=1.0 if zero_penalty else relaxation)
            sweeps += 1
            if on_sweep:
                on_sweep(results)
            if not links:
                break
            snapshot = np.concatenate(
                [coupling[l.link_id].t / l.scale for l in links]
                + [coupling[l.link_id].r / l.scale for l in links]
            )
            if prev_snapshot is not None:
                if float(np.max(np.abs(snapshot - prev_snapshot))) <= inner_tol:
                    break
            prev_snapshot = snapshot
        sweep_counts.append(sweeps)
        return results

    # initialization: zero-penalty local solves seed the exchange values
    if active_ids:
        init_results = run_sweeps(zero_penalty=True)
        if on_iteration:
            on_iteration(0, init_results)

    converged = False
    iteration = 0
    for iteration in range(1, max_outer + 1):
        results = run_sweeps(zero_penalty=False)
        if on_iteration:
            on_iteration(iteration, results)
        by_node = {r.node_id: r for r in results}
        for nid in node_map:
            res = by_node.get(nid)
            objectives[nid].append(res.objective if res else float("nan"))
            statuses[nid].append(res.status if res else "frozen")

        c_inf = 0.0
        for spec in links:
            state = coupling[spec.link_id]
            link_c = float(np.max(np.abs(state.c))) if spec.dim else 0.0
            link_hist[spec.link_id].append(link_c)
            # v/w recorded before this iteration's multiplier update
            link_states[spec.link_id].append({
                "c": state.c.tolist(),
                "v": state.v.tolist(),
                "w": state.w.tolist(),
            })
            if spec.link_id in measured:
                c_inf = max(c_inf, link_c)
        c_inf_history.append(c_inf)

        if c_inf <= tol_c:
            converged = True
            break

        for link_id in measured:
            state = coupling[link_id]
            c = state.c
            state.v = state.v + 2.0 * state.w * state.w * c
            if state.c_prev is not None:
                grow = np.abs(c) > gamma * np.abs(state.c_prev)
                state.w = np.where(grow, beta * state.w, state.w)
            state.c_prev = c.copy()

    wall = time.monotonic() - t_start
    return NhatcReport(
        converged=converged,
        iterations=iteration,
        tol_c=tol_c,
        c_inf_history=c_inf_history,
        node_objectives=objectives,
        node_status=statuses,
        link_c_history=link_hist,
        link_state_history=link_states,
        final_x=dict(x_prev),
        links=[coupling[l.link_id].to_dict() for l in links],
        measured_links=list(measured),
        meta={
            "wall_time_s": wall,
            "dispatcher": dispatcher.describe(),
            "placements": dict(getattr(dispatcher, "placements", {})),
            "active_nodes": active_ids,
            "inner_sweeps": sweep_counts,
        },
    )


def solve_node(node: SubproblemNode, incoming: Dict[str, Sequence[float]],
               penalties: Dict[str, dict], context: Optional[dict] = None,
               x_prev: Optional[Sequence[float]] = None, seed: int = 0) -> NodeResult:
    """One local solve outside the outer loop (unit building block)."""
    impl = node.build_impl()
    result = impl.solve(incoming, penalties, context or {}, x_prev, seed)
    result.node_id = node.node_id
    return result
