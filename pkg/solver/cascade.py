from __future__ import annotations

import itertools
from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from geometry.metric import MetricSpec
from geometry.observer import ObserverCurve
from solver.forcing import SampledSource
from solver.grid import Grid
from solver.trace import TraceSeries, trace_along
from solver.wave import BLOWUP, Field, FieldHistory, HistoryRecorder, Recording, WaveOperator, solve_linear, solve_nonlinear
from util.errors import DependencyError, PreconditionError
from util.jobs import parallel_map
from util.log import log

Key = Tuple[int, ...]
Partition = Tuple[Key, Key, Key]


def key_of(indices: Iterable[int]) -> Key:
    indices = [int(i) for i in indices]
    key = tuple(sorted(set(indices)))
    if len(key) != len(indices):
        raise PreconditionError(f"repeated index in {indices}")
    return key


def name_of(key: Key) -> str:
    return "u_" + "".join(str(i) for i in key)


def ordered_triples(key: Key) -> Iterable[Partition]:
    """All ordered triples (A, B, C) of non-empty disjoint sets with union `key`."""
    for labels in itertools.product(range(3), repeat=len(key)):
        blocks = tuple(tuple(k for k, label in zip(key, labels) if label == b) for b in range(3))
        if all(blocks):
            yield blocks


def expansion(key: Key) -> Dict[Partition, int]:
    """
    The coefficients of d_{eps_J}(-u^3) at eps = 0 in terms of unordered partitions {A, B, C} of J:
    each term is -(number of ordered triples realizing the partition) u_A u_B u_C. Partitions with
    an even block are dropped, since u_K vanishes for |K| even.
    """
    counts: Counter = Counter()
    for triple in ordered_triples(key):
        if all(len(block) % 2 == 1 for block in triple):
            counts[tuple(sorted(triple, key=lambda b: (len(b), b)))] -= 1
    return dict(counts)


def partition_name(partition: Partition) -> str:
    return "".join("(" + "".join(str(i) for i in block) + ")" for block in partition)


@dataclass
class CascadePlan:
    """
    The fields u_K (K a non-empty odd subset of J) needed for u_J, in the order they can be
    solved, with the right-hand side terms of each. The terms of J itself may be a restriction of the full
    expansion of J (the u_reg / u_sing splits).
    """
    indices: Key
    order: List[Key]
    terms: Dict[Key, Dict[Partition, int]]
    label: str = ""

    @staticmethod
    def build(indices: Iterable[int], include: Optional[Sequence[Partition]] = None, exclude: Optional[Sequence[Partition]] = None,
              label: str = "") -> "CascadePlan":
        top = key_of(list(indices))
        if not top:
            raise PreconditionError("a cascade needs at least one index")
        if len(top) % 2 == 0:
            log.solver_verbose(f"{name_of(top)} has an even number of indices and vanishes identically")

        full = expansion(top) if len(top) > 1 else {}
        if include is not None or exclude is not None:
            normalized = lambda ps: {tuple(sorted((key_of(b) for b in p), key=lambda b: (len(b), b))) for p in ps}
            keep = set(full) if include is None else normalized(include)
            drop = set() if exclude is None else normalized(exclude)
            unknown = (keep | drop) - set(full)
            if unknown:
                raise PreconditionError(f"{', '.join(partition_name(p) for p in unknown)} not in the expansion of {name_of(top)}")
            full = {p: c for p, c in full.items() if p in keep and p not in drop}

        terms: Dict[Key, Dict[Partition, int]] = {top: full}
        pending = [block for partition in full for block in partition]
        while pending:
            key = pending.pop()
            if key in terms:
                continue
            terms[key] = expansion(key) if len(key) > 1 else {}
            pending.extend(block for partition in terms[key] for block in partition if block not in terms)

        order = sorted(terms, key=lambda k: (len(k), k))
        return CascadePlan(top, order, terms, label or name_of(top))

    def split(self, singular: Partition) -> Tuple["CascadePlan", "CascadePlan"]:
        """(regular, singular): the expansion of the top index set without and with only `singular`."""
        regular = CascadePlan.build(self.indices, exclude=[singular], label=self.label + "_reg")
        sing = CascadePlan.build(self.indices, include=[singular], label=self.label + "_sing")
        return regular, sing

    def multiplicities(self) -> Dict[str, Dict[str, int]]:
        return {name_of(key): {partition_name(p): c for p, c in self.terms[key].items()} for key in self.order if len(key) > 1}


# the singular parts of u_0123456 and u_01234
U_SINGULAR: Partition = ((5,), (6,), (0, 1, 2, 3, 4))
V_SINGULAR: Partition = ((0,), (4,), (1, 2, 3))


def assemble_cascade_rhs(indices, fields: Mapping[Key, np.ndarray], terms: Optional[Dict[Partition, int]] = None,
                         sources: Optional[Mapping[int, np.ndarray]] = None, shape=None) -> np.ndarray:
    """
    Right-hand side of box_g u_J = r_J: the source f_j for J = {j}, otherwise
    sum over partitions {A, B, C} of J of c_{ABC} u_A u_B u_C (c = -6 for the full expansion).
    Fields may be single levels or whole histories; products are taken elementwise.

    Raises:
        DependencyError: If a lower-order field (or the source of a single index) is missing.
    """
    key = key_of(list(indices))
    if len(key) == 1:
        if sources is None or key[0] not in sources:
            raise DependencyError(f"source f_{key[0]} is required for {name_of(key)}")
        return np.asarray(sources[key[0]], dtype=float)

    terms = expansion(key) if terms is None else terms
    out = None
    for partition, coefficient in terms.items():
        missing = [block for block in partition if block not in fields]
        if missing:
            raise DependencyError(f"{name_of(key)} needs {', '.join(name_of(b) for b in missing)}")
        a, b, c = (fields[block] for block in partition)
        term = coefficient * a * b * c
        out = term if out is None else out + term
    if out is None:
        if shape is None:
            shape = next(iter(fields.values())).shape if fields else ()
        out = np.zeros(shape)
    return out


@dataclass(eq=False)
class CascadeResult:
    plan: CascadePlan
    histories: Dict[Key, FieldHistory]
    finals: Dict[Key, np.ndarray]
    traces: Dict[Key, TraceSeries] = field(default_factory=dict)
    skipped_terms: int = 0

    @property
    def top(self) -> np.ndarray:
        return self.finals[self.plan.indices]


def solve_cascade(spec: MetricSpec, grid: Grid, sources: Mapping[int, SampledSource], plan: CascadePlan,
                  recording: Optional[Recording] = None, record: Optional[Iterable[Key]] = None,
                  curve: Optional[ObserverCurve] = None, operator: Optional[WaveOperator] = None,
                  blowup: float = BLOWUP) -> CascadeResult:
    """
    Direct multi-fold linearization: advances every u_K of the plan in lockstep, each step using
    the current levels of the lower-order fields in its right-hand side. Terms with an identically
    zero factor at a level are skipped. Fields listed in `record` (default: the top one) keep the
    given recording and are traced along `curve` when one is given.
    """
    operator = operator or WaveOperator(spec, grid)
    missing = [j for key in plan.order if len(key) == 1 for j in key if j not in sources]
    if missing:
        raise DependencyError(f"sources {missing} are required by {plan.label}")

    record = {plan.indices} if record is None else {key_of(list(k)) for k in record}
    fields = {key: Field.zero(grid) for key in plan.order}
    recorders = {key: HistoryRecorder(grid, recording if key in record else None) for key in plan.order}
    for key in plan.order:
        recorders[key].observe(fields[key])

    skipped = 0
    with log.progress(f"cascade {plan.label}", total=grid.steps) as progress:
        for n in range(grid.steps):
            levels = {key: f.u for key, f in fields.items()}
            zero = {key for key, f in fields.items() if f.peak == 0.0}
            rhs = {}
            for key in plan.order:
                if len(key) == 1:
                    source = sources[key[0]]
                    if source.covers(n):
                        r = np.zeros(grid.shape)
                        source.add_to(r, n)
                        rhs[key] = r
                    continue
                active = {p: c for p, c in plan.terms[key].items() if not any(block in zero for block in p)}
                skipped += len(plan.terms[key]) - len(active)
                if active:
                    rhs[key] = assemble_cascade_rhs(key, levels, active)
            for key in plan.order:
                operator.step(fields[key], rhs.get(key), blowup)
                recorders[key].observe(fields[key])
            progress.advance(status=f"t={grid.times[n + 1]:.3f}")

    histories = {key: recorders[key].finish(fields[key], label=name_of(key)) for key in plan.order}
    result = CascadeResult(plan, histories, {key: fields[key].u for key in plan.order}, skipped_terms=skipped)
    if curve is not None:
        for key in record:
            result.traces[key] = trace_along(curve, histories[key], label=name_of(key))
    log.solver_verbose(f"cascade {plan.label}: {len(plan.order)} fields, sup |{name_of(plan.indices)}| = {histories[plan.indices].sup_norm():.3e}")
    return result


@dataclass(eq=False)
class MultiIndexRun:
    """
    A mixed eps-derivative d_{eps_J} u_eps at eps = 0 from the central-difference stencil over all
    sign patterns of eps_j, j in J.
    """
    indices: Key
    eps: Dict[int, float]
    stencil_order: int
    final: np.ndarray
    levels: np.ndarray
    data: Optional[np.ndarray]
    trace: Optional[TraceSeries]
    corners: int
    noise: Optional[float] = None

    def to_dict(self) -> dict:
        return {"indices": list(self.indices), "eps": {str(k): v for k, v in self.eps.items()}, "stencil_order": self.stencil_order,
                "corners": self.corners, "noise": self.noise}


def _corner(task) -> Tuple[np.ndarray, np.ndarray, Optional[np.ndarray], Optional[np.ndarray]]:
    spec, grid, terms, recording, curve, blowup = task
    history = solve_nonlinear(spec, grid, terms, recording, blowup=blowup)
    trace = trace_along(curve, history).values if curve is not None else None
    data = history.data if recording is not None and recording.stride else None
    return history.final.u, history.levels, data, trace


def amplitude_eps(spec: MetricSpec, grid: Grid, sources: Mapping[int, SampledSource], indices: Iterable[int],
                  eps_scale: float = 2e-2) -> Dict[int, float]:
    """eps_j = eps_scale / sup |u_j| with u_j the linear response to f_j."""
    eps = {}
    operator = WaveOperator(spec, grid)
    for j in indices:
        peak = solve_linear(spec, grid, sources[j], operator=operator).sup_norm()
        if peak == 0.0:
            raise PreconditionError(f"source f_{j} produces a vanishing linear response")
        eps[j] = eps_scale / peak
    return eps


def epsilon_stencil(spec: MetricSpec, grid: Grid, sources: Mapping[int, SampledSource], indices: Iterable[int],
                    eps: Mapping[int, float], recording: Optional[Recording] = None, curve: Optional[ObserverCurve] = None,
                    jobs: Optional[int] = 1, halving: bool = False, richardson: bool = False, blowup: float = BLOWUP) -> MultiIndexRun:
    """
    2^|J| nonlinear solves with f = sum_j s_j eps_j f_j, s in {+-1}^J, combined as
    sum_s (prod_j s_j) u_s / prod_j (2 eps_j).

    With `halving`, the stencil is repeated at eps / 2 and the relative difference is reported as
    noise (warned about when it exceeds the signal); `richardson` then returns (4 R(eps/2) - R(eps)) / 3.

    Raises:
        IntegrationError: If any corner solve blows up.
    """
    key = key_of(list(indices))
    if not 1 <= len(key) <= 7:
        raise PreconditionError(f"stencils are built for 1 to 7 indices, got {len(key)}")
    missing = [j for j in key if j not in sources or j not in eps]
    if missing:
        raise DependencyError(f"sources or eps missing for indices {missing}")

    def stencil(scale: float) -> Tuple[np.ndarray, np.ndarray, Optional[np.ndarray], Optional[np.ndarray]]:
        patterns = list(itertools.product((1.0, -1.0), repeat=len(key)))
        tasks = []
        for signs in patterns:
            terms = [(s * scale * eps[j], sources[j]) for s, j in zip(signs, key)]
            tasks.append((spec, grid, terms, recording, curve, blowup))
        results = parallel_map(_corner, tasks, jobs, description=f"stencil {name_of(key)}")
        denominator = float(np.prod([2 * scale * eps[j] for j in key]))
        weights = [float(np.prod(signs)) / denominator for signs in patterns]

        final = sum(w * r[0] for w, r in zip(weights, results))
        data = None if results[0][2] is None else sum(w * r[2] for w, r in zip(weights, results))
        trace = None if results[0][3] is None else sum(w * r[3] for w, r in zip(weights, results))
        return final, results[0][1], data, trace

    final, levels, data, trace_values = stencil(1.0)
    noise = None
    if halving:
        half_final, _, half_data, half_trace = stencil(0.5)
        signal = float(np.linalg.norm(half_final))
        noise = float(np.linalg.norm(final - half_final)) / signal if signal > 0 else float("inf")
        if noise > 1.0:
            log.warn(f"stencil {name_of(key)}: eps-halving changes the result by {noise:.2e} of its size")
        if richardson:
            final = (4 * half_final - final) / 3
            data = None if data is None else (4 * half_data - data) / 3
            trace_values = None if trace_values is None else (4 * half_trace - trace_values) / 3

    trace = None
    if curve is not None and trace_values is not None:
        r = np.linspace(-1.0, 1.0, len(trace_values))
        trace = TraceSeries(r, trace_values, curve.mu(r)[:, 0], 3, name_of(key) + "_stencil")
    corners = 2 ** len(key) * (2 if halving else 1)
    return MultiIndexRun(key, {j: float(eps[j]) for j in key}, 2, final, levels, data, trace, corners, noise)
