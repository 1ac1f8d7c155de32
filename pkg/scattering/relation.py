from __future__ import annotations

from typing import List, Optional, Sequence

from detector.desirable import desirable_condition
from detector.pipeline import DetectionSettings
from geometry.causal import CHRONOLOGICAL, causal_relation
from geometry.covector import Covector
from geometry.metric import DEFAULT_TOLERANCES, MetricSpec, Tolerances
from geometry.observer import ObserverCurve
from scattering.oracle import QuadrupleVerdict, VERDICT_COLUMNS, non_return_check, oracle_r2, ray_flows
from solver.grid import Grid
from util.errors import LabError
from util.jobs import parallel_map
from util.log import log
from util.resultcsv import ResultCSV


def _pipeline_verdict(results) -> Optional[bool]:
    verdicts = [result.verdict for result in results]
    if any(v is True for v in verdicts):
        return True
    if any(v is False for v in verdicts):
        return False
    return None


def evaluate_quadruple(task) -> QuadrupleVerdict:
    """
    One quadruple of a batch: chronology, oracle r1/r2, non-return and (with a grid) the wave
    pipeline. Failures are recorded on the verdict and never abort the batch.
    """
    index, spec, curve, quad, grid, settings, offsets, tolerances, seed = task
    verdict = QuadrupleVerdict(index, [xi.to_dict() for xi in quad])
    try:
        x0 = quad[0].base
        verdict.chronological = all(causal_relation(spec, xi.base, x0, tolerances) == CHRONOLOGICAL for xi in quad[1:])
        if not verdict.chronological:
            verdict.flags.append("x_0 is not in the chronological future of every x_j")
            return verdict

        curves = ray_flows(spec, quad, tolerances)
        oracle = oracle_r2(spec, quad, tolerances, curves=curves, seed=seed)
        oracle.id, oracle.chronological = index, True
        verdict = oracle

        verdict.non_return, verdict.non_return_margins = non_return_check(spec, curve, quad, tolerances, curves)
        if not verdict.non_return:
            verdict.flags.append("non-return condition fails, pipeline not evaluated")
            return verdict

        if grid is not None:
            results = desirable_condition(spec, grid, curve, quad, offsets, settings, tolerances)
            verdict.pipeline = _pipeline_verdict(results)
            verdict.pipeline_details = [result.to_dict() for result in results]
            if verdict.pipeline is None:
                verdict.flags.extend(flag for result in results for flag in result.flags)
    except LabError as e:
        verdict.flags.append(f"{type(e).__name__}: {e}")
        log.warn(f"quadruple {index}: {e}")
    return verdict


def build_relation(spec: MetricSpec, curve: ObserverCurve, quads: Sequence[Sequence[Covector]], grid: Optional[Grid] = None,
                   settings: Optional[DetectionSettings] = None, offsets: Sequence[float] = (0.8, 0.4, 0.2),
                   tolerances: Tolerances = DEFAULT_TOLERANCES, jobs: Optional[int] = 1, seed: int = 0) -> List[QuadrupleVerdict]:
    """
    Evaluates every quadruple (in parallel with `jobs`) and checks the containments on the batch:
    a pipeline-true quadruple has to satisfy r1, and r2 has to imply r1. Violations are logged
    and flagged, not raised.

    Without a grid only the geometric verdicts are computed.
    """
    tasks = [(index, spec, curve, list(quad), grid, settings, tuple(offsets), tolerances, seed + index) for index, quad in enumerate(quads)]
    verdicts = parallel_map(evaluate_quadruple, tasks, jobs, description="quadruples")

    for verdict in verdicts:
        if verdict.pipeline is True and verdict.r1 is not True:
            verdict.flags.append("necessity violated: pipeline true without r1")
            log.warn(f"quadruple {verdict.id}: pipeline detects a return singularity but r1 fails (residual {verdict.r1_residual})")
        if verdict.r2 is True and verdict.r1 is not True:
            verdict.flags.append("r2 without r1")
            log.error(f"quadruple {verdict.id}: r2 holds without r1")
    log.scattering(f"{len(verdicts)} quadruple(s): r1 {sum(v.r1 is True for v in verdicts)}, r2 {sum(v.r2 is True for v in verdicts)}, "
                   f"pipeline {sum(v.pipeline is True for v in verdicts)}")
    return verdicts


def write_verdicts(filename: str, verdicts: Sequence[QuadrupleVerdict]):
    with ResultCSV(filename, VERDICT_COLUMNS) as out:
        for verdict in verdicts:
            out.row(verdict.row())
