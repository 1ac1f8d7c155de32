from typing import List, Optional

from experiments import experiment
from geometry.covector import Covector
from geometry.metric import MetricSpec, Tolerances
from scattering.generator import KINDS, R2, GeneratedQuadruple, generate_quadruples, quadruple_from_dict
from scattering.relation import build_relation, write_verdicts
from solver.grid import Grid
from util.errors import ConfigurationError
from util.log import log
from util.resultcsv import write_json


class RelationBatch(experiment.Experiment):
    """
    A batch of quadruples (given in the configuration or generated from witnesses) through the
    oracle and, with a grid, the wave pipeline: necessity (pipeline true implies r1) and
    sufficiency (r2 true mostly implies pipeline true) on the batch.
    """

    @property
    def name(self) -> str:
        return "relation-batch"

    @property
    def description(self) -> str:
        return f"Scattering relation batch on {self.spec.name}"

    def quadruples(self) -> List[GeneratedQuadruple]:
        spec = self.spec
        given = self.parameter("quadruples", None)
        if given is not None:
            return [GeneratedQuadruple(quadruple_from_dict(spec, entries, self.tolerances), "given", [], []) for entries in given]

        batch = self.parameter("batch", None) or [{"kind": R2, "count": int(self.parameter("count", 10))}]
        settings = self.settings()
        generated = []
        for index, entry in enumerate(batch):
            kind = entry.get("kind", R2)
            if kind not in KINDS:
                raise ConfigurationError(f"unknown quadruple kind '{kind}', expected one of {', '.join(KINDS)}")
            if "grid" in self.config:
                region, inside = self.quadruple_region(2 * settings.h)
            else:
                region = (self.spec.lower + 1.0, self.spec.upper - 1.0)
                inside = None
            generated.extend(generate_quadruples(spec, int(entry.get("count", 1)), region, self.seed + 1000 * index, kind,
                                                 tuple(entry.get("travel", (0.5, 1.0))), float(entry.get("offset", 1.0)),
                                                 float(entry.get("min_angle", 0.5)), inside, self.tolerances))
        return generated

    def run(self):
        generated = self.quadruples()
        write_json(self.path("quadruples.json"), [g.to_dict() for g in generated])
        quads: List[List[Covector]] = [g.quad for g in generated]

        grid: Optional[Grid] = self.grid if "grid" in self.config else None
        settings = self.settings() if grid is not None else None
        offsets = tuple(self.parameter("offsets", [0.8, 0.4, 0.2]))
        verdicts = build_relation(self.spec, self.curve, quads, grid, settings, offsets, self.tolerances, self.jobs, self.seed)
        write_verdicts(self.path("verdicts.csv"), verdicts)
        write_json(self.path("verdicts.json"), [v.to_dict() for v in verdicts])

        kinds = [g.kind for g in generated]
        self.check("r2 implies r1", sum(v.r2 is True and v.r1 is not True for v in verdicts), 0.0)
        self.check("necessity violations", sum(v.pipeline is True and v.r1 is not True for v in verdicts), 0.0)
        for kind in sorted(set(kinds)):
            members = [v for v, k in zip(verdicts, kinds) if k == kind]
            self.check(f"r1 among {kind}", sum(v.r1 is True for v in members), None, detail=f"{len(members)} quadruple(s)")
            self.check(f"r2 among {kind}", sum(v.r2 is True for v in members), None)
        if R2 in kinds:
            expected = [v for v, k in zip(verdicts, kinds) if k == R2]
            self.check("generated r2 quadruples confirmed", sum(v.r2 is True for v in expected) / len(expected),
                       self.limit("oracle_agreement", 0.9), at_least=True)

        if grid is None:
            log.experiment("no grid given, pipeline verdicts skipped", self)
            return
        positive = [v for v in verdicts if v.r2 is True and v.non_return is True]
        if positive:
            detected = sum(v.pipeline is True for v in positive)
            self.check("sufficiency", detected / len(positive), self.limit("sufficiency", 0.9), at_least=True,
                       detail=f"{detected}/{len(positive)} r2-true quadruples detected")
        else:
            log.warn(f"{self.name}: no r2-true non-return quadruple in the batch, sufficiency not checked")


class RelationBatchDescription(experiment.ExperimentDescription):
    @staticmethod
    def get_name() -> str:
        return "relation-batch"

    @staticmethod
    def get_description() -> str:
        return "Oracle and pipeline verdicts of the scattering relation on a batch of quadruples"

    @staticmethod
    def instantiate(spec: MetricSpec, config: dict, output_dir: str, tolerances: Tolerances, seed: int = 0, jobs=1) -> experiment.Experiment:
        return RelationBatch(spec, config, output_dir, tolerances, seed, jobs)
