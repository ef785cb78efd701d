"""Run configuration: JSON file <-> typed objects, with the desk configuration as default."""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .ambient import DefiningPolynomial, PartitionedIndex, RegionConstants, ToricPotential
from .errors import ParameterError
from .fibration import ChartSpec, ParamPoint, Thresholds
from .solver import SolverConfig

DESK = {
    "n": 2,
    "partition": {"small": [0, 1], "large": [2]},
    "potential": [
        {"exp": [1, 0, 0], "coef": 1.0},
        {"exp": [0, 1, 0], "coef": 1.0},
        {"exp": [0, 0, 1], "coef": 1.0},
    ],
    "polynomial": [
        {"exp": [0, 0, 0], "re": 2.0, "im": 0.0},
        {"exp": [0, 0, 1], "re": 1.0, "im": 0.0},
    ],
    "t": 0.01,
    "fibre": {"r": [1.0], "c": [0.0, 0.0]},
    "solver": {
        "grid": [16, 64],
        "flow_steps": 16,
        "tol": 1e-9,
        "s_steps": 11,
        "min_ds": 0.00625,
        "max_newton": 8,
        "tail_max": 0.1,
        "box_frac": 0.5,
    },
    "region": {"C": 1.0, "C1": 2.0, "C2": 2.0, "C3": 0.5, "C4": 1.0, "eps_max": 0.5},
    "thresholds": {"phase": 1e-8, "lagrangian": 1e-8, "min_diag": 0.5},
    "sweep": {
        "center": {"xi": [0.2], "log_r": [0.0]},
        "offsets": [[-0.1, 0.0, 0.1], [-0.05, 0.0, 0.05]],
        "grid": [8, 64],
    },
    "overlap": {
        "small": [0, 1, 2],
        "large": [],
        "fibre": {"r": [0.5], "c": [0.0, 0.002]},
        "grid": [32, 32],
        "distance_max": 1e-6,
    },
    "flow": {"grid": [16, 16], "steps": 64},
    "model_check": {"grids": [[16, 16], [32, 32]]},
    "tbound": {"t_values": [0.01, 0.001, 0.0001], "grid": [8, 8], "growth_max": 1.1},
}


@dataclass
class RunConfig:
    raw: dict

    @classmethod
    def default(cls) -> "RunConfig":
        return cls(copy.deepcopy(DESK))

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ParameterError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(data)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        merged = copy.deepcopy(DESK)
        for k, v in data.items():
            if isinstance(v, dict) and isinstance(merged.get(k), dict):
                merged[k].update(v)
            else:
                merged[k] = v
        cfg = cls(merged)
        cfg.validate()
        return cfg

    def to_dict(self) -> dict:
        return copy.deepcopy(self.raw)

    def validate(self) -> None:
        self.partition()
        self.potential()
        self.polynomial()
        if not float(self.raw["t"]) > 0:
            raise ParameterError("t must be positive")

    # -- typed views --------------------------------------------------------

    @property
    def n(self) -> int:
        return int(self.raw["n"])

    @property
    def t(self) -> float:
        return float(self.raw["t"])

    def partition(self, section: dict | None = None) -> PartitionedIndex:
        sec = section or self.raw["partition"]
        return PartitionedIndex(self.n, tuple(sec["small"]), tuple(sec["large"]))

    def potential(self) -> ToricPotential:
        terms = {}
        for term in self.raw["potential"]:
            if len(term["exp"]) != self.n + 1:
                raise ParameterError("potential exponent has the wrong length")
            terms[tuple(term["exp"])] = float(term["coef"])
        return ToricPotential(self.n, terms)

    def polynomial(self) -> DefiningPolynomial:
        terms = {}
        for term in self.raw["polynomial"]:
            if len(term["exp"]) != self.n + 1:
                raise ParameterError("polynomial exponent has the wrong length")
            terms[tuple(term["exp"])] = complex(float(term.get("re", 0.0)), float(term.get("im", 0.0)))
        return DefiningPolynomial(self.n, terms)

    def solver(self, grid=None, tol=None) -> SolverConfig:
        s = self.raw["solver"]
        shape = tuple(int(v) for v in (grid if grid is not None else s["grid"]))
        if len(shape) != self.n:
            raise ParameterError("grid must have one size per angle")
        sched = s.get("schedule")
        if sched is None:
            sched = [round(float(v), 12) for v in np.linspace(0.0, 1.0, int(s["s_steps"]))]
        return SolverConfig(
            shape=shape,
            flow_steps=int(s["flow_steps"]),
            tol=float(tol if tol is not None else s["tol"]),
            schedule=tuple(float(v) for v in sched),
            min_ds=float(s["min_ds"]),
            max_newton=int(s["max_newton"]),
            tail_max=float(s["tail_max"]),
            box_frac=float(s["box_frac"]),
        )

    def region(self) -> RegionConstants:
        return RegionConstants(**{k: float(v) for k, v in self.raw["region"].items()})

    def thresholds(self) -> Thresholds:
        return Thresholds(**{k: float(v) for k, v in self.raw["thresholds"].items()})

    def chart(self, grid=None, tol=None, partition: dict | None = None) -> ChartSpec:
        return ChartSpec(
            self.partition(partition), self.potential(), self.polynomial(), self.t,
            self.solver(grid, tol), self.region(), self.thresholds(),
        )

    def fibre(self, r=None, c=None):
        f = self.raw["fibre"]
        return (tuple(float(v) for v in (r if r is not None else f["r"])),
                tuple(float(v) for v in (c if c is not None else f["c"])))

    def sweep_center(self) -> ParamPoint:
        c = self.raw["sweep"]["center"]
        return ParamPoint(tuple(float(v) for v in c["xi"]), tuple(float(v) for v in c["log_r"]))


def load_config(path=None) -> RunConfig:
    return RunConfig.default() if path is None else RunConfig.from_file(path)
