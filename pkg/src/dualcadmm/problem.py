"""
Coupled resource allocation problems.

    minimize    sum_i f_i(x_i)
    subject to  sum_i (A_i x_i - b_i) in K

Agent ``i`` owns ``f_i``, ``A_i`` and ``b_i``; ``K`` and the communication
graph are shared.  Problems round-trip through a JSON document::

    {
      "graph": {"n": 2, "edges": [[0, 1]]},
      "cone": {"type": "zero", "dim": 1},
      "agents": [
        {"objective": {"type": "quadratic", "P": [[1]], "q": [0]},
         "A": [[1]], "b": [1]},
        ...
      ]
    }

Matrices are dense, row-major lists of rows.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import cones
from .graph import Graph, GraphError
from .objectives import ObjectiveError, evaluate, objective_from_dict, objective_to_dict


class ProblemFormatError(ValueError):
    """Malformed or inconsistent problem data; the message names the field."""


@dataclass(eq=False)
class AgentProblem:
    objective: object
    A: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        self.A = np.atleast_2d(np.asarray(self.A, dtype=float))
        self.b = np.atleast_1d(np.asarray(self.b, dtype=float))
        d = getattr(self.objective, "dim", None)
        if d is not None and d != self.A.shape[1]:
            raise ProblemFormatError(
                f"objective dimension {d} does not match A with {self.A.shape[1]} columns")
        if self.b.shape != (self.A.shape[0],):
            raise ProblemFormatError(f"b has length {self.b.shape[0]}, A has {self.A.shape[0]} rows")

    @property
    def n(self):
        return self.A.shape[1]


class CoupledProblem:
    def __init__(self, agents, cone, graph):
        self.agents = list(agents)
        self.cone = cone
        self.graph = graph
        m = cones.cone_dim(cone)
        if graph.n_nodes != len(self.agents):
            raise ProblemFormatError(
                f"graph has {graph.n_nodes} nodes but there are {len(self.agents)} agents")
        for i, a in enumerate(self.agents):
            if a.A.shape[0] != m:
                raise ProblemFormatError(
                    f"agents[{i}].A has {a.A.shape[0]} rows, cone dimension is {m}")

    @property
    def m(self):
        return cones.cone_dim(self.cone)

    @property
    def n_agents(self):
        return len(self.agents)

    def objective_value(self, xs):
        return float(sum(evaluate(a.objective, x) for a, x in zip(self.agents, xs)))

    def coupling(self, xs):
        """``sum_i (A_i x_i - b_i)``."""
        total = np.zeros(self.m)
        for a, x in zip(self.agents, xs):
            total += a.A @ x - a.b
        return total

    def data_scale(self):
        """A magnitude used to make residual tolerances relative."""
        scale = 0.0
        for a in self.agents:
            scale = max(scale, np.abs(a.A).max(initial=0.0), np.abs(a.b).max(initial=0.0))
        return float(scale)


def problem_to_dict(problem: CoupledProblem) -> dict:
    return {
        "graph": problem.graph.to_dict(),
        "cone": cones.cone_to_dict(problem.cone),
        "agents": [
            {"objective": objective_to_dict(a.objective), "A": a.A.tolist(), "b": a.b.tolist()}
            for a in problem.agents
        ],
    }


def _field(where, fn, *args):
    try:
        return fn(*args)
    except ProblemFormatError as exc:
        if str(exc).startswith("agents[") or where == "problem":
            raise
        raise ProblemFormatError(f"{where}: {exc}") from None
    except (KeyError, TypeError, ValueError, ObjectiveError, GraphError) as exc:
        if isinstance(exc, KeyError):
            exc = f"missing field {exc}"
        raise ProblemFormatError(f"{where}: {exc}") from None


def problem_from_dict(data: dict) -> CoupledProblem:
    if not isinstance(data, dict):
        raise ProblemFormatError("problem document must be an object")
    for key in ("graph", "cone", "agents"):
        if key not in data:
            raise ProblemFormatError(f"missing top-level field {key!r}")
    graph = _field("graph", Graph.from_dict, data["graph"])
    cone = _field("cone", cones.cone_from_dict, data["cone"])
    agents = []
    for i, entry in enumerate(data["agents"]):
        where = f"agents[{i}]"
        obj = _field(f"{where}.objective", objective_from_dict, entry.get("objective", {}))
        A = _field(f"{where}.A", np.asarray, entry.get("A"), float)
        b = _field(f"{where}.b", np.asarray, entry.get("b"), float)
        agents.append(_field(where, AgentProblem, obj, A, b))
    return _field("problem", CoupledProblem, agents, cone, graph)


def load_problem(path) -> CoupledProblem:
    with open(path) as fh:
        text = fh.read()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ProblemFormatError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return problem_from_dict(data)


def save_problem(problem: CoupledProblem, path):
    with open(path, "w") as fh:
        json.dump(problem_to_dict(problem), fh, indent=1)
