"""Per-iteration planner records and their JSON-lines serialization.

Numbers are written with 17 significant digits, which round-trips IEEE
doubles exactly; infinities (no obstacles in range) are encoded as null.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np


@dataclass
class TraceRecord:
    """Everything one planning iteration produced."""

    n: int
    n_split: int
    n_horizon: int
    cursor: int
    q_w: np.ndarray
    q_g: np.ndarray
    w1: float
    w2: float
    xs: np.ndarray
    us: np.ndarray
    status: str
    solver_iterations: int
    kkt_residual: float
    objective: float
    solve_time: float
    plan_time: float
    min_distance: float
    event_applied: bool = False
    advanced: bool = False

    @property
    def x_exec(self) -> np.ndarray:
        return self.xs[0]

    @property
    def u_exec(self) -> np.ndarray:
        return self.us[0]

    def to_dict(self) -> dict[str, Any]:
        return {
            "kind": "record",
            "n": self.n,
            "n_split": self.n_split,
            "n_horizon": self.n_horizon,
            "cursor": self.cursor,
            "q_w": self.q_w.tolist(),
            "q_g": self.q_g.tolist(),
            "w1": self.w1,
            "w2": self.w2,
            "xs": self.xs.tolist(),
            "us": self.us.tolist(),
            "x_exec": self.xs[0].tolist(),
            "u_exec": self.us[0].tolist(),
            "status": self.status,
            "solver_iterations": self.solver_iterations,
            "kkt_residual": self.kkt_residual,
            "objective": self.objective,
            "solve_time": self.solve_time,
            "plan_time": self.plan_time,
            "min_distance": None if math.isinf(self.min_distance) else self.min_distance,
            "event_applied": self.event_applied,
            "advanced": self.advanced,
        }

    @staticmethod
    def from_dict(data: dict[str, Any]) -> "TraceRecord":
        md = data.get("min_distance")
        return TraceRecord(
            n=data["n"],
            n_split=data["n_split"],
            n_horizon=data["n_horizon"],
            cursor=data["cursor"],
            q_w=np.array(data["q_w"], dtype=float),
            q_g=np.array(data["q_g"], dtype=float),
            w1=data["w1"],
            w2=data["w2"],
            xs=np.array(data["xs"], dtype=float),
            us=np.array(data["us"], dtype=float),
            status=data["status"],
            solver_iterations=data["solver_iterations"],
            kkt_residual=data["kkt_residual"],
            objective=data["objective"],
            solve_time=data["solve_time"],
            plan_time=data["plan_time"],
            min_distance=math.inf if md is None else md,
            event_applied=data.get("event_applied", False),
            advanced=data.get("advanced", False),
        )


@dataclass
class Trace:
    """Header (replay context) plus the record sequence."""

    header: dict[str, Any]
    records: list[TraceRecord] = field(default_factory=list)


def _format(value: Any) -> str:
    if value is None:
        return "null"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isnan(value):
            raise ValueError("NaN is not representable in a trace")
        if math.isinf(value):
            raise ValueError("serialize infinities as null at the field level")
        return format(value, ".17g")
    if isinstance(value, str):
        return json.dumps(value)
    if isinstance(value, (list, tuple)):
        return "[" + ",".join(_format(v) for v in value) + "]"
    if isinstance(value, dict):
        return "{" + ",".join(f"{json.dumps(str(k))}:{_format(v)}" for k, v in value.items()) + "}"
    if isinstance(value, np.ndarray):
        return _format(value.tolist())
    raise TypeError(f"cannot serialize {type(value)!r}")


def dump_line(obj: dict[str, Any]) -> str:
    return _format(obj)


def export_trace(trace: Trace, destination) -> None:
    """Write header plus one record per line to a path or file object."""
    own = isinstance(destination, (str, bytes)) or hasattr(destination, "__fspath__")
    fh = open(destination, "w", encoding="utf-8") if own else destination
    try:
        fh.write(dump_line({"kind": "header", **trace.header}) + "\n")
        for record in trace.records:
            fh.write(dump_line(record.to_dict()) + "\n")
    finally:
        if own:
            fh.close()


def load_trace(source) -> Trace:
    """Inverse of export_trace; rejects files without a leading header."""
    own = isinstance(source, (str, bytes)) or hasattr(source, "__fspath__")
    fh = open(source, "r", encoding="utf-8") if own else source
    try:
        lines = [line for line in fh.read().splitlines() if line.strip()]
    finally:
        if own:
            fh.close()
    if not lines:
        raise ValueError("empty trace file")
    header = json.loads(lines[0])
    if header.get("kind") != "header":
        raise ValueError("trace file must start with a header line")
    header.pop("kind")
    records = []
    for line in lines[1:]:
        data = json.loads(line)
        if data.get("kind") != "record":
            raise ValueError(f"unexpected line kind {data.get('kind')!r}")
        records.append(TraceRecord.from_dict(data))
    return Trace(header=header, records=records)
