"""Trace CSV persistence and run manifests.

The CSV contract: one header row, then one row per sample with columns in
the fixed order

    t, x_0 .. x_{n-1}, x_t, H, T, Htot, alpha, P_c, P_t, P_e, P_d

and every float written with 17 significant digits so a read-back is
bit-exact.  The manifest is a JSON sidecar carrying everything needed to
reproduce the run.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .sim_engine import TerminationReason, Trace

_FIXED_TAIL = ["x_t", "H", "T", "Htot", "alpha", "P_c", "P_t", "P_e", "P_d"]


class TraceFormatError(ValueError):
    """A trace file violates the CSV contract; carries the offending line."""

    def __init__(self, message: str, line: int):
        self.line = line
        super().__init__(f"line {line}: {message}")


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def trace_header(n_states: int) -> str:
    cols = ["t"] + [f"x_{i}" for i in range(n_states)] + _FIXED_TAIL
    return ",".join(cols)


def write_trace_csv(trace: Trace, path) -> None:
    path = Path(path)
    n = trace.n_states
    lines = [trace_header(n)]
    for i in range(len(trace)):
        row = [_fmt(trace.t[i])]
        row.extend(_fmt(v) for v in trace.x[i])
        row.extend(_fmt(v) for v in (
            trace.x_t[i], trace.plant_energy[i], trace.tank_energy[i],
            trace.total_energy[i], trace.alpha[i], trace.p_c[i],
            trace.p_t[i], trace.p_e[i], trace.p_d[i]))
        lines.append(",".join(row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def read_trace_csv(path) -> Trace:
    path = Path(path)
    with path.open("r", encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n")
        cols = header.split(",")
        if len(cols) < 1 + 1 + len(_FIXED_TAIL) or cols[0] != "t":
            raise TraceFormatError(f"unexpected header {header!r}", line=1)
        n = len(cols) - 1 - len(_FIXED_TAIL)
        expected = trace_header(n)
        if header != expected:
            raise TraceFormatError(
                f"header does not match the trace contract (expected {expected!r})", line=1)
        width = len(cols)
        data: list[list[float]] = []
        for lineno, raw in enumerate(fh, start=2):
            raw = raw.strip()
            if not raw:
                continue
            parts = raw.split(",")
            if len(parts) != width:
                raise TraceFormatError(
                    f"expected {width} fields, found {len(parts)}", line=lineno)
            try:
                data.append([float(p) for p in parts])
            except ValueError as err:
                raise TraceFormatError(str(err), line=lineno) from None
    if not data:
        raise TraceFormatError("no data rows", line=2)
    arr = np.asarray(data, dtype=float)
    k = 1 + n
    return Trace(
        t=arr[:, 0],
        x=arr[:, 1:k],
        x_t=arr[:, k],
        plant_energy=arr[:, k + 1],
        tank_energy=arr[:, k + 2],
        total_energy=arr[:, k + 3],
        alpha=arr[:, k + 4],
        p_c=arr[:, k + 5],
        p_t=arr[:, k + 6],
        p_e=arr[:, k + 7],
        p_d=arr[:, k + 8],
        meta={"source": str(path)},
    )


@dataclass
class RunManifest:
    """Everything needed to reproduce a CLI run and interpret its outputs."""

    scenario: str
    parameters: dict
    config_hash: str
    tool_version: str
    termination: dict
    outputs: list[str]
    trace_meta: dict = field(default_factory=dict)

    @classmethod
    def from_run(cls, trace: Trace, term: TerminationReason, outputs: list[str],
                 tool_version: str) -> "RunManifest":
        meta = dict(trace.meta)
        params = meta.pop("params", {})
        return cls(
            scenario=meta.get("scenario", ""),
            parameters=params,
            config_hash=meta.get("config_hash", ""),
            tool_version=tool_version,
            termination={"kind": term.kind, "time": term.time, "detail": term.detail},
            outputs=[str(p) for p in outputs],
            trace_meta=meta,
        )


def manifest_path_for(trace_path) -> Path:
    return Path(str(trace_path) + ".manifest.json")


def write_manifest(manifest: RunManifest, path) -> None:
    Path(path).write_text(
        json.dumps(asdict(manifest), indent=2, sort_keys=True, default=str) + "\n",
        encoding="utf-8")


def read_manifest(path) -> RunManifest:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    return RunManifest(
        scenario=payload.get("scenario", ""),
        parameters=payload.get("parameters", {}),
        config_hash=payload.get("config_hash", ""),
        tool_version=payload.get("tool_version", ""),
        termination=payload.get("termination", {}),
        outputs=payload.get("outputs", []),
        trace_meta=payload.get("trace_meta", {}),
    )
