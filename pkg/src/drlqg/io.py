"""On-disk formats: instance files, result bundles, iteration traces.

Documents are JSON with matrices as row-major nested arrays of decimal
literals; floats are emitted in shortest round-trip form (at most 17
significant digits), so ``parse(serialize(x)) == x`` bit-for-bit.  The trace
is CSV with header ``iter,f_value,surrogate_gap,elapsed_ms`` and floats
printed with 17 significant digits.  All writes go through a temporary file
in the target directory followed by an atomic rename.
"""

from __future__ import annotations

import csv
import json
import os
import tempfile

import numpy as np

from .ambiguity import AmbiguitySpec
from .lqg import CovarianceProfile, TimeVaryingSystem
from .solver import FWConfig, FWIteration, RobustSolution

INSTANCE_FORMAT = "drlqg-instance"
WORST_CASE_FORMAT = "drlqg-worst-case"
CONTROLLER_FORMAT = "drlqg-controller"
FORMAT_VERSION = 1
TRACE_HEADER = ("iter", "f_value", "surrogate_gap", "elapsed_ms")


class FormatError(ValueError):
    """A document failed schema validation; the message names the field."""


def _mat(a) -> list:
    return np.asarray(a, dtype=float).tolist()


def _get(doc: dict, path: str):
    node = doc
    for part in path.split("."):
        if not isinstance(node, dict) or part not in node:
            raise FormatError(f"missing field '{path}'")
        node = node[part]
    return node


def _as_array(doc, path: str) -> np.ndarray:
    try:
        arr = np.array(_get(doc, path), dtype=float)
    except (TypeError, ValueError) as exc:
        raise FormatError(f"field '{path}' is not a numeric array: {exc}") from None
    if not np.all(np.isfinite(arr)):
        raise FormatError(f"field '{path}' contains non-finite entries")
    return arr


def _atomic_write_text(path: str, text: str):
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json_atomic(path: str, doc: dict):
    _atomic_write_text(path, json.dumps(doc, indent=1) + "\n")


def _load_json(path: str) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}") from None


def write_instance(path: str, sys: TimeVaryingSystem, amb: AmbiguitySpec, generator=None):
    doc = {
        "format": INSTANCE_FORMAT,
        "version": FORMAT_VERSION,
        "dims": {"n": sys.n, "m": sys.m, "p": sys.p, "T": sys.T},
        "system": {
            "A": [_mat(a) for a in sys.A],
            "B": [_mat(b) for b in sys.B],
            "C": [_mat(c) for c in sys.C],
            "Q": [_mat(q) for q in sys.Q],
            "R": [_mat(r) for r in sys.R],
        },
        "ambiguity": {
            "rho_x0": amb.rho_x0,
            "rho_w": list(amb.rho_w),
            "rho_v": list(amb.rho_v),
            "nominal": {
                "X0": _mat(amb.nominal.X0),
                "W": [_mat(w) for w in amb.nominal.W],
                "V": [_mat(v) for v in amb.nominal.V],
            },
        },
    }
    if generator is not None:
        doc["generator"] = generator
    write_json_atomic(path, doc)


def read_instance(path: str) -> tuple[TimeVaryingSystem, AmbiguitySpec, dict]:
    doc = _load_json(path)
    if _get(doc, "format") != INSTANCE_FORMAT:
        raise FormatError(f"field 'format' must be '{INSTANCE_FORMAT}'")
    dims = {k: int(_get(doc, f"dims.{k}")) for k in ("n", "m", "p", "T")}
    try:
        sys = TimeVaryingSystem(
            A=_as_array(doc, "system.A"),
            B=_as_array(doc, "system.B"),
            C=_as_array(doc, "system.C"),
            Q=_as_array(doc, "system.Q"),
            R=_as_array(doc, "system.R"),
        )
        nominal = CovarianceProfile(
            X0=_as_array(doc, "ambiguity.nominal.X0"),
            W=tuple(_as_array(doc, "ambiguity.nominal.W")),
            V=tuple(_as_array(doc, "ambiguity.nominal.V")),
        )
        rho_w = _get(doc, "ambiguity.rho_w")
        rho_v = _get(doc, "ambiguity.rho_v")
        amb = AmbiguitySpec(
            nominal=nominal,
            rho_x0=float(_get(doc, "ambiguity.rho_x0")),
            rho_w=tuple(float(r) for r in rho_w),
            rho_v=tuple(float(r) for r in rho_v),
        )
    except ValueError as exc:
        if isinstance(exc, FormatError):
            raise
        raise FormatError(f"{path}: {exc}") from None
    if (sys.n, sys.m, sys.p, sys.T) != (dims["n"], dims["m"], dims["p"], dims["T"]):
        raise FormatError("field 'dims' disagrees with the system matrices")
    return sys, amb, doc.get("generator", {})


def write_trace_csv(path: str, trace):
    lines = [",".join(TRACE_HEADER)]
    for rec in trace:
        lines.append(
            f"{rec.k},{rec.f_value:.17g},{rec.surrogate_gap:.17g},{rec.wall_time * 1e3:.17g}"
        )
    _atomic_write_text(path, "\n".join(lines) + "\n")


def read_trace_csv(path: str) -> tuple[FWIteration, ...]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != TRACE_HEADER:
        raise FormatError(f"{path}: trace header must be {','.join(TRACE_HEADER)}")
    out = []
    for i, row in enumerate(rows[1:], start=2):
        try:
            out.append(
                FWIteration(
                    k=int(row[0]),
                    f_value=float(row[1]),
                    surrogate_gap=float(row[2]),
                    wall_time=float(row[3]) / 1e3,
                )
            )
        except (IndexError, ValueError) as exc:
            raise FormatError(f"{path}: bad trace row at line {i}: {exc}") from None
    return tuple(out)


def write_result_bundle(out_dir: str, sol: RobustSolution, controller_gain: np.ndarray):
    """Write worst_case.json, controller.json and trace.csv into ``out_dir``."""
    os.makedirs(out_dir, exist_ok=True)
    cfg = sol.config
    worst = {
        "format": WORST_CASE_FORMAT,
        "version": FORMAT_VERSION,
        "f_value": sol.f_value,
        "final_gap": sol.final_gap,
        "converged": sol.converged,
        "iterations": len(sol.trace),
        "config": {
            "delta": cfg.delta,
            "tol": cfg.tol,
            "max_iter": cfg.max_iter,
        },
        "covariance": {
            "X0": _mat(sol.worst_case.X0),
            "W": [_mat(w) for w in sol.worst_case.W],
            "V": [_mat(v) for v in sol.worst_case.V],
        },
    }
    write_json_atomic(os.path.join(out_dir, "worst_case.json"), worst)
    ctrl = {
        "format": CONTROLLER_FORMAT,
        "version": FORMAT_VERSION,
        "K": [_mat(k) for k in sol.controller.riccati.K],
        "L": [_mat(l) for l in sol.controller.kalman.L],
        "U_output": _mat(controller_gain),
    }
    write_json_atomic(os.path.join(out_dir, "controller.json"), ctrl)
    write_trace_csv(os.path.join(out_dir, "trace.csv"), sol.trace)


def read_worst_case(path: str) -> tuple[CovarianceProfile, dict]:
    doc = _load_json(path)
    if _get(doc, "format") != WORST_CASE_FORMAT:
        raise FormatError(f"field 'format' must be '{WORST_CASE_FORMAT}'")
    try:
        cov = CovarianceProfile(
            X0=_as_array(doc, "covariance.X0"),
            W=tuple(_as_array(doc, "covariance.W")),
            V=tuple(_as_array(doc, "covariance.V")),
        )
    except ValueError as exc:
        if isinstance(exc, FormatError):
            raise
        raise FormatError(f"{path}: {exc}") from None
    meta = {
        "f_value": float(_get(doc, "f_value")),
        "final_gap": float(_get(doc, "final_gap")),
        "converged": bool(_get(doc, "converged")),
        "config": FWConfig(
            delta=float(_get(doc, "config.delta")),
            tol=float(_get(doc, "config.tol")),
            max_iter=int(_get(doc, "config.max_iter")),
        ),
    }
    return cov, meta


def read_controller(path: str) -> tuple[tuple, tuple, np.ndarray]:
    doc = _load_json(path)
    if _get(doc, "format") != CONTROLLER_FORMAT:
        raise FormatError(f"field 'format' must be '{CONTROLLER_FORMAT}'")
    K = tuple(_as_array(doc, "K"))
    L = tuple(_as_array(doc, "L"))
    U = _as_array(doc, "U_output")
    return K, L, U
