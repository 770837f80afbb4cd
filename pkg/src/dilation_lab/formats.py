"""JSON and CSV formats: matrices, channel and source specs, curves, reports.

Matrices are ``{"rows": r, "cols": c, "data": [[re, im], ...]}`` in row-major
order.  Every float is written with 17 significant digits, which round-trips
IEEE doubles exactly (``-0.0`` included); NaN and infinities are refused.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from pathlib import Path

import numpy as np

from .channels import ChannelRep, transpose_map
from .dilation import KrausCurve, UnitaryCurve
from .dynamics import (
    CurveSource,
    LindbladGenerator,
    TimeGrid,
    amplitude_damping_channel,
    dephasing_channel,
    depolarizing_channel,
)

UNITARY_CURVE_FORMAT = "dilation-lab/unitary-curve"
KRAUS_CURVE_FORMAT = "dilation-lab/kraus-curve"
APPROX_FORMAT = "dilation-lab/approx-dilation"
FORMAT_VERSION = 1


class CodecError(ValueError):
    """Malformed JSON or a value that cannot be encoded."""


# -- text level -------------------------------------------------------------


def _fmt_float(x: float) -> str:
    if not math.isfinite(x):
        raise CodecError(f"cannot encode non-finite number {x!r}")
    return format(x, ".17g")


def _is_flat(seq) -> bool:
    return all(
        isinstance(x, (int, float, str, bool)) or x is None
        or (isinstance(x, (list, tuple)) and all(isinstance(y, (int, float)) for y in x))
        for x in seq
    )


def _emit(obj, indent: int, out: list[str]) -> None:
    pad = "  " * indent
    if isinstance(obj, dict):
        if not obj:
            out.append("{}")
            return
        out.append("{\n")
        items = list(obj.items())
        for i, (k, v) in enumerate(items):
            out.append(f"{pad}  {json.dumps(str(k))}: ")
            _emit(v, indent + 1, out)
            out.append(",\n" if i < len(items) - 1 else "\n")
        out.append(pad + "}")
    elif isinstance(obj, (list, tuple)):
        if _is_flat(obj):
            out.append("[")
            for i, x in enumerate(obj):
                if i:
                    out.append(", ")
                _emit(x, indent, out)
            out.append("]")
            return
        out.append("[\n")
        for i, x in enumerate(obj):
            out.append(pad + "  ")
            _emit(x, indent + 1, out)
            out.append(",\n" if i < len(obj) - 1 else "\n")
        out.append(pad + "]")
    elif isinstance(obj, bool) or obj is None:
        out.append(json.dumps(obj))
    elif isinstance(obj, (int, np.integer)):
        out.append(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        out.append(_fmt_float(float(obj)))
    elif isinstance(obj, str):
        out.append(json.dumps(obj))
    else:
        raise CodecError(f"cannot encode object of type {type(obj).__name__}")


def dumps(obj) -> str:
    """Deterministic JSON text with 17-significant-digit floats."""
    out: list[str] = []
    _emit(obj, 0, out)
    return "".join(out) + "\n"


def _parse_int(s: str):
    return -0.0 if s == "-0" else int(s)


def _reject_constant(name: str):
    raise CodecError(f"non-finite number {name} in JSON input")


def loads(text: str):
    try:
        return json.loads(text, parse_int=_parse_int, parse_constant=_reject_constant)
    except json.JSONDecodeError as exc:
        raise CodecError(f"malformed JSON: {exc}") from exc


def write_atomic(path, text: str) -> Path:
    """Write ``text`` to ``path`` via a temporary file and rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def write_json(path, obj) -> Path:
    return write_atomic(path, dumps(obj))


def write_csv(path, header: list[str], rows) -> Path:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt_float(float(x)) if isinstance(x, (float, np.floating)) else x for x in row])
    return write_atomic(path, buf.getvalue())


# -- matrices ---------------------------------------------------------------


def encode_matrix(m) -> dict:
    m = np.asarray(m, dtype=complex)
    if m.ndim == 1:
        m = m.reshape(-1, 1)
    if m.ndim != 2:
        raise CodecError(f"expected a 2-D matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise CodecError("matrix has non-finite entries")
    flat = m.reshape(-1)
    return {
        "rows": int(m.shape[0]),
        "cols": int(m.shape[1]),
        "data": [[float(z.real), float(z.imag)] for z in flat],
    }


def decode_matrix(obj) -> np.ndarray:
    if not isinstance(obj, dict):
        raise CodecError("matrix must be a JSON object")
    try:
        rows, cols, data = obj["rows"], obj["cols"], obj["data"]
    except KeyError as exc:
        raise CodecError(f"matrix is missing field {exc}") from exc
    if not (isinstance(rows, int) and isinstance(cols, int)) or rows <= 0 or cols <= 0:
        raise CodecError("rows and cols must be positive integers")
    if not isinstance(data, list) or len(data) != rows * cols:
        raise CodecError(f"data has {len(data) if isinstance(data, list) else '?'} entries, expected {rows * cols}")
    out = np.empty(rows * cols, dtype=complex)
    for i, pair in enumerate(data):
        if not (isinstance(pair, list) and len(pair) == 2):
            raise CodecError(f"entry {i} is not a [re, im] pair")
        re, im = pair
        if isinstance(re, bool) or isinstance(im, bool) or not isinstance(re, (int, float)) or not isinstance(im, (int, float)):
            raise CodecError(f"entry {i} is not numeric")
        re, im = float(re), float(im)
        if not (math.isfinite(re) and math.isfinite(im)):
            raise CodecError(f"entry {i} is not finite")
        out[i] = complex(re, im)
    return out.reshape(rows, cols)


# -- channels and sources ---------------------------------------------------


def encode_channel(rep: ChannelRep) -> dict:
    if rep.kind == "kraus":
        return {"kind": "kraus", "operators": [encode_matrix(k) for k in rep.data]}
    return {"kind": rep.kind, "matrix": encode_matrix(rep.data)}


def decode_channel(obj) -> ChannelRep:
    if not isinstance(obj, dict) or "kind" not in obj:
        raise CodecError("channel spec must be an object with a 'kind'")
    kind = obj["kind"]
    if kind == "kraus":
        return ChannelRep.from_kraus([decode_matrix(m) for m in obj.get("operators", [])])
    if kind in ("superop", "choi", "unitary"):
        m = decode_matrix(obj.get("matrix"))
        return {"superop": ChannelRep.from_superop, "choi": ChannelRep.from_choi, "unitary": ChannelRep.from_unitary}[kind](m)
    if kind == "builtin":
        name = obj.get("name")
        gamma = float(obj.get("gamma", 1.0))
        t = float(obj.get("t", 0.0))
        dim = int(obj.get("dim", 2))
        if name == "dephasing":
            return dephasing_channel(gamma, t)
        if name == "amplitude_damping":
            return amplitude_damping_channel(gamma, t)
        if name == "depolarizing":
            return depolarizing_channel(gamma, t, dim)
        if name == "transpose":
            return transpose_map(dim)
        if name == "identity":
            return ChannelRep.identity(dim)
        raise CodecError(f"unknown builtin channel {name!r}")
    raise CodecError(f"unknown channel kind {kind!r}")


def encode_source(src: CurveSource) -> dict:
    if src.kind == "builtin":
        return {"type": "builtin", "name": src.name, "gamma": src.gamma, "dim": src.dim}
    if src.kind == "semigroup":
        g = src.generator
        return {
            "type": "semigroup",
            "hamiltonian": encode_matrix(g.hamiltonian),
            "jumps": [encode_matrix(l) for l in g.jumps],
        }
    return {
        "type": "table",
        "times": [float(t) for t in src.times],
        "channels": [encode_channel(c) for c in src.channels],
    }


def decode_source(obj) -> CurveSource:
    if not isinstance(obj, dict) or "type" not in obj:
        raise CodecError("source spec must be an object with a 'type'")
    kind = obj["type"]
    if kind == "builtin":
        return CurveSource.builtin(obj.get("name", "dephasing"), float(obj.get("gamma", 1.0)), int(obj.get("dim", 2)))
    if kind == "semigroup":
        h = decode_matrix(obj["hamiltonian"])
        jumps = tuple(decode_matrix(l) for l in obj.get("jumps", []))
        return CurveSource.semigroup(LindbladGenerator(h, jumps))
    if kind == "table":
        return CurveSource.table(obj["times"], [decode_channel(c) for c in obj["channels"]])
    raise CodecError(f"unknown source type {kind!r}")


# -- curves -----------------------------------------------------------------


def _encode_grid(grid: TimeGrid) -> dict:
    return {"kind": grid.kind, "points": [float(t) for t in grid.points]}


def _decode_grid(obj) -> TimeGrid:
    return TimeGrid(np.asarray(obj["points"], dtype=float), obj.get("kind", "uniform"))


def unitary_curve_to_dict(curve: UnitaryCurve) -> dict:
    return {
        "format": UNITARY_CURVE_FORMAT,
        "version": FORMAT_VERSION,
        "system_dim": curve.system_dim,
        "ancilla_dim": curve.ancilla_dim,
        "omega_index": curve.omega_index,
        "tensor_order": "system (x) ancilla",
        "grid": _encode_grid(curve.grid),
        "unitaries": [encode_matrix(u) for u in curve.unitaries],
    }


def unitary_curve_from_dict(obj) -> UnitaryCurve:
    if obj.get("format") != UNITARY_CURVE_FORMAT:
        raise CodecError("not a unitary curve document")
    us = np.stack([decode_matrix(u) for u in obj["unitaries"]])
    return UnitaryCurve(_decode_grid(obj["grid"]), int(obj["system_dim"]), int(obj["ancilla_dim"]), us, int(obj["omega_index"]))


def kraus_curve_to_dict(curve: KrausCurve) -> dict:
    return {
        "format": KRAUS_CURVE_FORMAT,
        "version": FORMAT_VERSION,
        "grid": _encode_grid(curve.grid),
        "families": [[encode_matrix(k) for k in fam] for fam in curve.families],
    }


def kraus_curve_from_dict(obj) -> KrausCurve:
    from .channels import KrausSet

    if obj.get("format") != KRAUS_CURVE_FORMAT:
        raise CodecError("not a Kraus curve document")
    fams = tuple(KrausSet([decode_matrix(k) for k in fam], check=False) for fam in obj["families"])
    return KrausCurve(_decode_grid(obj["grid"]), fams)


def approx_to_dict(apx) -> dict:
    d = {"format": APPROX_FORMAT, "version": FORMAT_VERSION}
    d.update(apx.summary())
    d["segment_relabel"] = "ancilla copies alternate between nodes; constant segments keep their copy"
    d["nodes"] = [float(t) for t in apx.nodes]
    d["copies"] = [int(c) for c in apx.copies]
    d["isometries"] = [encode_matrix(v) for v in apx.isometries]
    d["node_unitaries"] = [encode_matrix(u) for u in apx.starts]
    return d


def _nan_if_none(x) -> float:
    return float("nan") if x is None else float(x)


def approx_from_dict(obj):
    from .approx import ApproxDilation

    if obj.get("format") != APPROX_FORMAT:
        raise CodecError("not an approximate-dilation document")
    return ApproxDilation(
        system_dim=int(obj["system_dim"]),
        interval=tuple(obj["interval"]),
        nodes=np.asarray(obj["nodes"], dtype=float),
        isometries=np.stack([decode_matrix(v) for v in obj["isometries"]]),
        copies=np.asarray(obj["copies"], dtype=int),
        starts=np.stack([decode_matrix(u) for u in obj["node_unitaries"]]),
        lipschitz_estimate=float(obj["lipschitz_estimate"]),
        lipschitz_used=float(obj["lipschitz_used"]),
        certified_error=float(obj["certified_error"]),
        epsilon=float(obj["epsilon"]),
        omega_index=int(obj["omega_index"]),
        identity_start=bool(obj["identity_start"]),
        measured_sup_error=_nan_if_none(obj["measured_sup_error"]),
        measured_sup_lower=_nan_if_none(obj["measured_sup_lower"]),
        verification_points=int(obj["verification_points"]),
        notes=list(obj.get("notes", [])),
    )
