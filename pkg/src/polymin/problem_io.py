"""Problem ingestion: the JSON problem format and a minimal QPS subset.

JSON schema
-----------
::

    {
      "name": "optional string",
      "n": 3, "m": 1,
      "A":  {"row": [...], "col": [...], "val": [...]},
      "bl": [...], "bu": [...],      # missing array = unbounded side
      "lo": [...], "hi": [...],
      "x0": [...],
      "objective": {"type": "quadratic",
                    "H": {"row": [...], "col": [...], "val": [...]},
                    "c": [...], "c0": 0.0}
                 | {"type": "linear", "c": [...], "c0": 0.0}
                 | {"type": "rosenbrock"}        # any registered name
    }

Individual bound entries may be the strings ``"inf"``/``"-inf"`` or
``null`` for an unbounded side.  The QPS reader covers the quadratic
programming subset of MPS (ROWS/COLUMNS/RHS/RANGES/BOUNDS plus
QUADOBJ/QMATRIX); unsupported features are rejected with diagnostics.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .exceptions import ParseError
from .model import Objective, Polyhedron
from .objectives import (
    BUILTIN_FUNCTIONS,
    builtin_objective,
    linear_objective,
    quadratic_objective,
)

GROUPS = ("linear", "quadratic", "general", "bound", "unconstrained")


@dataclass
class Problem:
    """A named problem instance: polyhedron, objective recipe, start point."""

    name: str
    polyhedron: Polyhedron
    objective_type: str
    objective_payload: dict = field(default_factory=dict)
    x0: np.ndarray = None

    def build_objective(self) -> Objective:
        """Fresh objective with its own evaluation counters."""
        if self.objective_type == "quadratic":
            return quadratic_objective(
                self.objective_payload["H"],
                self.objective_payload["c"],
                self.objective_payload.get("c0", 0.0),
                name=self.name,
            )
        if self.objective_type == "linear":
            return linear_objective(
                self.objective_payload["c"],
                self.objective_payload.get("c0", 0.0),
                name=self.name,
            )
        return builtin_objective(self.objective_type, self.polyhedron.n)

    @property
    def group(self) -> str:
        """Benchmark group derived from objective kind and constraints.

        Linear and quadratic objectives keep their kind; other
        objectives are ``general`` with row constraints, ``bound`` with
        only variable bounds, ``unconstrained`` with neither.
        """
        if self.objective_type == "linear":
            return "linear"
        if self.objective_type == "quadratic":
            return "quadratic"
        P = self.polyhedron
        if P.m > 0:
            return "general"
        if np.isfinite(P.lo).any() or np.isfinite(P.hi).any():
            return "bound"
        return "unconstrained"


def _parse_bound_list(values, size, default, name):
    if values is None:
        return None
    if not isinstance(values, list) or len(values) != size:
        raise ParseError(f"field {name!r} must be a list of length {size}")
    out = np.empty(size)
    for i, v in enumerate(values):
        if v is None:
            out[i] = default
        elif isinstance(v, str):
            s = v.strip().lower()
            if s in ("inf", "+inf", "infinity"):
                out[i] = math.inf
            elif s == "-inf":
                out[i] = -math.inf
            else:
                raise ParseError(f"field {name!r}[{i}]: cannot parse {v!r}")
        else:
            out[i] = float(v)
    return out


def _parse_triplets(spec, shape, name):
    if spec is None:
        return sp.csr_matrix(shape)
    for key in ("row", "col", "val"):
        if key not in spec:
            raise ParseError(f"field {name!r} is missing triplet list {key!r}")
    row, col, val = spec["row"], spec["col"], spec["val"]
    if not (len(row) == len(col) == len(val)):
        raise ParseError(f"field {name!r}: triplet lists have unequal lengths")
    try:
        mat = sp.coo_matrix(
            (np.asarray(val, dtype=float), (row, col)), shape=shape
        ).tocsr()
    except (ValueError, TypeError) as exc:
        raise ParseError(f"field {name!r}: {exc}") from exc
    return mat


def problem_from_dict(data: dict, name: str = "problem") -> Problem:
    """Build a problem from the JSON dictionary, with field diagnostics."""
    if not isinstance(data, dict):
        raise ParseError("problem file must contain a JSON object")
    for key in ("n",):
        if key not in data:
            raise ParseError(f"missing required field {key!r}")
    try:
        n = int(data["n"])
        m = int(data.get("m", 0))
    except (TypeError, ValueError) as exc:
        raise ParseError(f"fields 'n'/'m' must be integers: {exc}") from exc
    if m > 0 and "A" not in data:
        raise ParseError("field 'A' required when m > 0")
    A = _parse_triplets(data.get("A"), (m, n), "A") if m > 0 else None

    bl = _parse_bound_list(data.get("bl"), m, -math.inf, "bl")
    bu = _parse_bound_list(data.get("bu"), m, math.inf, "bu")
    lo = _parse_bound_list(data.get("lo"), n, -math.inf, "lo")
    hi = _parse_bound_list(data.get("hi"), n, math.inf, "hi")
    try:
        P = Polyhedron(n, A=A, bl=bl, bu=bu, lo=lo, hi=hi)
    except ValueError as exc:
        raise ParseError(f"invalid polyhedron: {exc}") from exc

    obj = data.get("objective")
    if obj is None:
        raise ParseError("missing required field 'objective'")
    if not isinstance(obj, dict) or "type" not in obj:
        raise ParseError("field 'objective' must be an object with a 'type'")
    kind = obj["type"]
    payload = {}
    if kind == "quadratic":
        if "c" not in obj:
            raise ParseError("quadratic objective requires field 'c'")
        payload["H"] = _parse_triplets(obj.get("H"), (n, n), "objective.H")
        payload["c"] = np.asarray(obj["c"], dtype=float)
        payload["c0"] = float(obj.get("c0", 0.0))
        if payload["c"].shape != (n,):
            raise ParseError("objective.c must have length n")
    elif kind == "linear":
        if "c" not in obj:
            raise ParseError("linear objective requires field 'c'")
        payload["c"] = np.asarray(obj["c"], dtype=float)
        payload["c0"] = float(obj.get("c0", 0.0))
        if payload["c"].shape != (n,):
            raise ParseError("objective.c must have length n")
    elif kind not in BUILTIN_FUNCTIONS:
        known = ", ".join(sorted(BUILTIN_FUNCTIONS))
        raise ParseError(f"unknown objective type {kind!r}; known: {known}")

    x0 = data.get("x0")
    if x0 is not None:
        x0 = np.asarray(x0, dtype=float)
        if x0.shape != (n,):
            raise ParseError("field 'x0' must have length n")
    else:
        x0 = np.clip(np.zeros(n), P.lo, P.hi)

    return Problem(
        name=data.get("name", name),
        polyhedron=P,
        objective_type=kind,
        objective_payload=payload,
        x0=x0,
    )


def problem_to_dict(problem: Problem) -> dict:
    """Serialize a problem back into the JSON schema."""
    P = problem.polyhedron

    def _bounds(arr):
        return [v if math.isfinite(v) else ("inf" if v > 0 else "-inf") for v in arr]

    data = {
        "name": problem.name,
        "n": P.n,
        "m": P.m,
        "lo": _bounds(P.lo),
        "hi": _bounds(P.hi),
        "x0": problem.x0.tolist(),
    }
    if P.m > 0:
        coo = P.A.tocoo()
        data["A"] = {
            "row": coo.row.tolist(),
            "col": coo.col.tolist(),
            "val": coo.data.tolist(),
        }
        data["bl"] = _bounds(P.bl)
        data["bu"] = _bounds(P.bu)
    obj = {"type": problem.objective_type}
    if problem.objective_type in ("quadratic", "linear"):
        obj["c"] = np.asarray(problem.objective_payload["c"]).tolist()
        c0 = problem.objective_payload.get("c0", 0.0)
        if c0:
            obj["c0"] = c0
        if problem.objective_type == "quadratic":
            coo = sp.coo_matrix(problem.objective_payload["H"])
            obj["H"] = {
                "row": coo.row.tolist(),
                "col": coo.col.tolist(),
                "val": coo.data.tolist(),
            }
    data["objective"] = obj
    return data


# ---------------------------------------------------------------------------
# minimal QPS/MPS subset


def _qps_tokens(path):
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line.strip() or line.lstrip().startswith("*"):
                continue
            is_section = not line[0].isspace()
            yield lineno, is_section, line.split()


def load_qps(path) -> Problem:
    """Read the quadratic-programming subset of an MPS/QPS file.

    Supported sections: NAME, OBJSENSE (MIN), ROWS, COLUMNS, RHS,
    RANGES, BOUNDS, QUADOBJ/QMATRIX, ENDATA.  The objective is
    ``0.5 x'Hx + c'x + c0`` following the usual QPS convention where
    QUADOBJ lists the lower triangle of ``H``.  Integer markers and
    unknown bound types are rejected.
    """
    path = Path(path)
    name = path.stem
    section = None
    obj_row = None
    row_kind = {}
    row_order = []
    col_order = []
    col_index = {}
    entries = []          # (row name, col name, value)
    c_entries = {}
    rhs = {}
    obj_const = 0.0
    ranges = {}
    bounds = []           # (type, col, value or None)
    q_entries = []
    q_section = None

    def fail(lineno, msg):
        raise ParseError(f"{path.name}:{lineno}: {msg}")

    for lineno, is_section, toks in _qps_tokens(path):
        if is_section:
            section = toks[0].upper()
            if section == "OBJSENSE":
                continue
            if section in ("QUADOBJ", "QMATRIX"):
                q_section = section
                continue
            if section not in (
                "NAME", "ROWS", "COLUMNS", "RHS", "RANGES", "BOUNDS", "ENDATA",
            ):
                fail(lineno, f"unsupported section {section!r}")
            if section == "ENDATA":
                break
            continue
        if section == "OBJSENSE":
            if toks[0].upper() not in ("MIN", "MINIMIZE"):
                fail(lineno, f"unsupported objective sense {toks[0]!r}")
        elif section == "NAME":
            name = toks[0]
        elif section == "ROWS":
            kind, rname = toks[0].upper(), toks[1]
            if kind == "N":
                if obj_row is not None:
                    fail(lineno, "multiple objective (N) rows")
                obj_row = rname
            elif kind in ("L", "G", "E"):
                row_kind[rname] = kind
                row_order.append(rname)
            else:
                fail(lineno, f"unsupported row type {kind!r}")
        elif section == "COLUMNS":
            if len(toks) >= 3 and toks[1].upper() == "'MARKER'":
                fail(lineno, "integer markers are not supported")
            cname = toks[0]
            if cname not in col_index:
                col_index[cname] = len(col_order)
                col_order.append(cname)
            pairs = toks[1:]
            if len(pairs) % 2 != 0:
                fail(lineno, "COLUMNS line must hold (row, value) pairs")
            for rname, sval in zip(pairs[::2], pairs[1::2]):
                try:
                    val = float(sval)
                except ValueError:
                    fail(lineno, f"bad numeric value {sval!r}")
                if rname == obj_row:
                    c_entries[cname] = c_entries.get(cname, 0.0) + val
                elif rname in row_kind:
                    entries.append((rname, cname, val))
                else:
                    fail(lineno, f"unknown row {rname!r}")
        elif section == "RHS":
            pairs = toks[1:]
            if len(pairs) % 2 != 0:
                fail(lineno, "RHS line must hold (row, value) pairs")
            for rname, sval in zip(pairs[::2], pairs[1::2]):
                val = float(sval)
                if rname == obj_row:
                    obj_const = -val
                elif rname in row_kind:
                    rhs[rname] = val
                else:
                    fail(lineno, f"unknown row {rname!r}")
        elif section == "RANGES":
            pairs = toks[1:]
            for rname, sval in zip(pairs[::2], pairs[1::2]):
                if rname not in row_kind:
                    fail(lineno, f"unknown row {rname!r}")
                ranges[rname] = float(sval)
        elif section == "BOUNDS":
            btype = toks[0].upper()
            if btype in ("UP", "LO", "FX"):
                if len(toks) < 4:
                    fail(lineno, f"bound {btype} needs a value")
                bounds.append((btype, toks[2], float(toks[3])))
            elif btype in ("FR", "MI", "PL"):
                bounds.append((btype, toks[2], None))
            else:
                fail(lineno, f"unsupported bound type {btype!r}")
        elif section in ("QUADOBJ", "QMATRIX"):
            if len(toks) < 3:
                fail(lineno, "quadratic entry needs col col value")
            q_entries.append((toks[0], toks[1], float(toks[2])))
        elif section is None:
            fail(lineno, "data before any section header")

    if obj_row is None:
        raise ParseError(f"{path.name}: no objective (N) row declared")
    n = len(col_order)
    m = len(row_order)
    if n == 0:
        raise ParseError(f"{path.name}: no columns declared")

    row_index = {rname: i for i, rname in enumerate(row_order)}
    if m > 0:
        rows = [row_index[r] for r, _, _ in entries]
        cols = [col_index[c] for _, c, _ in entries]
        vals = [v for _, _, v in entries]
        A = sp.coo_matrix((vals, (rows, cols)), shape=(m, n)).tocsr()
    else:
        A = None

    bl = np.full(m, -np.inf)
    bu = np.full(m, np.inf)
    for rname, i in row_index.items():
        kind = row_kind[rname]
        b = rhs.get(rname, 0.0)
        if kind == "L":
            bu[i] = b
        elif kind == "G":
            bl[i] = b
        else:
            bl[i] = bu[i] = b
        if rname in ranges:
            r = ranges[rname]
            if kind == "L":
                bl[i] = b - abs(r)
            elif kind == "G":
                bu[i] = b + abs(r)
            else:
                bl[i], bu[i] = (b, b + r) if r >= 0 else (b + r, b)

    lo = np.zeros(n)          # MPS default: x >= 0
    hi = np.full(n, np.inf)
    lo_set = np.zeros(n, dtype=bool)
    for btype, cname, val in bounds:
        if cname not in col_index:
            raise ParseError(f"{path.name}: bound on unknown column {cname!r}")
        j = col_index[cname]
        if btype == "UP":
            hi[j] = val
            if val < 0.0 and not lo_set[j]:
                lo[j] = -np.inf  # classic MPS convention
        elif btype == "LO":
            lo[j] = val
            lo_set[j] = True
        elif btype == "FX":
            lo[j] = hi[j] = val
            lo_set[j] = True
        elif btype == "FR":
            lo[j], hi[j] = -np.inf, np.inf
        elif btype == "MI":
            lo[j] = -np.inf
        elif btype == "PL":
            hi[j] = np.inf

    c = np.zeros(n)
    for cname, val in c_entries.items():
        c[col_index[cname]] = val

    H = sp.lil_matrix((n, n))
    for c1, c2, val in q_entries:
        if c1 not in col_index or c2 not in col_index:
            raise ParseError(f"{path.name}: quadratic entry on unknown column")
        i, j = col_index[c1], col_index[c2]
        if q_section == "QUADOBJ":
            H[i, j] += val
            if i != j:
                H[j, i] += val
        else:  # QMATRIX lists both triangles explicitly
            H[i, j] += val

    P = Polyhedron(n, A=A, bl=bl if m else None, bu=bu if m else None, lo=lo, hi=hi)
    x0 = np.clip(np.zeros(n), P.lo, P.hi)
    if H.nnz > 0:
        payload = {"H": H.tocsr(), "c": c, "c0": obj_const}
        kind = "quadratic"
    else:
        payload = {"c": c, "c0": obj_const}
        kind = "linear"
    return Problem(
        name=name, polyhedron=P, objective_type=kind,
        objective_payload=payload, x0=x0,
    )


def load_problem(path) -> Problem:
    """Load a problem file, dispatching on the extension."""
    path = Path(path)
    if not path.exists():
        raise ParseError(f"problem file not found: {path}")
    if path.suffix.lower() in (".qps", ".mps", ".sif"):
        if path.suffix.lower() == ".sif":
            raise ParseError("SIF decoding is not supported; use JSON or QPS")
        return load_qps(path)
    try:
        with open(path) as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path.name}: invalid JSON ({exc})") from exc
    return problem_from_dict(data, name=path.stem)
