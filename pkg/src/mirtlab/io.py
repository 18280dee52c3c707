"""Response-matrix CSV, parameter files and seeded simulation."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataFormatError, DimensionError
from .irt_core import MISSING, ItemKind, UnivariateItem
from .likelihood import PopulationModel, ResponseMatrix
from .mirt_models import GmirtItem, IndependentItem, ScalarProductItem

FORMAT_VERSION = 1
MODEL_KINDS = ("rasch", "2pl", "3pl", "sp", "independent", "gmirt")


# -- response matrices --------------------------------------------------------------------


def load_response_matrix(path) -> ResponseMatrix:
    """Read ``student_id,<item ids...>`` CSV; cells are 0, 1 or empty (not administered)."""
    path = Path(path)
    try:
        handle = path.open(newline="")
    except OSError as exc:
        raise DataFormatError(f"{path}: cannot open ({exc.strerror})") from None
    with handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise DataFormatError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if len(header) < 1 or header[0] != "student_id":
            raise DataFormatError(f"{path}:1: header must start with 'student_id'")
        item_ids = header[1:]
        dup = _first_duplicate(item_ids)
        if dup is not None:
            raise DataFormatError(f"{path}:1: duplicate item id {dup!r}")
        students, rows, seen = [], [], {}
        for line_no, record in enumerate(reader, start=2):
            if not record or all(not cell.strip() for cell in record):
                continue
            if len(record) != len(header):
                raise DataFormatError(
                    f"{path}:{line_no}: expected {len(header)} fields, found {len(record)} (ragged row)"
                )
            sid = record[0].strip()
            if not sid:
                raise DataFormatError(f"{path}:{line_no}: missing student id")
            if sid in seen:
                raise DataFormatError(f"{path}:{line_no}: duplicate student id {sid!r} (first on line {seen[sid]})")
            seen[sid] = line_no
            row = []
            for item, cell in zip(item_ids, record[1:]):
                cell = cell.strip()
                if cell == "":
                    row.append(MISSING)
                elif cell in ("0", "1"):
                    row.append(int(cell))
                else:
                    raise DataFormatError(
                        f"{path}:{line_no}: invalid response {cell!r} for student {sid!r}, item {item!r}"
                    )
            if item_ids and all(v == MISSING for v in row):
                raise DataFormatError(f"{path}:{line_no}: student {sid!r} has no administered responses")
            students.append(sid)
            rows.append(row)
    data = np.array(rows, dtype=np.int8).reshape(len(rows), len(item_ids))
    return ResponseMatrix(data, students, item_ids)


def _first_duplicate(values):
    seen = set()
    for v in values:
        if v in seen:
            return v
        seen.add(v)
    return None


def save_response_matrix(path, X: ResponseMatrix):
    with Path(path).open("w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["student_id", *X.item_ids])
        for sid, row in zip(X.student_ids, X.data):
            writer.writerow([sid, *("" if v == MISSING else str(int(v)) for v in row)])


def write_grid_csv(path, points, values):
    """Grid dump with header ``x,y,f`` for two dimensions and ``x1..xD,f`` otherwise."""
    points = np.asarray(points, dtype=float)
    dim = points.shape[1]
    header = ["x", "y", "f"] if dim == 2 else [f"x{k + 1}" for k in range(dim)] + ["f"]
    with Path(path).open("w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        for p, v in zip(points, np.asarray(values, dtype=float).reshape(-1)):
            writer.writerow([repr(float(x)) for x in p] + [repr(float(v))])


def write_trace_csv(path, trace):
    with Path(path).open("w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["iter", "loglik"])
        for k, value in enumerate(trace):
            writer.writerow([k, repr(float(value))])


# -- parameter files --------------------------------------------------------------------


@dataclass
class ParameterFile:
    kind: str
    dim: int
    items: list
    item_ids: list
    population: PopulationModel | None = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise DataFormatError(f"unknown model kind {self.kind!r}")
        if len(self.items) != len(self.item_ids):
            raise DataFormatError("item ids and item records differ in length")
        for item_id, item in zip(self.item_ids, self.items):
            if item.dim != self.dim:
                raise DimensionError(f"item {item_id!r} has dimension {item.dim}, file declares {self.dim}")
        if self.population is not None and self.population.dim != self.dim:
            raise DimensionError(f"population has dimension {self.population.dim}, file declares {self.dim}")


def _item_record(kind, item_id, item):
    if kind in ("rasch", "2pl", "3pl"):
        rec = {"a": item.a, "b": item.b, "c": item.c}
    elif kind == "sp":
        rec = {"a": item.a.tolist(), "b": item.b}
    elif kind == "independent":
        rec = {"a": item.a.tolist(), "b": item.b.tolist()}
    else:
        link = item.link
        rec = {"direction": item.direction.tolist(), "link": {"kind": link.kind.value, "a": link.a, "b": link.b, "c": link.c}}
    return {"id": item_id, **rec}


def _item_from_record(kind, rec):
    try:
        if kind == "rasch":
            return UnivariateItem.rasch(rec["b"])
        if kind == "2pl":
            return UnivariateItem.two_pl(rec["a"], rec["b"])
        if kind == "3pl":
            return UnivariateItem.three_pl(rec["a"], rec["b"], rec.get("c", 0.0))
        if kind == "sp":
            return ScalarProductItem(rec["a"], rec["b"])
        if kind == "independent":
            return IndependentItem(rec["a"], rec["b"])
        link = rec["link"]
        return GmirtItem(rec["direction"], UnivariateItem(ItemKind(link["kind"]), link["a"], link["b"], link.get("c", 0.0)))
    except KeyError as exc:
        raise DataFormatError(f"item {rec.get('id')!r} lacks field {exc.args[0]!r}") from None
    except (TypeError, ValueError) as exc:
        raise DataFormatError(f"item {rec.get('id')!r}: {exc}") from None


def save_parameters(path, params: ParameterFile):
    """Write a versioned JSON parameter file; floats use shortest round-trip repr."""
    doc = {
        "format_version": FORMAT_VERSION,
        "model": params.kind,
        "dimension": params.dim,
        "items": [_item_record(params.kind, i, it) for i, it in zip(params.item_ids, params.items)],
    }
    if params.population is not None:
        doc["population"] = {"mean": params.population.nu.tolist(), "covariance": params.population.Sigma.tolist()}
    if params.metadata:
        doc["metadata"] = params.metadata
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def load_parameters(path, *, dim: int | None = None, kind: str | None = None) -> ParameterFile:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except OSError as exc:
        raise DataFormatError(f"{path}: cannot open ({exc.strerror})") from None
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"{path}:{exc.lineno}: invalid JSON ({exc.msg})") from None
    if not isinstance(doc, dict):
        raise DataFormatError(f"{path}: top level must be an object")
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise DataFormatError(f"{path}: unsupported format_version {version!r} (expected {FORMAT_VERSION})")
    model = doc.get("model")
    if model not in MODEL_KINDS:
        raise DataFormatError(f"{path}: unknown model kind {model!r}")
    if kind is not None and model != kind:
        raise DataFormatError(f"{path}: file holds a {model!r} model, {kind!r} requested")
    declared = doc.get("dimension", 1)
    if not isinstance(declared, int) or declared < 1:
        raise DataFormatError(f"{path}: dimension must be a positive integer")
    if dim is not None and declared != dim:
        raise DimensionError(f"{path}: file has dimension {declared}, dimension {dim} requested")
    records = doc.get("items")
    if not isinstance(records, list) or not records:
        raise DataFormatError(f"{path}: 'items' must be a non-empty list")
    items, ids = [], []
    for k, rec in enumerate(records):
        if not isinstance(rec, dict):
            raise DataFormatError(f"{path}: item record {k} is not an object")
        ids.append(str(rec.get("id", f"i{k + 1}")))
        items.append(_item_from_record(model, rec))
    pop = None
    if "population" in doc:
        try:
            pop = PopulationModel(doc["population"]["mean"], doc["population"]["covariance"])
        except (KeyError, TypeError, ValueError) as exc:
            raise DataFormatError(f"{path}: invalid population record ({exc})") from None
    try:
        return ParameterFile(model, declared, items, ids, pop, doc.get("metadata", {}))
    except DimensionError as exc:
        raise DimensionError(f"{path}: {exc}") from None


def parameters_from_fit(result) -> ParameterFile:
    return ParameterFile(result.kind, result.dim, list(result.items), list(result.item_ids), result.population)


# -- simulation ------------------------------------------------------------------------


@dataclass
class SimulationSpec:
    n_students: int
    params: ParameterFile
    seed: int
    population: PopulationModel | None = None
    missing_rate: float = 0.0

    def __post_init__(self):
        if self.n_students < 1:
            raise ValueError("need at least one student")
        if self.seed is None:
            raise ValueError("a seed is required for simulation")
        if not 0.0 <= self.missing_rate < 1.0:
            raise ValueError("missing rate must lie in [0, 1)")


@dataclass
class Truth:
    thetas: np.ndarray
    params: ParameterFile
    student_ids: tuple


def simulate(spec: SimulationSpec):
    """Draw abilities from the population and Bernoulli responses from the item models.

    Returns ``(ResponseMatrix, Truth)``; the result depends only on the simulation settings.
    A student left with no administered item keeps one randomly chosen response.
    """
    rng = np.random.default_rng(spec.seed)
    pf = spec.params
    pop = spec.population or pf.population or PopulationModel.standard(pf.dim)
    if pop.dim != pf.dim:
        raise DimensionError(f"population dimension {pop.dim} does not match items ({pf.dim})")
    n = spec.n_students
    thetas = pop.nu + rng.standard_normal((n, pf.dim)) @ pop.cholesky.T
    probs = np.column_stack([np.broadcast_to(item.prob(thetas), (n,)) for item in pf.items])
    data = (rng.random(probs.shape) < probs).astype(np.int8)
    if spec.missing_rate > 0:
        mask = rng.random(data.shape) < spec.missing_rate
        empty = np.flatnonzero(mask.all(axis=1))
        mask[empty, rng.integers(0, data.shape[1], size=empty.size)] = False
        data[mask] = MISSING
    width = len(str(n))
    students = tuple(f"s{k + 1:0{width}d}" for k in range(n))
    return ResponseMatrix(data, students, pf.item_ids), Truth(thetas, pf, students)
