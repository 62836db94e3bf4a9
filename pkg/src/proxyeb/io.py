"""File formats: area datasets, population files, scenario configs, tables.

Dataset CSV
    header ``area_id,count,sample_size[,<covariate>...]``, one row per area.
Population CSV
    header ``area_id,p,subquarter_id``, one row per area.
Scenario config
    JSON object whose keys mirror :class:`~proxyeb.simulation.ScenarioConfig`;
    see ``load_config`` for the accepted keys.
"""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path

import numpy as np

from .model import AreaDataset, ConfigError, DataError, EstimatorKind, Rule, validate_dataset

_DATASET_HEAD = ["area_id", "count", "sample_size"]
_POP_HEAD = ["area_id", "p", "subquarter_id"]


def _read_rows(path, expected_head, allow_extra=False):
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror or exc}") from None
    if not rows:
        raise DataError(f"{path}: empty file")
    head = [h.strip() for h in rows[0]]
    if head[: len(expected_head)] != expected_head or (not allow_extra and len(head) != len(expected_head)):
        raise DataError(f"{path}: line 1: expected header {','.join(expected_head)}{',...' if allow_extra else ''}")
    body = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(head):
            raise DataError(f"{path}: line {lineno}: expected {len(head)} fields, got {len(row)}")
        body.append((lineno, [c.strip() for c in row]))
    if not body:
        raise DataError(f"{path}: no data rows")
    return head, body


def _num(path, lineno, text, kind):
    try:
        return kind(text)
    except ValueError:
        raise DataError(f"{path}: line {lineno}: cannot parse {text!r} as {kind.__name__}") from None


def read_dataset_csv(path) -> AreaDataset:
    head, body = _read_rows(path, _DATASET_HEAD, allow_extra=True)
    ids, counts, sizes, cov = [], [], [], []
    for lineno, row in body:
        ids.append(row[0])
        counts.append(_num(path, lineno, row[1], int))
        sizes.append(_num(path, lineno, row[2], int))
        cov.append([_num(path, lineno, c, float) for c in row[3:]])
    covariates = np.array(cov, dtype=float).reshape(len(body), len(head) - 3)
    ds = AreaDataset(counts, sizes, covariates, tuple(head[3:]), tuple(ids))
    try:
        return validate_dataset(ds)
    except DataError as exc:
        if exc.index is not None:
            raise DataError(f"{path}: line {body[exc.index][0]}: {exc}", exc.index) from None
        raise DataError(f"{path}: {exc}") from None


def read_population_csv(path):
    from .simulation import Population

    _, body = _read_rows(path, _POP_HEAD)
    ids, p, sq = [], [], []
    for lineno, row in body:
        ids.append(row[0])
        value = _num(path, lineno, row[1], float)
        if not 0.0 < value < 1.0:
            raise DataError(f"{path}: line {lineno}: proportion {value} outside (0, 1)")
        p.append(value)
        sq.append(row[2])
    try:
        return Population.from_proportions(np.array(p), np.array(sq), tuple(ids))
    except DataError as exc:
        raise DataError(f"{path}: {exc}") from None


def write_population_csv(pop, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(_POP_HEAD)
        for aid, p, q in zip(pop.area_ids, pop.p, pop.subquarter):
            w.writerow([aid, repr(float(p)), q])


def parse_estimator(name: str, bandwidth=None, truncate=False) -> EstimatorKind:
    try:
        tag = Rule(name.lower())
    except ValueError:
        raise ConfigError(f"unknown estimator {name!r}; expected one of {[r.value for r in Rule]}") from None
    if tag is Rule.NPEB:
        return EstimatorKind.npeb(0.4 if bandwidth is None else bandwidth, truncate)
    return EstimatorKind(tag)


def load_config(path):
    """Read a JSON scenario config.

    Keys: ``scenario`` (temporal|spatial|combined), ``temporal_change``
    (none|abrupt), ``m`` (list of int), ``replications``, ``seed``,
    ``redraw_population``, ``workers``, ``preset`` (start from a named table),
    ``population`` (``{"synthetic": {...PopulationParams}}`` or
    ``{"file": path}``) and ``methods``, a list of
    ``{"label", "estimator", "recipe", "bandwidth", "truncate"}`` objects.
    """
    from .simulation import MethodSpec, PopulationParams, Recipe, ScenarioConfig, preset

    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror or exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}: malformed JSON ({exc.msg})") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be an object")
    known = {"scenario", "temporal_change", "m", "replications", "seed", "redraw_population",
             "workers", "preset", "population", "methods", "name"}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"{path}: unknown key {sorted(unknown)[0]!r}")
    kw = {}
    for key, target in (("scenario", "scenario"), ("temporal_change", "temporal_change"),
                        ("replications", "replications"), ("seed", "seed"),
                        ("redraw_population", "redraw_population"), ("workers", "workers"),
                        ("name", "name")):
        if key in raw:
            kw[target] = raw[key]
    if "m" in raw:
        m = raw["m"]
        kw["m_values"] = tuple(m) if isinstance(m, list) else (m,)
    pop = raw.get("population")
    if pop is not None:
        if not isinstance(pop, dict) or len(pop) != 1 or not set(pop) <= {"synthetic", "file"}:
            raise ConfigError(f"{path}: population must be {{'synthetic': {{...}}}} or {{'file': path}}")
        if "file" in pop:
            p = Path(pop["file"])
            kw["population"] = str(p if p.is_absolute() else Path(path).parent / p)
        else:
            try:
                kw["population"] = PopulationParams(**pop["synthetic"])
            except TypeError as exc:
                raise ConfigError(f"{path}: population: {exc}") from None
    if "methods" in raw:
        methods = []
        for k, item in enumerate(raw["methods"]):
            try:
                est = parse_estimator(item["estimator"], item.get("bandwidth"), item.get("truncate", False))
                methods.append(MethodSpec(item["label"], est, Recipe.parse(item.get("recipe", "identity"))))
            except KeyError as exc:
                raise ConfigError(f"{path}: methods[{k}] is missing {exc.args[0]!r}") from None
            except ValueError as exc:
                raise ConfigError(f"{path}: methods[{k}]: {exc}") from None
        kw["methods"] = tuple(methods)
    try:
        if "preset" in raw:
            return preset(raw["preset"], **kw)
        return ScenarioConfig(**kw)
    except TypeError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def _fmt(x: float) -> str:
    return f"{x:.6f}"


def table_to_csv(table) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["m"] + [c for lab in table.labels for c in (lab, f"{lab}_se")])
    for i, m in enumerate(table.m_values):
        row = [str(m)]
        for j in range(len(table.labels)):
            row += [_fmt(table.mean[i, j]), _fmt(table.se[i, j])]
        w.writerow(row)
    return buf.getvalue()


def read_table_csv(text: str):
    """Parse ``table_to_csv`` output into ``(m_values, labels, mean, se)``."""
    rows = list(csv.reader(io.StringIO(text)))
    head = rows[0]
    if head[0] != "m" or len(head) % 2 != 1:
        raise DataError("not a risk table: bad header")
    labels = tuple(head[1::2])
    if tuple(head[2::2]) != tuple(f"{lab}_se" for lab in labels):
        raise DataError("not a risk table: standard error columns missing")
    m_values = tuple(int(r[0]) for r in rows[1:])
    vals = np.array([[float(c) for c in r[1:]] for r in rows[1:]])
    return m_values, labels, vals[:, 0::2], vals[:, 1::2]


def table_to_markdown(table) -> str:
    lines = []
    if table.title:
        lines.append(f"**{table.title}** ({table.replications} replications; cells: risk (s.e.))")
        lines.append("")
    lines.append("| m | " + " | ".join(table.labels) + " |")
    lines.append("|---|" + "|".join("---:" for _ in table.labels) + "|")
    for i, m in enumerate(table.m_values):
        cells = [f"{table.mean[i, j]:.4f} ({table.se[i, j]:.4f})" for j in range(len(table.labels))]
        lines.append(f"| {m} | " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"
