"""Plain-text file formats.

* system files: ``observables`` line, ``states N`` line, then one line per
  state ``id measure invariant_label obs1 obs2 ...``; ``#`` starts a comment.
  A label containing commas is read as a tuple (``10,2`` -> ``("10", "2")``).
* constraints files: ``observable_name target`` per line.
* config files: ``key value`` per line, mirroring :class:`~relent.md.SimConfig`.
* CSV outputs: ``# key value`` header lines, a column-name row, then data.
"""
from __future__ import annotations

import contextlib
import dataclasses
import hashlib
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .drift import DriftCurve
from .ensemble import DiscreteSystem, Distribution
from .exceptions import ContractError, ParseError
from .maxent import ConstraintSet
from .md import RNG_ALGORITHM, SimConfig, Trajectory


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _content_lines(path):
    """Yield ``(lineno, tokens)`` for non-blank lines with comments removed."""
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if line:
                yield lineno, line.split()


def _float(tok, path, lineno, what):
    try:
        return float(tok)
    except ValueError:
        raise ParseError(f"cannot parse {what} {tok!r} as a number", path, lineno) from None


def _label(tok):
    if tok == "-":
        return ()
    return tuple(tok.split(",")) if "," in tok else tok


def _label_str(lab):
    if isinstance(lab, tuple):
        return ",".join(map(str, lab)) if lab else "-"
    return str(lab)


# -- discrete systems -------------------------------------------------------

def read_system(path) -> DiscreteSystem:
    names = None
    n_states = None
    ids, measure, labels, rows = [], [], [], []
    for lineno, tok in _content_lines(path):
        head = tok[0]
        if head == "observables" and n_states is None:
            names = tok[1:]
            if len(set(names)) != len(names):
                raise ParseError("duplicate observable name", path, lineno)
            continue
        if head == "states" and n_states is None:
            if len(tok) != 2:
                raise ParseError("expected 'states N'", path, lineno)
            try:
                n_states = int(tok[1])
            except ValueError:
                raise ParseError(f"bad state count {tok[1]!r}", path, lineno) from None
            continue
        if n_states is None:
            raise ParseError("state line before the 'states N' header", path, lineno)
        names = names or []
        if len(tok) != 3 + len(names):
            raise ParseError(
                f"expected {3 + len(names)} fields (id measure label + {len(names)} "
                f"observables), got {len(tok)}", path, lineno)
        ids.append(tok[0])
        m = _float(tok[1], path, lineno, "measure")
        if not (np.isfinite(m) and m > 0):
            raise ParseError(f"measure must be positive and finite, got {tok[1]!r}",
                             path, lineno)
        measure.append(m)
        labels.append(_label(tok[2]))
        rows.append([_float(t, path, lineno, "observable") for t in tok[3:]])
    if n_states is None:
        raise ParseError("missing 'states N' header", path)
    if len(ids) != n_states:
        raise ParseError(f"header declares {n_states} states, found {len(ids)}", path)
    obs = np.array(rows, dtype=float).reshape(n_states, len(names or []))
    try:
        return DiscreteSystem(ids, measure, {n: obs[:, k] for k, n in enumerate(names or [])},
                              labels)
    except ContractError as exc:
        raise ParseError(str(exc), path) from exc


def write_system(sys: DiscreteSystem, path):
    names = list(sys.observables)
    with open(path, "w") as fh:
        fh.write(f"observables {' '.join(names)}\n")
        fh.write(f"states {len(sys)}\n")
        for k, sid in enumerate(sys.states):
            vals = " ".join(_fmt(sys.observables[n][k]) for n in names)
            fh.write(f"{sid} {_fmt(sys.measure[k])} {_label_str(sys.invariant_labels[k])} {vals}\n")


def read_constraints(path) -> ConstraintSet:
    names, targets = [], []
    for lineno, tok in _content_lines(path):
        if len(tok) != 2:
            raise ParseError("expected 'observable_name target_value'", path, lineno)
        if tok[0] in names:
            raise ParseError(f"observable {tok[0]!r} constrained twice", path, lineno)
        names.append(tok[0])
        targets.append(_float(tok[1], path, lineno, "target"))
    return ConstraintSet(tuple(names), tuple(targets))


def write_constraints(constraints: ConstraintSet, path):
    with open(path, "w") as fh:
        for name, t in zip(constraints.observable_names, constraints.targets):
            fh.write(f"{name} {_fmt(t)}\n")


# -- manifests and CSV ------------------------------------------------------

def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class RunManifest:
    """Provenance written as ``# manifest.*`` header lines of every output."""

    subcommand: str
    config: dict = field(default_factory=dict)
    inputs: dict = field(default_factory=dict)
    seed: int | None = None
    version: str = __version__
    started: float = field(default_factory=time.perf_counter)

    def add_input(self, name, path):
        self.inputs[name] = file_digest(path)

    def header_lines(self):
        lines = [f"manifest.subcommand {self.subcommand}",
                 f"manifest.version {self.version}"]
        if self.seed is not None:
            lines.append(f"manifest.seed {self.seed}")
        for k, v in self.config.items():
            lines.append(f"manifest.config.{k} {_fmt(v)}")
        for k, v in self.inputs.items():
            lines.append(f"manifest.input.{k}.sha256 {v}")
        lines.append(f"manifest.wall_time {time.perf_counter() - self.started:.3f}")
        return lines


@contextlib.contextmanager
def _sink(target):
    """Open ``target`` for writing unless it is already a text stream."""
    if hasattr(target, "write"):
        yield target
    else:
        with open(target, "w") as fh:
            yield fh


def _write_header(fh, lines):
    for line in lines:
        fh.write(f"# {line}\n")


def read_csv(path):
    """Return ``(header dict, column names, 2-D float array)``."""
    header = {}
    columns = None
    rows = []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                parts = line[1:].strip().split(None, 1)
                if parts:
                    header[parts[0]] = parts[1] if len(parts) > 1 else ""
                continue
            cells = line.split(",")
            if columns is None:
                columns = [c.strip() for c in cells]
                continue
            if len(cells) != len(columns):
                raise ParseError(f"expected {len(columns)} columns, got {len(cells)}",
                                 path, lineno)
            rows.append(cells)
    if columns is None:
        raise ParseError("missing column-name row", path)
    return header, columns, rows


def write_distribution(path, sys: DiscreteSystem, dist: Distribution, header=()):
    with _sink(path) as fh:
        _write_header(fh, header)
        fh.write("state,probability\n")
        for sid, p in zip(sys.states, dist.probabilities):
            fh.write(f"{sid},{_fmt(p)}\n")


def read_distribution(path, sys: DiscreteSystem) -> Distribution:
    _, columns, rows = read_csv(path)
    if columns != ["state", "probability"]:
        raise ParseError("expected columns 'state,probability'", path)
    lookup = {str(s): k for k, s in enumerate(sys.states)}
    p = np.full(len(sys), np.nan)
    for sid, val in rows:
        k = lookup.get(sid.strip())
        if k is None:
            raise ParseError(f"unknown state {sid!r}", path)
        p[k] = _float(val, path, None, "probability")
    if np.any(np.isnan(p)):
        missing = [sys.states[k] for k in np.flatnonzero(np.isnan(p))]
        raise ParseError(f"no probability for states {missing[:5]}", path)
    try:
        return Distribution(p)
    except ContractError as exc:
        raise ParseError(str(exc), path) from exc


# -- simulation config and trajectories ------------------------------------

_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(SimConfig)}


def _coerce(name, value, path=None, lineno=None):
    kind = _FIELD_TYPES[name]
    try:
        if kind == "int":
            return int(value)
        if kind == "float":
            return float(value)
        return str(value)
    except ValueError:
        raise ParseError(f"bad value {value!r} for {name}", path, lineno) from None


def read_sim_config(path) -> SimConfig:
    values = {}
    for lineno, tok in _content_lines(path):
        if len(tok) != 2:
            raise ParseError("expected 'key value'", path, lineno)
        key, val = tok
        if key not in _FIELD_TYPES:
            raise ParseError(f"unknown config key {key!r}", path, lineno)
        values[key] = _coerce(key, val, path, lineno)
    return SimConfig(**values)


def write_sim_config(cfg: SimConfig, path):
    with open(path, "w") as fh:
        for name in SimConfig.field_names():
            fh.write(f"{name} {_fmt(getattr(cfg, name))}\n")


def trajectory_columns(n):
    return (["t", "F", "E_total", "E_kinetic"] + [f"q_{i}" for i in range(1, n + 1)]
            + [f"p_{i}" for i in range(1, n + 1)])


def write_trajectory(path, traj: Trajectory, manifest: RunManifest | None = None):
    cfg = traj.config
    header = [f"{name} {_fmt(getattr(cfg, name))}" for name in SimConfig.field_names()]
    header.append(f"generator {traj.metadata.get('generator', RNG_ALGORITHM)}")
    if manifest is not None:
        header += manifest.header_lines()
    n = traj.n_particles
    data = np.column_stack([traj.t, traj.F, traj.E_total, traj.E_kinetic, traj.q, traj.p])
    with open(path, "w") as fh:
        _write_header(fh, header)
        fh.write(",".join(trajectory_columns(n)) + "\n")
        for row in data:
            cells = [repr(float(x)) for x in row]
            cells[1] = str(int(row[1]))
            fh.write(",".join(cells) + "\n")


def read_trajectory(path) -> Trajectory:
    header, columns, rows = read_csv(path)
    values = {}
    for name in SimConfig.field_names():
        if name not in header:
            raise ParseError(f"trajectory header lacks '{name}'", path)
        values[name] = _coerce(name, header[name], path)
    cfg = SimConfig(**values)
    n = cfg.n_particles
    if columns != trajectory_columns(n):
        raise ParseError("unexpected trajectory columns", path)
    try:
        data = np.array(rows, dtype=float).reshape(len(rows), len(columns))
    except ValueError:
        raise ParseError("non-numeric trajectory entry", path) from None
    meta = {"generator": header.get("generator", "")}
    try:
        return Trajectory(data[:, 0], data[:, 1].astype(np.int64), data[:, 2], data[:, 3],
                          data[:, 4:4 + n], data[:, 4 + n:], cfg, meta)
    except ContractError as exc:
        raise ParseError(str(exc), path) from exc


DRIFT_COLUMNS = ["N_R", "lambda", "v", "v_stderr", "ess"]


def write_drift_curve(path, curve: DriftCurve, header=()):
    with _sink(path) as fh:
        _write_header(fh, header)
        fh.write(",".join(DRIFT_COLUMNS) + "\n")
        for pt in curve.points:
            fh.write(",".join(_fmt(float(x)) for x in pt) + "\n")


def read_drift_curve(path) -> DriftCurve:
    _, columns, rows = read_csv(path)
    if columns != DRIFT_COLUMNS:
        raise ParseError(f"expected columns {','.join(DRIFT_COLUMNS)}", path)
    try:
        data = np.array(rows, dtype=float).reshape(len(rows), len(columns))
    except ValueError:
        raise ParseError("non-numeric drift entry", path) from None
    try:
        return DriftCurve(tuple(map(tuple, data)))
    except ContractError as exc:
        raise ParseError(str(exc), path) from exc


def write_series(path, columns, data, header=()):
    with _sink(path) as fh:
        _write_header(fh, header)
        fh.write(",".join(columns) + "\n")
        for row in data:
            fh.write(",".join(_fmt(float(x)) for x in row) + "\n")
