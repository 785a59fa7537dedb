"""Experiment configuration: schema, validation with line references, defaults.

A config is one YAML (or JSON) document describing a field, the estimator
methods to run, discretization and iteration options, an optional sweep over
one parameter, and output paths. Validation errors cite the offending key
path and its source line, and `resolved()` returns the fully defaulted tree
that is printed by `embedhom validate` and hashed into report provenance.
"""

import hashlib
import json
import re
from dataclasses import dataclass

import numpy as np
import yaml

from .errors import ConfigError, EmbedHomError
from .estimators import METHODS, BisectOptions, FixedPointOptions, OptimizerOptions
from .fem import Discretization
from .fields import (make_checkerboard, make_constant, make_inclusions,
                     make_laminate, make_one_dim_piecewise)
from .matrices import EllipticityBounds

FIELD_KINDS = ("constant", "laminate", "checkerboard", "inclusions",
               "one_dim_piecewise")
SWEEP_PARAMETERS = ("R", "L", "h", "seed")
RANDOM_KINDS = ("checkerboard", "inclusions")

# YAML 1.1 reads dot-less scientific notation ("1e-8") as a string
_SCI_FLOAT = re.compile(r"[+-]?(\d+\.?\d*|\.\d+)[eE][+-]?\d+\Z")


def _coerce_numbers(node):
    if isinstance(node, dict):
        return {k: _coerce_numbers(v) for k, v in node.items()}
    if isinstance(node, list):
        return [_coerce_numbers(v) for v in node]
    if isinstance(node, str) and _SCI_FLOAT.match(node):
        return float(node)
    return node


def _line_map(text):
    """Map key paths (tuples) to 1-based source lines via the YAML node tree."""
    try:
        root = yaml.compose(text)
    except yaml.YAMLError:
        return {}
    lines = {}

    def walk(node, path):
        if node is None:
            return
        lines[path] = node.start_mark.line + 1
        if isinstance(node, yaml.MappingNode):
            for key, value in node.value:
                walk(value, path + (str(key.value),))
        elif isinstance(node, yaml.SequenceNode):
            for i, value in enumerate(node.value):
                walk(value, path + (i,))

    walk(root, ())
    return lines


class _Checker:
    """Typed accessors over the raw tree, erroring with key path and line."""

    def __init__(self, data, lines):
        self.data = data
        self.lines = lines
        self.seen = set()

    def fail(self, path, message):
        loc = ".".join(str(p) for p in path) or "(top level)"
        line = self.lines.get(tuple(path))
        at = f" (line {line})" if line else ""
        raise ConfigError(f"{loc}{at}: {message}")

    def lookup(self, path):
        node = self.data
        for part in path:
            if isinstance(node, dict) and part in node:
                node = node[part]
            elif (isinstance(node, list) and isinstance(part, int)
                  and 0 <= part < len(node)):
                node = node[part]
            else:
                return None, False
        return node, True

    def get(self, path, types, default=None, required=False, choices=None):
        value, present = self.lookup(path)
        self.seen.add(tuple(path))
        if not present:
            if required:
                self.fail(path, "required key is missing")
            return default
        if types is float and isinstance(value, int) and not isinstance(value, bool):
            value = float(value)
        wrong_type = types is not None and not isinstance(value, types)
        # bool is an int subclass; never accept it for numeric keys
        bool_as_number = isinstance(value, bool) and types in (int, float)
        if wrong_type or bool_as_number:
            self.fail(path, f"expected {getattr(types, '__name__', types)}, "
                            f"got {type(value).__name__}: {value!r}")
        if choices is not None and value not in choices:
            self.fail(path, f"must be one of {sorted(choices)}, got {value!r}")
        return value

    def warn_unknown(self, path, mapping, known):
        for key in mapping:
            if key not in known:
                self.fail(path + (key,), f"unknown key {key!r} "
                          f"(known: {sorted(known)})")


@dataclass
class Sweep:
    parameter: str
    values: list


@dataclass
class ExperimentConfig:
    """Fully validated and defaulted experiment description."""

    name: str
    dim: int
    bounds: EllipticityBounds
    field_spec: dict
    methods: list
    rescale: float
    naive_exterior: object
    disc: Discretization
    periodic_divisions: int
    optimizer: OptimizerOptions
    fixed_point: FixedPointOptions
    bisect: BisectOptions
    sweep: object
    output_dir: str
    csv_name: str

    def resolved(self):
        """Canonical defaulted tree (printed by validate, hashed for reports)."""
        return {
            "name": self.name,
            "dim": self.dim,
            "bounds": {"alpha": self.bounds.alpha, "beta": self.bounds.beta},
            "field": self.field_spec,
            "method": list(self.methods),
            "rescale": self.rescale,
            "naive_exterior": self.naive_exterior,
            "discretization": {
                "L": self.disc.L, "h": self.disc.h,
                "quad_order": self.disc.quad_order,
                "cg_tol": self.disc.cg_tol,
                "cg_max_iter": self.disc.cg_max_iter,
                "solver": self.disc.solver,
                "max_vertices": self.disc.max_vertices,
            },
            "periodic": {"divisions": self.periodic_divisions},
            "optimizer": {
                "max_iters": self.optimizer.max_iters,
                "grad_tol": self.optimizer.grad_tol,
                "initial_step": self.optimizer.initial_step,
                "backtrack": self.optimizer.backtrack,
                "sufficient_increase": self.optimizer.sufficient_increase,
                "fd_check": self.optimizer.fd_check,
            },
            "fixed_point": {
                "damping": self.fixed_point.damping,
                "max_iters": self.fixed_point.max_iters,
                "tol": self.fixed_point.tol,
            },
            "bisect": {
                "tol": self.bisect.tol,
                "max_iters": self.bisect.max_iters,
                "bracket_tol": self.bisect.bracket_tol,
            },
            "sweep": None if self.sweep is None else {
                "parameter": self.sweep.parameter,
                "values": list(self.sweep.values),
            },
            "output": {"dir": self.output_dir, "csv": self.csv_name},
        }

    def config_hash(self):
        blob = json.dumps(self.resolved(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def build_field(self, seed=None):
        """Instantiate the coefficient field, optionally overriding the seed."""
        spec = dict(self.field_spec)
        kind = spec["kind"]
        if seed is not None:
            if kind not in RANDOM_KINDS:
                raise ConfigError(
                    f"cannot override seed: field kind {kind!r} is deterministic"
                )
            spec["seed"] = int(seed)
        b, d = self.bounds, self.dim
        if kind == "constant":
            return make_constant(spec["matrix"], b, dim=d)
        if kind == "checkerboard":
            return make_checkerboard(spec["values"], spec["probabilities"],
                                     spec["seed"], b, dim=d)
        if kind == "inclusions":
            return make_inclusions(spec["exterior"], spec["interior_values"],
                                   spec["interior_probabilities"],
                                   spec["r_min"], spec["r_max"], spec["seed"],
                                   b, dim=d, jitter=spec["jitter"])
        if kind == "laminate":
            return make_laminate(spec["a1"], spec["a2"], spec["axis"],
                                 spec["period"], b, dim=d)
        if kind == "one_dim_piecewise":
            return make_one_dim_piecewise(spec["breakpoints"], spec["values"], b)
        raise ConfigError(f"unknown field kind {kind!r}")


def _matrix_entry(chk, path, dim, required=True, default=None):
    """Accept a scalar (meaning scalar * identity) or a dim x dim nested list."""
    value, present = chk.lookup(path)
    chk.seen.add(tuple(path))
    if not present:
        if required:
            chk.fail(path, "required key is missing")
        return default
    if isinstance(value, bool):
        chk.fail(path, "expected a number or matrix")
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, list):
        arr = np.asarray(value, dtype=object)
        try:
            arr = np.asarray(value, dtype=float)
        except (TypeError, ValueError):
            chk.fail(path, f"matrix entries must be numbers: {value!r}")
        if arr.shape != (dim, dim):
            chk.fail(path, f"expected a {dim}x{dim} matrix, got shape {arr.shape}")
        return arr.tolist()
    chk.fail(path, f"expected a number or {dim}x{dim} matrix, "
                   f"got {type(value).__name__}")


def _values_list(chk, path, dim):
    values, present = chk.lookup(path)
    chk.seen.add(tuple(path))
    if not present or not isinstance(values, list) or not values:
        chk.fail(path, "required: a non-empty list of scalars or matrices")
    return [_matrix_entry(chk, tuple(path) + (i,), dim)
            for i in range(len(values))]


def _field_spec(chk, dim):
    kind = chk.get(("field", "kind"), str, required=True, choices=FIELD_KINDS)
    spec = {"kind": kind}
    raw = chk.get(("field",), dict, required=True)
    if kind == "constant":
        spec["matrix"] = _matrix_entry(chk, ("field", "matrix"), dim)
        chk.warn_unknown(("field",), raw, {"kind", "matrix"})
    elif kind == "checkerboard":
        spec["values"] = _values_list(chk, ("field", "values"), dim)
        spec["probabilities"] = chk.get(("field", "probabilities"), list,
                                        required=True)
        spec["seed"] = chk.get(("field", "seed"), int, required=True)
        chk.warn_unknown(("field",), raw,
                         {"kind", "values", "probabilities", "seed"})
    elif kind == "inclusions":
        spec["exterior"] = _matrix_entry(chk, ("field", "exterior"), dim)
        spec["interior_values"] = _values_list(
            chk, ("field", "interior_values"), dim)
        spec["interior_probabilities"] = chk.get(
            ("field", "interior_probabilities"), list, required=True)
        spec["r_min"] = chk.get(("field", "r_min"), float, required=True)
        spec["r_max"] = chk.get(("field", "r_max"), float, required=True)
        spec["jitter"] = chk.get(("field", "jitter"), bool, default=True)
        spec["seed"] = chk.get(("field", "seed"), int, required=True)
        chk.warn_unknown(("field",), raw,
                         {"kind", "exterior", "interior_values",
                          "interior_probabilities", "r_min", "r_max",
                          "jitter", "seed"})
    elif kind == "laminate":
        spec["a1"] = _matrix_entry(chk, ("field", "a1"), dim)
        spec["a2"] = _matrix_entry(chk, ("field", "a2"), dim)
        spec["axis"] = chk.get(("field", "axis"), int, default=0)
        spec["period"] = chk.get(("field", "period"), float, default=1.0)
        chk.warn_unknown(("field",), raw,
                         {"kind", "a1", "a2", "axis", "period"})
    elif kind == "one_dim_piecewise":
        if dim != 1:
            chk.fail(("field", "kind"), "one_dim_piecewise requires dim: 1")
        spec["breakpoints"] = chk.get(("field", "breakpoints"), list,
                                      required=True)
        spec["values"] = _values_list(chk, ("field", "values"), dim)
        chk.warn_unknown(("field",), raw, {"kind", "breakpoints", "values"})
    return spec


def parse_config(text, apply_overrides=()):
    """Parse and validate a config document; returns ExperimentConfig.

    apply_overrides: strings "dotted.key=value" patched into the raw tree
    before validation (values parsed as YAML scalars).
    """
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"config is not valid YAML: {exc}") from exc
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping at the top level")
    lines = _line_map(text)

    for item in apply_overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, _, raw_value = item.partition("=")
        try:
            value = yaml.safe_load(raw_value)
        except yaml.YAMLError as exc:
            raise ConfigError(f"override {item!r}: bad value: {exc}") from exc
        node = data
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override {item!r}: {part} is not a mapping")
        node[parts[-1]] = value

    data = _coerce_numbers(data)
    chk = _Checker(data, lines)
    name = chk.get(("name",), str, default="experiment")
    dim = chk.get(("dim",), int, required=True, choices=(1, 2))
    alpha = chk.get(("bounds", "alpha"), float, required=True)
    beta = chk.get(("bounds", "beta"), float, required=True)
    try:
        bounds = EllipticityBounds(alpha, beta)
    except EmbedHomError as exc:
        chk.fail(("bounds",), str(exc))

    field_spec = _field_spec(chk, dim)
    probs_key = ("probabilities" if field_spec["kind"] == "checkerboard"
                 else "interior_probabilities")
    if probs_key in field_spec:
        probs = field_spec[probs_key]
        if not all(isinstance(p, (int, float)) and not isinstance(p, bool)
                   for p in probs):
            chk.fail(("field", probs_key), "probabilities must be numbers")
        if abs(sum(probs) - 1.0) > 1e-12 or any(p < 0 for p in probs):
            chk.fail(("field", probs_key),
                     f"probabilities must be nonnegative and sum to 1 "
                     f"within 1e-12 (sum = {sum(probs)!r})")

    method_raw = chk.get(("method",), (str, list), default="all")
    methods = method_raw if isinstance(method_raw, list) else [method_raw]
    if methods == ["all"]:
        methods = list(METHODS)
    for i, m in enumerate(methods):
        if m not in METHODS:
            chk.fail(("method",), f"unknown method {m!r} "
                     f"(known: {list(METHODS) + ['all']})")
    if len(set(methods)) != len(methods):
        chk.fail(("method",), "duplicate methods")

    rescale = chk.get(("rescale",), float, default=1.0)
    if rescale <= 0:
        chk.fail(("rescale",), f"rescale factor must be positive, got {rescale}")
    naive_exterior = _matrix_entry(chk, ("naive_exterior",), dim,
                                   required=False)

    L = chk.get(("discretization", "L"), float, default=5.0)
    if L < 2.0:
        chk.fail(("discretization", "L"),
                 f"L = {L}: the unit ball must be strictly interior to the "
                 f"truncated box, which needs L >= 2")
    disc_kwargs = {
        "dim": dim,
        "L": L,
        "h": chk.get(("discretization", "h"), float, default=0.05),
        "quad_order": chk.get(("discretization", "quad_order"), int, default=2),
        "cg_tol": chk.get(("discretization", "cg_tol"), float, default=1e-10),
        "cg_max_iter": chk.get(("discretization", "cg_max_iter"), int,
                               default=None),
        "solver": chk.get(("discretization", "solver"), str, default="auto",
                          choices=("auto", "cg", "direct")),
        "max_vertices": chk.get(("discretization", "max_vertices"), int,
                                default=4_000_000),
    }
    try:
        disc = Discretization(**disc_kwargs)
    except EmbedHomError as exc:
        chk.fail(("discretization",), str(exc))

    periodic_divisions = chk.get(("periodic", "divisions"), int, default=64)
    if periodic_divisions < 2:
        chk.fail(("periodic", "divisions"), "must be >= 2")

    optimizer = OptimizerOptions(
        max_iters=chk.get(("optimizer", "max_iters"), int, default=200),
        grad_tol=chk.get(("optimizer", "grad_tol"), float, default=1e-6),
        initial_step=chk.get(("optimizer", "initial_step"), float, default=0.5),
        backtrack=chk.get(("optimizer", "backtrack"), float, default=0.5),
        sufficient_increase=chk.get(("optimizer", "sufficient_increase"),
                                    float, default=1e-4),
        fd_check=chk.get(("optimizer", "fd_check"), bool, default=False),
    )
    if not 0 < optimizer.backtrack < 1:
        chk.fail(("optimizer", "backtrack"), "must be in (0, 1)")
    try:
        fixed_point = FixedPointOptions(
            damping=chk.get(("fixed_point", "damping"), float, default=0.5),
            max_iters=chk.get(("fixed_point", "max_iters"), int, default=100),
            tol=chk.get(("fixed_point", "tol"), float, default=1e-8),
        )
    except ValueError as exc:
        chk.fail(("fixed_point", "damping"), str(exc))
    bisect = BisectOptions(
        tol=chk.get(("bisect", "tol"), float, default=1e-6),
        max_iters=chk.get(("bisect", "max_iters"), int, default=60),
        bracket_tol=chk.get(("bisect", "bracket_tol"), float, default=1e-3),
    )

    sweep = None
    sweep_raw, has_sweep = chk.lookup(("sweep",))
    if has_sweep and sweep_raw is not None:
        parameter = chk.get(("sweep", "parameter"), str, required=True,
                            choices=SWEEP_PARAMETERS)
        values = chk.get(("sweep", "values"), list, required=True)
        if not values:
            chk.fail(("sweep", "values"), "sweep needs at least one value")
        for i, v in enumerate(values):
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                chk.fail(("sweep", "values", i), f"not a number: {v!r}")
            if parameter == "seed" and not isinstance(v, int):
                chk.fail(("sweep", "values", i), "seed values must be integers")
        if parameter == "seed" and field_spec["kind"] not in RANDOM_KINDS:
            chk.fail(("sweep", "parameter"),
                     f"cannot sweep seed: field kind {field_spec['kind']!r} "
                     f"is deterministic")
        if parameter in ("R", "h") and any(v <= 0 for v in values):
            chk.fail(("sweep", "values"), f"{parameter} values must be positive")
        if parameter == "L" and any(v < 2 for v in values):
            chk.fail(("sweep", "values"),
                     "L values must be >= 2 (unit ball strictly interior)")
        sweep = Sweep(parameter=parameter, values=list(values))

    output_dir = chk.get(("output", "dir"), str, default="out")
    csv_name = chk.get(("output", "csv"), str, default="results.csv")

    chk.warn_unknown((), data, {
        "name", "dim", "bounds", "field", "method", "rescale",
        "naive_exterior", "discretization", "periodic", "optimizer",
        "fixed_point", "bisect", "sweep", "output",
    })
    section_keys = {
        "bounds": {"alpha", "beta"},
        "discretization": {"L", "h", "quad_order", "cg_tol", "cg_max_iter",
                           "solver", "max_vertices"},
        "periodic": {"divisions"},
        "optimizer": {"max_iters", "grad_tol", "initial_step", "backtrack",
                      "sufficient_increase", "fd_check"},
        "fixed_point": {"damping", "max_iters", "tol"},
        "bisect": {"tol", "max_iters", "bracket_tol"},
        "sweep": {"parameter", "values"},
        "output": {"dir", "csv"},
    }
    for section, known in section_keys.items():
        raw, present = chk.lookup((section,))
        if present and isinstance(raw, dict):
            chk.warn_unknown((section,), raw, known)

    cfg = ExperimentConfig(
        name=name, dim=dim, bounds=bounds, field_spec=field_spec,
        methods=methods, rescale=rescale, naive_exterior=naive_exterior,
        disc=disc, periodic_divisions=periodic_divisions, optimizer=optimizer,
        fixed_point=fixed_point, bisect=bisect, sweep=sweep,
        output_dir=output_dir, csv_name=csv_name,
    )
    # cross-check that the field spec actually builds
    try:
        cfg.build_field()
    except EmbedHomError as exc:
        chk.fail(("field",), str(exc))
    return cfg


def load_config(path, apply_overrides=()):
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    return parse_config(text, apply_overrides=apply_overrides)
