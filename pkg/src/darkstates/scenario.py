"""Scenario files: YAML with unit-annotated quantities.

A scenario has six blocks.  Every quantity is a string such as
``"9.4 MHz FWHM"`` (see :mod:`darkstates.units`); hole centres and scan
limits are offsets from the ensemble centre and cavity resonance
respectively.

.. code-block:: yaml

    name: example
    ensemble:
      center: 2.691 GHz
      fwhm: 9.4 MHz FWHM
      q: 2.2
      coupling: 10.65 MHz
      gamma: 5.9 kHz HWHM
      packets: 2001
    cavity:
      omega_c: 2.691 GHz
      kappa: 440 kHz HWHM
    holes:
      - {offset: 9.6 MHz, fwhm: 470 kHz FWHM}
    drive:
      modulation: 10.65 MHz
      t_off: 1 us
    run:
      span: [0 s, 5 us]
      outputs: [timeseries]
    analysis:
      decay_window: [1 us, 1.5 us]

Parsed values live in :attr:`Scenario.data` in internal units.
:meth:`Scenario.canonical` writes them back as exact ``rad/s`` strings, so
``load(dump(s)) == s`` bit for bit, and :attr:`Scenario.hash` digests that
canonical form independently of key order.
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from .dynamics import CavityParams, DrivePulse, ENVELOPES
from .exceptions import ConfigError
from .spectral import (HOLE_PROFILES, FrequencyGrid, HoleSpec, QGaussianParams,
                       SpectralDensity, SpinPacketSet, apply_holes, discretize)
from .units import format_quantity, parse_quantity

OUTPUTS = ("timeseries", "scan", "eig", "volterra", "density", "packets")
EIG_METHODS = ("auto", "dense", "secular")
OSC_SIGNALS = ("intensity", "amplitude")

# (key, kind, default); REQUIRED marks mandatory fields
REQUIRED = object()

_ENSEMBLE = (
    ("center", "frequency", REQUIRED),
    ("fwhm", "fwhm", REQUIRED),
    ("q", "float", REQUIRED),
    ("cutoff", "frequency", None),
    ("coupling", "frequency", REQUIRED),
    ("gamma", "hwhm", REQUIRED),
    ("packets", "int", 2001),
    ("grid_half_width", "frequency", None),
    ("renormalize", "bool", False),
    ("min_hole_points", "int", 9),
)
_CAVITY = (
    ("omega_c", "frequency", REQUIRED),
    ("kappa", "hwhm", REQUIRED),
)
_HOLE = (
    ("offset", "frequency", REQUIRED),
    ("fwhm", "fwhm", REQUIRED),
    ("depth", "float", 1.0),
    ("profile", HOLE_PROFILES, "gaussian"),
)
_DRIVE = (
    ("carrier", "frequency", None),
    ("amplitude", "float", 1.0),
    ("modulation", "frequency", 0.0),
    ("envelope", ENVELOPES, "rectangular"),
    ("t_on", "time", 0.0),
    ("t_off", "time", REQUIRED),
    ("sigma", "time", None),
    ("phase", "float", 0.0),
)
_SCAN = (
    ("lo", "frequency", REQUIRED),
    ("hi", "frequency", REQUIRED),
    ("points", "int", 2001),
    ("packets", "int", None),
)
_RUN = (
    ("span", "window", None),
    ("dt", "time", None),
    ("sample_every", "int", 1),
    ("outputs", "outputs", ("timeseries",)),
    ("eig_method", EIG_METHODS, "auto"),
    ("scan", "scan", None),
)
_ANALYSIS = (
    ("decay_window", "window", None),
    ("early_window", "window", None),
    ("late_window", "window", None),
    ("oscillation_window", "window", None),
    ("oscillation_signal", OSC_SIGNALS, "intensity"),
    ("oscillation_min_frequency", "frequency", 0.0),
    ("peak_prominence", "float", 1e-3),
)
_TOP = ("name", "description", "ensemble", "cavity", "holes", "drive", "run",
        "analysis")


class _LineIndex:
    """Maps field paths (``run.span[1]``) to 1-based YAML line numbers."""

    def __init__(self, node=None):
        self.lines = {}
        if node is not None:
            self._walk(node, "")

    def _walk(self, node, path):
        self.lines[path] = node.start_mark.line + 1
        if isinstance(node, yaml.MappingNode):
            for k, v in node.value:
                sub = f"{path}.{k.value}" if path else str(k.value)
                self.lines[sub] = k.start_mark.line + 1
                self._walk(v, sub)
                self.lines[sub] = k.start_mark.line + 1
        elif isinstance(node, yaml.SequenceNode):
            for i, v in enumerate(node.value):
                self._walk(v, f"{path}[{i}]")

    def __call__(self, path):
        while path:
            if path in self.lines:
                return self.lines[path]
            path = path.rpartition(".")[0] if "." in path else ""
        return None


def _err(msg, path, lines):
    return ConfigError(msg, path, lines(path))


def _parse_value(value, kind, path, lines):
    if isinstance(kind, tuple):
        if value not in kind:
            raise _err(f"{value!r} is not one of {list(kind)}", path, lines)
        return value
    if kind in ("frequency", "fwhm", "hwhm", "time"):
        try:
            return parse_quantity(value, kind, path)
        except ConfigError as exc:
            raise ConfigError(exc.message, path, lines(path)) from None
    if kind == "float":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise _err(f"expected a number, got {value!r}", path, lines)
        return float(value)
    if kind == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise _err(f"expected an integer, got {value!r}", path, lines)
        return int(value)
    if kind == "bool":
        if not isinstance(value, bool):
            raise _err(f"expected true/false, got {value!r}", path, lines)
        return value
    if kind == "window":
        if not isinstance(value, (list, tuple)) or len(value) != 2:
            raise _err("expected a [start, stop] pair of times", path, lines)
        a = _parse_value(value[0], "time", f"{path}[0]", lines)
        b = _parse_value(value[1], "time", f"{path}[1]", lines)
        if not b > a:
            raise _err("window end must follow its start", path, lines)
        return (a, b)
    if kind == "outputs":
        if isinstance(value, str):
            value = [value]
        if not isinstance(value, (list, tuple)):
            raise _err("expected a list of outputs", path, lines)
        for i, v in enumerate(value):
            if v not in OUTPUTS:
                raise _err(f"unknown output {v!r}; choose from {list(OUTPUTS)}",
                           f"{path}[{i}]", lines)
        return tuple(dict.fromkeys(value))
    if kind == "scan":
        return _parse_block(value, _SCAN, path, lines)
    raise AssertionError(kind)


def _parse_block(raw, spec, path, lines):
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise _err("expected a mapping", path, lines)
    known = {k for k, _, _ in spec}
    for k in raw:
        if k not in known:
            raise _err(f"unknown field {k!r}", f"{path}.{k}", lines)
    out = {}
    for key, kind, default in spec:
        sub = f"{path}.{key}"
        if key not in raw or raw[key] is None:
            if default is REQUIRED:
                raise _err(f"missing required field {key!r}", sub, lines)
            out[key] = default
        else:
            out[key] = _parse_value(raw[key], kind, sub, lines)
    return out


def _format_value(value, kind):
    if value is None:
        return None
    if isinstance(kind, tuple) or kind in ("int", "bool"):
        return value
    if kind == "float":
        return float(value)
    if kind in ("frequency", "fwhm", "hwhm", "time"):
        return format_quantity(value, kind)
    if kind == "window":
        return [format_quantity(v, "time") for v in value]
    if kind == "outputs":
        return list(value)
    if kind == "scan":
        return _format_block(value, _SCAN)
    raise AssertionError(kind)


def _format_block(block, spec):
    return {k: _format_value(block[k], kind) for k, kind, _ in spec}


@dataclass
class Scenario:
    name: str
    description: str
    data: dict
    source: str | None = field(default=None, compare=False)

    # construction ---------------------------------------------------------

    @classmethod
    def from_mapping(cls, raw, source=None, lines=None):
        lines = lines or _LineIndex()
        if not isinstance(raw, dict):
            raise ConfigError("scenario file must be a mapping", None, 1)
        for k in raw:
            if k not in _TOP:
                raise _err(f"unknown top-level field {k!r}", k, lines)
        name = raw.get("name")
        if not isinstance(name, str) or not name.strip():
            raise _err("scenario needs a non-empty string 'name'", "name", lines)
        if any(c in name for c in "/\\ "):
            raise _err("name must not contain spaces or slashes", "name", lines)
        desc = raw.get("description") or ""
        if not isinstance(desc, str):
            raise _err("description must be a string", "description", lines)
        for block in ("ensemble", "cavity"):
            if block not in raw:
                raise _err(f"missing required block {block!r}", block, lines)
        data = {
            "ensemble": _parse_block(raw["ensemble"], _ENSEMBLE, "ensemble",
                                     lines),
            "cavity": _parse_block(raw["cavity"], _CAVITY, "cavity", lines),
        }
        holes = raw.get("holes") or []
        if not isinstance(holes, list):
            raise _err("holes must be a list", "holes", lines)
        data["holes"] = [_parse_block(h, _HOLE, f"holes[{i}]", lines)
                         for i, h in enumerate(holes)]
        drive = raw.get("drive")
        data["drive"] = (None if drive is None
                         else _parse_block(drive, _DRIVE, "drive", lines))
        data["run"] = _parse_block(raw.get("run"), _RUN, "run", lines)
        data["analysis"] = _parse_block(raw.get("analysis"), _ANALYSIS,
                                        "analysis", lines)
        sc = cls(name, desc, data, source)
        sc._validate(lines)
        return sc

    def _validate(self, lines):
        ens, run = self.data["ensemble"], self.data["run"]
        if ens["packets"] < 1:
            raise _err("packets must be >= 1", "ensemble.packets", lines)
        if ens["coupling"] < 0:
            raise _err("coupling must be >= 0", "ensemble.coupling", lines)
        if ens["gamma"] < 0:
            raise _err("gamma must be >= 0", "ensemble.gamma", lines)
        needs_time = {"timeseries", "volterra"} & set(run["outputs"])
        if needs_time and run["span"] is None:
            raise _err("time-domain outputs need run.span", "run.span", lines)
        if needs_time and self.data["drive"] is None:
            raise _err("time-domain outputs need a drive block", "drive", lines)
        if "scan" in run["outputs"] and run["scan"] is None:
            raise _err("scan output needs a run.scan block", "run.scan", lines)
        try:
            self.cavity()
            self.packets()
            if run["scan"] is not None and run["scan"]["packets"]:
                self.scan_packets()
            if self.data["drive"] is not None:
                self.drive()
        except ConfigError as exc:
            path = exc.path or ""
            raise ConfigError(exc.message, path, lines(path)) from None

    # serialization --------------------------------------------------------

    def canonical(self):
        d = self.data
        return {
            "name": self.name,
            "description": self.description,
            "ensemble": _format_block(d["ensemble"], _ENSEMBLE),
            "cavity": _format_block(d["cavity"], _CAVITY),
            "holes": [_format_block(h, _HOLE) for h in d["holes"]],
            "drive": None if d["drive"] is None else _format_block(d["drive"],
                                                                   _DRIVE),
            "run": _format_block(d["run"], _RUN),
            "analysis": _format_block(d["analysis"], _ANALYSIS),
        }

    def dumps(self):
        return yaml.safe_dump(self.canonical(), sort_keys=True,
                              allow_unicode=True)

    @property
    def hash(self):
        blob = json.dumps(self.canonical(), sort_keys=True,
                          separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:12]

    def replace(self, **sections):
        """Copy with blocks updated, e.g. ``replace(holes=[])``."""
        data = copy.deepcopy(self.data)
        for key, value in sections.items():
            if key not in data:
                raise KeyError(key)
            if isinstance(data[key], dict) and isinstance(value, dict):
                data[key].update(value)
            else:
                data[key] = value
        sc = Scenario(self.name, self.description, data, self.source)
        sc._validate(_LineIndex())
        return sc

    def param_lines(self):
        """Flattened ``key = value`` echo of the canonical form."""
        out = []

        def walk(prefix, obj):
            if isinstance(obj, dict):
                for k in sorted(obj):
                    walk(f"{prefix}.{k}" if prefix else k, obj[k])
            elif isinstance(obj, list) and obj and isinstance(obj[0], dict):
                for i, v in enumerate(obj):
                    walk(f"{prefix}[{i}]", v)
            else:
                out.append(f"{prefix} = {json.dumps(obj)}")

        walk("", self.canonical())
        return out

    # model objects --------------------------------------------------------

    def base_line(self):
        e = self.data["ensemble"]
        return QGaussianParams(e["center"], e["fwhm"], e["q"], e["cutoff"])

    def hole_specs(self):
        c = self.data["ensemble"]["center"]
        return [HoleSpec(c + h["offset"], h["fwhm"], h["depth"], h["profile"])
                for h in self.data["holes"]]

    def density(self):
        e = self.data["ensemble"]
        base = SpectralDensity(self.base_line(), (), e["renormalize"])
        return apply_holes(base, self.hole_specs())

    def cavity(self):
        c = self.data["cavity"]
        return CavityParams(c["omega_c"], c["kappa"])

    def drive(self):
        d = self.data["drive"]
        if d is None:
            return None
        carrier = d["carrier"] if d["carrier"] is not None else \
            self.data["cavity"]["omega_c"]
        return DrivePulse(carrier, d["amplitude"], d["modulation"],
                          d["envelope"], d["t_on"], d["t_off"], d["sigma"],
                          d["phase"])

    def grid(self, n=None):
        e = self.data["ensemble"]
        base = self.base_line()
        half = e["grid_half_width"] or base.cutoff
        return FrequencyGrid.around(e["center"], half,
                                    e["packets"] if n is None else n)

    def packets(self, n=None):
        """Spin packets (empty set when the coupling is zero)."""
        e = self.data["ensemble"]
        if e["coupling"] == 0:
            return SpinPacketSet.empty(e["gamma"])
        return discretize(self.density(), e["coupling"], self.grid(n),
                          e["gamma"], e["min_hole_points"])

    def scan_packets(self):
        scan = self.data["run"]["scan"]
        n = scan["packets"] if scan and scan["packets"] else None
        return self.packets(n)

    def scan_frequencies(self):
        scan = self.data["run"]["scan"]
        w_c = self.data["cavity"]["omega_c"]
        return w_c + np.linspace(scan["lo"], scan["hi"], scan["points"])


def load(path):
    """Parse a scenario file, reporting errors with field path and line."""
    path = Path(path)
    return loads(path.read_text(), str(path))


def loads(text, source=None):
    try:
        node = yaml.compose(text)
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(f"invalid YAML: {exc}", None,
                          None if mark is None else mark.line + 1,
                          source) from None
    lines = _LineIndex(node) if node is not None else _LineIndex()
    try:
        return Scenario.from_mapping(raw, source, lines)
    except ConfigError as exc:
        exc.source = source
        raise


def bundled_names():
    root = resources.files("darkstates") / "scenarios"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".yaml"))


def bundled_path(name):
    root = resources.files("darkstates") / "scenarios"
    p = root / f"{name}.yaml"
    if not p.is_file():
        raise ConfigError(f"no bundled scenario named {name!r}; available: "
                          f"{', '.join(bundled_names())}", "scenario")
    return Path(str(p))


def resolve(spec):
    """A file path, or the name of a bundled scenario."""
    p = Path(spec)
    if p.exists():
        return load(p)
    if p.suffix in (".yaml", ".yml") or "/" in str(spec):
        raise FileNotFoundError(f"scenario file not found: {spec}")
    return load(bundled_path(spec))
