"""Line-oriented ``key = value`` run configuration.

Grammar: one ``key = value`` per line, ``#`` starts a comment, blank lines are
ignored, keys are dotted (``section.name``). Setting a key twice is an error.
Möbius maps are given as an ordered generator list ``map.1``, ``map.2``, ...
(applied in index order), each value being a generator kind followed by numbers::

    map.1 = translation 0.1 0 -0.3
    map.2 = rotation 0 0 1 0.5        # axis, angle (R³ only)
    map.3 = orthogonal 0 -1 0 1 0 0 0 0 1
    map.4 = dilation 2
    map.5 = inversion 0.3 0.2 1.6 1.5 # center, radius
"""

from __future__ import annotations

import math
import os
import re
from dataclasses import dataclass, field

import numpy as np

from .errors import ParseError, ValidationError

_KEY = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*(\.[A-Za-z0-9_]+)+$")

SURFACE_KINDS = ("torus_of_revolution", "clifford", "clifford_stereo", "file")


def _choice(*options):
    def check(v):
        if v not in options:
            return f"must be one of {', '.join(options)}"
    return check


def _even16(v):
    if v < 16 or v % 2:
        return "must be even and >= 16"


def _positive(v):
    if not v > 0:
        return "must be positive"


def _nonneg(v):
    if v < 0:
        return "must be >= 0"


def _safety(v):
    if not 0 < v <= 1:
        return "must lie in (0, 1]"


def _curve(v):
    try:
        parse_curve(v)
    except ValueError as exc:
        return str(exc)


# key -> (type, default, validator)
SCHEMA = {
    "surface.kind": (str, "torus_of_revolution", _choice(*SURFACE_KINDS)),
    "surface.R": (float, 2.0, _positive),
    "surface.r": (float, 1.0, _positive),
    "surface.path": (str, "", None),
    "grid.nu": (int, 64, _even16),
    "grid.nv": (int, 64, _even16),
    "flow.kind": (str, "miwf", _choice("miwf", "deturck")),
    "flow.t_end": (float, 1e-4, _nonneg),
    "flow.safety": (float, 0.5, _safety),
    "flow.min_a0sq": (float, 1e-4, _positive),
    "flow.max_steps": (int, 0, _nonneg),
    "flow.path": (str, "A", _choice("A", "B")),
    "output.dir": (str, "", None),
    "output.snapshot_every": (int, 0, _nonneg),
    "hopf.curve": (str, "great_circle", _curve),
    "hopf.n": (int, 256, _even16),
    "hopf.n_theta": (int, 64, _even16),
    "hopf.steps": (int, 0, _nonneg),
    "hopf.safety": (float, 0.5, _safety),
    "linearize.h": (float, 1e-5, _positive),
    "linearize.steps": (int, 10, _positive),
    "linearize.pairs": (int, 3, _positive),
    "linearize.seed": (int, 0, _nonneg),
    "linearize.richardson_h": (float, 1e-3, _positive),
}

# echoed keys that do not influence results
_NOT_ECHOED = ("output.dir",)


def parse_curve(spec):
    """``great_circle`` | ``latitude:θ0`` | ``wavy:amplitude,mode`` -> (kind, args)."""
    name, _, rest = spec.partition(":")
    if name == "great_circle" and not rest:
        return name, ()
    try:
        if name == "latitude":
            theta = float(rest)
            if not 0 < theta < math.pi:
                raise ValueError("latitude angle must lie in (0, π)")
            return name, (theta,)
        if name == "wavy":
            amp, mode = rest.split(",")
            return name, (float(amp), int(mode))
    except ValueError as exc:
        raise ValueError(f"bad curve preset {spec!r}: {exc}") from None
    raise ValueError(f"unknown curve preset {spec!r}")


_GENERATOR_ARITY = {"translation": None, "rotation": 4, "orthogonal": None, "dilation": 1, "inversion": None}


def parse_generator(spec):
    parts = spec.split()
    if not parts or parts[0] not in _GENERATOR_ARITY:
        raise ValueError(f"unknown generator {spec!r}; expected one of {', '.join(_GENERATOR_ARITY)}")
    kind = parts[0]
    try:
        nums = [float(p) for p in parts[1:]]
    except ValueError:
        raise ValueError(f"non-numeric argument in {spec!r}") from None
    want = _GENERATOR_ARITY[kind]
    if want is not None and len(nums) != want:
        raise ValueError(f"{kind} takes {want} numbers, got {len(nums)}")
    if kind == "orthogonal" and round(math.sqrt(len(nums))) ** 2 != len(nums):
        raise ValueError("orthogonal needs n*n row-major entries")
    if kind == "inversion" and len(nums) < 3:
        raise ValueError("inversion needs a center and a radius")
    if kind == "translation" and not nums:
        raise ValueError("translation needs a vector")
    return kind, tuple(nums)


def build_map(generators, n):
    """MoebiusMap of R^n from parsed ``(kind, numbers)`` pairs."""
    from .moebius import Dilation, MoebiusMap, Orthogonal, SphereInversion, Translation, rotation

    gens = []
    for kind, nums in generators:
        if kind == "translation":
            if len(nums) != n:
                raise ValueError(f"translation needs {n} components")
            gens.append(Translation(np.array(nums)))
        elif kind == "rotation":
            if n != 3:
                raise ValueError("rotation is only available in R³; use orthogonal")
            gens.append(rotation(nums[:3], nums[3]))
        elif kind == "orthogonal":
            m = int(round(math.sqrt(len(nums))))
            if m != n:
                raise ValueError(f"orthogonal matrix must be {n}x{n}")
            gens.append(Orthogonal(np.array(nums).reshape(n, n)))
        elif kind == "dilation":
            gens.append(Dilation(nums[0]))
        elif kind == "inversion":
            if len(nums) != n + 1:
                raise ValueError(f"inversion needs {n} center components and a radius")
            gens.append(SphereInversion(np.array(nums[:n]), nums[n]))
    return MoebiusMap(tuple(gens))


def _format(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


@dataclass
class RunConfig:
    values: dict
    maps: list = field(default_factory=list)  # [(index, spec string)] sorted by index

    def __getitem__(self, key):
        return self.values[key]

    @property
    def generators(self):
        return [parse_generator(spec) for _, spec in self.maps]

    def out_dir(self, flag=None):
        return flag or self.values["output.dir"] or os.environ.get("MIWF_OUT_DIR") or "miwf_out"

    def echo(self):
        """Effective configuration as parseable text, in a fixed order.

        Unset string keys (empty, their default) are left out since the grammar
        has no empty values.
        """
        lines = [f"{k} = {_format(v)}" for k, v in sorted(self.values.items())
                 if k not in _NOT_ECHOED and v != ""]
        lines += [f"map.{i} = {spec}" for i, spec in self.maps]
        return "\n".join(lines) + "\n"


def _convert(key, raw, where):
    typ = SCHEMA[key][0]
    try:
        if typ is int:
            return int(raw)
        if typ is float:
            v = float(raw)
            if not math.isfinite(v):
                raise ValueError
            return v
        return raw
    except ValueError:
        raise ValidationError(key, f"expected {typ.__name__}, got {raw!r} ({where})") from None


def _lines(text):
    for lineno, line in enumerate(text.splitlines(), 1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ParseError(lineno, "expected 'key = value'")
        key, _, value = body.partition("=")
        key, value = key.strip(), value.strip()
        if not _KEY.match(key):
            raise ParseError(lineno, f"malformed key {key!r}")
        if value == "":
            raise ParseError(lineno, f"missing value for {key!r}")
        yield lineno, key, value


def parse_config(path=None, overrides=(), text=None):
    """Parse a config file (or ``text``) and then apply ``key=value`` overrides.

    Overrides may replace file values; repeating a key within the file or
    within the overrides is a :class:`ParseError`.
    """
    raw = {}
    seen = {}
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise ValidationError("config", f"cannot read {path}: {exc}") from None
    if text is not None:
        for lineno, key, value in _lines(text):
            if key in seen:
                raise ParseError(lineno, f"duplicate key {key!r} (first set on line {seen[key]})")
            seen[key] = lineno
            raw[key] = (value, f"line {lineno}")
    over_seen = set()
    for i, item in enumerate(overrides, 1):
        if "=" not in item:
            raise ParseError(f"override {i}", f"expected key=value, got {item!r}")
        key, _, value = item.partition("=")
        key, value = key.strip(), value.strip()
        if not _KEY.match(key):
            raise ParseError(f"override {i}", f"malformed key {key!r}")
        if key in over_seen:
            raise ParseError(f"override {i}", f"duplicate override for {key!r}")
        over_seen.add(key)
        raw[key] = (value, f"override {i}")
    return _validate(raw)


def _validate(raw):
    values = {k: spec[1] for k, spec in SCHEMA.items()}
    maps = []
    for key, (value, where) in raw.items():
        if key.startswith("map."):
            idx = key[4:]
            if not idx.isdigit():
                raise ValidationError(key, "map keys are map.<index>")
            try:
                parse_generator(value)
            except ValueError as exc:
                raise ValidationError(key, str(exc)) from None
            if any(i == int(idx) for i, _ in maps):
                raise ValidationError(key, "map index used twice")
            maps.append((int(idx), value))
            continue
        if key not in SCHEMA:
            raise ValidationError(key, "unknown key")
        values[key] = _convert(key, value, where)
    for key, v in values.items():
        check = SCHEMA[key][2]
        msg = check(v) if check else None
        if msg:
            raise ValidationError(key, msg)
    if values["surface.kind"] == "torus_of_revolution" and not values["surface.R"] > values["surface.r"]:
        raise ValidationError("surface.R", "must exceed surface.r")
    if values["surface.kind"] == "file" and not values["surface.path"]:
        raise ValidationError("surface.path", "required when surface.kind = file")
    maps.sort()
    return RunConfig(values=values, maps=maps)
