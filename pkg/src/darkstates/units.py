"""Unit-annotated quantities.

Everything inside the package is angular (rad/s) and decay rates use the
amplitude (HWHM) convention.  Configuration values are strings such as
``"9.4 MHz FWHM"`` or ``"440 kHz HWHM"``; the ``kind`` of the receiving
field decides how they are converted:

``frequency``
    plain frequency or rate, ``x`` Hz -> ``2*pi*x`` rad/s.  Width tags are
    rejected.
``fwhm``
    a full width.  ``FWHM`` values are taken as-is, ``HWHM`` values doubled.
``hwhm``
    an amplitude decay rate.  ``HWHM`` values are taken as-is, ``FWHM``
    values halved.
``time``
    seconds.

Width fields must carry an explicit ``FWHM``/``HWHM`` tag; an untagged
linewidth raises :class:`~darkstates.exceptions.ConfigError`, which is the
point of the exercise.  The conversions are ``* 2*pi`` and ``* 2`` or
``/ 2`` only, so they stay exact up to one rounding of the ``2*pi`` factor.
"""

import math
import re

from .exceptions import ConfigError

TWO_PI = 2.0 * math.pi

_FREQ_UNITS = {
    "hz": 1.0,
    "khz": 1e3,
    "mhz": 1e6,
    "ghz": 1e9,
}
_TIME_UNITS = {
    "s": 1.0,
    "ms": 1e-3,
    "us": 1e-6,
    "µs": 1e-6,
    "μs": 1e-6,
    "ns": 1e-9,
    "ps": 1e-12,
}
KINDS = ("frequency", "fwhm", "hwhm", "time")

_QUANTITY = re.compile(
    r"^\s*(?P<value>[-+]?(\d+(\.\d*)?|\.\d+)([eE][-+]?\d+)?)\s*"
    r"(?P<unit>[A-Za-zµμ/]+)?\s*(?P<tag>FWHM|HWHM|fwhm|hwhm)?\s*$"
)


def parse_quantity(text, kind, path=None):
    """Convert an annotated string (or bare number) to the internal unit.

    Bare numbers are accepted for ``time`` (seconds) and are
    interpreted as rad/s for frequency kinds only when they come with the
    explicit ``rad/s`` unit.
    """
    if kind not in KINDS:
        raise ValueError(f"unknown quantity kind {kind!r}")
    if isinstance(text, bool):
        raise ConfigError(f"expected a {kind} quantity, got {text!r}", path)
    if isinstance(text, (int, float)):
        if kind == "time":
            return float(text)
        raise ConfigError(
            f"bare number {text!r} needs a unit (e.g. '{text} MHz')", path)
    if not isinstance(text, str):
        raise ConfigError(f"expected a {kind} quantity, got {text!r}", path)
    m = _QUANTITY.match(text)
    if m is None:
        raise ConfigError(f"cannot parse quantity {text!r}", path)
    value = float(m.group("value"))
    unit = (m.group("unit") or "").strip()
    tag = (m.group("tag") or "").upper()

    if kind == "time":
        if tag:
            raise ConfigError(f"width tag {tag} makes no sense on a time", path)
        if not unit:
            return value
        scale = _TIME_UNITS.get(unit) or _TIME_UNITS.get(unit.lower())
        if scale is None:
            raise ConfigError(f"unknown time unit {unit!r}", path)
        return value * scale

    if unit == "rad/s":
        omega = value
    else:
        scale = _FREQ_UNITS.get(unit.lower())
        if scale is None:
            raise ConfigError(f"unknown frequency unit {unit!r}", path)
        omega = TWO_PI * (value * scale)

    if kind == "frequency":
        if tag:
            raise ConfigError(
                f"{tag} tag given for a plain frequency field", path)
        return omega
    if not tag:
        raise ConfigError(
            f"linewidth {text!r} must state FWHM or HWHM explicitly", path)
    if kind == "fwhm":
        return omega if tag == "FWHM" else 2.0 * omega
    return omega if tag == "HWHM" else omega / 2.0


def format_quantity(value, kind):
    """Canonical string for an internal value; ``parse_quantity`` inverts it
    bit-exactly."""
    if kind == "time":
        return f"{float(value)!r} s"
    if kind == "frequency":
        return f"{float(value)!r} rad/s"
    if kind == "fwhm":
        return f"{float(value)!r} rad/s FWHM"
    if kind == "hwhm":
        return f"{float(value)!r} rad/s HWHM"
    raise ValueError(f"unknown quantity kind {kind!r}")


def hz(omega):
    """rad/s -> Hz (for reporting only)."""
    return omega / TWO_PI


def rad_s(f_hz):
    """Hz -> rad/s."""
    return TWO_PI * f_hz
