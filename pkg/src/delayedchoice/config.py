"""Plain-text ``key = value`` configuration files.

One parameter per line, dotted keys mirroring the config tree::

    # first memory
    mbs1.eta_con = 0.85
    mbs1.eta_total = 0.133
    mbs1.storage_time = 200          # ns
    mbs1.retrieved_packet.shape = exponential_decay
    qrng.xi = 0.53
    qrng.mode = amplitude
    detector.dark_rate = 25          # per second

    scenario.name = fig2
    scenario.engine = both
    sweep.parameter = qrng.xi
    sweep.values = 0.01, 0.24, 0.53

Durations are in ns and rates in Hz.  ``inf`` is accepted for coherence
times.  Keys under ``scenario.`` and ``sweep.`` are run options; every other
key must name a config parameter (see :func:`model.parameter_names`).
"""

from __future__ import annotations

import os

from .model import InterferometerConfig, as_dict, config_from_flat, flatten, parameter_names

__all__ = ["ConfigFileError", "parse_keyvalue", "load_config", "loads_config", "dumps_config"]

OPTION_PREFIXES = ("scenario.", "sweep.")


class ConfigFileError(ValueError):
    pass


def parse_keyvalue(text: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise ConfigFileError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        if key in out:
            raise ConfigFileError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def loads_config(text: str, base: InterferometerConfig | None = None):
    """Parse file contents into ``(config, options)``."""
    flat = parse_keyvalue(text)
    options = {k: v for k, v in flat.items() if k.startswith(OPTION_PREFIXES)}
    params = {k: v for k, v in flat.items() if k not in options}
    known = set(parameter_names())
    unknown = sorted(k for k in params if k not in known)
    if unknown:
        raise ConfigFileError(f"unknown parameter(s): {', '.join(unknown)}")
    try:
        config = config_from_flat(params, base)
    except (TypeError, ValueError) as exc:
        raise ConfigFileError(str(exc)) from exc
    return config, options


def load_config(path: str | os.PathLike, base: InterferometerConfig | None = None):
    with open(path, encoding="utf-8") as fh:
        return loads_config(fh.read(), base)


def dumps_config(config: InterferometerConfig) -> str:
    """Every stored parameter of ``config`` in file format."""
    lines = ["# delayedchoice configuration (durations in ns, rates in Hz)"]
    for key, value in flatten(as_dict(config)).items():
        lines.append(f"{key} = {value!r}" if isinstance(value, float) else f"{key} = {value}")
    return "\n".join(lines) + "\n"
