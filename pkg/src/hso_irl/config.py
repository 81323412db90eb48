"""Run configuration.

Configs are YAML mappings with flat dotted keys, for example::

    scenario.name: quadcopter
    scenario.epsilon: 0.002
    excitation.seed: 7
    run.T: 60

Nested mappings are accepted and flattened to the same keys. Unknown keys
are rejected. Every key is optional; omitted values come from the chosen
scenario.
"""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from .errors import ConfigError
from .observer import LtiSystem
from .scenarios import ExcitationSpec, QuadcopterParams, Scenario, academic_scenario, quadcopter_scenario

OUTPUT_DIR_ENV = "HSO_IRL_OUTPUT_DIR"
DEFAULT_OUTPUT_DIR = "hso_irl_output"

# config key -> Scenario field
_SCENARIO_KEYS = {
    "scenario.epsilon": "eps",
    "scenario.r1": "r1",
    "scenario.k4": "k4",
    "scenario.cond_threshold": "cond_threshold",
    "scenario.purge_period": "purge_period",
    "scenario.purge_policy": "purge_policy",
    "scenario.data_period": "data_period",
    "scenario.stack_size": "stack_size",
    "scenario.observer_poles": "observer_poles",
    "scenario.x0": "x0",
    "scenario.x_hat0": "x_hat0",
    "scenario.w0": "w0",
    "scenario.excitation_mode": "excitation_mode",
}
_EXCITATION_KEYS = {
    "excitation.count", "excitation.amplitude", "excitation.freq_min", "excitation.freq_max",
    "excitation.phase_min", "excitation.phase_max", "excitation.seed", "excitation.channels",
}
_MATRIX_KEYS = {"system.A", "system.B", "system.C", "cost.Q", "cost.R", "gains.K3"}
_QUAD_KEYS = {f"quadcopter.{f.name}" for f in dataclasses.fields(QuadcopterParams)}
_RUN_KEYS = {"run.T", "run.h", "run.seed", "run.output_dir", "run.emit_svg", "run.log_every"}
_OTHER_KEYS = {"scenario.name", "certify.varpi_rel", "certify.hjb_tol", "informativity.fi_tol"}
KNOWN_KEYS = (set(_SCENARIO_KEYS) | _EXCITATION_KEYS | _MATRIX_KEYS | _QUAD_KEYS | _RUN_KEYS
              | _OTHER_KEYS)


@dataclass(frozen=True)
class RunConfig:
    scenario: Scenario
    T: float
    h: float
    seed: int
    output_dir: Path
    emit_svg: bool = False
    log_every: int | None = None
    varpi_rel: float = 0.05
    hjb_tol: float = 1e-2
    fi_tol: float = 1e-6
    source: str | None = None


def _flatten(d: dict, prefix: str = "") -> dict:
    out = {}
    for k, v in d.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flatten(v, key + "."))
        else:
            out[key] = v
    return out


def _number(flat, key, default, kind=float):
    if key not in flat:
        return default
    v = flat[key]
    if isinstance(v, str):
        # YAML 1.1 reads exponent forms such as 1e8 as strings
        try:
            v = float(v)
        except ValueError:
            pass
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not np.isfinite(v):
        raise ConfigError(f"expected a number, got {flat[key]!r}", key=key)
    if kind is int:
        if float(v) != int(v):
            raise ConfigError(f"expected an integer, got {v!r}", key=key)
        return int(v)
    return float(v)


def _matrix(flat, key):
    try:
        M = np.atleast_2d(np.asarray(flat[key], dtype=float))
    except (TypeError, ValueError):
        raise ConfigError("expected a matrix given as a list of rows", key=key) from None
    if M.ndim != 2 or not np.all(np.isfinite(M)):
        raise ConfigError("expected a finite 2-D matrix", key=key)
    return M


def _vector(flat, key):
    try:
        v = np.asarray(flat[key], dtype=float).ravel()
    except (TypeError, ValueError):
        raise ConfigError("expected a list of numbers", key=key) from None
    if not np.all(np.isfinite(v)):
        raise ConfigError("entries must be finite", key=key)
    return v


def parse_config(flat: dict[str, Any], scenario: str | None = None, source: str | None = None) -> RunConfig:
    """Validate a flat key mapping and resolve it against scenario defaults."""
    unknown = sorted(set(flat) - KNOWN_KEYS)
    if unknown:
        raise ConfigError("unknown configuration key", key=unknown[0])
    name = scenario or flat.get("scenario.name", "academic")
    if name == "academic":
        scn = academic_scenario()
    elif name == "quadcopter":
        params = QuadcopterParams(**{k.split(".", 1)[1]: _number(flat, k, None) for k in _QUAD_KEYS if k in flat})
        scn = quadcopter_scenario(params)
    elif name == "custom":
        missing = [k for k in ("system.A", "system.B", "cost.Q", "cost.R") if k not in flat]
        if missing:
            raise ConfigError("required for a custom scenario", key=missing[0])
        A, B = _matrix(flat, "system.A"), _matrix(flat, "system.B")
        C = _matrix(flat, "system.C") if "system.C" in flat else np.eye(A.shape[0])
        try:
            sys = LtiSystem(A, B, C)
        except ValueError as exc:
            raise ConfigError(str(exc), key="system.A") from None
        base = academic_scenario()
        scn = dataclasses.replace(
            base, name="custom", sys=sys, Q=_matrix(flat, "cost.Q"), R=_matrix(flat, "cost.R"),
            x0=np.full(sys.n, 0.5), observer_poles=tuple(-1.0 - 0.5 * i for i in range(sys.n)),
            excitation=dataclasses.replace(base.excitation, amplitude=1.0))
    else:
        raise ConfigError(f"unknown scenario {name!r}", key="scenario.name")
    if name != "quadcopter":
        bad = sorted(k for k in _QUAD_KEYS if k in flat)
        if bad:
            raise ConfigError("quadcopter parameters only apply to the quadcopter scenario", key=bad[0])

    over: dict[str, Any] = {}
    for key, fld in _SCENARIO_KEYS.items():
        if key not in flat:
            continue
        if fld in ("x0", "x_hat0", "w0"):
            over[fld] = _vector(flat, key)
        elif fld == "observer_poles":
            over[fld] = tuple(_vector(flat, key))
        elif fld in ("purge_policy", "excitation_mode"):
            over[fld] = str(flat[key])
        elif fld == "stack_size":
            over[fld] = _number(flat, key, None, int)
        else:
            over[fld] = _number(flat, key, None)
    if "system.C" in flat and name != "custom":
        try:
            over["sys"] = LtiSystem(scn.sys.A, scn.sys.B, _matrix(flat, "system.C"))
        except ValueError as exc:
            raise ConfigError(str(exc), key="system.C") from None
    if name != "custom":
        if any(k in flat for k in ("system.A", "system.B")):
            raise ConfigError("system matrices can only be set for the custom scenario", key="system.A")
        for k, fld in (("cost.Q", "Q"), ("cost.R", "R")):
            if k in flat:
                over[fld] = _matrix(flat, k)
    if "gains.K3" in flat:
        over["K3"] = _matrix(flat, "gains.K3")

    ex = scn.excitation
    seed = _number(flat, "run.seed", _number(flat, "excitation.seed", ex.seed, int), int)
    channels = flat.get("excitation.channels")
    try:
        over["excitation"] = ExcitationSpec(
            count=_number(flat, "excitation.count", ex.count, int),
            amplitude=_number(flat, "excitation.amplitude", ex.amplitude),
            freq_range=(_number(flat, "excitation.freq_min", ex.freq_range[0]),
                        _number(flat, "excitation.freq_max", ex.freq_range[1])),
            phase_range=(_number(flat, "excitation.phase_min", ex.phase_range[0]),
                         _number(flat, "excitation.phase_max", ex.phase_range[1])),
            seed=seed,
            target_channels=None if channels is None else tuple(int(c) for c in channels),
        )
    except ValueError as exc:
        raise ConfigError(str(exc), key="excitation") from None
    scn = dataclasses.replace(scn, **over)

    T = _number(flat, "run.T", scn.T)
    h = _number(flat, "run.h", scn.h)
    _validate(scn, T, h)
    out = flat.get("run.output_dir") or os.environ.get(OUTPUT_DIR_ENV) or DEFAULT_OUTPUT_DIR
    emit_svg = flat.get("run.emit_svg", False)
    if not isinstance(emit_svg, bool):
        raise ConfigError("expected true or false", key="run.emit_svg")
    log_every = _number(flat, "run.log_every", None, int)
    if log_every is not None and log_every < 1:
        raise ConfigError("must be at least 1", key="run.log_every")
    return RunConfig(
        scenario=scn, T=T, h=h, seed=seed, output_dir=Path(out), emit_svg=emit_svg,
        log_every=log_every,
        varpi_rel=_number(flat, "certify.varpi_rel", 0.05),
        hjb_tol=_number(flat, "certify.hjb_tol", 1e-2),
        fi_tol=_number(flat, "informativity.fi_tol", 1e-6),
        source=source,
    )


def _validate(scn: Scenario, T: float, h: float):
    checks = [
        (T > 0, "run.T", "must be positive"),
        (h > 0, "run.h", "must be positive"),
        (h <= scn.data_period * (1 + 1e-12), "run.h", "must not exceed scenario.data_period"),
        (scn.data_period > 0, "scenario.data_period", "must be positive"),
        (scn.purge_period >= 0, "scenario.purge_period", "must be non-negative"),
        (scn.eps >= 0, "scenario.epsilon", "must be non-negative"),
        (scn.k4 > 0, "scenario.k4", "must be positive"),
        (scn.r1 > 0, "scenario.r1", "must be positive"),
        (scn.cond_threshold > 0, "scenario.cond_threshold", "must be positive"),
        (scn.purge_policy in ("and", "or"), "scenario.purge_policy", "must be 'and' or 'or'"),
        (scn.excitation_mode in ("input", "disturbance"), "scenario.excitation_mode",
         "must be 'input' or 'disturbance'"),
        (scn.stack_size is None or scn.stack_size >= 1, "scenario.stack_size", "must be at least 1"),
    ]
    for ok, key, msg in checks:
        if not ok:
            raise ConfigError(msg, key=key)
    n, m = scn.sys.n, scn.sys.m
    shapes = [
        (scn.Q.shape == (n, n), "cost.Q", f"must be {n}x{n}"),
        (scn.R.shape == (m, m), "cost.R", f"must be {m}x{m}"),
        (np.asarray(scn.x0).size == n, "scenario.x0", f"must have {n} entries"),
        (scn.x_hat0 is None or np.asarray(scn.x_hat0).size == n, "scenario.x_hat0", f"must have {n} entries"),
        (scn.w0 is None or np.asarray(scn.w0).size == scn.layout.n_weights, "scenario.w0",
         f"must have {scn.layout.n_weights} entries"),
        (scn.K3 is None or np.shape(scn.K3) == (n, scn.sys.C.shape[0]), "gains.K3",
         f"must be {n}x{scn.sys.C.shape[0]}"),
        (scn.K3 is not None or (scn.observer_poles is not None and len(scn.observer_poles) == n),
         "scenario.observer_poles", f"must have {n} entries"),
    ]
    for ok, key, msg in shapes:
        if not ok:
            raise ConfigError(msg, key=key)


def load_config(path, scenario: str | None = None) -> RunConfig:
    """Read a YAML config file; ``scenario`` overrides ``scenario.name``."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = mark.line + 1 if mark is not None else None
        raise ConfigError(f"parse error: {getattr(exc, 'problem', exc)}", line=line) from None
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("top level must be a mapping")
    return parse_config(_flatten(data), scenario=scenario, source=str(path))
