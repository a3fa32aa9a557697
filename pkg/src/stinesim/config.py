"""Experiment configuration: JSON documents with full validation.

A config document is a JSON object with keys

    kind     one of sff | tmat-check | ssep | east | collapse | dilated-demo
    seed     unsigned 64-bit master seed
    workers  worker-process count (>= 1)
    out      output directory
    params   kind-specific block (see PARAM_FIELDS)

Unknown fields anywhere are rejected; parse errors report every violation
at once.  Configs round-trip losslessly through `to_json`.
"""

import json
from dataclasses import dataclass, field

__all__ = ["ExperimentConfig", "ConfigError", "parse_config", "to_json",
           "KINDS", "PARAM_FIELDS"]

KINDS = ("sff", "tmat-check", "ssep", "east", "collapse", "dilated-demo")

# field name -> (type, required, default, validator)
_pos_int = lambda v: v >= 1
_seed = lambda v: 0 <= v < 2 ** 64
_gamma = lambda v: 0.0 <= v <= 1.0
_gammas = lambda v: len(v) >= 1 and all(isinstance(g, float) and 0.0 <= g <= 1.0 for g in v)

PARAM_FIELDS = {
    "sff": {
        "variant": (str, True, None, lambda v: v in
                    ("unitary", "postselected", "reset", "transition", "state-dependent")),
        "n_sites": (int, True, None, lambda v: 2 <= v <= 10),
        "q": (int, False, 2, lambda v: v >= 2),
        "t_max": (int, True, None, _pos_int),
        "realizations": (int, False, 500, _pos_int),
        "blocks": (str, False, "generic", lambda v: v in ("generic", "u1", "ising")),
        "measured_sites": (list, False, [], lambda v: all(isinstance(s, int) for s in v)),
        "measurement_basis": (str, False, "z", lambda v: v in ("z", "x")),
    },
    "tmat-check": {
        "n_sites": (int, False, 4, lambda v: 2 <= v <= 6),
        "steps": (int, False, 2, _pos_int),
        "gamma": (float, True, None, _gamma),
        "realizations": (int, False, 10000, _pos_int),
    },
    "ssep": {
        "L": (int, True, None, lambda v: v >= 2),
        "gammas": (list, True, None, _gammas),
        "t_max": (int, True, None, _pos_int),
        "samples": (int, False, 10000, _pos_int),
        "boundary": (str, False, "periodic", lambda v: v in ("periodic", "open")),
        "interleaving": (str, False, "layer", lambda v: v in ("layer", "brickwork")),
        "dump_absorption": (bool, False, False, lambda v: True),
    },
    "east": {
        "L_values": (list, True, None, lambda v: all(isinstance(x, int) and x >= 2 for x in v)),
        "gammas": (list, True, None, _gammas),
        "t_factor": (float, False, 2.0, lambda v: v > 0),
        "t_max": (int, False, 0, lambda v: v >= 0),
        "samples": (int, False, 10000, _pos_int),
        "boundary": (str, False, "periodic", lambda v: v in ("periodic", "open")),
        "interleaving": (str, False, "layer", lambda v: v in ("layer", "brickwork")),
        "dump_absorption": (bool, False, False, lambda v: True),
    },
    "collapse": {
        "inputs": (list, True, None, lambda v: len(v) >= 1 and all(isinstance(s, str) for s in v)),
        "delta": (float, False, 0.159, lambda v: v > 0),
        "nu_par": (float, False, 1.73, lambda v: v > 0),
        "gamma_c_grid": (list, True, None, lambda v: len(v) >= 1),
        "mode": (str, False, "fixed-ratio", lambda v: v in ("fixed-ratio", "fixed-size")),
        "ratio": (float, False, 2.0, lambda v: v > 0),
        "bins": (int, False, 20, _pos_int),
        "fit_gamma": (float, False, 0.0, lambda v: 0.0 <= v <= 1.0),
        "fit_window": (list, False, [32, 512], lambda v: len(v) == 2),
    },
    "dilated-demo": {
        "n_states": (int, False, 100, _pos_int),
    },
}

_TOP_FIELDS = {
    "kind": (str, True, None, lambda v: True),
    "seed": (int, False, 0, _seed),
    "workers": (int, False, 1, _pos_int),
    "out": (str, False, ".", lambda v: len(v) > 0),
    "params": (dict, True, None, lambda v: True),
}


class ConfigError(ValueError):
    """Carries every violation found while parsing a config document."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("invalid config:\n  " + "\n  ".join(self.violations))


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    seed: int
    workers: int
    out: str
    params: dict

    def canonical(self):
        return {"kind": self.kind, "seed": self.seed, "workers": self.workers,
                "out": self.out, "params": dict(sorted(self.params.items()))}


def _check_fields(block, schema, where, violations):
    out = {}
    for name, value in block.items():
        if name not in schema:
            violations.append(f"unknown field {where}{name!r}")
    for name, (typ, required, default, check) in schema.items():
        if name not in block:
            if required:
                violations.append(f"missing required field {where}{name!r}")
            else:
                out[name] = default
            continue
        value = block[name]
        if typ is float and isinstance(value, int) and not isinstance(value, bool):
            value = float(value)
        if not isinstance(value, typ) or isinstance(value, bool) and typ is not bool:
            violations.append(f"field {where}{name!r} must be {typ.__name__}")
            continue
        if not check(value):
            violations.append(f"field {where}{name!r} has out-of-range value {value!r}")
            continue
        out[name] = value
    return out


def parse_config(text):
    """Parse and validate a JSON config; raises ConfigError listing every
    violation."""
    violations = []
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError([f"not valid JSON: {exc}"]) from exc
    if not isinstance(doc, dict):
        raise ConfigError(["top level must be a JSON object"])
    top = _check_fields(doc, _TOP_FIELDS, "", violations)
    kind = top.get("kind")
    params = {}
    if kind is not None and kind not in KINDS:
        violations.append(f"unknown experiment kind {kind!r} (supported: {', '.join(KINDS)})")
    elif kind is not None and isinstance(doc.get("params"), dict):
        params = _check_fields(doc["params"], PARAM_FIELDS[kind], "params.", violations)
        violations.extend(_cross_checks(kind, params))
    if violations:
        raise ConfigError(violations)
    return ExperimentConfig(kind, top["seed"], top["workers"], top["out"], params)


def _cross_checks(kind, params):
    out = []
    if kind in ("ssep", "east") and params.get("boundary") == "periodic":
        ls = params.get("L_values", [params.get("L")]) if kind == "east" \
            else [params.get("L")]
        for L in ls:
            if isinstance(L, int) and L % 2:
                out.append(f"odd L={L} is incompatible with periodic boundaries")
    if kind == "east" and not params.get("t_max") and not params.get("t_factor"):
        out.append("east needs t_max or t_factor")
    return out


def to_json(config):
    """Serialize a config; parse_config(to_json(c)) == c."""
    return json.dumps(config.canonical(), indent=2, sort_keys=True) + "\n"
