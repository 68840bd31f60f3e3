"""JSON configuration: bundled defaults, overrides, validation and hashing.

A config document has one section per parameter group (``gen``, ``der``,
``tur``, ``gov``, ``numerics``, ``integration``), a scalar ``gamma`` and a
``calibration`` section.  Calibration values are dotted keys such as
``"gov.sigma"``; they are applied on top of the bundled sections, and an
explicit key in a user section wins over any calibration value.
"""
from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import asdict, fields, replace
from importlib import resources
from pathlib import Path

from .errors import ConfigError, ParameterError
from .params import (
    DerivedElectricalParams,
    GeneratorRatings,
    GovernorParams,
    NumericsConfig,
    TurbineParams,
    UnitParams,
    derive_params,
)
from .transient import IntegrationConfig

SCHEMA = "hydrounit-config/1"
SECTIONS = {
    "gen": GeneratorRatings,
    "tur": TurbineParams,
    "gov": GovernorParams,
    "numerics": NumericsConfig,
    "integration": IntegrationConfig,
}
DER_KEYS = {f.name for f in fields(DerivedElectricalParams)}
TOP_KEYS = set(SECTIONS) | {"der", "gamma", "calibration", "schema"}


def bundled_defaults() -> dict:
    """The packaged ``sayano-defaults.json`` as a dict."""
    text = resources.files("hydrounit").joinpath("data/sayano-defaults.json").read_text()
    return json.loads(text)


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _set_dotted(doc: dict, key: str, value) -> None:
    section, _, name = key.partition(".")
    if not name or section not in SECTIONS:
        raise ParameterError(f"calibration.values.{key}", "must be '<section>.<field>'")
    doc.setdefault(section, {})[name] = value


def resolve(user: dict | None = None) -> dict:
    """Fully merged config document (defaults, calibration, user overrides)."""
    user = {} if user is None else user
    if not isinstance(user, dict):
        raise ConfigError("config document must be a JSON object")
    for key in user:
        if key not in TOP_KEYS:
            raise ParameterError(key, "unknown top-level key")
    defaults = bundled_defaults()
    cal = _merge(defaults.get("calibration", {}), user.get("calibration", {}))
    doc = {k: v for k, v in defaults.items() if k != "calibration"}
    for key, value in cal.get("values", {}).items():
        _set_dotted(doc, key, value)
    doc = _merge(doc, {k: v for k, v in user.items() if k != "calibration"})
    doc["calibration"] = cal
    doc["schema"] = SCHEMA
    return doc


def _build(cls, section: str, values: dict):
    if not isinstance(values, dict):
        raise ParameterError(section, "must be a JSON object")
    known = {f.name: f for f in fields(cls)}
    kwargs = {}
    for key, value in values.items():
        if key not in known:
            raise ParameterError(f"{section}.{key}", "unknown parameter")
        if known[key].type in ("bool", bool):
            if not isinstance(value, bool):
                raise ParameterError(f"{section}.{key}", f"expected true/false, got {value!r}")
        elif isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ParameterError(f"{section}.{key}", f"expected a number, got {value!r}")
        kwargs[key] = value
    obj = cls(**kwargs)
    validate = getattr(obj, "validate", None)
    if validate is not None:
        validate(section)
    return obj


def params_from_doc(doc: dict, strict: bool = True) -> tuple[UnitParams, IntegrationConfig]:
    """Build validated objects from a resolved document.

    With ``strict=False`` explicit derived values in ``der`` are accepted
    even when they disagree with the generator ratings (used by the
    ``check`` command to diagnose such configs).
    """
    built = {name: _build(cls, name, doc.get(name, {})) for name, cls in SECTIONS.items()}
    der_doc = doc.get("der", {})
    if not isinstance(der_doc, dict):
        raise ParameterError("der", "must be a JSON object")
    for key, value in der_doc.items():
        if key not in DER_KEYS:
            raise ParameterError(f"der.{key}", "unknown parameter")
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ParameterError(f"der.{key}", f"expected a number, got {value!r}")
    der = derive_params(
        built["gen"], der_doc.get("r_rd", 0.1246), der_doc.get("r_rq", 0.0823)
    )
    explicit = {k: v for k, v in der_doc.items() if k not in ("r_rd", "r_rq")}
    if explicit:
        der = replace(der, **explicit)
    gamma = doc.get("gamma", 1.0)
    if isinstance(gamma, bool) or not isinstance(gamma, (int, float)):
        raise ParameterError("gamma", f"expected a number, got {gamma!r}")
    params = UnitParams(
        gen=built["gen"], der=der, tur=built["tur"], gov=built["gov"], gamma=float(gamma),
        numerics=built["numerics"], check_derived=strict,
    )
    return params, built["integration"]


def load_config(path=None, strict: bool = True) -> tuple[UnitParams, IntegrationConfig]:
    """Load a JSON config file (or the defaults when ``path`` is None).

    Raises
    ------
    ConfigError
        On unreadable or malformed JSON.
    ParameterError
        On an invalid value; ``exc.key`` names the offending field.
    """
    if path is None:
        user = {}
    else:
        try:
            user = json.loads(Path(path).read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    return params_from_doc(resolve(user), strict=strict)


def to_doc(params: UnitParams, integ: IntegrationConfig) -> dict:
    """Fully explicit config document for ``params`` and ``integ``."""
    der = {"r_rd": params.der.r_rd, "r_rq": params.der.r_rq}
    if not params.check_derived:
        der = asdict(params.der)
    return {
        "schema": SCHEMA,
        "gen": asdict(params.gen),
        "der": der,
        "tur": asdict(params.tur),
        "gov": asdict(params.gov),
        "gamma": params.gamma,
        "numerics": asdict(params.numerics),
        "integration": asdict(integ),
        "calibration": {"values": {}, "provenance": bundled_defaults()["calibration"]["provenance"]},
    }


def save_config(params: UnitParams, integ: IntegrationConfig, path) -> None:
    Path(path).write_text(json.dumps(to_doc(params, integ), indent=2, sort_keys=True) + "\n")


def config_hash(params: UnitParams, integ: IntegrationConfig) -> str:
    """sha256 of the canonical JSON of every parameter value."""
    doc = to_doc(params, integ)
    doc.pop("calibration")
    blob = json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()
