"""Reading and writing model files.

Models are stored as JSON documents validated against the bundled schema
(schema/model_schema.json). The top-level "model_type" selects the model
family: "jackson" (parametric routing), "epn" (energy allocation), or
"dag_spec" (a seeded benchmark instance, materialized on load). Floats
round-trip exactly because the encoder emits shortest-repr decimals.
"""

from __future__ import annotations

import json
from functools import lru_cache
from importlib import resources
from typing import Optional

import jsonschema
import numpy as np

from .core import Box
from .errors import ModelFormatError
from .models import (
    ControlledLink,
    EnergyNetwork,
    FixedLink,
    JacksonNetwork,
    ModelBundle,
    random_forward_dag,
)

__all__ = [
    "model_schema",
    "model_from_dict",
    "model_to_dict",
    "load_model",
    "save_model",
]


@lru_cache(maxsize=1)
def model_schema() -> dict:
    """The JSON schema all model documents must satisfy."""
    text = resources.files("pgflow").joinpath("schema/model_schema.json").read_text()
    return json.loads(text)


def _validate(doc: dict) -> None:
    try:
        jsonschema.validate(doc, model_schema())
    except jsonschema.ValidationError as err:
        where = "/".join(str(s) for s in err.absolute_path) or "(root)"
        raise ModelFormatError(f"model document invalid at {where}: {err.message}") from err


def _link_from_entry(entry: dict):
    src = entry["from"]
    dst = entry["to"]
    if entry["kind"] == "fixed":
        return FixedLink(src, dst, float(entry["value_or_param"]))
    return ControlledLink(
        src,
        dst,
        int(entry["value_or_param"]),
        offset=float(entry.get("offset", 0.0)),
        complement=entry["kind"] == "complement",
    )


def _entry_from_link(link) -> dict:
    entry: dict = {
        "from": int(link.source),
        "to": None if link.target is None else int(link.target),
    }
    if isinstance(link, FixedLink):
        entry["kind"] = "fixed"
        entry["value_or_param"] = float(link.prob)
    else:
        entry["kind"] = "complement" if link.complement else "param"
        entry["value_or_param"] = int(link.param)
        if link.offset != 0.0:
            entry["offset"] = float(link.offset)
    return entry


def _check_theta0(theta0: Optional[np.ndarray], expected: int) -> None:
    if theta0 is not None and theta0.shape != (expected,):
        raise ModelFormatError(
            f"theta0 has length {theta0.size}, expected {expected}"
        )


def model_from_dict(doc: dict) -> ModelBundle:
    """Build a ModelBundle from a parsed model document."""
    if not isinstance(doc, dict):
        raise ModelFormatError("model document must be a JSON object")
    _validate(doc)
    theta0 = doc.get("theta0")
    if theta0 is not None:
        theta0 = np.asarray(theta0, dtype=float)
    mtype = doc["model_type"]
    if mtype == "jackson":
        bounds = None
        if "bounds" in doc:
            bounds = Box(tuple(doc["bounds"]["lower"]), tuple(doc["bounds"]["upper"]))
        network = JacksonNetwork(
            mu=np.asarray(doc["mu"], dtype=float),
            lam_ext=np.asarray(doc["lam_ext"], dtype=float),
            links=tuple(_link_from_entry(e) for e in doc["links"]),
            param_dim=doc["param_dim"],
            bounds=bounds,
            weights=(
                np.asarray(doc["weights"], dtype=float) if "weights" in doc else None
            ),
        )
        _check_theta0(theta0, network.param_dim)
        return network.build(theta0=theta0)
    if mtype == "epn":
        network = EnergyNetwork(
            routing=np.asarray(doc["routing"], dtype=float),
            lam_ext=np.asarray(doc["lam_ext"], dtype=float),
            mu=np.asarray(doc["mu"], dtype=float),
            gamma=np.asarray(doc["gamma"], dtype=float),
            budget=float(doc["budget"]),
            w_delay=float(doc.get("w_delay", 1.0)),
            w_energy=float(doc.get("w_energy", 1.0)),
        )
        _check_theta0(theta0, network.dim)
        return network.build(theta0=theta0)
    # dag_spec: materialize the seeded instance
    network = random_forward_dag(doc["d"], doc["p"], doc["seed"])
    _check_theta0(theta0, network.param_dim)
    return network.build(theta0=theta0)


def model_to_dict(network, theta0: Optional[np.ndarray] = None) -> dict:
    """Serialize a network object into a schema-valid document.

    Generated benchmark instances serialize in materialized "jackson" form,
    which loads back to the identical network without the seed.
    """
    if isinstance(network, JacksonNetwork):
        doc = {
            "model_type": "jackson",
            "mu": network.mu.tolist(),
            "lam_ext": network.lam_ext.tolist(),
            "param_dim": int(network.param_dim),
            "links": [_entry_from_link(link) for link in network.links],
        }
        lo = np.asarray(network.bounds.lower)
        hi = np.asarray(network.bounds.upper)
        if network.param_dim and (np.any(lo != 0.0) or np.any(hi != 1.0)):
            doc["bounds"] = {"lower": lo.tolist(), "upper": hi.tolist()}
        if network.weights is not None:
            doc["weights"] = network.weights.tolist()
    elif isinstance(network, EnergyNetwork):
        doc = {
            "model_type": "epn",
            "routing": network.routing.tolist(),
            "lam_ext": network.lam_ext.tolist(),
            "mu": network.mu.tolist(),
            "gamma": network.gamma.tolist(),
            "budget": float(network.budget),
        }
        if network.w_delay != 1.0:
            doc["w_delay"] = float(network.w_delay)
        if network.w_energy != 1.0:
            doc["w_energy"] = float(network.w_energy)
    else:
        raise ModelFormatError(f"cannot serialize {type(network).__name__}")
    if theta0 is not None:
        doc["theta0"] = np.asarray(theta0, dtype=float).tolist()
    return doc


def load_model(path) -> ModelBundle:
    """Load and validate a model file, returning its bundle."""
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as err:
        raise ModelFormatError(f"cannot read model file {path}: {err}") from err
    except json.JSONDecodeError as err:
        raise ModelFormatError(f"model file {path} is not valid JSON: {err}") from err
    return model_from_dict(doc)


def save_model(network, path, theta0: Optional[np.ndarray] = None) -> None:
    """Write a network to a schema-valid JSON model file."""
    doc = model_to_dict(network, theta0=theta0)
    _validate(doc)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")
