"""model.json persistence and CSV/JSON report writers.

JSON is written with sorted keys and Python's shortest round-trip float
repr, so a save/load cycle reproduces every float exactly and reruns with the
same seed give byte-identical files.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .core import BlockParams, BlockPartition, DataError, MixtureParams, ModelSpec, StructureError
from .likelihood import summaries

SCHEMA_VERSION = 1


@dataclass
class FittedModel:
    spec: ModelSpec
    params: MixtureParams
    names: tuple[str, ...]
    levels: tuple[tuple[str, ...], ...]
    loglik: float | None = None
    bic: float | None = None
    seed: int | None = None
    extra: dict = field(default_factory=dict)

    def __eq__(self, other):
        if not isinstance(other, FittedModel):
            return NotImplemented
        return (self.spec == other.spec and self.params == other.params and self.names == other.names
                and self.levels == other.levels and self.loglik == other.loglik and self.bic == other.bic
                and self.seed == other.seed and self.extra == other.extra)


def _floats(values) -> list[float]:
    return [float(v) for v in np.asarray(values, dtype=np.float64).ravel()]


def model_to_dict(model: FittedModel) -> dict:
    spec, params = model.spec, model.params
    kappa, rho = summaries(params, spec)
    return {
        "schema_version": SCHEMA_VERSION,
        "software_version": __version__,
        "variables": [{"name": n, "levels": list(lv)} for n, lv in zip(model.names, model.levels)],
        "g": spec.g,
        "sigma": [[model.names[v] for v in blk] for blk in spec.partition.blocks],
        "modes": [list(row) for row in spec.modes],
        "pi": _floats(params.pi),
        "blocks": [
            [{"delta": [int(c) for c in bp.delta], "a": _floats(bp.a)} for bp in row]
            for row in params.blocks
        ],
        "kappa": [_floats(r) for r in kappa],
        "rho": [_floats(r) for r in rho],
        "nu": spec.n_params,
        "loglik": model.loglik,
        "bic": model.bic,
        "seed": model.seed,
        "extra": model.extra,
    }


def model_from_dict(doc: dict) -> FittedModel:
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise DataError(f"unsupported model schema version {doc.get('schema_version')!r}")
    try:
        names = tuple(v["name"] for v in doc["variables"])
        levels = tuple(tuple(v["levels"]) for v in doc["variables"])
        index = {n: i for i, n in enumerate(names)}
        partition = BlockPartition(tuple(tuple(index[n] for n in blk) for blk in doc["sigma"]))
        spec = ModelSpec(int(doc["g"]), partition, tuple(tuple(r) for r in doc["modes"]),
                         tuple(len(lv) for lv in levels))
        sizes = spec.block_sizes
        blocks = tuple(
            tuple(BlockParams(tuple(b["delta"]), np.array(b["a"], dtype=np.float64), sizes[j])
                  for j, b in enumerate(row))
            for row in doc["blocks"]
        )
        params = MixtureParams(np.array(doc["pi"], dtype=np.float64), blocks)
    except (KeyError, TypeError) as exc:
        raise DataError(f"malformed model document: {exc}") from exc
    params.check(spec)
    return FittedModel(spec, params, names, levels, doc.get("loglik"), doc.get("bic"), doc.get("seed"),
                       doc.get("extra") or {})


def dumps(doc) -> str:
    return json.dumps(doc, sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_json(doc, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps(doc))


def read_json(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON ({exc})") from exc


def save_model(model: FittedModel, path) -> None:
    write_json(model_to_dict(model), path)


def load_model(path) -> FittedModel:
    doc = read_json(path)
    try:
        return model_from_dict(doc)
    except StructureError as exc:
        raise DataError(f"{path}: {exc}") from exc


def write_table(path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in row])
