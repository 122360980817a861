"""Instance and report files: versioned JSON with exact float round-trips.

Complex matrices are stored as nested row-major arrays of [re, im] pairs.
Floats are emitted in Python's shortest round-trip decimal form, so
load(save(x)) reproduces every matrix entry bit for bit.  Loaded objects are
run through their validators before use.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .algebra import (
    AlgebraElement,
    BlockAlgebra,
    Povm,
    Pvm,
    State,
    Tolerances,
    DEFAULT_TOL,
    ValidationError,
    validate_povm,
    validate_pvm,
    validate_state,
)
from .majorant import FunctionalFamily

INSTANCE_FORMAT = "povmround/instance"
REPORT_FORMAT = "povmround/report"
FORMAT_VERSION = 1


def _encode_matrix(m: np.ndarray) -> list:
    return [[[float(z.real), float(z.imag)] for z in row] for row in np.asarray(m, dtype=complex)]


def _decode_matrix(data) -> np.ndarray:
    rows = []
    for row in data:
        rows.append([complex(re, im) for re, im in row])
    return np.array(rows, dtype=complex)


def encode_element(x: AlgebraElement) -> list:
    return [_encode_matrix(b) for b in x.blocks]


def decode_element(alg: BlockAlgebra, data) -> AlgebraElement:
    return AlgebraElement(alg, [_decode_matrix(b) for b in data])


@dataclass
class Instance:
    """One problem instance: algebra plus whichever objects a command needs."""

    algebra: BlockAlgebra
    state: State | None = None
    povm: Povm | None = None
    pvm_pair: tuple[Pvm, Pvm] | None = None
    functionals: FunctionalFamily | None = None
    metadata: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        doc = {
            "format": INSTANCE_FORMAT,
            "version": FORMAT_VERSION,
            "dims": list(self.algebra.dims),
            "metadata": self.metadata,
        }
        if self.state is not None:
            doc["state"] = [_encode_matrix(r) for r in self.state.densities]
        if self.povm is not None:
            doc["povm"] = [encode_element(e) for e in self.povm.elements]
        if self.pvm_pair is not None:
            p, q = self.pvm_pair
            doc["pvm_pair"] = {
                "p": [encode_element(e) for e in p.elements],
                "q": [encode_element(e) for e in q.elements],
            }
        if self.functionals is not None:
            doc["functionals"] = [encode_element(e) for e in self.functionals.elements]
        return doc

    @classmethod
    def from_json(cls, doc: dict, tol: Tolerances = DEFAULT_TOL) -> "Instance":
        if doc.get("format") != INSTANCE_FORMAT:
            raise ValidationError(f"not an instance file (format={doc.get('format')!r})")
        if doc.get("version") != FORMAT_VERSION:
            raise ValidationError(f"unsupported instance version {doc.get('version')!r}")
        alg = BlockAlgebra(tuple(doc["dims"]))
        inst = cls(algebra=alg, metadata=doc.get("metadata", {}))
        if "state" in doc:
            inst.state = State(alg, [_decode_matrix(r) for r in doc["state"]])
            diag = validate_state(alg, inst.state, tol)
            if not diag.is_valid:
                raise ValidationError(f"state in file fails validation: {diag}")
        if "povm" in doc:
            inst.povm = Povm(alg, [decode_element(alg, e) for e in doc["povm"]])
            diag = validate_povm(alg, inst.povm, tol)
            if not diag.is_valid:
                raise ValidationError(f"POVM in file fails validation: {diag}")
        if "pvm_pair" in doc:
            p = Pvm(alg, [decode_element(alg, e) for e in doc["pvm_pair"]["p"]])
            q = Pvm(alg, [decode_element(alg, e) for e in doc["pvm_pair"]["q"]])
            for name, pvm in (("p", p), ("q", q)):
                diag = validate_pvm(alg, pvm, tol)
                if not diag.is_valid:
                    raise ValidationError(f"PVM {name!r} in file fails validation: {diag}")
            inst.pvm_pair = (p, q)
        if "functionals" in doc:
            fam = FunctionalFamily([decode_element(alg, e) for e in doc["functionals"]])
            fam.validate(tol)
            inst.functionals = fam
        return inst


def dumps(doc: dict) -> str:
    # allow_nan=False keeps the files strict JSON; non-finite values must be
    # mapped to null by the caller before they reach serialization
    return json.dumps(doc, sort_keys=True, indent=2, allow_nan=False) + "\n"


def save_instance(inst: Instance, path) -> None:
    Path(path).write_text(dumps(inst.to_json()))


def load_instance(path, tol: Tolerances = DEFAULT_TOL) -> Instance:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"cannot parse {path}: {exc}") from exc
    return Instance.from_json(doc, tol)


def file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


@dataclass
class BoundCheck:
    """One certified bound: measured value against its threshold."""

    name: str
    value: float
    threshold: float
    passed: bool

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "value": self.value,
            "threshold": self.threshold,
            "pass": bool(self.passed),
        }


def check_leq(name: str, value: float, threshold: float) -> BoundCheck:
    return BoundCheck(name, float(value), float(threshold), bool(value <= threshold))


def check_geq(name: str, value: float, threshold: float) -> BoundCheck:
    return BoundCheck(name, float(value), float(threshold), bool(value >= threshold))


def make_report(
    command: str,
    input_digest: str,
    tol: Tolerances,
    result: dict,
    checks: list[BoundCheck],
    duration_s: float,
    metadata: dict | None = None,
) -> dict:
    return {
        "format": REPORT_FORMAT,
        "version": FORMAT_VERSION,
        "command": command,
        "input_digest": input_digest,
        "tolerances": tol.as_dict(),
        "result": result,
        "checks": [c.to_json() for c in checks],
        "pass": all(c.passed for c in checks),
        "duration_s": duration_s,
        "metadata": metadata or {},
    }


def save_report(doc: dict, path) -> None:
    Path(path).write_text(dumps(doc))


def load_report(path) -> dict:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"cannot parse {path}: {exc}") from exc
    if doc.get("format") != REPORT_FORMAT:
        raise ValidationError(f"not a report file (format={doc.get('format')!r})")
    return doc
