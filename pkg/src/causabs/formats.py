"""JSON files for models, alignments, quantum diagrams and verdict reports.

Scalars: exact rationals are written as ``"p/q"`` strings, floats as
numbers and complex numbers as ``[re, im]`` pairs. Deterministic channels
may be written as a ``table`` (one codomain index per domain index);
anything else as a ``matrix`` with one row per codomain value.
"""

from __future__ import annotations

import hashlib
import json
import sys
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Any

import jsonschema
import numpy as np

from . import quantum as qc
from . import stoch
from .abstraction import VariableAlignment, Verdict
from .model import CausalModel, FunctionalCausalModel, ModelIso, OpenDag, canon
from .qabs import QuantumDagModel, edge
from .quantum import QCMorphism, QCObject
from .stoch import Channel, FinVar

VERSION = 1


class SchemaError(ValueError):
    """Schema violation; ``pointer`` is a JSON pointer into the document."""

    def __init__(self, pointer: str, msg: str):
        super().__init__(f"{pointer or '/'}: {msg}")
        self.pointer = pointer


# scalars -----------------------------------------------------------------------
def dump_scalar(x):
    if isinstance(x, Fraction):
        return str(x.numerator) if x.denominator == 1 else f"{x.numerator}/{x.denominator}"
    if isinstance(x, (complex, np.complexfloating)):
        return [float(x.real), float(x.imag)]
    if isinstance(x, (np.integer,)):
        return int(x)
    return float(x) if isinstance(x, (float, np.floating)) else x


def load_scalar(x):
    if isinstance(x, str):
        return Fraction(x)
    if isinstance(x, list):
        return complex(x[0], x[1])
    if isinstance(x, int):
        return Fraction(x)
    return float(x)


def _complex_array(x) -> np.ndarray:
    a = np.asarray(x, dtype=float)
    return a[..., 0] + 1j * a[..., 1]


def _dump_complex(a: np.ndarray) -> list:
    return np.stack([a.real, a.imag], axis=-1).tolist()


# schemas -----------------------------------------------------------------------
_name = {"type": "string", "minLength": 1}
_var = {"type": "object", "required": ["name", "card"], "properties": {"name": _name, "card": {"type": "integer", "minimum": 1}}, "additionalProperties": False}
_scalar = {"anyOf": [{"type": "number"}, {"type": "string", "pattern": r"^-?\d+(/\d+)?$"}]}
_channel = {
    "type": "object",
    "required": ["parents"],
    "properties": {
        "parents": {"type": "array", "items": _name},
        "table": {"type": "array", "items": {"type": "integer", "minimum": 0}},
        "matrix": {"type": "array", "items": {"type": "array", "items": _scalar}},
    },
    "oneOf": [{"required": ["table"]}, {"required": ["matrix"]}],
    "additionalProperties": False,
}
MODEL_SCHEMA = {
    "type": "object",
    "required": ["version", "kind", "variables", "inputs", "mechanisms"],
    "properties": {
        "version": {"const": VERSION},
        "kind": {"const": "model"},
        "name": {"type": "string"},
        "variables": {"type": "array", "items": _var},
        "inputs": {"type": "array", "items": _name},
        "outputs": {"type": "array", "items": _name},
        "edges": {"type": "array", "items": {"type": "array", "items": _name, "minItems": 2, "maxItems": 2}},
        "mechanisms": {"type": "object", "additionalProperties": _channel},
        "fcm": {
            "type": "object",
            "required": ["exo", "noise", "functions"],
            "properties": {
                "exo": {"type": "array", "items": _var},
                "noise": {"type": "object", "additionalProperties": {"type": "array", "items": _scalar}},
                "functions": {"type": "object", "additionalProperties": _channel},
            },
            "additionalProperties": False,
        },
    },
    "additionalProperties": False,
}
_tau = {
    "type": "object",
    "required": ["card"],
    "properties": {"card": {"type": "integer", "minimum": 1}, "table": {"type": "array", "items": {"type": "integer", "minimum": 0}}, "matrix": {"type": "array"}},
    "oneOf": [{"required": ["table"]}, {"required": ["matrix"]}],
    "additionalProperties": False,
}
_do = {"type": "object", "additionalProperties": {"type": "integer", "minimum": 0}}
ALIGNMENT_SCHEMA = {
    "type": "object",
    "required": ["version", "kind", "pi"],
    "properties": {
        "version": {"const": VERSION},
        "kind": {"const": "alignment"},
        "pi": {"type": "object", "additionalProperties": {"type": "array", "items": _name}},
        "tau": {"type": "object", "additionalProperties": _tau},
        "iso": {
            "type": "object",
            "required": ["dom", "cod", "table", "w_inputs"],
            "properties": {
                "dom": {"type": "array", "items": _var},
                "cod": {"type": "array", "items": _var},
                "table": {"type": "array", "items": {"type": "integer", "minimum": 0}},
                "w_inputs": {"type": "array", "items": _name},
            },
            "additionalProperties": False,
        },
        "omega": {"type": "array", "items": {"type": "array", "items": _do, "minItems": 2, "maxItems": 2}},
        "query_map": {"type": "array", "items": {"type": "array", "items": {"type": "array", "items": _name}, "minItems": 2, "maxItems": 2}},
    },
    "additionalProperties": False,
}
_qobj = {
    "type": "object",
    "required": ["qdim"],
    "properties": {"qdim": {"type": "integer", "minimum": 1}, "cset": {"type": "array", "items": _var}},
    "additionalProperties": False,
}
_box = {
    "type": "object",
    "required": ["dom", "cod", "maps"],
    "properties": {"dom": _qobj, "cod": _qobj, "maps": {"type": "array"}},
    "additionalProperties": False,
}
QDAG_SCHEMA = {
    "type": "object",
    "required": ["version", "kind", "vertices", "edges", "inputs", "outputs", "objects", "m", "s"],
    "properties": {
        "version": {"const": VERSION},
        "kind": {"const": "qdag"},
        "name": {"type": "string"},
        "vertices": {"type": "array", "items": _name},
        "edges": {"type": "array", "items": {"type": "array", "items": _name, "minItems": 2, "maxItems": 2}},
        "inputs": {"type": "array", "items": _name},
        "outputs": {"type": "array", "items": _name},
        "objects": {
            "type": "object",
            "required": ["vertex", "edge", "out"],
            "properties": {k: {"type": "object", "additionalProperties": _qobj} for k in ("vertex", "edge", "out")},
            "additionalProperties": False,
        },
        "m": {"type": "object", "additionalProperties": _box},
        "s": {"type": "object", "additionalProperties": _box},
    },
    "additionalProperties": False,
}
QC_ALIGNMENT_SCHEMA = {
    "type": "object",
    "required": ["version", "kind", "taus"],
    "properties": {
        "version": {"const": VERSION},
        "kind": {"const": "qc_alignment"},
        "taus": {"type": "object", "additionalProperties": _box},
        "out_taus": {"type": "object", "additionalProperties": _box},
    },
    "additionalProperties": False,
}
SCHEMAS = {"model": MODEL_SCHEMA, "alignment": ALIGNMENT_SCHEMA, "qdag": QDAG_SCHEMA, "qc_alignment": QC_ALIGNMENT_SCHEMA}


def validate(doc: Any) -> str:
    """Validate against the schema named by ``doc["kind"]``; returns the kind."""
    if not isinstance(doc, dict) or doc.get("kind") not in SCHEMAS:
        raise SchemaError("/kind", f"kind must be one of {sorted(SCHEMAS)}")
    v = jsonschema.Draft202012Validator(SCHEMAS[doc["kind"]])
    errs = sorted(v.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errs:
        e = errs[0]
        raise SchemaError("/" + "/".join(str(p) for p in e.absolute_path), e.message)
    return doc["kind"]


# channels --------------------------------------------------------------------
def dump_channel(ch: Channel) -> dict:
    out: dict = {"parents": list(stoch.names(ch.dom))}
    if ch.table is not None:
        out["table"] = [int(x) for x in ch.table]
    else:
        out["matrix"] = [[dump_scalar(x) for x in row] for row in ch.matrix]
    return out


def load_channel(d: dict, var: dict, cod: FinVar, where: str) -> Channel:
    for p in d["parents"]:
        if p not in var:
            raise SchemaError(f"{where}/parents", f"unknown variable {p}")
    dom = [var[p] for p in d["parents"]]
    try:
        if "table" in d:
            return Channel(dom, [cod], table=d["table"])
        return Channel(dom, [cod], np.array([[load_scalar(x) for x in row] for row in d["matrix"]], dtype=object))
    except ValueError as e:
        raise SchemaError(where, str(e)) from None


def _vars(items) -> list[FinVar]:
    return [FinVar(v["name"], v["card"]) for v in items]


def _dump_vars(vs) -> list[dict]:
    return [{"name": v.name, "card": v.card} for v in vs]


# models -------------------------------------------------------------------------
def dump_model(m: CausalModel | FunctionalCausalModel) -> dict:
    if isinstance(m, FunctionalCausalModel):
        return {
            "version": VERSION, "kind": "model", "name": "",
            "variables": _dump_vars(m.endo), "inputs": [], "outputs": [v.name for v in m.endo],
            "edges": [], "mechanisms": {},
            "fcm": {
                "exo": _dump_vars(m.exo),
                "noise": {u: [dump_scalar(x) for x in stoch.dense(m.noise[u]).matrix[:, 0]] for u in sorted(m.noise)},
                "functions": {x: dump_channel(m.functions[x]) for x in sorted(m.functions)},
            },
        }
    return {
        "version": VERSION,
        "kind": "model",
        "name": m.name,
        "variables": _dump_vars(m.vars),
        "inputs": list(canon(m.inputs)),
        "outputs": list(canon(m.outputs)),
        "edges": [list(e) for e in sorted(m.dag.edges)],
        "mechanisms": {x: dump_channel(m.mechanisms[x]) for x in sorted(m.mechanisms)},
    }


def model_from_doc(doc: dict) -> CausalModel | FunctionalCausalModel:
    validate(doc)
    vs = _vars(doc["variables"])
    var = {v.name: v for v in vs}
    for i, x in enumerate(doc["inputs"] + doc.get("outputs", [])):
        if x not in var:
            raise SchemaError("/inputs" if i < len(doc["inputs"]) else "/outputs", f"unknown variable {x}")
    if "fcm" in doc:
        f = doc["fcm"]
        exo = _vars(f["exo"])
        allv = var | {u.name: u for u in exo}
        noise = {u: stoch.state([allv[u]], [load_scalar(p) for p in ps]) for u, ps in f["noise"].items()}
        funcs = {x: load_channel(c, allv, var[x], f"/fcm/functions/{x}") for x, c in f["functions"].items()}
        if set(funcs) != set(var):
            raise SchemaError("/fcm/functions", "one function per endogenous variable")
        own = {u.name: u for u in exo}
        try:
            return FunctionalCausalModel(vs, [own[stoch.names(funcs[x.name].dom)[-1]] for x in vs], noise, funcs)
        except (KeyError, ValueError) as e:
            raise SchemaError("/fcm", str(e)) from None
    mechs = {}
    for x, c in doc["mechanisms"].items():
        if x not in var:
            raise SchemaError(f"/mechanisms/{x}", "mechanism for an unknown variable")
        mechs[x] = load_channel(c, var, var[x], f"/mechanisms/{x}")
    try:
        m = CausalModel(vs, mechs, inputs=doc["inputs"], outputs=doc.get("outputs"), name=doc.get("name", ""))
    except ValueError as e:
        raise SchemaError("/mechanisms", str(e)) from None
    if "edges" in doc and {tuple(e) for e in doc["edges"]} != set(m.dag.edges):
        raise SchemaError("/edges", "edges disagree with the mechanisms' parents")
    return m


# alignments ------------------------------------------------------------------
@dataclass
class AlignmentFile:
    doc: dict

    def resolve(self, ML, MH) -> VariableAlignment:
        """The variable alignment between loaded models (``MH`` may be the induced model)."""
        from .abstraction import align

        lowvars = _all_vars(ML)
        taus = {}
        for h, t in self.doc.get("tau", {}).items():
            if h not in self.doc["pi"]:
                raise SchemaError(f"/tau/{h}", "tau given for a variable outside pi")
            dom = [lowvars[x] for x in self.doc["pi"][h]]
            cod = FinVar(h, t["card"])
            if "table" in t:
                taus[h] = Channel(dom, [cod], table=t["table"])
            else:
                taus[h] = Channel(dom, [cod], np.array([[load_scalar(x) for x in row] for row in t["matrix"]], dtype=object))
            if not stoch.is_deterministic(taus[h]) or not stoch.is_epic_deterministic(taus[h]):
                raise SchemaError(f"/tau/{h}", "tau must be deterministic and surjective")
        return align(ML, MH, self.doc["pi"], taus)

    def iso(self) -> ModelIso | None:
        d = self.doc.get("iso")
        if d is None:
            return None
        return ModelIso(Channel(_vars(d["dom"]), _vars(d["cod"]), table=d["table"]), frozenset(d["w_inputs"]))

    def omega(self, ML, MH):
        from .model import Intervention

        if "omega" not in self.doc:
            return None
        return [(Intervention.do(ML, lo), Intervention.do(MH, hi)) for lo, hi in self.doc["omega"]]


def _all_vars(m) -> dict:
    if isinstance(m, FunctionalCausalModel):
        return {v.name: v for v in m.endo + m.exo}
    return dict(m.var)


def dump_alignment(va: VariableAlignment, iso: ModelIso | None = None, omega=None) -> dict:
    doc: dict = {"version": VERSION, "kind": "alignment", "pi": {h: list(v) for h, v in sorted(va.pi.items())}}
    doc["tau"] = {}
    for h in sorted(va.tau):
        t = va.tau[h]
        doc["tau"][h] = {"card": t.cod[0].card, "table": [int(x) for x in stoch.as_table(t)]}
    if iso is not None:
        doc["iso"] = {
            "dom": _dump_vars(iso.phi.dom), "cod": _dump_vars(iso.phi.cod),
            "table": [int(x) for x in stoch.as_table(iso.phi)], "w_inputs": sorted(iso.w_inputs),
        }
    if omega is not None:
        doc["omega"] = [[sL.do_values(), sH.do_values()] for sL, sH in omega]
    return doc


# quantum ------------------------------------------------------------------------
def _dump_obj(o: QCObject) -> dict:
    return {"qdim": o.qdim, "cset": _dump_vars(o.cset)}


def _load_obj(d: dict) -> QCObject:
    return QCObject(d["qdim"], tuple(_vars(d.get("cset", []))))


def dump_box(f: QCMorphism) -> dict:
    return {"dom": _dump_obj(f.dom), "cod": _dump_obj(f.cod), "maps": _dump_complex(f.maps)}


def load_box(d: dict, where: str = "") -> QCMorphism:
    try:
        return QCMorphism(_load_obj(d["dom"]), _load_obj(d["cod"]), _complex_array(d["maps"]))
    except (ValueError, IndexError) as e:
        raise SchemaError(where, str(e)) from None


def dump_qdag(m: QuantumDagModel) -> dict:
    return {
        "version": VERSION,
        "kind": "qdag",
        "name": m.name,
        "vertices": list(m.dag.vertices),
        "edges": [list(e) for e in sorted(m.dag.edges)],
        "inputs": list(m.inputs),
        "outputs": list(m.outputs),
        "objects": {
            "vertex": {x: _dump_obj(o) for x, o in sorted(m.vertex.items())},
            "edge": {edge(a, b): _dump_obj(o) for (a, b), o in sorted(m.edges.items())},
            "out": {x: _dump_obj(o) for x, o in sorted(m.outs.items())},
        },
        "m": {x: dump_box(f) for x, f in sorted(m.m.items())},
        "s": {x: dump_box(f) for x, f in sorted(m.s.items())},
    }


def qdag_from_doc(doc: dict) -> QuantumDagModel:
    validate(doc)
    dag = OpenDag(tuple(doc["vertices"]), frozenset(tuple(e) for e in doc["edges"]), frozenset(doc["inputs"]), frozenset(doc["outputs"]))
    ob = doc["objects"]
    edges = {}
    for k, o in ob["edge"].items():
        a, _, b = k.partition(">")
        edges[(a, b)] = _load_obj(o)
    return QuantumDagModel(
        dag,
        {x: _load_obj(o) for x, o in ob["vertex"].items()},
        edges,
        {x: _load_obj(o) for x, o in ob["out"].items()},
        {x: load_box(b, f"/m/{x}") for x, b in doc["m"].items()},
        {x: load_box(b, f"/s/{x}") for x, b in doc["s"].items()},
        name=doc.get("name", ""),
    )


def dump_qc_alignment(taus: dict, out_taus: dict | None = None) -> dict:
    doc = {"version": VERSION, "kind": "qc_alignment", "taus": {x: dump_box(f) for x, f in sorted(taus.items())}}
    if out_taus:
        doc["out_taus"] = {x: dump_box(f) for x, f in sorted(out_taus.items())}
    return doc


# files ----------------------------------------------------------------------------
def read_json(path: str | Path) -> dict:
    """Parse a file, or stdin for ``"-"``."""
    try:
        text = sys.stdin.read() if str(path) == "-" else Path(path).read_text(encoding="utf-8")
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise SchemaError("", f"invalid JSON: {e}") from None


def from_doc(doc: dict):
    kind = validate(doc)
    if kind == "model":
        return model_from_doc(doc)
    if kind == "alignment":
        return AlignmentFile(doc)
    if kind == "qdag":
        return qdag_from_doc(doc)
    return {
        "taus": {x: load_box(b, f"/taus/{x}") for x, b in doc["taus"].items()},
        "out_taus": {x: load_box(b, f"/out_taus/{x}") for x, b in doc.get("out_taus", {}).items()},
    }


def load(path: str | Path):
    return from_doc(read_json(path))


def to_doc(obj) -> dict:
    if isinstance(obj, (CausalModel, FunctionalCausalModel)):
        return dump_model(obj)
    if isinstance(obj, VariableAlignment):
        return dump_alignment(obj)
    if isinstance(obj, AlignmentFile):
        return obj.doc
    if isinstance(obj, QuantumDagModel):
        return dump_qdag(obj)
    if isinstance(obj, dict) and "taus" in obj:
        return dump_qc_alignment(obj["taus"], obj.get("out_taus"))
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def dumps(doc: dict) -> str:
    return json.dumps(doc, indent=2, sort_keys=False) + "\n"


def save(obj, path: str | Path) -> None:
    Path(path).write_text(dumps(to_doc(obj)), encoding="utf-8")


# reports -------------------------------------------------------------------------
def digest(docs) -> str:
    h = hashlib.sha256()
    for d in docs:
        h.update(json.dumps(d, sort_keys=True, separators=(",", ":")).encode())
    return h.hexdigest()[:16]


def _plain(x):
    if isinstance(x, (bool, int, float, str)) or x is None:
        return dump_scalar(x) if isinstance(x, float) else x
    if isinstance(x, (Fraction, np.integer, np.floating)):
        return dump_scalar(x)
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items() if _plain(v) is not _SKIP}
    if isinstance(x, (list, tuple, set, frozenset)):
        items = sorted(x, key=str) if isinstance(x, (set, frozenset)) else x
        return [_plain(v) for v in items]
    return _SKIP


_SKIP = object()


def _clean(x):
    if isinstance(x, dict):
        return {k: _clean(v) for k, v in x.items() if v is not _SKIP}
    if isinstance(x, list):
        return [_clean(v) for v in x if v is not _SKIP]
    return x


def report(check: str, v: Verdict, docs, *, seed: int | None = None, timing: float | None = None, flags: dict | None = None) -> dict:
    """A report with a stable field order; ``timing`` is the only non-deterministic field."""
    dev = v.max_deviation
    return {
        "check": check,
        "inputs_digest": digest(docs),
        "holds": v.holds,
        "vacuous": v.vacuous,
        "checked": v.checked,
        "failures": v.failures,
        "max_deviation": None if dev != dev else float(dev),
        "witnesses": [
            {"label": w.label, "deviation": None if w.deviation != w.deviation else float(w.deviation), "note": w.note}
            for w in v.witnesses
        ],
        "info": _clean(_plain(v.info)),
        "flags": flags or {},
        "seed": seed,
        "timing_s": timing,
    }


def report_text(r: dict) -> str:
    lines = [f"{r['check']}: {'holds' if r['holds'] else 'fails'} ({r['checked']} checked, {r['failures']} failed, max deviation {r['max_deviation']})"]
    if r["vacuous"]:
        lines.append("  vacuous: nothing was compared")
    for w in r["witnesses"]:
        note = f" [{w['note']}]" if w["note"] else ""
        lines.append(f"  witness {w['label']}: deviation {w['deviation']}{note}")
    return "\n".join(lines) + "\n"


def bundled() -> dict[str, dict]:
    """JSON documents for the bundled fixtures, keyed by file name."""
    from . import fixtures as fx
    from . import qabs
    from .abstraction import identity_alignment

    out: dict[str, dict] = {}

    def triple(stem, low, high, va, **kw):
        out[f"{stem}-low.json"] = dump_model(low)
        out[f"{stem}-high.json"] = dump_model(high)
        out[f"{stem}-align.json"] = dump_alignment(va, **kw)

    triple("voting", *fx.voting())
    triple("notsimple", *fx.notsimple())
    triple("notsimple-extra", *fx.notsimple(extra_strong=True))
    f = fx.xor_fcm()
    triple("xor-fcm", f, f, identity_alignment(f))
    M1, iso, M3, va = fx.xor_pipeline()
    out["xor-pipeline-m1.json"] = dump_model(M1)
    out["xor-pipeline-m3.json"] = dump_model(M3)
    out["xor-pipeline-align.json"] = dump_alignment(va, iso=iso)
    for stem, fix in (("not", qabs.not_fixture), ("hadamard", qabs.hadamard_fixture), ("geoguesser", qabs.geoguesser_fixture)):
        ML, MH, taus = fix()
        out[f"{stem}-circuit.json"] = dump_qdag(ML)
        out[f"{stem}-model.json"] = dump_model(MH)
        out[f"{stem}-measure-align.json"] = dump_qc_alignment(taus)
    return out
