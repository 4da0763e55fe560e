"""JSON and CSV serialization.

Formats
-------
Quaternion          ``[a, b, c, d]`` (first nonzero component positive)
DualQuaternion      ``[[a, b, c, d], [a, b, c, d]]``
TangentSpace        ``{"point": [4], "basis": [[4] x 3 columns]}``
ProjectedGaussian   ``{"weight", "tangent_point", "mean", "cov", "mass", "compat"}``
Mixture             ``{"elements": [...]}``
McEstimate          ``{"value", "n", "std_error", "seed"}``
Samples (CSV)       header ``qa,qb,qc,qd,tx,ty,tz,component``

Floats are written with ``repr`` precision, so values round-trip exactly.
"""

import csv
import io as _io
import json

import numpy as np

from .element import ProjectedGaussian
from .errors import DomainError
from .mixture import Mixture
from .quaternion import canonical_sign
from .tangent import TangentSpace

__all__ = [
    "SAMPLE_HEADER",
    "quat_to_json",
    "dq_to_json",
    "tangent_space_to_dict",
    "tangent_space_from_dict",
    "element_to_dict",
    "element_from_dict",
    "mixture_to_dict",
    "mixture_from_dict",
    "load_json",
    "dump_json",
    "write_samples_csv",
    "read_samples_csv",
]

SAMPLE_HEADER = ["qa", "qb", "qc", "qd", "tx", "ty", "tz", "component"]


def quat_to_json(q):
    return canonical_sign(np.asarray(q, dtype=float)).tolist()


def dq_to_json(dq):
    return np.asarray(dq.array if hasattr(dq, "array") else dq, dtype=float).tolist()


def _canonical_chart(ts):
    """Point with canonical sign; the basis flips along so coordinates are kept."""
    s = 1.0 if np.array_equal(canonical_sign(ts.point), ts.point) else -1.0
    return s * ts.point, s * ts.basis


def tangent_space_to_dict(ts):
    point, basis = _canonical_chart(ts)
    return {"point": point.tolist(), "basis": basis.T.tolist()}


def tangent_space_from_dict(d):
    basis = d.get("basis")
    return TangentSpace(d["point"], None if basis is None else np.asarray(basis, dtype=float).T)


def element_to_dict(pg, weight=None):
    point, basis = _canonical_chart(pg.ts)
    out = {}
    if weight is not None:
        out["weight"] = float(weight)
    out["tangent_point"] = point.tolist()
    if not pg.ts.is_canonical():
        out["basis"] = basis.T.tolist()
    out["mean"] = pg.mean.tolist()
    out["cov"] = pg.cov.tolist()
    out["mass"] = pg.mass
    out["compat"] = pg.compat
    return out


def element_from_dict(d):
    """Element from its JSON object; the mass is re-estimated when absent."""
    try:
        basis = d.get("basis")
        ts = TangentSpace(d["tangent_point"], None if basis is None else np.asarray(basis, dtype=float).T)
        return ProjectedGaussian(ts, d["mean"], d["cov"], d.get("mass"), d.get("compat", 1.0))
    except KeyError as exc:
        raise DomainError(f"element is missing field {exc.args[0]!r}") from exc


def mixture_to_dict(m):
    return {"elements": [element_to_dict(e, w) for e, w in m]}


def mixture_from_dict(d):
    """Mixture from JSON; a bare element object is read as a one-element mixture."""
    if "elements" not in d:
        if "tangent_point" in d:
            return Mixture.single(element_from_dict(d))
        raise DomainError("mixture object needs an 'elements' list")
    els = d["elements"]
    if not els:
        raise DomainError("mixture has no elements")
    if any("weight" not in e for e in els):
        raise DomainError("every mixture element needs a weight")
    return Mixture([element_from_dict(e) for e in els], [e["weight"] for e in els])


def _default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"cannot serialize {type(o).__name__}")


def dump_json(obj, path=None):
    text = json.dumps(obj, indent=1, default=_default)
    if path is None:
        return text
    with open(path, "w") as fh:
        fh.write(text + "\n")
    return text


def load_json(path):
    with open(path) as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as exc:
            raise DomainError(f"{path}: invalid JSON ({exc})") from exc


def write_samples_csv(points, components=None, path=None):
    """Write pose samples; returns the CSV text when ``path`` is None."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    comp = np.zeros(len(points), dtype=int) if components is None else np.asarray(components, dtype=int)
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SAMPLE_HEADER)
    for row, c in zip(points, comp):
        w.writerow([repr(float(v)) for v in row] + [int(c)])
    text = buf.getvalue()
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text


def read_samples_csv(path):
    """Read pose samples; returns ``(points (N, 7), components (N,))``."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or [h.strip() for h in rows[0]] != SAMPLE_HEADER:
        raise DomainError(f"{path}: expected header {','.join(SAMPLE_HEADER)}")
    try:
        data = [[float(v) for v in r[:7]] + [int(r[7])] for r in rows[1:] if r]
    except (ValueError, IndexError) as exc:
        raise DomainError(f"{path}: malformed sample row ({exc})") from exc
    arr = np.asarray(data, dtype=float).reshape(-1, 8)
    return arr[:, :7], arr[:, 7].astype(int)
