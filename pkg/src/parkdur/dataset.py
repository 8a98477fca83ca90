"""Survey schema, CSV ingestion, treatment coding, center-scale
standardisation, duration binning and the seeded synthetic generator."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

log = logging.getLogger(__name__)

DURATION_CLASSES = ("<2", "2-4", "4-6", "6-8", ">8")
_BOUNDARIES = (2.0, 4.0, 6.0, 8.0)


class SchemaError(ValueError):
    pass


class ParseError(ValueError):
    """CSV content violates the schema. ``row`` is 1-based over data rows
    (the header is row 0); ``column`` is the header name."""

    def __init__(self, message, row=None, column=None):
        loc = []
        if row is not None:
            loc.append(f"row {row}")
        if column is not None:
            loc.append(f"column {column!r}")
        super().__init__(f"{', '.join(loc)}: {message}" if loc else message)
        self.row = row
        self.column = column


class SpecError(ValueError):
    """Invalid synthetic-data spec. ``pointer`` is a JSON pointer to the
    offending key."""

    def __init__(self, pointer, message):
        super().__init__(f"{pointer}: {message}")
        self.pointer = pointer


# --------------------------------------------------------------------------
# schema
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class FeatureSpec:
    name: str
    levels: tuple[str, ...] | None = None
    unit: str = ""

    def __post_init__(self):
        if not self.name:
            raise SchemaError("feature name must be non-empty")
        if self.levels is not None:
            object.__setattr__(self, "levels", tuple(self.levels))
            if len(self.levels) < 2:
                raise SchemaError(f"{self.name}: categorical needs at least 2 levels")
            if len(set(self.levels)) != len(self.levels):
                raise SchemaError(f"{self.name}: duplicate levels")

    @property
    def categorical(self) -> bool:
        return self.levels is not None

    def to_dict(self):
        if self.categorical:
            return {"name": self.name, "kind": "categorical", "levels": list(self.levels)}
        return {"name": self.name, "kind": "continuous", "unit": self.unit}


@dataclass(frozen=True)
class Schema:
    features: tuple[FeatureSpec, ...]
    target_name: str = "Duration"

    def __post_init__(self):
        object.__setattr__(self, "features", tuple(self.features))
        if not self.features:
            raise SchemaError("schema needs at least one feature")
        names = [f.name for f in self.features]
        if len(set(names)) != len(names):
            raise SchemaError("feature names must be unique")
        if self.target_name in names:
            raise SchemaError("target name collides with a feature name")

    def __getitem__(self, name) -> FeatureSpec:
        for f in self.features:
            if f.name == name:
                return f
        raise KeyError(name)

    @property
    def names(self):
        return [f.name for f in self.features]

    def to_dict(self):
        return {"target": self.target_name, "features": [f.to_dict() for f in self.features]}

    @classmethod
    def from_dict(cls, doc):
        try:
            feats = []
            for f in doc["features"]:
                if f.get("kind", "continuous") == "categorical":
                    feats.append(FeatureSpec(f["name"], levels=f["levels"]))
                else:
                    feats.append(FeatureSpec(f["name"], unit=f.get("unit", "")))
            return cls(feats, doc.get("target", "Duration"))
        except (KeyError, TypeError) as exc:
            raise SchemaError(f"malformed schema document: {exc}") from exc


def load_schema(path) -> Schema:
    """Read a schema JSON file. A bare name such as ``obp`` resolves to the
    bundled ``data/<name>_schema.json``."""
    p = Path(path)
    if not p.exists():
        p = _data_path(f"{path}_schema.json")
    with open(p, encoding="utf-8") as fh:
        return Schema.from_dict(json.load(fh))


def _data_path(name) -> Path:
    p = Path(__file__).parent / "data" / name
    if not p.exists():
        raise FileNotFoundError(name)
    return p


# --------------------------------------------------------------------------
# records and binning
# --------------------------------------------------------------------------

@dataclass
class Record:
    values: dict
    target: str | None = None

    def validate(self, schema: Schema):
        for f in schema.features:
            if f.name not in self.values:
                raise SchemaError(f"missing value for {f.name}")
            v = self.values[f.name]
            if f.categorical:
                if v not in f.levels:
                    raise SchemaError(f"{f.name}: undeclared level {v!r}")
            elif isinstance(v, str) or not math.isfinite(v):
                raise SchemaError(f"{f.name}: continuous value must be a finite number")
        if self.target is not None and self.target not in DURATION_CLASSES:
            raise SchemaError(f"unknown duration class {self.target!r}")


def bin_duration(hours: float) -> str:
    """Map parking hours to its class; intervals are half-open, [2, 4) is "2-4"."""
    h = float(hours)
    if not math.isfinite(h) or h < 0:
        raise ValueError(f"duration must be finite and nonnegative, got {hours!r}")
    for i, b in enumerate(_BOUNDARIES):
        if h < b:
            return DURATION_CLASSES[i]
    return DURATION_CLASSES[-1]


def class_index(label: str) -> int:
    return DURATION_CLASSES.index(label)


def _parse_target(cell: str) -> str:
    cell = cell.strip()
    if cell in DURATION_CLASSES:
        return cell
    return bin_duration(float(cell))


def load_csv(source, schema: Schema) -> list[Record]:
    """Parse survey rows from a path or text stream.

    The header must contain every schema feature (any order). A target
    column is optional and may hold class labels or raw hours.
    """
    if isinstance(source, (str, Path)):
        with open(source, newline="", encoding="utf-8") as fh:
            return load_csv(fh, schema)
    reader = csv.reader(source)
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise ParseError("empty file", row=0) from None
    seen = set()
    for h in header:
        if h in seen:
            raise ParseError("duplicate header", row=0, column=h)
        seen.add(h)
    for name in schema.names:
        if name not in seen:
            raise ParseError("missing column", row=0, column=name)
    pos = {h: i for i, h in enumerate(header)}
    tpos = pos.get(schema.target_name)
    records = []
    for r, row in enumerate(reader, start=1):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise ParseError(f"expected {len(header)} fields, got {len(row)}", row=r)
        values = {}
        for f in schema.features:
            cell = row[pos[f.name]].strip()
            if f.categorical:
                if cell not in f.levels:
                    raise ParseError(f"undeclared level {cell!r}", row=r, column=f.name)
                values[f.name] = cell
            else:
                try:
                    v = float(cell)
                except ValueError:
                    raise ParseError(f"non-numeric value {cell!r}", row=r, column=f.name) from None
                if not math.isfinite(v):
                    raise ParseError("non-finite value", row=r, column=f.name)
                values[f.name] = v
        target = None
        if tpos is not None and row[tpos].strip():
            try:
                target = _parse_target(row[tpos])
            except ValueError as exc:
                raise ParseError(str(exc), row=r, column=schema.target_name) from None
        records.append(Record(values, target))
    return records


def _fmt(v) -> str:
    if isinstance(v, str):
        return v
    return f"{v:.6g}"


def write_csv(records: Sequence[Record], schema: Schema, dest) -> None:
    """Write records with 6 significant digits; the target column is emitted
    when any record carries one."""
    if isinstance(dest, (str, Path)):
        with open(dest, "w", newline="", encoding="utf-8") as fh:
            write_csv(records, schema, fh)
        return
    with_target = any(r.target is not None for r in records)
    w = csv.writer(dest, lineterminator="\n")
    header = schema.names + ([schema.target_name] if with_target else [])
    w.writerow(header)
    for r in records:
        row = [_fmt(r.values[n]) for n in schema.names]
        if with_target:
            row.append(r.target or "")
        w.writerow(row)


def records_to_csv_text(records, schema) -> str:
    buf = io.StringIO()
    write_csv(records, schema, buf)
    return buf.getvalue()


# --------------------------------------------------------------------------
# design matrix
# --------------------------------------------------------------------------

@dataclass
class Transform:
    """Everything needed to encode and scale unseen records exactly as the
    training data was: per categorical the reference level and the emitted
    levels, per continuous column its (mean, sd)."""

    schema: Schema
    encoding: dict = field(default_factory=dict)
    scaling: dict = field(default_factory=dict)

    @property
    def columns(self) -> list[str]:
        cols = []
        for f in self.schema.features:
            if f.categorical:
                cols.extend(f"{f.name}_{lv}" for lv in self.encoding[f.name]["levels"])
            else:
                cols.append(f.name)
        return cols

    def to_dict(self):
        return {
            "schema": self.schema.to_dict(),
            "encoding": {k: {"reference": v["reference"], "levels": list(v["levels"])}
                         for k, v in self.encoding.items()},
            "scaling": {k: [float(m), float(s)] for k, (m, s) in self.scaling.items()},
        }

    @classmethod
    def from_dict(cls, doc):
        return cls(
            Schema.from_dict(doc["schema"]),
            {k: {"reference": v["reference"], "levels": list(v["levels"])}
             for k, v in doc["encoding"].items()},
            {k: (float(v[0]), float(v[1])) for k, v in doc["scaling"].items()},
        )


@dataclass
class DesignMatrix:
    data: np.ndarray
    columns: list[str]
    transform: Transform
    targets: np.ndarray | None = None
    warnings: list[str] = field(default_factory=list)

    @property
    def n(self):
        return self.data.shape[0]

    def column_blocks(self) -> dict[str, list[int]]:
        """Column indices owned by each schema feature."""
        blocks, j = {}, 0
        for f in self.transform.schema.features:
            k = len(self.transform.encoding[f.name]["levels"]) if f.categorical else 1
            blocks[f.name] = list(range(j, j + k))
            j += k
        return blocks


def _targets(records):
    if all(r.target is not None for r in records):
        return np.array([class_index(r.target) for r in records], dtype=np.int64)
    return None


def _rows(records, tf: Transform):
    schema = tf.schema
    d = len(tf.columns)
    X = np.zeros((len(records), d))
    for i, rec in enumerate(records):
        j = 0
        for f in schema.features:
            v = rec.values.get(f.name)
            if f.categorical:
                enc = tf.encoding[f.name]
                levels = enc["levels"]
                if v == enc["reference"]:
                    pass
                elif v in levels:
                    X[i, j + levels.index(v)] = 1.0
                else:
                    raise ValueError(f"{f.name}: level {v!r} was not seen in training")
                j += len(levels)
            else:
                if v is None or isinstance(v, str) or not math.isfinite(v):
                    raise ValueError(f"{f.name}: continuous value must be a finite number")
                m, s = tf.scaling.get(f.name, (0.0, 1.0))
                X[i, j] = (v - m) / s
                j += 1
    return X


def encode(records: Sequence[Record], schema: Schema) -> DesignMatrix:
    """Treatment-code categoricals (reference = first declared level present
    in the data; never-observed levels emit no column). Continuous columns
    pass through unscaled."""
    if not records:
        raise ValueError("cannot encode an empty record list")
    for r in records:
        r.validate(schema)
    warnings = []
    encoding = {}
    for f in schema.features:
        if not f.categorical:
            continue
        present = {r.values[f.name] for r in records}
        observed = [lv for lv in f.levels if lv in present]
        encoding[f.name] = {"reference": observed[0], "levels": observed[1:]}
        if len(observed) == 1:
            msg = f"{f.name}: single observed level {observed[0]!r}, no columns emitted"
            log.warning(msg)
            warnings.append(msg)
    tf = Transform(schema, encoding, {})
    X = _rows(records, tf)
    return DesignMatrix(X, tf.columns, tf, _targets(records), warnings)


def center_scale(dm: DesignMatrix) -> DesignMatrix:
    """Standardise continuous columns with the sample sd (n-1). A constant
    column is only centred and its sd recorded as 1. Scaling composes with
    any scaling already stored, so the stored transform always maps raw
    records to the returned matrix."""
    if dm.n < 2:
        raise ValueError("center_scale needs at least 2 rows")
    data = dm.data.copy()
    warnings = list(dm.warnings)
    blocks = dm.column_blocks()
    scaling = dict(dm.transform.scaling)
    for f in dm.transform.schema.features:
        if f.categorical:
            continue
        j = blocks[f.name][0]
        col = data[:, j]
        mean = col.mean()
        sd = col.std(ddof=1)
        if not sd > 0:
            msg = f"{f.name}: constant column, centred only"
            log.warning(msg)
            warnings.append(msg)
            sd = 1.0
        data[:, j] = (col - mean) / sd
        m0, s0 = scaling.get(f.name, (0.0, 1.0))
        scaling[f.name] = (m0 + s0 * mean, s0 * sd)
    tf = Transform(dm.transform.schema, dm.transform.encoding, scaling)
    return DesignMatrix(data, list(dm.columns), tf, dm.targets, warnings)


def fit_transform(records, schema) -> DesignMatrix:
    """``center_scale(encode(...))`` with the scaled matrix recomputed from
    the stored transform so later ``apply_transform`` calls agree bit-for-bit."""
    dm = center_scale(encode(records, schema))
    return apply_transform(records, dm.transform, warnings=dm.warnings)


def apply_transform(records: Sequence[Record], tf: Transform, warnings=None) -> DesignMatrix:
    """Encode and scale unseen records with a fitted transform."""
    for r in records:
        for f in tf.schema.features:
            if f.name not in r.values:
                raise ValueError(f"{f.name}: missing value")
    X = _rows(records, tf)
    return DesignMatrix(X, tf.columns, tf, _targets(records) if records else None,
                        list(warnings or []))


def decode(dm: DesignMatrix) -> list[Record]:
    """Invert ``apply_transform`` (continuous values up to rounding)."""
    tf = dm.transform
    blocks = dm.column_blocks()
    out = []
    for i in range(dm.n):
        values = {}
        for f in tf.schema.features:
            cols = blocks[f.name]
            if f.categorical:
                enc = tf.encoding[f.name]
                hot = [k for k in range(len(cols)) if dm.data[i, cols[k]] == 1.0]
                if len(hot) > 1:
                    raise ValueError(f"row {i}: {f.name} has {len(hot)} active indicators")
                values[f.name] = enc["levels"][hot[0]] if hot else enc["reference"]
            else:
                m, s = tf.scaling.get(f.name, (0.0, 1.0))
                values[f.name] = float(dm.data[i, cols[0]] * s + m)
        target = None
        if dm.targets is not None:
            target = DURATION_CLASSES[int(dm.targets[i])]
        out.append(Record(values, target))
    return out


# --------------------------------------------------------------------------
# synthetic surveys
# --------------------------------------------------------------------------

@dataclass
class SynthSpec:
    """Per-feature marginals plus the planted rule that assigns duration
    classes.

    The rule builds a latent score
    ``z = sum_f w_f * (x_f - mean_f) / sd_f + sum w[Feature_Level] + N(0, noise)``
    over continuous features (standardised with the *spec* moments) and
    indicator terms, then draws the class from
    ``softmax(sharpness * (c - 2) * z + b_c)`` with intercepts ``b_c``
    calibrated on the sampled rows so expected class shares equal
    ``class_marginals``.
    """

    n: int
    features: dict
    class_marginals: list
    planted_coefficients: dict
    seed: int = 0
    target: str = "Duration"
    sharpness: float = 1.0
    noise: float = 0.0

    @property
    def schema(self) -> Schema:
        feats = []
        for name, f in self.features.items():
            if "levels" in f:
                feats.append(FeatureSpec(name, levels=f["levels"]))
            else:
                feats.append(FeatureSpec(name, unit=f.get("unit", "")))
        return Schema(feats, self.target)

    @classmethod
    def from_dict(cls, doc) -> "SynthSpec":
        if not isinstance(doc, dict):
            raise SpecError("", "spec must be a JSON object")
        for key in ("n", "features", "class_marginals", "planted_coefficients"):
            if key not in doc:
                raise SpecError(f"/{key}", "required key missing")
        n = doc["n"]
        if not isinstance(n, int) or isinstance(n, bool) or n < 1:
            raise SpecError("/n", "must be a positive integer")
        feats = doc["features"]
        if not isinstance(feats, dict) or not feats:
            raise SpecError("/features", "must be a non-empty object")
        for name, f in feats.items():
            ptr = f"/features/{_escape(name)}"
            if not isinstance(f, dict):
                raise SpecError(ptr, "must be an object")
            if "levels" in f:
                lv, pr = f.get("levels"), f.get("probs")
                if not isinstance(lv, list) or len(lv) < 2:
                    raise SpecError(f"{ptr}/levels", "need at least 2 levels")
                if not isinstance(pr, list) or len(pr) != len(lv):
                    raise SpecError(f"{ptr}/probs", "one probability per level required")
                if any(not isinstance(p, (int, float)) or p < 0 for p in pr):
                    raise SpecError(f"{ptr}/probs", "probabilities must be nonnegative numbers")
                if abs(sum(pr) - 1.0) > 1e-9:
                    raise SpecError(f"{ptr}/probs", f"probabilities sum to {sum(pr)!r}, not 1")
            else:
                for key in ("mean", "sd"):
                    if not isinstance(f.get(key), (int, float)):
                        raise SpecError(f"{ptr}/{key}", "required number missing")
                if f["sd"] <= 0:
                    raise SpecError(f"{ptr}/sd", "must be positive")
                if f["mean"] <= -3 * f["sd"]:
                    raise SpecError(f"{ptr}/mean", "truncation at 0 would reject almost every draw")
        cm = doc["class_marginals"]
        if not isinstance(cm, list) or len(cm) != len(DURATION_CLASSES):
            raise SpecError("/class_marginals", f"need {len(DURATION_CLASSES)} entries")
        if any(not isinstance(p, (int, float)) or p <= 0 for p in cm):
            raise SpecError("/class_marginals", "entries must be positive")
        if abs(sum(cm) - 1.0) > 1e-9:
            raise SpecError("/class_marginals", f"shares sum to {sum(cm)!r}, not 1")
        pc = doc["planted_coefficients"]
        if not isinstance(pc, dict) or not isinstance(pc.get("weights"), dict):
            raise SpecError("/planted_coefficients/weights", "required object missing")
        valid = set()
        for name, f in feats.items():
            if "levels" in f:
                valid.update(f"{name}_{lv}" for lv in f["levels"])
            else:
                valid.add(name)
        for key, w in pc["weights"].items():
            if key not in valid:
                raise SpecError(f"/planted_coefficients/weights/{_escape(key)}",
                                "not a continuous feature or Feature_Level indicator")
            if not isinstance(w, (int, float)):
                raise SpecError(f"/planted_coefficients/weights/{_escape(key)}", "must be a number")
        for key in ("sharpness", "noise"):
            v = pc.get(key, 0.0)
            if not isinstance(v, (int, float)) or v < 0:
                raise SpecError(f"/planted_coefficients/{key}", "must be a nonnegative number")
        seed = doc.get("seed", 0)
        if not isinstance(seed, int) or isinstance(seed, bool):
            raise SpecError("/seed", "must be an integer")
        return cls(n=n, features=feats, class_marginals=list(cm),
                   planted_coefficients=dict(pc["weights"]), seed=seed,
                   target=doc.get("target", "Duration"),
                   sharpness=float(pc.get("sharpness", 1.0)),
                   noise=float(pc.get("noise", 0.0)))


def _escape(key):
    return str(key).replace("~", "~0").replace("/", "~1")


def load_synth_spec(path) -> SynthSpec:
    """Read a SynthSpec JSON file; bare names resolve to bundled specs."""
    p = Path(path)
    if not p.exists():
        p = _data_path(f"{path}_synth.json")
    with open(p, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SpecError("", f"invalid JSON: {exc}") from exc
    return SynthSpec.from_dict(doc)


def _quota(n, probs, rng):
    """Exact-quota categorical draw: largest-remainder counts, shuffled."""
    probs = np.asarray(probs, dtype=float)
    raw = n * probs
    counts = np.floor(raw).astype(int)
    short = n - counts.sum()
    order = sorted(range(len(probs)), key=lambda i: (-(raw[i] - counts[i]), i))
    for i in order[:short]:
        counts[i] += 1
    idx = np.repeat(np.arange(len(probs)), counts)
    return rng.permutation(idx)


def _truncnorm(n, mean, sd, rng):
    out = np.empty(n)
    filled = 0
    while filled < n:
        draw = rng.normal(mean, sd, size=2 * (n - filled))
        draw = draw[draw >= 0][: n - filled]
        out[filled:filled + draw.size] = draw
        filled += draw.size
    return out


def _calibrate(z, sharpness, marginals, iters=5000, tol=1e-12):
    """Intercepts b with mean_t softmax(sharpness*(c-2)*z_t + b)_c == marginals."""
    slope = sharpness * (np.arange(len(marginals)) - (len(marginals) - 1) / 2)
    L0 = np.outer(z, slope)
    target = np.asarray(marginals, dtype=float)
    b = np.log(target)
    for _ in range(iters):
        L = L0 + b
        L -= L.max(axis=1, keepdims=True)
        P = np.exp(L)
        P /= P.sum(axis=1, keepdims=True)
        share = P.mean(axis=0)
        step = np.log(target) - np.log(share)
        b += step
        b -= b.mean()
        if np.abs(step).max() < tol:
            break
    L = L0 + b
    L -= L.max(axis=1, keepdims=True)
    P = np.exp(L)
    return P / P.sum(axis=1, keepdims=True)


def synthesize(spec: SynthSpec, seed: int | None = None) -> list[Record]:
    """Draw ``spec.n`` survey rows. Categoricals use exact quotas,
    continuous features a normal rejection-truncated at 0; classes come from
    the planted rule. Deterministic per seed."""
    rng = np.random.default_rng(spec.seed if seed is None else seed)
    n = spec.n
    cols = {}
    z = np.zeros(n)
    w = spec.planted_coefficients
    for name, f in spec.features.items():
        if "levels" in f:
            idx = _quota(n, f["probs"], rng)
            levels = list(f["levels"])
            cols[name] = [levels[i] for i in idx]
            lw = np.array([w.get(f"{name}_{lv}", 0.0) for lv in levels])
            z += lw[idx]
        else:
            x = _truncnorm(n, f["mean"], f["sd"], rng)
            # round first so the planted rule sees exactly what the CSV holds
            x = np.array([float(_fmt(v)) for v in x])
            cols[name] = x
            z += w.get(name, 0.0) * (x - f["mean"]) / f["sd"]
    if spec.noise > 0:
        z += rng.normal(0.0, spec.noise, size=n)
    P = _calibrate(z, spec.sharpness, spec.class_marginals)
    u = rng.random(n)
    cls = (P.cumsum(axis=1) < u[:, None]).sum(axis=1)
    cls = np.minimum(cls, len(DURATION_CLASSES) - 1)
    records = []
    for i in range(n):
        values = {}
        for name, f in spec.features.items():
            values[name] = cols[name][i] if "levels" in f else float(cols[name][i])
        records.append(Record(values, DURATION_CLASSES[int(cls[i])]))
    return records


def holdout_split(n: int, k: int, seed: int) -> tuple[list[int], list[int]]:
    """Seeded split of ``range(n)`` into (kept, held_out) with ``k`` held out;
    both lists in ascending order."""
    if not 0 <= k < n:
        raise ValueError("holdout size must be in [0, n)")
    rng = np.random.default_rng(seed)
    held = sorted(int(i) for i in rng.choice(n, size=k, replace=False))
    hs = set(held)
    return [i for i in range(n) if i not in hs], held


def class_counts(records: Iterable[Record]) -> list[int]:
    counts = [0] * len(DURATION_CLASSES)
    for r in records:
        counts[class_index(r.target)] += 1
    return counts
