"""Text formats: landscapes, experiment manifests, result CSVs and JSON reports.

Landscape files hold one record per line::

    # comment
    state 0 H=2.0 label=left s=0
    edge 0 1 delta=5 r=0.6931471805599453
    edge 1 0 delta=auto r=0.6931471805599453

``delta=auto`` fills the cost from the reverse edge through
``H(x) + delta(x,y) = H(y) + delta(y,x)``.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .landscape import EnergyLandscape

CSV_VERSION = "# metastate-csv v1"
RESULT_COLUMNS = ("beta", "quantity", "value", "log_value", "route", "residual",
                  "prediction", "ratio", "ci_low", "ci_high", "censored")
SAMPLE_COLUMNS = ("beta", "replica", "steps", "censored", "hit_label")


class FormatError(ValueError):
    """Malformed input file; the message carries the line number."""

    def __init__(self, msg, line: int | None = None, source: str = "<text>"):
        where = f"{source}:{line}: " if line is not None else f"{source}: "
        super().__init__(where + msg)
        self.line = line


# -- landscapes -----------------------------------------------------------------------

def _kv(tokens, lineno, source, allowed):
    out = {}
    for t in tokens:
        if "=" not in t:
            raise FormatError(f"expected key=value, got {t!r}", lineno, source)
        k, v = t.split("=", 1)
        if k not in allowed:
            raise FormatError(f"unknown field {k!r}", lineno, source)
        if k in out:
            raise FormatError(f"duplicate field {k!r}", lineno, source)
        out[k] = v
    return out


def _num(v, what, lineno, source):
    try:
        x = float(v)
    except ValueError:
        raise FormatError(f"{what} must be a number, got {v!r}", lineno, source) from None
    if not math.isfinite(x):
        raise FormatError(f"{what} must be finite", lineno, source)
    return x


def _int(v, what, lineno, source):
    try:
        return int(v)
    except ValueError:
        raise FormatError(f"{what} must be an integer, got {v!r}", lineno, source) from None


def parse_landscape(text: str, check: bool = True, source: str = "<text>",
                    tol: float = 1e-9) -> EnergyLandscape:
    states, edges, where = {}, {}, {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        kind = tok[0]
        if kind == "state":
            if len(tok) < 3:
                raise FormatError("state record needs an id and H=", lineno, source)
            sid = _int(tok[1], "state id", lineno, source)
            kv = _kv(tok[2:], lineno, source, {"H", "label", "s"})
            if "H" not in kv:
                raise FormatError("state record without H=", lineno, source)
            if sid in states:
                raise FormatError(f"state {sid} defined twice", lineno, source)
            states[sid] = (_num(kv["H"], "H", lineno, source), kv.get("label"),
                           _num(kv["s"], "s", lineno, source) if "s" in kv else None)
        elif kind == "edge":
            if len(tok) < 5:
                raise FormatError("edge record needs two ids, delta= and r=", lineno, source)
            x = _int(tok[1], "state id", lineno, source)
            y = _int(tok[2], "state id", lineno, source)
            kv = _kv(tok[3:], lineno, source, {"delta", "r"})
            if set(kv) != {"delta", "r"}:
                raise FormatError("edge record needs both delta= and r=", lineno, source)
            if (x, y) in edges:
                raise FormatError(f"edge ({x},{y}) defined twice", lineno, source)
            d = None if kv["delta"] == "auto" else _num(kv["delta"], "delta", lineno, source)
            edges[(x, y)] = [d, _num(kv["r"], "r", lineno, source)]
            where[(x, y)] = lineno
        else:
            raise FormatError(f"unknown record {kind!r}", lineno, source)
    if not states:
        raise FormatError("no states defined", None, source)
    n = len(states)
    if sorted(states) != list(range(n)):
        raise FormatError(f"state ids must be 0..{n - 1} without gaps", None, source)
    H = [states[i][0] for i in range(n)]
    for (x, y), rec in edges.items():
        for z in (x, y):
            if z not in states:
                raise FormatError(f"edge references undefined state {z}", where[(x, y)], source)
        if rec[0] is None:
            back = edges.get((y, x))
            if back is None or back[0] is None:
                raise FormatError(f"delta=auto on ({x},{y}) needs an explicit reverse edge",
                                  where[(x, y)], source)
            rec[0] = H[y] + back[0] - H[x]
    labels = [states[i][1] for i in range(n)]
    labels = labels if any(l is not None for l in labels) else None
    if labels:
        labels = [l if l is not None else str(i) for i, l in enumerate(labels)]
    s = [states[i][2] for i in range(n)]
    s = [v or 0.0 for v in s] if any(v is not None for v in s) else None
    return EnergyLandscape(H, {k: tuple(v) for k, v in edges.items()}, s=s, labels=labels,
                           tol=tol, check=check)


def load_landscape(path, check: bool = True) -> EnergyLandscape:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as e:
        raise FormatError(f"cannot read file: {e.strerror}", None, str(p)) from None
    return parse_landscape(text, check=check, source=str(p))


def dump_landscape(land: EnergyLandscape) -> str:
    lines = []
    for x in range(land.n):
        rec = f"state {x} H={float(land.H[x])!r}"
        if land.labels:
            rec += f" label={land.labels[x]}"
        if land.s is not None:
            rec += f" s={float(land.s[x])!r}"
        lines.append(rec)
    for e in land.edges():
        lines.append(f"edge {e.src} {e.dst} delta={float(e.delta)!r} r={float(e.r)!r}")
    return "\n".join(lines) + "\n"


# -- result tables ---------------------------------------------------------------------

@dataclass
class ResultRow:
    beta: float | None
    quantity: str
    value: float | None = None
    log_value: float | None = None
    route: str = ""
    residual: float | None = None
    prediction: float | None = None
    ratio: float | None = None
    ci_low: float | None = None
    ci_high: float | None = None
    censored: int | None = None


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        return repr(v)
    return str(v)


def write_results(rows, out=None) -> str:
    """Render rows in the shared schema; also writes them to ``out`` if given."""
    buf = io.StringIO()
    buf.write(CSV_VERSION + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RESULT_COLUMNS)
    for r in rows:
        w.writerow([_fmt(getattr(r, c)) for c in RESULT_COLUMNS])
    text = buf.getvalue()
    _emit(text, out)
    return text


def write_samples(groups, out=None) -> str:
    """Per-replica samples; ``groups`` holds ``(beta, samples)`` pairs."""
    buf = io.StringIO()
    buf.write(CSV_VERSION + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SAMPLE_COLUMNS)
    for beta, samples in groups:
        for r, s in enumerate(samples):
            w.writerow([_fmt(beta), r, s.steps, int(s.censored),
                        "" if s.first_hit_state is None else s.first_hit_state])
    text = buf.getvalue()
    _emit(text, out)
    return text


def _emit(text, out):
    if out is None:
        return
    if hasattr(out, "write"):
        out.write(text)
    else:
        Path(out).write_text(text)


def read_results(path) -> list[ResultRow]:
    text = Path(path).read_text()
    lines = [l for l in text.splitlines() if not l.startswith("#")]
    rows = []
    for rec in csv.DictReader(lines):
        kw = {}
        for f in fields(ResultRow):
            v = rec.get(f.name, "")
            if f.name in ("quantity", "route"):
                kw[f.name] = v
            elif v == "":
                kw[f.name] = None
            elif f.name == "censored":
                kw[f.name] = int(v)
            else:
                kw[f.name] = float(v)
        rows.append(ResultRow(**kw))
    return rows


def write_json(report, out=None) -> str:
    text = json.dumps(_jsonable(report), indent=2, sort_keys=True) + "\n"
    _emit(text, out)
    return text


def _jsonable(x):
    if hasattr(x, "__dataclass_fields__"):
        return _jsonable(asdict(x))
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple, set, frozenset)):
        items = sorted(x) if isinstance(x, (set, frozenset)) else x
        return [_jsonable(v) for v in items]
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, float) and not math.isfinite(x):
        return str(x)
    return x


# -- manifests -------------------------------------------------------------------------

MODEL_KINDS = ("landscape", "blume-capel", "pca")
ANALYSES = ("validate", "analyze", "exact", "mc", "predict", "fit", "droplet", "table-check",
            "structure", "experiment")


@dataclass
class ExperimentManifest:
    model: str
    params: dict = field(default_factory=dict)
    betas: list = field(default_factory=list)
    seed: int = 0
    replicas: int = 100
    max_steps: int | None = None
    analyses: list = field(default_factory=list)
    base_dir: str = "."

    def path(self, key) -> str:
        return os.path.join(self.base_dir, self.params[key])


_LIST_KEYS = {"beta", "analyses"}


def parse_manifest(text: str, source: str = "<manifest>", base_dir: str = ".") -> ExperimentManifest:
    """Parse ``key = value`` lines.  Unknown keys are kept as model parameters."""
    raw = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise FormatError("expected key = value", lineno, source)
        k, v = (s.strip() for s in line.split("=", 1))
        if not k:
            raise FormatError("empty key", lineno, source)
        if k in raw:
            raise FormatError(f"duplicate key {k!r}", lineno, source)
        raw[k] = (v, lineno)
    if "model" not in raw:
        raise FormatError("missing 'model'", None, source)
    model, ml = raw.pop("model")
    model = "landscape" if model == "generic-landscape" else model
    if model not in MODEL_KINDS:
        raise FormatError(f"model must be one of {MODEL_KINDS}", ml, source)
    m = ExperimentManifest(model=model, base_dir=base_dir)
    for k, (v, ln) in raw.items():
        try:
            if k == "beta":
                m.betas = [float(b) for b in v.split(",") if b.strip()]
                if any(b2 <= b1 for b1, b2 in zip(m.betas, m.betas[1:])):
                    raise FormatError("beta list must be strictly increasing", ln, source)
                if any(b <= 0 for b in m.betas):
                    raise FormatError("beta values must be positive", ln, source)
            elif k == "seed":
                m.seed = int(v)
            elif k == "replicas":
                m.replicas = int(v)
            elif k == "max_steps":
                m.max_steps = int(float(v))
            elif k == "analyses":
                m.analyses = [a.strip() for a in v.split(",") if a.strip()]
                bad = [a for a in m.analyses if a not in ANALYSES]
                if bad:
                    raise FormatError(f"unknown analyses {bad}", ln, source)
            else:
                m.params[k] = v
        except ValueError as e:
            if isinstance(e, FormatError):
                raise
            raise FormatError(f"bad value for {k!r}: {v!r}", ln, source) from None
    if m.model == "landscape":
        if "landscape" not in m.params:
            raise FormatError("landscape model needs 'landscape = <file>'", None, source)
        if not os.path.exists(m.path("landscape")):
            raise FormatError(f"landscape file {m.path('landscape')} does not exist", None, source)
    return m


def load_manifest(path) -> ExperimentManifest:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as e:
        raise FormatError(f"cannot read file: {e.strerror}", None, str(p)) from None
    return parse_manifest(text, str(p), str(p.parent))
