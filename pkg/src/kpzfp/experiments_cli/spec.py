"""Experiment specs: flat key-value INI files with typed sections.

    [experiment]
    name = scaling-flat
    op = scaling_convergence
    seed = 7
    tol = 1e-8
    out = results/scaling-flat.csv
    timeout = 120

    [params]
    eps = 0.2, 0.1, 0.05
    data = flat, narrow-wedge

Values in [params] are parsed as int, float, bool or str; a comma makes a
list. No includes or interpolation.
"""

import configparser
import hashlib
from dataclasses import dataclass, field, replace
from pathlib import Path

from ..errors import InvalidConfigError

SCHEMA_VERSION = 1


def _scalar(text):
    text = text.strip()
    low = text.lower()
    if low in ("true", "yes"):
        return True
    if low in ("false", "no"):
        return False
    if low in ("inf", "+inf"):
        return float("inf")
    if low == "-inf":
        return float("-inf")
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text


def parse_value(text):
    if "," in text:
        return [_scalar(p) for p in text.split(",") if p.strip()]
    return _scalar(text)


@dataclass(frozen=True)
class ExperimentSpec:
    name: str
    op: str
    params: dict = field(default_factory=dict)
    seed: int = 0
    tol: float = 1e-8
    out: str = ""
    timeout: float = 120.0
    threads: int = 1
    text: str = ""

    @property
    def digest(self):
        """hash of the spec text (or of its fields when built in code)."""
        blob = self.text or repr((self.name, self.op, sorted(self.params.items()), self.tol))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def with_overrides(self, seed=None, tol=None, out=None, threads=None):
        kw = {}
        if seed is not None:
            kw["seed"] = int(seed)
        if tol is not None:
            kw["tol"] = float(tol)
        if out is not None:
            kw["out"] = str(out)
        if threads is not None:
            kw["threads"] = int(threads)
        return replace(self, **kw)

    def get(self, key, default=None):
        return self.params.get(key, default)

    def as_list(self, key, default=None):
        v = self.params.get(key, default)
        if v is None:
            return []
        return list(v) if isinstance(v, (list, tuple)) else [v]


def parse_spec(text, origin="<string>"):
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text, source=origin)
    except configparser.Error as exc:
        raise InvalidConfigError(f"{origin}: {exc}") from exc
    if "experiment" not in cp:
        raise InvalidConfigError(f"{origin}: missing [experiment] section")
    extra = set(cp.sections()) - {"experiment", "params"}
    if extra:
        raise InvalidConfigError(f"{origin}: unknown sections {sorted(extra)}")
    ex = cp["experiment"]
    if "op" not in ex:
        raise InvalidConfigError(f"{origin}: [experiment] needs op")
    params = {k: parse_value(v) for k, v in cp["params"].items()} if "params" in cp else {}
    try:
        return ExperimentSpec(
            name=ex.get("name", Path(origin).stem),
            op=ex["op"].strip(),
            params=params,
            seed=int(ex.get("seed", 0)),
            tol=float(ex.get("tol", 1e-8)),
            out=ex.get("out", "").strip(),
            timeout=float(ex.get("timeout", 120)),
            threads=int(ex.get("threads", 1)),
            text=text,
        )
    except ValueError as exc:
        raise InvalidConfigError(f"{origin}: {exc}") from exc


def load_spec(path):
    path = Path(path)
    if not path.is_file():
        raise InvalidConfigError(f"spec file {path} not found")
    return parse_spec(path.read_text(), str(path))
