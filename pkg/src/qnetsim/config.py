"""Instance configuration files.

The on-disk format is a deliberately small subset of YAML: top-level
``key: value`` pairs where a value is a scalar, a (possibly nested) list,
or a one-level map.  Lists may span physical lines until their brackets
balance, and ``#`` starts a comment.  A purpose-built reader keeps the
accepted dialect unambiguous and makes round-trips exact.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Optional

from . import network as nm

_KEY_RE = re.compile(r"^([A-Za-z_][A-Za-z0-9_]*)\s*:\s*(.*)$", re.S)


class ConfigError(ValueError):
    pass


class ParseError(ConfigError):
    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ValidationError(ConfigError):
    pass


# ---------------------------------------------------------------------------
# Reader
# ---------------------------------------------------------------------------


def _strip_comment(line: str) -> str:
    out = []
    quote = None
    for ch in line:
        if quote:
            out.append(ch)
            if ch == quote:
                quote = None
        elif ch in "'\"":
            quote = ch
            out.append(ch)
        elif ch == "#":
            break
        else:
            out.append(ch)
    return "".join(out)


def _logical_lines(text: str):
    """Yield (start_line_number, joined_text) with balanced brackets."""
    buf: list[str] = []
    start = None
    depth = 0
    for no, raw in enumerate(text.splitlines(), start=1):
        line = _strip_comment(raw)
        if not line.strip() and depth == 0:
            continue
        if start is None:
            start = no
        buf.append(line)
        depth += sum(line.count(c) for c in "[{") - sum(line.count(c) for c in "]}")
        if depth < 0:
            raise ParseError("unbalanced closing bracket", no)
        if depth == 0:
            yield start, "\n".join(buf)
            buf = []
            start = None
    if buf:
        raise ParseError("unterminated bracket at end of file", start)


class _ValueParser:
    def __init__(self, text: str, line: int):
        self.s = text
        self.i = 0
        self.line = line

    def fail(self, msg: str):
        raise ParseError(f"{msg} (near {self.s[self.i:self.i + 20]!r})", self.line)

    def skip_ws(self):
        while self.i < len(self.s) and self.s[self.i] in " \t\n\r":
            self.i += 1

    def peek(self) -> str:
        return self.s[self.i] if self.i < len(self.s) else ""

    def parse(self):
        value = self.value()
        self.skip_ws()
        if self.i < len(self.s):
            self.fail("trailing characters after value")
        return value

    def value(self):
        self.skip_ws()
        ch = self.peek()
        if ch == "":
            self.fail("missing value")
        if ch == "[":
            return self.list_()
        if ch == "{":
            return self.map_()
        if ch in "'\"":
            return self.quoted(ch)
        return self.scalar()

    def list_(self):
        self.i += 1
        items = []
        while True:
            self.skip_ws()
            if self.peek() == "]":
                self.i += 1
                return items
            items.append(self.value())
            self.skip_ws()
            if self.peek() == ",":
                self.i += 1
            elif self.peek() != "]":
                self.fail("expected ',' or ']' in list")

    def map_(self):
        self.i += 1
        out = {}
        while True:
            self.skip_ws()
            if self.peek() == "}":
                self.i += 1
                return out
            key = self.map_key()
            self.skip_ws()
            if self.peek() != ":":
                self.fail("expected ':' after map key")
            self.i += 1
            out[key] = self.value()
            self.skip_ws()
            if self.peek() == ",":
                self.i += 1
            elif self.peek() != "}":
                self.fail("expected ',' or '}' in map")

    def map_key(self) -> str:
        ch = self.peek()
        if ch in "'\"":
            return self.quoted(ch)
        start = self.i
        while self.i < len(self.s) and (self.s[self.i].isalnum() or self.s[self.i] == "_"):
            self.i += 1
        if self.i == start:
            self.fail("expected map key")
        return self.s[start : self.i]

    def quoted(self, quote: str) -> str:
        self.i += 1
        start = self.i
        while self.i < len(self.s) and self.s[self.i] != quote:
            self.i += 1
        if self.i >= len(self.s):
            self.fail("unterminated string")
        value = self.s[start : self.i]
        self.i += 1
        return value

    def scalar(self):
        start = self.i
        while self.i < len(self.s) and self.s[self.i] not in ",]}\n\t ":
            self.i += 1
        token = self.s[start : self.i]
        if not token:
            self.fail("empty scalar")
        if token == "true":
            return True
        if token == "false":
            return False
        try:
            return int(token)
        except ValueError:
            pass
        try:
            return float(token)
        except ValueError:
            pass
        if re.fullmatch(r"[A-Za-z_][A-Za-z0-9_.-]*", token):
            return token
        self.fail(f"cannot parse scalar {token!r}")


def parse_document(text: str) -> dict:
    doc: dict = {}
    for line_no, logical in _logical_lines(text):
        match = _KEY_RE.match(logical.strip())
        if not match:
            raise ParseError("expected 'key: value'", line_no)
        key, value_text = match.group(1), match.group(2)
        if key in doc:
            raise ParseError(f"duplicate key {key!r}", line_no)
        doc[key] = _ValueParser(value_text, line_no).parse()
    return doc


# ---------------------------------------------------------------------------
# EnvConfig
# ---------------------------------------------------------------------------

LAM_TYPES = ("constant", "deterministic", "hyperexponential", "time_varying", "trace")
SERVICE_TYPES = ("exponential", "deterministic", "hyperexponential")

_REQUIRED = ("name", "lam_type", "lam_params", "network", "mu", "h",
             "init_queues", "queue_event_options")
_OPTIONAL = ("pool_sizes", "service_type", "service_params",
             "max_events", "max_time", "notes")


@dataclass
class EnvConfig:
    """One instance in the appendix-style on-disk schema.

    ``network`` and ``mu`` are stored server-major (one row per server
    class) exactly as written in config files; ``to_network_spec``
    transposes to the queue-major internal layout.
    ``queue_event_options`` lists M arrival deltas then M completion deltas.
    """

    name: str
    lam_type: str
    lam_params: dict
    network: list[list[int]]
    mu: list[list[float]]
    h: list[float]
    init_queues: list[int]
    queue_event_options: list[list[int]]
    pool_sizes: Optional[list[int]] = None
    service_type: str = "exponential"
    service_params: Optional[dict] = None
    max_events: Optional[int] = None
    max_time: Optional[float] = None
    notes: Optional[str] = None

    @property
    def num_queues(self) -> int:
        return len(self.h)

    @property
    def num_servers(self) -> int:
        return len(self.network)


def _as_float_list(value, key: str) -> list[float]:
    if not isinstance(value, list) or not value:
        raise ValidationError(f"{key} must be a nonempty list")
    out = []
    for v in value:
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ValidationError(f"{key} must contain numbers, got {v!r}")
        out.append(float(v))
    return out


def _as_int_list(value, key: str) -> list[int]:
    floats = _as_float_list(value, key)
    out = []
    for v in floats:
        if v != int(v):
            raise ValidationError(f"{key} must contain integers, got {v}")
        out.append(int(v))
    return out


def _as_matrix(value, key: str, caster) -> list[list]:
    if not isinstance(value, list) or not value or not all(isinstance(r, list) for r in value):
        raise ValidationError(f"{key} must be a list of rows")
    rows = [caster(r, f"{key} row {k}") for k, r in enumerate(value)]
    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise ValidationError(f"{key} rows differ in length")
    return rows


def config_from_mapping(doc: dict) -> EnvConfig:
    for key in _REQUIRED:
        if key not in doc:
            raise ParseError(f"missing required key {key!r}")
    for key in doc:
        if key not in _REQUIRED + _OPTIONAL:
            raise ValidationError(f"unknown key {key!r}")

    name = doc["name"]
    if not isinstance(name, str) or not name:
        raise ValidationError("name must be a nonempty string")
    lam_type = doc["lam_type"]
    if lam_type not in LAM_TYPES:
        raise ValidationError(f"lam_type must be one of {LAM_TYPES}, got {lam_type!r}")
    lam_params = doc["lam_params"]
    if not isinstance(lam_params, dict):
        raise ValidationError("lam_params must be a map")

    network = _as_matrix(doc["network"], "network", _as_int_list)
    mu = _as_matrix(doc["mu"], "mu", _as_float_list)
    h = _as_float_list(doc["h"], "h")
    init_queues = _as_int_list(doc["init_queues"], "init_queues")
    qeo = _as_matrix(doc["queue_event_options"], "queue_event_options", _as_int_list)

    m = len(h)
    n = len(network)
    if any(len(row) != m for row in network):
        raise ValidationError("network rows must have one column per queue")
    if len(mu) != n or any(len(row) != m for row in mu):
        raise ValidationError("mu must have the same shape as network")
    if len(init_queues) != m:
        raise ValidationError("init_queues must have one entry per queue")
    if len(qeo) != 2 * m:
        raise ValidationError(
            f"queue_event_options needs {2 * m} rows (arrivals then completions)"
        )
    for k, row in enumerate(qeo):
        if len(row) != m or any(v not in (-1, 0, 1) for v in row):
            raise ValidationError(f"queue_event_options row {k} malformed")
    for i in range(m):
        row = qeo[i]
        nonzero = [k for k, v in enumerate(row) if v != 0]
        if nonzero and (nonzero != [i] or row[i] != 1):
            raise ValidationError(
                f"arrival delta row {i} must be the unit vector e_{i} or all zero"
            )

    pool_sizes = None
    if "pool_sizes" in doc:
        pool_sizes = _as_int_list(doc["pool_sizes"], "pool_sizes")
        if len(pool_sizes) != n or any(p < 1 for p in pool_sizes):
            raise ValidationError("pool_sizes must list a positive size per server")
    service_type = doc.get("service_type", "exponential")
    if service_type not in SERVICE_TYPES:
        raise ValidationError(
            f"service_type must be one of {SERVICE_TYPES}, got {service_type!r}"
        )
    service_params = doc.get("service_params")
    if service_type == "hyperexponential":
        if not isinstance(service_params, dict):
            raise ValidationError("hyperexponential service needs service_params")
        extra = set(service_params) - {"weights", "means"}
        if extra:
            raise ValidationError(f"unknown service_params keys {sorted(extra)}")
        service_params = {
            "weights": _as_float_list(service_params.get("weights"), "service_params.weights"),
            "means": _as_float_list(service_params.get("means"), "service_params.means"),
        }
    elif service_params is not None:
        raise ValidationError(f"service_params meaningless for {service_type!r}")

    lam_params = _check_lam_params(lam_type, lam_params, m)

    max_events = doc.get("max_events")
    if max_events is not None and (not isinstance(max_events, int) or max_events < 1):
        raise ValidationError("max_events must be a positive integer")
    max_time = doc.get("max_time")
    if max_time is not None:
        if isinstance(max_time, bool) or not isinstance(max_time, (int, float)) or max_time <= 0:
            raise ValidationError("max_time must be a positive number")
        max_time = float(max_time)
    notes = doc.get("notes")
    if notes is not None and not isinstance(notes, str):
        raise ValidationError("notes must be a string")

    return EnvConfig(
        name=name,
        lam_type=lam_type,
        lam_params=lam_params,
        network=network,
        mu=mu,
        h=h,
        init_queues=init_queues,
        queue_event_options=qeo,
        pool_sizes=pool_sizes,
        service_type=service_type,
        service_params=service_params,
        max_events=max_events,
        max_time=max_time,
        notes=notes,
    )


def _check_lam_params(lam_type: str, params: dict, m: int) -> dict:
    def need(keys):
        extra = set(params) - set(keys)
        if extra:
            raise ValidationError(f"unknown lam_params keys {sorted(extra)}")
        for k in keys:
            if k not in params:
                raise ValidationError(f"lam_params missing {k!r}")

    if lam_type == "constant":
        need(["val"])
        val = _as_float_list(params["val"], "lam_params.val")
        if len(val) != m:
            raise ValidationError("lam_params.val must list one rate per queue")
        return {"val": val}
    if lam_type == "deterministic":
        need(["val"])
        val = _as_float_list(params["val"], "lam_params.val")
        if len(val) != m:
            raise ValidationError("lam_params.val must list one interval per queue")
        return {"val": val}
    if lam_type == "hyperexponential":
        need(["weights", "rates"])
        weights = _as_matrix(params["weights"], "lam_params.weights", _as_float_list)
        rates = _as_matrix(params["rates"], "lam_params.rates", _as_float_list)
        if len(weights) != m or len(rates) != m:
            raise ValidationError("hyperexponential arrivals need per-queue rows")
        return {"weights": weights, "rates": rates}
    if lam_type == "time_varying":
        need(["breaks", "rates"])
        breaks = _as_float_list(params["breaks"], "lam_params.breaks")
        rates = _as_matrix(params["rates"], "lam_params.rates", _as_float_list)
        if len(rates) != m or any(len(r) != len(breaks) for r in rates):
            raise ValidationError(
                "time_varying arrivals need one rate row per queue, one entry per segment"
            )
        return {"breaks": breaks, "rates": rates}
    if lam_type == "trace":
        need(["times"])
        times = params["times"]
        if not isinstance(times, list) or len(times) != m:
            raise ValidationError("trace arrivals need one timestamp list per queue")
        return {
            "times": [
                _as_float_list(t, f"lam_params.times[{i}]") if t else []
                for i, t in enumerate(times)
            ]
        }
    raise ValidationError(f"unhandled lam_type {lam_type!r}")


def loads_config(text: str) -> EnvConfig:
    return config_from_mapping(parse_document(text))


def load_config(path) -> EnvConfig:
    with open(path, encoding="utf-8") as fh:
        return loads_config(fh.read())


# ---------------------------------------------------------------------------
# Canonical serialization
# ---------------------------------------------------------------------------


def _emit(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, str):
        return f"'{value}'"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, int):
        return str(value)
    if isinstance(value, list):
        return "[" + ", ".join(_emit(v) for v in value) + "]"
    if isinstance(value, dict):
        return "{" + ", ".join(f"{k}: {_emit(v)}" for k, v in value.items()) + "}"
    raise TypeError(f"cannot serialize {type(value)}")


def dumps_config(cfg: EnvConfig) -> str:
    lines = [
        f"name: {_emit(cfg.name)}",
        f"lam_type: {_emit(cfg.lam_type)}",
        f"lam_params: {_emit(cfg.lam_params)}",
        f"network: {_emit(cfg.network)}",
        f"mu: {_emit(cfg.mu)}",
        f"h: {_emit(cfg.h)}",
        f"init_queues: {_emit(cfg.init_queues)}",
        f"queue_event_options: {_emit(cfg.queue_event_options)}",
    ]
    if cfg.pool_sizes is not None:
        lines.append(f"pool_sizes: {_emit(cfg.pool_sizes)}")
    if cfg.service_type != "exponential":
        lines.append(f"service_type: {_emit(cfg.service_type)}")
    if cfg.service_params is not None:
        lines.append(f"service_params: {_emit(cfg.service_params)}")
    if cfg.max_events is not None:
        lines.append(f"max_events: {_emit(cfg.max_events)}")
    if cfg.max_time is not None:
        lines.append(f"max_time: {_emit(cfg.max_time)}")
    if cfg.notes is not None:
        lines.append(f"notes: {_emit(cfg.notes)}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# EnvConfig -> NetworkSpec
# ---------------------------------------------------------------------------


def to_network_spec(cfg: EnvConfig) -> nm.NetworkSpec:
    """Transpose the server-major config matrices and build a validated spec."""
    m, n = cfg.num_queues, cfg.num_servers
    topology = [[cfg.network[j][i] for j in range(n)] for i in range(m)]
    rates = [[cfg.mu[j][i] for j in range(n)] for i in range(m)]
    routing = cfg.queue_event_options[m:]
    arrivals = _build_arrivals(cfg)
    services = _build_services(cfg)
    return nm.make_spec(
        topology=topology,
        rates=rates,
        holding_costs=cfg.h,
        routing=routing,
        arrival_specs=arrivals,
        service_specs=services,
        init_queues=cfg.init_queues,
        pool_sizes=cfg.pool_sizes,
    )


def _build_arrivals(cfg: EnvConfig) -> list:
    m = cfg.num_queues
    p = cfg.lam_params
    if cfg.lam_type == "constant":
        return [nm.Exponential(p["val"][i]) for i in range(m)]
    if cfg.lam_type == "deterministic":
        return [nm.Deterministic(p["val"][i]) for i in range(m)]
    if cfg.lam_type == "hyperexponential":
        return [
            nm.Hyperexponential(tuple(p["weights"][i]), tuple(p["rates"][i]))
            for i in range(m)
        ]
    if cfg.lam_type == "time_varying":
        return [
            nm.TimeVarying(tuple(p["breaks"]), tuple(p["rates"][i])) for i in range(m)
        ]
    if cfg.lam_type == "trace":
        return [nm.Trace(tuple(p["times"][i])) for i in range(m)]
    raise ValidationError(f"unhandled lam_type {cfg.lam_type!r}")


def _build_services(cfg: EnvConfig) -> list:
    m = cfg.num_queues
    if cfg.service_type == "exponential":
        return [nm.ExpWorkload() for _ in range(m)]
    if cfg.service_type == "deterministic":
        return [nm.DetWorkload() for _ in range(m)]
    params = cfg.service_params or {}
    return [
        nm.HyperWorkload(tuple(params["weights"]), tuple(params["means"]))
        for _ in range(m)
    ]
