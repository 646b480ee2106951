"""Scenario files, payment-set runs, reports and parameter sweeps.

A scenario is a strict JSON document. Every key is optional except that
unknown keys are errors at every nesting level::

    {
      "name": "alert-window",
      "seed": 7,
      "n_payments": 30,
      "attack": "alert_window",          # none | alert_window | toast | dos
      "link": "wifi",                    # wifi | cellular4g | cellular3g | wired
      "amounts": 100,                    # or {"min": 10, "max": 500}
      "defenses": {"touch_filtering": false, "framed_overlays": false,
                   "otp": false, "sensitive_views": false},
      "perception": {"p_miss_frame": 0.36, "p_miss_nickname": 0.8},
      "malware": {"poll_period_ms": 100, "creation_delay_ms": 50,
                  "overlay_alpha": 0.0, "server_up": true},
      "payer": {"summary_nickname": false},
      "layout": [{"app": "wallet", "tag": "qr-button", "rect": [880, 1640, 160, 160]},
                 {"app": "wallet", "tag": "qr-display", "rect": [165, 460, 750, 750]}],
      "calibration": {"validation_delay_ms": 2000, "server_processing_ms": 100,
                      "device_processing_ms": 0, "server_link": "wired",
                      "links": {"wifi": {"mean_ms": 15, "jitter_ms": 5}},
                      "notification_timeout_ms": 30000, "server_loss": 0.0,
                      "otp_loss": 0.0, "otp_timeout_ms": 60000}
    }

``server_link`` is either a profile name or ``{"mean_ms": .., "jitter_ms": ..}``.
"""

from __future__ import annotations

import csv
import io
import json
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from importlib import resources
from typing import Any, Iterable, Sequence

from .agents import (
    CREATION_DELAY,
    DEFAULT_LAYOUT,
    POLL_PERIOD,
    MalviewConfig,
    Outcome,
    PaymentTrace,
    Strategy,
    World,
    WorldConfig,
)
from .defenses import DefenseConfig, PerceptionOracle
from .ledgernet import DEFAULT_PROFILES, LinkProfile
from .simcore import MASK64, MS, derive_seed
from .windowstack import SCREEN, Rect

ATTACKS = ("none", "alert_window", "toast", "dos")
LINKS = ("wifi", "cellular4g", "cellular3g", "wired")
WALLET_TAGS = ("qr-button", "qr-display")
CSV_HEADER = ("index", "outcome", "setup_time_us", "notification_delay_us", "stolen_amount")
SWEEP_AXES = ("link", "attack", "n_payments", "amounts") + tuple(
    "defenses." + f for f in ("touch_filtering", "framed_overlays", "otp", "sensitive_views")
) + ("perception.p_miss_frame", "perception.p_miss_nickname")


class ScenarioError(ValueError):
    pass


class ScenarioSyntaxError(ScenarioError):
    def __init__(self, msg: str, line: int, col: int):
        super().__init__(f"line {line} column {col}: {msg}")
        self.line = line
        self.col = col


class SchemaError(ScenarioError):
    def __init__(self, field: str, reason: str):
        super().__init__(f"{field}: {reason}")
        self.field = field
        self.reason = reason


class UnknownAxis(ScenarioError):
    pass


# --------------------------------------------------------------------------
# scenario model


@dataclass(frozen=True)
class MalwareParams:
    poll_period_ms: float = POLL_PERIOD / MS
    creation_delay_ms: float = CREATION_DELAY / MS
    overlay_alpha: float = 0.0
    server_up: bool = True


@dataclass(frozen=True)
class Calibration:
    validation_delay_ms: float = 2_000
    server_processing_ms: float = 100
    device_processing_ms: float = 0
    server_link: Any = "wired"
    links: tuple = ()  # ((name, mean_ms, jitter_ms), ...)
    notification_timeout_ms: float = 30_000
    server_loss: float = 0.0
    otp_loss: float = 0.0
    otp_timeout_ms: float = 60_000


@dataclass(frozen=True)
class LayoutEntry:
    app: str
    tag: str
    rect: Rect


@dataclass(frozen=True)
class Scenario:
    name: str | None = None
    seed: int = 0
    n_payments: int = 30
    attack: str = "none"
    link: str = "wifi"
    amounts: tuple[int, int] = (100, 100)
    defenses: DefenseConfig = DefenseConfig()
    perception: PerceptionOracle = PerceptionOracle()
    malware: MalwareParams = MalwareParams()
    summary_nickname: bool = False
    layout: tuple[LayoutEntry, ...] = tuple(
        LayoutEntry("wallet", tag, rect) for tag, rect in DEFAULT_LAYOUT.items()
    )
    calibration: Calibration = Calibration()

    def to_dict(self) -> dict:
        lo, hi = self.amounts
        cal = self.calibration
        server_link = cal.server_link
        if isinstance(server_link, LinkProfile):
            server_link = {"mean_ms": server_link.mean_one_way / MS,
                           "jitter_ms": server_link.jitter_sd / MS}
        return {
            "name": self.name,
            "seed": self.seed,
            "n_payments": self.n_payments,
            "attack": self.attack,
            "link": self.link,
            "amounts": lo if lo == hi else {"min": lo, "max": hi},
            "defenses": asdict(self.defenses),
            "perception": asdict(self.perception),
            "malware": asdict(self.malware),
            "payer": {"summary_nickname": self.summary_nickname},
            "layout": [
                {"app": e.app, "tag": e.tag, "rect": [e.rect.x, e.rect.y, e.rect.w, e.rect.h]}
                for e in self.layout
            ],
            "calibration": {
                "validation_delay_ms": cal.validation_delay_ms,
                "server_processing_ms": cal.server_processing_ms,
                "device_processing_ms": cal.device_processing_ms,
                "server_link": server_link,
                "links": {n: {"mean_ms": m, "jitter_ms": j} for n, m, j in cal.links},
                "notification_timeout_ms": cal.notification_timeout_ms,
                "server_loss": cal.server_loss,
                "otp_loss": cal.otp_loss,
                "otp_timeout_ms": cal.otp_timeout_ms,
            },
        }

    def profiles(self) -> dict[str, LinkProfile]:
        profiles = dict(DEFAULT_PROFILES)
        for name, mean, jitter in self.calibration.links:
            profiles[name] = LinkProfile(name, _us(mean), _us(jitter))
        sl = self.calibration.server_link
        if isinstance(sl, LinkProfile):
            profiles["server"] = sl
        return profiles

    def world_config(self) -> WorldConfig:
        cal = self.calibration
        malware = None
        if self.attack != "none":
            malware = MalviewConfig(
                strategy=Strategy.TOAST if self.attack == "toast" else Strategy.ALERT_WINDOW,
                poll_period=_us(self.malware.poll_period_ms),
                creation_delay=_us(self.malware.creation_delay_ms),
                overlay_alpha=self.malware.overlay_alpha,
                corrupt_qr=self.attack == "dos",
            )
        return WorldConfig(
            seed=self.seed,
            n_payments=self.n_payments,
            amounts=self.amounts,
            malware=malware,
            defenses=self.defenses,
            oracle=self.perception,
            link=self.link,
            profiles=self.profiles(),
            server_link="server" if isinstance(cal.server_link, LinkProfile) else cal.server_link,
            layout={e.tag: e.rect for e in self.layout if e.app == "wallet"},
            validation_delay=_us(cal.validation_delay_ms),
            server_processing=_us(cal.server_processing_ms),
            device_processing=_us(cal.device_processing_ms),
            notification_timeout=_us(cal.notification_timeout_ms),
            otp_timeout=_us(cal.otp_timeout_ms),
            otp_loss=cal.otp_loss,
            server_loss=cal.server_loss,
            server_up=self.malware.server_up,
            summary_nickname=self.summary_nickname,
        )


def _us(ms: float) -> int:
    return int(round(ms * MS))


# --------------------------------------------------------------------------
# parsing


def _obj(value, where: str, allowed: Iterable[str]) -> dict:
    if not isinstance(value, dict):
        raise SchemaError(where or "<root>", "expected an object")
    allowed = set(allowed)
    for key in value:
        if key not in allowed:
            raise SchemaError(f"{where}.{key}" if where else key, "unknown key")
    return value


def _bool(value, where: str) -> bool:
    if not isinstance(value, bool):
        raise SchemaError(where, "expected true or false")
    return value


def _int(value, where: str, lo: int | None = None, hi: int | None = None) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise SchemaError(where, "expected an integer")
    if lo is not None and value < lo:
        raise SchemaError(where, f"must be >= {lo}")
    if hi is not None and value > hi:
        raise SchemaError(where, f"must be <= {hi}")
    return value


def _num(value, where: str, lo: float | None = None, hi: float | None = None,
         strict_lo: bool = False) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SchemaError(where, "expected a number")
    if lo is not None and (value <= lo if strict_lo else value < lo):
        raise SchemaError(where, f"must be {'>' if strict_lo else '>='} {lo}")
    if hi is not None and value > hi:
        raise SchemaError(where, f"must be <= {hi}")
    return value


def _choice(value, where: str, options: Sequence[str]) -> str:
    if value not in options:
        raise SchemaError(where, f"expected one of {', '.join(options)}")
    return value


def _profile(value, where: str) -> tuple[float, float]:
    _obj(value, where, ("mean_ms", "jitter_ms"))
    if "mean_ms" not in value:
        raise SchemaError(where + ".mean_ms", "required")
    return (_num(value["mean_ms"], where + ".mean_ms", 0, strict_lo=True),
            _num(value.get("jitter_ms", 0), where + ".jitter_ms", 0))


def scenario_from_dict(doc: Any) -> Scenario:
    top = _obj(doc, "", (
        "name", "seed", "n_payments", "attack", "link", "amounts", "defenses", "perception",
        "malware", "payer", "layout", "calibration",
    ))
    kw: dict[str, Any] = {}
    if top.get("name") is not None:
        if not isinstance(top["name"], str):
            raise SchemaError("name", "expected a string")
        kw["name"] = top["name"]
    if "seed" in top:
        kw["seed"] = _int(top["seed"], "seed", 0, MASK64)
    if "n_payments" in top:
        kw["n_payments"] = _int(top["n_payments"], "n_payments", 1)
    if "attack" in top:
        kw["attack"] = _choice(top["attack"], "attack", ATTACKS)
    if "link" in top:
        kw["link"] = _choice(top["link"], "link", LINKS)
    if "amounts" in top:
        a = top["amounts"]
        if isinstance(a, dict):
            _obj(a, "amounts", ("min", "max"))
            for k in ("min", "max"):
                if k not in a:
                    raise SchemaError(f"amounts.{k}", "required")
            lo = _int(a["min"], "amounts.min", 1)
            hi = _int(a["max"], "amounts.max", lo)
            kw["amounts"] = (lo, hi)
        else:
            v = _int(a, "amounts", 1)
            kw["amounts"] = (v, v)
    if "defenses" in top:
        d = _obj(top["defenses"], "defenses", DefenseConfig.__dataclass_fields__)
        kw["defenses"] = DefenseConfig(**{k: _bool(v, f"defenses.{k}") for k, v in d.items()})
    if "perception" in top:
        d = _obj(top["perception"], "perception", PerceptionOracle.__dataclass_fields__)
        kw["perception"] = PerceptionOracle(
            **{k: _num(v, f"perception.{k}", 0.0, 1.0) for k, v in d.items()}
        )
    if "malware" in top:
        d = _obj(top["malware"], "malware", MalwareParams.__dataclass_fields__)
        m = {}
        if "poll_period_ms" in d:
            m["poll_period_ms"] = _num(d["poll_period_ms"], "malware.poll_period_ms", 0, strict_lo=True)
        if "creation_delay_ms" in d:
            m["creation_delay_ms"] = _num(d["creation_delay_ms"], "malware.creation_delay_ms", 0)
        if "overlay_alpha" in d:
            m["overlay_alpha"] = _num(d["overlay_alpha"], "malware.overlay_alpha", 0.0, 1.0)
        if "server_up" in d:
            m["server_up"] = _bool(d["server_up"], "malware.server_up")
        kw["malware"] = MalwareParams(**m)
    if "payer" in top:
        d = _obj(top["payer"], "payer", ("summary_nickname",))
        if "summary_nickname" in d:
            kw["summary_nickname"] = _bool(d["summary_nickname"], "payer.summary_nickname")
    if "layout" in top:
        kw["layout"] = _parse_layout(top["layout"])
    if "calibration" in top:
        kw["calibration"] = _parse_calibration(top["calibration"])
    return Scenario(**kw)


def _parse_layout(items) -> tuple[LayoutEntry, ...]:
    if not isinstance(items, list):
        raise SchemaError("layout", "expected a list")
    entries: dict[str, LayoutEntry] = {}
    for i, item in enumerate(items):
        where = f"layout[{i}]"
        _obj(item, where, ("app", "tag", "rect"))
        for k in ("app", "tag", "rect"):
            if k not in item:
                raise SchemaError(f"{where}.{k}", "required")
        app = _choice(item["app"], where + ".app", ("wallet",))
        tag = _choice(item["tag"], where + ".tag", WALLET_TAGS)
        r = item["rect"]
        if not isinstance(r, list) or len(r) != 4:
            raise SchemaError(where + ".rect", "expected [x, y, w, h]")
        x, y = (_int(v, where + ".rect", 0) for v in r[:2])
        w, h = (_int(v, where + ".rect", 1) for v in r[2:])
        rect = Rect(x, y, w, h)
        if not SCREEN.contains_rect(rect):
            raise SchemaError(where + ".rect", f"outside the {SCREEN.w}x{SCREEN.h} screen")
        if tag in entries:
            raise SchemaError(where + ".tag", f"duplicate tag {tag}")
        entries[tag] = LayoutEntry(app, tag, rect)
    for tag in WALLET_TAGS:
        if tag not in entries:
            raise SchemaError("layout", f"missing wallet view {tag!r}")
    return tuple(entries[t] for t in WALLET_TAGS)


def _parse_calibration(doc) -> Calibration:
    d = _obj(doc, "calibration", Calibration.__dataclass_fields__)
    kw: dict[str, Any] = {}
    for key in ("validation_delay_ms", "server_processing_ms", "device_processing_ms",
                "notification_timeout_ms", "otp_timeout_ms"):
        if key in d:
            kw[key] = _num(d[key], f"calibration.{key}", 0)
    for key in ("server_loss", "otp_loss"):
        if key in d:
            kw[key] = _num(d[key], f"calibration.{key}", 0.0, 1.0)
    if "server_link" in d:
        sl = d["server_link"]
        if isinstance(sl, str):
            kw["server_link"] = _choice(sl, "calibration.server_link", LINKS)
        else:
            mean, jitter = _profile(sl, "calibration.server_link")
            kw["server_link"] = LinkProfile("server", _us(mean), _us(jitter))
    if "links" in d:
        links = _obj(d["links"], "calibration.links", LINKS)
        kw["links"] = tuple(
            (name,) + _profile(links[name], f"calibration.links.{name}") for name in LINKS if name in links
        )
    return Calibration(**kw)


def parse_scenario(text: str | bytes) -> Scenario:
    """Parse and validate a scenario document.

    Raises:
        ScenarioSyntaxError: malformed JSON, with line and column.
        SchemaError: a field is unknown, missing or out of range.
    """
    if isinstance(text, bytes):
        try:
            text = text.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ScenarioSyntaxError("not UTF-8", 1, exc.start + 1) from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioSyntaxError(exc.msg, exc.lineno, exc.colno) from None
    return scenario_from_dict(doc)


def load_scenario(path) -> Scenario:
    with open(path, "rb") as fh:
        return parse_scenario(fh.read())


def builtin_scenarios() -> list[str]:
    files = resources.files("overlaysim").joinpath("scenarios")
    return sorted(p.name[:-5] for p in files.iterdir() if p.name.endswith(".json"))


def builtin_scenario_text(name: str) -> str:
    return resources.files("overlaysim").joinpath("scenarios", name + ".json").read_text("utf-8")


def load_builtin(name: str) -> Scenario:
    """Load a shipped scenario such as ``"paper-calib"``."""
    return parse_scenario(builtin_scenario_text(name))


# --------------------------------------------------------------------------
# reports


@dataclass
class PaymentRecord:
    index: int
    outcome: Outcome
    setup_time: int | None
    notification_delay: int | None
    stolen_amount: int
    amount: int = 0
    fake_notification: bool = False
    frame_seen: bool = False

    @property
    def attack_fired(self) -> bool:
        return self.setup_time is not None

    @classmethod
    def from_trace(cls, t: PaymentTrace) -> "PaymentRecord":
        return cls(t.index, t.outcome, t.setup_time, t.notification_delay, t.stolen_amount,
                   t.amount, t.fake_notification, t.frame_seen)

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "outcome": self.outcome.value,
            "setup_time_us": self.setup_time,
            "notification_delay_us": self.notification_delay,
            "stolen_amount": self.stolen_amount,
            "amount": self.amount,
            "fake_notification": self.fake_notification,
            "frame_seen": self.frame_seen,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PaymentRecord":
        return cls(d["index"], Outcome(d["outcome"]), d["setup_time_us"],
                   d["notification_delay_us"], d["stolen_amount"], d["amount"],
                   d["fake_notification"], d["frame_seen"])


def describe(values: Sequence[int]) -> dict | None:
    """``{"n", "mean", "sd"}`` in µs; sample standard deviation, 0 for one value."""
    if not values:
        return None
    mean = statistics.fmean(values)
    sd = statistics.stdev(values) if len(values) > 1 else 0.0
    return {"n": len(values), "mean": mean, "sd": sd}


@dataclass
class Report:
    scenario: dict
    records: list[PaymentRecord]
    balances: dict = field(default_factory=dict)
    metrics: dict = field(default_factory=dict)

    @property
    def setup_times(self) -> list[int]:
        return [r.setup_time for r in self.records if r.setup_time is not None]

    @property
    def notification_delays(self) -> list[int]:
        return [r.notification_delay for r in self.records if r.notification_delay is not None]

    @property
    def aggregates(self) -> dict:
        return {
            "setup_time_us": describe(self.setup_times),
            "notification_delay_us": describe(self.notification_delays),
        }

    @property
    def outcome_counts(self) -> dict[str, int]:
        counts = {o.value: 0 for o in Outcome}
        for r in self.records:
            counts[r.outcome.value] += 1
        return counts

    @property
    def total_stolen(self) -> int:
        return sum(r.stolen_amount for r in self.records)

    def outcomes(self) -> list[Outcome]:
        return [r.outcome for r in self.records]

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "records": [r.to_dict() for r in self.records],
            "aggregates": self.aggregates,
            "outcome_counts": self.outcome_counts,
            "total_stolen": self.total_stolen,
            "balances": self.balances,
            "metrics": self.metrics,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Report":
        rep = cls(d["scenario"], [PaymentRecord.from_dict(r) for r in d["records"]],
                  d["balances"], d["metrics"])
        for key in ("aggregates", "outcome_counts", "total_stolen"):
            if d[key] != getattr(rep, key):
                raise ValueError(f"{key} does not match the records")
        return rep


def run_world(s: Scenario, keep_trace: bool = False, probes=()) -> tuple[World, Report]:
    world = World(s.world_config(), keep_trace=keep_trace)
    for period, fn in probes:
        world.add_probe(period, fn)
    start = {name: w.balance for name, w in world.ledger.wallets.items()}
    total_before = world.ledger.total_balance()
    traces = world.run()
    # deltas over validated transactions only; pending ones are still in flight
    deltas = {name: w.balance - start[name] for name, w in world.ledger.wallets.items()}
    if world.ledger.total_balance() != total_before:
        raise AssertionError("coin conservation violated")
    mv = world.malview
    report = Report(
        scenario=s.to_dict(),
        records=[PaymentRecord.from_trace(t) for t in traces],
        balances={
            "victim_delta": deltas["victim"],
            "attacker_delta": deltas.get("attacker", 0),
            "payer_delta": deltas["payer"],
        },
        metrics={
            "notifications_dropped": world.ledger.notifications_dropped,
            "messages_lost": len(world.network.dropped),
            "late_notifications": world.late_notifications,
            "malware_unreachable": bool(mv and mv.unreachable),
            "overlay_rejections": mv.rejections if mv else 0,
        },
    )
    return world, report


def run_scenario(s: Scenario) -> Report:
    return run_world(s)[1]


# --------------------------------------------------------------------------
# emitters


def _fmt_opt(v) -> str:
    return "" if v is None else str(v)


def emit(report: Report, fmt: str = "json") -> bytes:
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for r in report.records:
            writer.writerow([r.index, r.outcome.value, _fmt_opt(r.setup_time),
                             _fmt_opt(r.notification_delay), r.stolen_amount])
        return buf.getvalue().encode("utf-8")
    if fmt == "json":
        return (json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n").encode("utf-8")
    if fmt == "summary":
        return summary(report).encode("utf-8")
    raise ValueError(f"unknown format {fmt!r}")


def _ms(us: float) -> str:
    return f"{us / MS:.3f}"


def summary(report: Report) -> str:
    s = report.scenario
    lines = [
        f"scenario   {s.get('name') or '-'}",
        f"seed       {s['seed']}",
        f"attack     {s['attack']}",
        f"link       {s['link']}",
        f"payments   {len(report.records)}",
        "",
        "outcome             count",
    ]
    for name, n in report.outcome_counts.items():
        lines.append(f"{name:<18} {n:>6}")
    lines.append(f"{'total stolen':<18} {report.total_stolen:>6}")
    lines.append("")
    agg = report.aggregates
    rows = [("setup time", agg["setup_time_us"]), ("notification delay", agg["notification_delay_us"])]
    for label, stats in rows:
        if stats is None:
            continue
        lines.append(f"{label + ' (ms)':<24} mean {_ms(stats['mean'])} ± sd {_ms(stats['sd'])}"
                     f"  (n={stats['n']})")
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# sweeps


def override(s: Scenario, axis: str, value) -> Scenario:
    """Return ``s`` with one sweepable field replaced (value validated by the schema)."""
    if axis not in SWEEP_AXES:
        raise UnknownAxis(f"{axis!r} is not sweepable; choose from {', '.join(SWEEP_AXES)}")
    doc = s.to_dict()
    if "." in axis:
        head, key = axis.split(".", 1)
        doc[head][key] = value
    else:
        doc[axis] = value
    return scenario_from_dict(doc)


def sweep(template: Scenario, axis: str, values: Sequence, workers: int = 1) -> list[Report]:
    """One report per value; seed i is derived from the template seed and index i."""
    if axis not in SWEEP_AXES:
        raise UnknownAxis(f"{axis!r} is not sweepable; choose from {', '.join(SWEEP_AXES)}")
    scenarios = [
        replace(override(template, axis, v), seed=derive_seed(template.seed, f"sweep:{i}"))
        for i, v in enumerate(values)
    ]
    if workers > 1 and len(scenarios) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(run_scenario, scenarios))
    return [run_scenario(sc) for sc in scenarios]
