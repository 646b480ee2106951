"""The four actors of a scan-and-pay session and the world that wires them.

* :class:`WalletApp` is the payee's wallet. It shows a miniature QR button;
  tapping it opens the full-size receive QR.
* :class:`Payer` scans the payee's screen, confirms, and submits.
* :class:`Malview` is the background service on the payee's device. It polls
  the foreground app, covers the QR button with a transparent capture overlay,
  answers the captured tap with its own QR, and fakes the wallet's
  "coins received" notification.
* :class:`AttackerServer` hands out fresh attacker addresses and relays
  ledger notifications back to the malware.

Agents never touch each other's state directly. They talk through simulator
events, network messages, the window stack and the ledger.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Callable

from . import qrcodec
from .defenses import (
    Cue,
    DefenseConfig,
    OtpResult,
    OtpService,
    PerceptionOracle,
    overlay_policy,
    perception_notice,
)
from .ledgernet import (
    DEFAULT_PROFILES,
    DEFAULT_VALIDATION_DELAY,
    Address,
    Ledger,
    LinkProfile,
    NetMessage,
    Network,
    Notification,
    UnknownAddress,
)
from .simcore import MS, SECOND, EventRecord, SimTime, Simulator, SplitMix64
from .windowstack import (
    SCREEN,
    AppId,
    DeliveredTo,
    Label,
    Permission,
    PermissionDenied,
    QrContent,
    Rect,
    RejectedBySensitivePolicy,
    SolidColor,
    TouchEvent,
    View,
    Window,
    WindowKind,
    WindowStack,
    camera_capture,
)

# user think times, uniform ranges in microseconds
TAP_DELAY = (800 * MS, 2_500 * MS)
SCAN_DELAY = (1_000 * MS, 3_000 * MS)
CONFIRM_DELAY = (500 * MS, 1_500 * MS)
RETAP_DELAY = (500 * MS, 1_000 * MS)
MAX_TAPS = 3

CREATION_DELAY = 50 * MS
POLL_PERIOD = 100 * MS
TOAST_RESHOW_MARGIN = 500 * MS
SCHEDULING_QUANTUM = 1  # µs; events are integral so nothing finer exists

DEFAULT_LAYOUT: dict[str, Rect] = {
    "qr-button": Rect(880, 1640, 160, 160),
    "qr-display": Rect(165, 460, 750, 750),
}


class Outcome(enum.Enum):
    LEGIT = "LegitPayment"
    STOLEN_UNDETECTED = "StolenUndetected"
    STOLEN_DETECTED = "StolenDetected"
    BLOCKED = "Blocked"
    DOS = "DoS"
    ABANDONED = "Abandoned"

    @property
    def stolen(self) -> bool:
        return self in (Outcome.STOLEN_UNDETECTED, Outcome.STOLEN_DETECTED)


class Phase(enum.Enum):
    CLOSED = "Closed"
    MAIN = "Main"
    QR_DISPLAYED = "QrDisplayed"
    NOTIFIED = "Notified"


class Strategy(enum.Enum):
    ALERT_WINDOW = "AlertWindow"
    TOAST = "Toast"


class ServerUnreachable(RuntimeError):
    pass


class NoPrefetchedAddress(RuntimeError):
    pass


@dataclass(frozen=True)
class RenderedNotification:
    icon_id: int
    title: str
    body: str


@dataclass(frozen=True)
class NotificationStyle:
    icon_id: int = 0x7F08_0042
    title_template: str = "Coins received"
    body_template: str = "Received {amount} coins from {payer} at {time}"

    def render(self, details: Notification) -> RenderedNotification:
        fields = {
            "amount": details.amount,
            "payer": details.from_addr,
            "time": format_time(details.validated_at),
        }
        return RenderedNotification(
            self.icon_id,
            self.title_template.format(**fields),
            self.body_template.format(**fields),
        )


def format_time(t: SimTime) -> str:
    secs, micros = divmod(t, SECOND)
    mins, secs = divmod(secs, 60)
    hours, mins = divmod(mins, 60)
    return f"{hours:02d}:{mins:02d}:{secs:02d}.{micros // 1000:03d}"


@dataclass
class MalviewConfig:
    strategy: Strategy = Strategy.ALERT_WINDOW
    poll_period: SimTime = POLL_PERIOD
    overlay_alpha: float = 0.0
    server_endpoint: str = "server"
    prefetched_address: Address | None = None
    creation_delay: SimTime = CREATION_DELAY
    corrupt_qr: bool = False  # denial-of-service variant

    def validate(self, app: AppId) -> None:
        if self.strategy is Strategy.ALERT_WINDOW and not app.has(Permission.ALERT_WINDOW):
            raise PermissionDenied("AlertWindow strategy needs ALERT_WINDOW")
        if not 0.0 <= self.overlay_alpha <= 1.0:
            raise ValueError("overlay_alpha outside [0, 1]")
        if self.poll_period <= 0:
            raise ValueError("poll_period must be positive")

    @property
    def overlay_kind(self) -> WindowKind:
        if self.strategy is Strategy.TOAST:
            return WindowKind.TOAST_OVERLAY
        return WindowKind.ALERT_OVERLAY

    def permissions(self) -> frozenset:
        # the toast variant needs nothing beyond network access
        if self.strategy is Strategy.TOAST:
            return frozenset({Permission.INTERNET})
        return frozenset({Permission.ALERT_WINDOW, Permission.INTERNET})


@dataclass
class WorldConfig:
    seed: int = 0
    n_payments: int = 30
    amounts: tuple[int, int] = (100, 100)
    malware: MalviewConfig | None = None
    defenses: DefenseConfig = DefenseConfig()
    oracle: PerceptionOracle = PerceptionOracle()
    link: str = "wifi"
    profiles: dict[str, LinkProfile] = field(default_factory=lambda: dict(DEFAULT_PROFILES))
    server_link: str = "wired"
    layout: dict[str, Rect] = field(default_factory=lambda: dict(DEFAULT_LAYOUT))
    validation_delay: SimTime = DEFAULT_VALIDATION_DELAY
    server_processing: SimTime = 100 * MS
    device_processing: SimTime = 0
    notification_timeout: SimTime = 30 * SECOND
    bootstrap_timeout: SimTime = 5 * SECOND
    first_payment_at: SimTime = 1 * SECOND
    payment_gap: SimTime = 2 * SECOND
    otp_timeout: SimTime = 60 * SECOND
    otp_loss: float = 0.0
    server_loss: float = 0.0
    server_up: bool = True
    summary_nickname: bool = False


@dataclass
class PaymentTrace:
    """Everything observed about one payment; agents never read it."""

    index: int
    amount: int
    foreground_at: SimTime | None = None
    ready_at: SimTime | None = None
    fired: bool = False
    taps: int = 0
    qr_shown_at: SimTime | None = None
    qr_fake: bool = False
    tap_captured_at: SimTime | None = None
    scanned_at: SimTime | None = None
    decoded: Address | None = None
    frame_seen: bool = False
    confirm_at: SimTime | None = None
    submitted_at: SimTime | None = None
    txid: int | None = None
    to_attacker: bool = False
    notified_at: SimTime | None = None
    fake_notification: bool = False
    otp_timeout: bool = False
    outcome: Outcome | None = None
    finished_at: SimTime | None = None

    @property
    def setup_time(self) -> SimTime | None:
        if not self.fired or self.ready_at is None or self.foreground_at is None:
            return None
        return self.ready_at - self.foreground_at

    @property
    def notification_delay(self) -> SimTime | None:
        if self.notified_at is None or self.confirm_at is None:
            return None
        return self.notified_at - self.confirm_at

    @property
    def stolen_amount(self) -> int:
        return self.amount if self.outcome is not None and self.outcome.stolen else 0


# --------------------------------------------------------------------------
# actors


class WalletApp:
    """Payee wallet: receive screen, listener for its next address, notifications."""

    endpoint = "victim-device/wallet"

    def __init__(self, world: "World", style: NotificationStyle | None = None):
        self.world = world
        self.app = AppId("wallet", {Permission.INTERNET})
        self.style = style or NotificationStyle()
        self.wallet = world.ledger.open_wallet("victim", 0, world.substream("wallet:victim"))
        self.phase = Phase.CLOSED
        self.phase_log: list[tuple[SimTime, Phase]] = []
        self.touch_log: list[tuple[SimTime, str | None]] = []
        self.shown_address: Address | None = None
        world.network.register(self.endpoint, self._on_ledger_message)
        world.sim.register("wallet:show-notification", self._show_notification)

    def install(self) -> None:
        self._rotate_address()

    def _rotate_address(self) -> None:
        w = self.world
        self.wallet.next_receive = w.ledger.fresh_address(self.wallet)
        w.ledger.register_listener(self.wallet.next_receive, self.endpoint, w.cfg.link)

    def _set_phase(self, phase: Phase) -> None:
        self.phase = phase
        self.phase_log.append((self.world.sim.now, phase))

    def _views(self, *tags: str) -> tuple[View, ...]:
        d = self.world.cfg.defenses
        matrix = qrcodec.encode(self.wallet.next_receive.encode())
        views = []
        for tag in tags:
            views.append(View(
                rect=self.world.layout[tag],
                tag=tag,
                content=QrContent(matrix),
                filter_touches_when_obscured=d.touch_filtering,
                sensitive=d.sensitive_views,
            ))
        return tuple(views)

    def launch(self) -> None:
        w = self.world
        if any(win.owner == self.app for win in w.stack.windows()):
            w.stack.set_foreground(self.app)
        else:
            title = View(Rect(0, 0, SCREEN.w, 120), "title", Label("Wallet"))
            w.stack.add_window(self.app, Window(
                self.app, WindowKind.ACTIVITY, SCREEN, views=(title,) + self._views("qr-button"),
                created_at=w.sim.now,
            ))
        self._set_phase(Phase.MAIN)

    def on_touch(self, tag: str | None) -> None:
        w = self.world
        self.touch_log.append((w.sim.now, tag))
        if tag == "qr-button" and self.phase is Phase.MAIN:
            self.shown_address = self.wallet.next_receive
            w.stack.add_window(self.app, Window(
                self.app, WindowKind.ACTIVITY, SCREEN, views=self._views("qr-display"),
                created_at=w.sim.now,
            ))
            self._set_phase(Phase.QR_DISPLAYED)
            w.qr_shown(fake=False)

    def owns(self, window_id: int) -> bool:
        try:
            return self.world.stack.get(window_id).owner == self.app
        except KeyError:
            return False

    def close(self) -> None:
        self.world.stack.remove_owned(self.app)
        self._set_phase(Phase.CLOSED)

    def _on_ledger_message(self, msg: NetMessage) -> None:
        note: Notification = msg.payload
        if note.to_addr == self.wallet.next_receive:
            self._rotate_address()
        self.world.sim.after(self.world.cfg.device_processing, "wallet:show-notification", note)

    def _show_notification(self, ev: EventRecord) -> None:
        self.world.show_notification(self.style.render(ev.payload), ev.payload, fake=False)

    def mark_notified(self) -> None:
        self._set_phase(Phase.NOTIFIED)


@dataclass(frozen=True)
class AddressRequest:
    reply_to: str


@dataclass(frozen=True)
class AddressReply:
    address: Address


@dataclass(frozen=True)
class TxDetails:
    txid: int
    amount: int
    payer: Address
    to_addr: Address
    validated_at: SimTime


class AttackerServer:
    endpoint = "server"

    def __init__(self, world: "World", malware_endpoint: str):
        self.world = world
        self.malware_endpoint = malware_endpoint
        self.wallet = world.ledger.open_wallet("attacker", 0, world.substream("wallet:attacker"))
        self.up = world.cfg.server_up
        self.forwarded: list[TxDetails] = []
        world.network.register(self.endpoint, self.on_message)
        world.sim.register("server:forward", self._forward)

    def on_message(self, msg: NetMessage) -> None:
        self.attacker_server_step(msg, self.world.sim.now)

    def attacker_server_step(self, msg: NetMessage, now: SimTime) -> None:
        if not self.up:
            return
        w = self.world
        if isinstance(msg.payload, AddressRequest):
            addr = w.ledger.fresh_address(self.wallet)
            w.ledger.register_listener(addr, self.endpoint, w.cfg.server_link)
            w.network.send(self.endpoint, msg.payload.reply_to, AddressReply(addr), w.cfg.link)
        elif isinstance(msg.payload, Notification):
            n = msg.payload
            details = TxDetails(n.txid, n.amount, n.from_addr, n.to_addr, n.validated_at)
            w.sim.schedule(now + w.cfg.server_processing, "server:forward", details)

    def _forward(self, ev: EventRecord) -> None:
        w = self.world
        self.forwarded.append(ev.payload)
        w.network.send(self.endpoint, self.malware_endpoint, ev.payload, w.cfg.link,
                       loss=w.cfg.server_loss)


class Malview:
    """Background service on the payee's device."""

    endpoint = "victim-device/malview"

    def __init__(self, world: "World", cfg: MalviewConfig):
        self.world = world
        self.cfg = cfg
        self.app = AppId("malview", cfg.permissions())
        cfg.validate(self.app)
        self.rng = world.substream("malware")
        self.idle = False
        self.unreachable = False
        self.armed = False
        self.capture_id: int | None = None
        self.display_id: int | None = None
        self.display_matrix: qrcodec.QrMatrix | None = None
        self.ready_at: SimTime | None = None
        self.rejections = 0
        self._generation = 0
        self._reshows: dict[str, object] = {}
        self._victim_style: NotificationStyle | None = None
        sim = world.sim
        world.network.register(self.endpoint, self._on_message)
        sim.register("malview:poll", self._on_poll)
        sim.register("malview:bootstrap-timeout", self._on_bootstrap_timeout)
        sim.register("malview:capture", self._on_create_capture)
        sim.register("malview:prepare", self._on_prepare_display)
        sim.register("malview:reshow", self._on_reshow)
        sim.register("malview:fake-notification", self._on_fake_notification)

    @property
    def needs_address(self) -> bool:
        return not self.cfg.corrupt_qr

    def learn_style(self, style: NotificationStyle) -> None:
        # copied from the victim app's resources at install time
        self._victim_style = style

    # -- bootstrap ------------------------------------------------------

    def malview_bootstrap(self, now: SimTime) -> None:
        if not self.app.has(Permission.INTERNET):
            raise PermissionDenied("malview needs INTERNET")
        w = self.world
        if self.needs_address and self.cfg.prefetched_address is None:
            self._request_address()
            w.sim.schedule(now + w.cfg.bootstrap_timeout, "malview:bootstrap-timeout")
        offset = self.rng.randbelow(self.cfg.poll_period)
        w.sim.schedule(now + offset, "malview:poll")

    def _request_address(self) -> None:
        self.world.network.send(self.endpoint, self.cfg.server_endpoint,
                                AddressRequest(self.endpoint), self.world.cfg.link)

    def _on_bootstrap_timeout(self, ev: EventRecord) -> None:
        if self.cfg.prefetched_address is None:
            self.unreachable = True
            self.idle = True

    def _on_message(self, msg: NetMessage) -> None:
        if isinstance(msg.payload, AddressReply):
            self.cfg.prefetched_address = msg.payload.address
            self.idle = False
        elif isinstance(msg.payload, TxDetails):
            self.world.sim.after(self.world.cfg.device_processing, "malview:fake-notification",
                                 msg.payload)

    # -- polling and overlays --------------------------------------------

    def _on_poll(self, ev: EventRecord) -> None:
        self.malview_poll(ev.fire_at)

    def malview_poll(self, now: SimTime) -> None:
        w = self.world
        w.sim.schedule(now + self.cfg.poll_period, "malview:poll")
        if self.idle:
            return
        on_wallet = w.stack.foreground() == w.wallet_app.app
        if on_wallet and not self.armed:
            if self.needs_address and self.cfg.prefetched_address is None:
                return
            self.armed = True
            self._generation += 1
            w.sim.schedule(now + self.cfg.creation_delay, "malview:capture", self._generation)
        elif not on_wallet and self.armed:
            self._teardown()

    def _add_overlay(self, rect: Rect, alpha: float, touchable: bool, views) -> int | None:
        w = self.world
        spec = Window(self.app, self.cfg.overlay_kind, rect, alpha=alpha, touchable=touchable,
                      created_at=w.sim.now, views=views)
        try:
            wid = w.stack.add_window(self.app, spec)
        except (RejectedBySensitivePolicy, PermissionDenied):
            self.rejections += 1
            return None
        if self.cfg.strategy is Strategy.TOAST:
            w.schedule_toast_expiry(wid)
        return wid

    def _schedule_reshow(self, which: str) -> None:
        w = self.world
        wid = self.capture_id if which == "capture" else self.display_id
        ttl = w.stack.get(wid).ttl
        self._reshows[which] = w.sim.after(ttl - TOAST_RESHOW_MARGIN, "malview:reshow",
                                           (self._generation, which))

    def _on_create_capture(self, ev: EventRecord) -> None:
        if ev.payload != self._generation or not self.armed:
            return
        w = self.world
        rect = w.layout["qr-button"]
        local = Rect(0, 0, rect.w, rect.h)
        self.capture_id = self._add_overlay(
            rect, self.cfg.overlay_alpha, True, (View(local, "capture", SolidColor(False)),)
        )
        if self.capture_id is None:
            return
        if self.cfg.strategy is Strategy.TOAST:
            self._schedule_reshow("capture")
        w.sim.after(self.cfg.creation_delay, "malview:prepare", self._generation)

    def _on_prepare_display(self, ev: EventRecord) -> None:
        if ev.payload != self._generation or not self.armed:
            return
        if self.cfg.corrupt_qr:
            self.display_matrix = corrupted_qr()
        else:
            addr = self.cfg.prefetched_address
            if addr is None:
                return
            self.display_matrix = qrcodec.encode(addr.encode())
        self.ready_at = ev.fire_at

    def _on_reshow(self, ev: EventRecord) -> None:
        gen, which = ev.payload
        if gen != self._generation:
            return
        attr = which + "_id"
        wid = getattr(self, attr)
        if wid is None or wid not in self.world.stack:
            return
        try:
            new_id = self.world.stack.reshow(wid, ev.fire_at)
        except (RejectedBySensitivePolicy, PermissionDenied):
            self.rejections += 1
            setattr(self, attr, None)
            return
        setattr(self, attr, new_id)
        self.world.schedule_toast_expiry(new_id)
        self._schedule_reshow(which)

    def on_toasts_expired(self, ids: list[int]) -> None:
        if self.capture_id in ids:
            self.capture_id = None
        if self.display_id in ids:
            self.display_id = None

    def malview_on_tap_captured(self, now: SimTime) -> bool:
        """Swap the capture overlay for the attacker's QR. Returns True if shown."""
        w = self.world
        if self.capture_id is not None and self.capture_id in w.stack:
            w.stack.remove_window(self.capture_id)
        self.capture_id = None
        self._cancel_reshow("capture")
        if self.display_matrix is None:
            # NoPrefetchedAddress: nothing to show, the victim will tap again
            return False
        rect = w.layout["qr-display"]
        local = Rect(0, 0, rect.w, rect.h)
        self.display_id = self._add_overlay(
            rect, 1.0, False, (View(local, "fake-qr", QrContent(self.display_matrix)),)
        )
        if self.display_id is None:
            return False
        if self.cfg.strategy is Strategy.TOAST:
            self._schedule_reshow("display")
        if self.needs_address:
            self.cfg.prefetched_address = None
            self._request_address()
        return True

    def _cancel_reshow(self, which: str) -> None:
        self.world.sim.cancel(self._reshows.pop(which, None))

    def _teardown(self) -> None:
        stack = self.world.stack
        for wid in (self.capture_id, self.display_id):
            if wid is not None and wid in stack:
                stack.remove_window(wid)
        for which in list(self._reshows):
            self._cancel_reshow(which)
        self.capture_id = self.display_id = None
        self.display_matrix = None
        self.ready_at = None
        self.armed = False
        self._generation += 1

    # -- notifications ----------------------------------------------------

    def _on_fake_notification(self, ev: EventRecord) -> None:
        self.malview_fake_notification(ev.payload, ev.fire_at)

    def malview_fake_notification(self, details: TxDetails, now: SimTime) -> RenderedNotification:
        style = self._victim_style or NotificationStyle()
        note = Notification(details.txid, details.to_addr, details.payer, details.amount,
                            details.validated_at)
        rendered = style.render(note)
        self.world.show_notification(rendered, note, fake=True)
        return rendered


def corrupted_qr() -> qrcodec.QrMatrix:
    """A code that looks like a QR but fails decoding (one data module flipped)."""
    r, c = qrcodec.DATA_POSITIONS[200]
    return qrcodec.encode(b"X" * 34).flipped(r, c)


class Payer:
    """Payer device: scanner app plus its funded wallet."""

    def __init__(self, world: "World", balance: int):
        self.world = world
        self.wallet = world.ledger.open_wallet("payer", balance, world.substream("wallet:payer"))
        self.address = world.ledger.fresh_address(self.wallet)

    def scan(self) -> Address:
        """Camera read of the payee's QR area. Raises ``qrcodec.DecodeError``."""
        w = self.world
        m = camera_capture(w.stack, w.layout["qr-display"])
        return qrcodec.decode(m).decode("ascii")


# --------------------------------------------------------------------------
# world


class World:
    """One payee device, one payer, optional malware and server, a ledger and a network."""

    def __init__(self, cfg: WorldConfig, keep_trace: bool = False):
        self.cfg = cfg
        self.sim = Simulator(keep_trace=keep_trace)
        self.network = Network(self.sim, self.substream("net"), cfg.profiles)
        self.network.profile(cfg.link)
        self.network.profile(cfg.server_link)
        self.ledger = Ledger(self.sim, self.network, cfg.validation_delay)
        self.layout = cfg.layout
        self.think = self.substream("think")
        self.perception = self.substream("perception")
        self.amount_rng = self.substream("amounts")
        self.stack = WindowStack(overlay_policy=overlay_policy(cfg.defenses))
        self.launcher = AppId("launcher")
        self.stack.add_window(self.launcher, Window(self.launcher, WindowKind.ACTIVITY, SCREEN))
        self.wallet_app = WalletApp(self)
        self.payer = Payer(self, cfg.n_payments * cfg.amounts[1])
        self.otp = OtpService(self.sim, self.network, self.substream("otp"), cfg.otp_timeout,
                              loss=cfg.otp_loss) if cfg.defenses.otp else None
        self.malview: Malview | None = None
        self.server: AttackerServer | None = None
        if cfg.malware is not None:
            self.malview = Malview(self, replace(cfg.malware))
            self.server = AttackerServer(self, Malview.endpoint)
            self.malview.learn_style(self.wallet_app.style)
        self.payments: list[PaymentTrace] = []
        self.current: PaymentTrace | None = None
        self.notifications: list[tuple[SimTime, RenderedNotification, bool]] = []
        self.late_notifications = 0
        self._tx_payment: dict[int, PaymentTrace] = {}
        self._timeouts: dict[int, object] = {}
        self._probes: list[tuple[SimTime, Callable[["World"], None]]] = []
        self.done = False
        for target, fn in (
            ("payment:start", self._on_start),
            ("payee:tap", self._on_tap),
            ("payer:scan", self._on_scan),
            ("payer:confirm", self._on_confirm),
            ("payment:timeout", self._on_notification_timeout),
            ("payment:close", self._on_close),
            ("device:expire-toasts", self._on_expire_toasts),
            ("probe", self._on_probe),
        ):
            self.sim.register(target, fn)

    def substream(self, name: str) -> SplitMix64:
        return SplitMix64.substream(self.cfg.seed, name)

    def add_probe(self, period: SimTime, fn: Callable[["World"], None]) -> None:
        """Call ``fn(world)`` every ``period`` µs while payments run."""
        self._probes.append((period, fn))

    # -- driver ---------------------------------------------------------

    def run(self) -> list[PaymentTrace]:
        cfg = self.cfg
        self.wallet_app.install()
        if self.malview is not None:
            self.malview.malview_bootstrap(self.sim.now)
        for i, (period, _) in enumerate(self._probes):
            self.sim.schedule(period, "probe", i)
        self.sim.schedule(cfg.first_payment_at, "payment:start", 0)
        limit = cfg.first_payment_at + cfg.n_payments * 10 * cfg.notification_timeout
        self.sim.run(limit=limit)
        if not self.done:
            raise RuntimeError("simulation did not finish all payments")
        return self.payments

    def _on_probe(self, ev: EventRecord) -> None:
        period, fn = self._probes[ev.payload]
        fn(self)
        if not self.done:
            self.sim.after(period, "probe", ev.payload)

    def _on_start(self, ev: EventRecord) -> None:
        lo, hi = self.cfg.amounts
        p = PaymentTrace(index=ev.payload, amount=self.amount_rng.randint(lo, hi))
        self.current = p
        self.payments.append(p)
        self.wallet_app.launch()
        p.foreground_at = ev.fire_at
        self.sim.after(self.think.randint(*TAP_DELAY), "payee:tap", p.index)

    def _live(self, ev: EventRecord) -> PaymentTrace | None:
        p = self.current
        if p is None or p.index != ev.payload or p.outcome is not None:
            return None
        return p

    def _on_tap(self, ev: EventRecord) -> None:
        p = self._live(ev)
        if p is None:
            return
        p.taps += 1
        result = self.stack.dispatch_touch(TouchEvent(self.layout["qr-button"].center(), ev.fire_at))
        shown = False
        if isinstance(result, DeliveredTo):
            mv = self.malview
            if mv is not None and result.window_id == mv.capture_id:
                p.tap_captured_at = ev.fire_at
                shown = mv.malview_on_tap_captured(ev.fire_at)
                if shown:
                    p.fired = True
                    p.ready_at = mv.ready_at
                    self.qr_shown(fake=True)
            elif self.wallet_app.owns(result.window_id):
                self.wallet_app.on_touch(result.view_tag)
                shown = p.qr_shown_at is not None
        if not shown and p.qr_shown_at is None:
            if p.taps >= MAX_TAPS:
                self.finish(p, Outcome.BLOCKED)
            else:
                self.sim.after(self.think.randint(*RETAP_DELAY), "payee:tap", p.index)

    def qr_shown(self, fake: bool) -> None:
        p = self.current
        p.qr_shown_at = self.sim.now
        p.qr_fake = fake
        self.sim.after(self.think.randint(*SCAN_DELAY), "payer:scan", p.index)

    def _on_scan(self, ev: EventRecord) -> None:
        p = self._live(ev)
        if p is None:
            return
        p.scanned_at = ev.fire_at
        try:
            addr = self.payer.scan()
        except qrcodec.DecodeError:
            self.finish(p, Outcome.DOS)
            return
        p.decoded = addr
        region = self.layout["qr-display"]
        if self.cfg.defenses.framed_overlays and self.stack.frame_visible(region):
            p.frame_seen = True
            if perception_notice(Cue.FRAME, self.cfg.oracle, self.perception):
                self.finish(p, Outcome.BLOCKED)
                return
        if self.cfg.summary_nickname and not self._is_payee(addr):
            # summary shows a look-alike of the payee's nickname
            if perception_notice(Cue.NICKNAME, self.cfg.oracle, self.perception):
                self.finish(p, Outcome.BLOCKED)
                return
        self.sim.after(self.think.randint(*CONFIRM_DELAY), "payer:confirm", p.index)

    def _is_payee(self, addr: Address) -> bool:
        try:
            return self.ledger.owner_of(addr) is self.wallet_app.wallet
        except UnknownAddress:
            return False

    def _on_confirm(self, ev: EventRecord) -> None:
        p = self._live(ev)
        if p is None:
            return
        p.confirm_at = ev.fire_at
        if self.otp is None:
            self._submit(p)
            return

        def done(result: OtpResult, now: SimTime, p=p) -> None:
            if p.outcome is not None:
                return
            if result is OtpResult.CONFIRMED:
                self._submit(p)
            else:
                p.otp_timeout = True
                self.finish(p, Outcome.ABANDONED)

        self.otp.otp_flow((p.decoded, p.amount), done)

    def _submit(self, p: PaymentTrace) -> None:
        now = self.sim.now
        try:
            p.txid = self.ledger.submit_tx(self.payer.address, p.decoded, p.amount, now)
        except UnknownAddress:
            self.finish(p, Outcome.DOS)
            return
        p.submitted_at = now
        p.to_attacker = self.server is not None and (
            self.ledger.owner_of(p.decoded) is self.server.wallet
        )
        self._tx_payment[p.txid] = p
        self._timeouts[p.index] = self.sim.after(self.cfg.notification_timeout, "payment:timeout",
                                                 p.index)

    def show_notification(self, rendered: RenderedNotification, note: Notification, fake: bool) -> None:
        now = self.sim.now
        self.notifications.append((now, rendered, fake))
        self.wallet_app.mark_notified()
        p = self._tx_payment.get(note.txid)
        if p is None or p.outcome is not None:
            self.late_notifications += 1
            return
        p.notified_at = now
        p.fake_notification = fake
        self.sim.cancel(self._timeouts.pop(p.index, None))
        self.finish(p, Outcome.STOLEN_UNDETECTED if p.to_attacker else Outcome.LEGIT)

    def _on_notification_timeout(self, ev: EventRecord) -> None:
        p = self._live(ev)
        if p is None:
            return
        # funds left the payer but the payee saw nothing
        self.finish(p, Outcome.STOLEN_DETECTED if p.to_attacker else Outcome.LEGIT)

    def finish(self, p: PaymentTrace, outcome: Outcome) -> None:
        p.outcome = outcome
        p.finished_at = self.sim.now
        self.sim.after(SECOND, "payment:close", p.index)

    def _on_close(self, ev: EventRecord) -> None:
        self.wallet_app.close()
        self.current = None
        nxt = ev.payload + 1
        if nxt < self.cfg.n_payments:
            self.sim.after(self.cfg.payment_gap, "payment:start", nxt)
        else:
            self.done = True
            self.sim.stop()

    def schedule_toast_expiry(self, wid: int) -> None:
        win = self.stack.get(wid)
        self.sim.schedule(win.created_at + win.ttl, "device:expire-toasts")

    def _on_expire_toasts(self, ev: EventRecord) -> None:
        gone = self.stack.expire_toasts(ev.fire_at)
        if gone and self.malview is not None:
            self.malview.on_toasts_expired(gone)
