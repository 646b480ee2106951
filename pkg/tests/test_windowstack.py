from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.stateful import RuleBasedStateMachine, invariant, precondition, rule

from overlaysim.qrcodec import decode, encode
from overlaysim.windowstack import (
    SCREEN,
    TOAST_TTL,
    AppId,
    DeliveredTo,
    Discarded,
    InvalidWindow,
    NoTarget,
    Permission,
    PermissionDenied,
    QrContent,
    Rect,
    SolidColor,
    TouchEvent,
    UnknownWindow,
    View,
    Window,
    WindowKind,
    WindowStack,
    camera_capture,
    module_centers,
)

WALLET = AppId("wallet", {Permission.INTERNET})
MAL = AppId("malview", {Permission.ALERT_WINDOW, Permission.INTERNET})
BARE = AppId("bare")
BUTTON = Rect(880, 1640, 160, 160)
DISPLAY = Rect(165, 460, 750, 750)
VICTIM_QR = encode(b"1BvBMSEYstWetqTFn5Au4m4GFg7xJaNVN2")
EVIL_QR = encode(b"3J98t1WpEZ73CNmQviecrnyiWrnqRhWNLy")


def wallet_stack(filter_touches=False):
    s = WindowStack()
    views = (
        View(BUTTON, "qr-button", QrContent(VICTIM_QR), filter_touches_when_obscured=filter_touches),
        View(DISPLAY, "qr-display", QrContent(VICTIM_QR)),
    )
    wid = s.add_window(WALLET, Window(WALLET, WindowKind.ACTIVITY, SCREEN, views=views))
    return s, wid


def overlay(kind=WindowKind.ALERT_OVERLAY, rect=BUTTON, alpha=0.0, touchable=True, content=None,
            created_at=0, owner=MAL):
    views = ()
    if content is not None:
        views = (View(Rect(0, 0, rect.w, rect.h), "fake", content),)
    return Window(owner, kind, rect, alpha=alpha, touchable=touchable, views=views,
                  created_at=created_at)


def test_alert_overlay_goes_on_top():
    s, wid = wallet_stack()
    oid = s.add_window(MAL, overlay())
    assert s.z_of(oid) > s.z_of(wid)
    assert s.foreground() == WALLET


def test_alert_overlay_needs_permission():
    s, _ = wallet_stack()
    with pytest.raises(PermissionDenied):
        s.add_window(BARE, overlay(owner=BARE))


def test_toast_needs_no_permission():
    s, _ = wallet_stack()
    tid = s.add_window(BARE, overlay(WindowKind.TOAST_OVERLAY, owner=BARE))
    assert s.get(tid).ttl == TOAST_TTL


def test_invalid_windows():
    s = WindowStack()
    with pytest.raises(InvalidWindow):
        s.add_window(MAL, overlay(rect=Rect(1000, 0, 200, 10)))
    with pytest.raises(InvalidWindow):
        s.add_window(MAL, overlay(alpha=1.5))
    with pytest.raises(InvalidWindow):
        s.add_window(MAL, Window(MAL, WindowKind.ALERT_OVERLAY, BUTTON, ttl=5))


def test_add_remove_inverse():
    s, _ = wallet_stack()
    before = s.snapshot()
    oid = s.add_window(MAL, overlay())
    s.remove_window(oid)
    assert s.snapshot() == before
    with pytest.raises(UnknownWindow):
        s.remove_window(oid)


def test_remove_middle_overlay_keeps_order():
    s, _ = wallet_stack()
    a, b, c = (s.add_window(MAL, overlay()) for _ in range(3))
    s.remove_window(b)
    assert s.z_of(a) < s.z_of(c)


def test_toast_expiry_boundaries():
    s = WindowStack()
    tid = s.add_window(BARE, overlay(WindowKind.TOAST_OVERLAY, owner=BARE, created_at=0))
    assert s.expire_toasts(3_499_999) == []
    assert s.expire_toasts(3_500_000) == [tid]
    assert tid not in s


def test_toast_reshow_extends_life():
    s = WindowStack()
    tid = s.add_window(BARE, overlay(WindowKind.TOAST_OVERLAY, owner=BARE, created_at=0))
    new = s.reshow(tid, 3_000_000)
    assert s.expire_toasts(4_000_000) == []
    assert new in s and tid not in s


def test_foreground():
    s, _ = wallet_stack()
    assert s.foreground() == WALLET
    s.add_window(MAL, overlay())
    assert s.foreground() == WALLET
    other = AppId("other")
    s.add_window(other, Window(other, WindowKind.ACTIVITY, SCREEN))
    assert s.foreground() == other
    s.set_foreground(WALLET)
    assert s.foreground() == WALLET


# -- dispatch ---------------------------------------------------------------


def test_tap_baseline_reaches_button():
    s, wid = wallet_stack()
    assert s.dispatch_touch(TouchEvent(BUTTON.center())) == DeliveredTo(wid, "qr-button")


def test_transparent_overlay_steals_tap():
    s, _ = wallet_stack()
    oid = s.add_window(MAL, overlay(alpha=0.0))
    res = s.dispatch_touch(TouchEvent(BUTTON.center()))
    assert isinstance(res, DeliveredTo) and res.window_id == oid


def test_passive_overlay_blocked_by_touch_filter():
    s, wid = wallet_stack(filter_touches=True)
    s.add_window(MAL, overlay(alpha=1.0, touchable=False))
    assert s.dispatch_touch(TouchEvent(BUTTON.center())) is Discarded
    s2, wid2 = wallet_stack(filter_touches=False)
    s2.add_window(MAL, overlay(alpha=1.0, touchable=False))
    assert s2.dispatch_touch(TouchEvent(BUTTON.center())) == DeliveredTo(wid2, "qr-button")


def test_no_target():
    s = WindowStack()
    assert s.dispatch_touch(TouchEvent((5, 5))) is NoTarget


@given(filt=st.booleans(), alpha=st.floats(0, 1), below=st.integers(0, 3))
def test_active_overlay_supremacy(filt, alpha, below):
    s, _ = wallet_stack(filter_touches=filt)
    for _ in range(below):
        s.add_window(MAL, overlay(alpha=1.0, touchable=False))
    oid = s.add_window(MAL, overlay(alpha=alpha, touchable=True))
    assert s.dispatch_touch(TouchEvent(BUTTON.center())) == DeliveredTo(oid, None)


# -- composite --------------------------------------------------------------


def modules_in(s, rect):
    return camera_capture(s, rect)


def test_attacker_overlay_replaces_qr():
    s, _ = wallet_stack()
    assert modules_in(s, DISPLAY) == VICTIM_QR
    s.add_window(MAL, overlay(rect=DISPLAY, alpha=1.0, touchable=False, content=QrContent(EVIL_QR)))
    comp = s.composite(DISPLAY)
    # module by module through the full pixel composite as well
    xs, ys = module_centers(DISPLAY)
    sampled = comp.dark[ys - DISPLAY.y, xs - DISPLAY.x]
    assert np.array_equal(sampled, EVIL_QR.modules)
    assert modules_in(s, DISPLAY) == EVIL_QR
    assert decode(modules_in(s, DISPLAY)) == b"3J98t1WpEZ73CNmQviecrnyiWrnqRhWNLy"


def test_invisible_overlay_shows_underlying():
    s, _ = wallet_stack()
    s.add_window(MAL, overlay(rect=DISPLAY, alpha=0.0, touchable=False, content=QrContent(EVIL_QR)))
    assert modules_in(s, DISPLAY) == VICTIM_QR


def test_frame_marked_border():
    s, _ = wallet_stack()
    w = overlay(rect=DISPLAY, alpha=0.0, touchable=False)
    s.add_window(MAL, replace(w, frame_marked=True))
    comp = s.composite(DISPLAY)
    hz = comp.hazard
    assert hz[0, :].all() and hz[-1, :].all() and hz[:, 0].all() and hz[:, -1].all()
    assert not hz[DISPLAY.h // 2, DISPLAY.w // 2]
    assert s.frame_visible(DISPLAY)
    # the code itself still decodes through the frame
    assert modules_in(s, DISPLAY) == VICTIM_QR


def test_composite_totality_and_point_consistency():
    s, _ = wallet_stack()
    s.add_window(MAL, overlay(rect=Rect(100, 400, 600, 600), alpha=1.0, content=SolidColor(True)))
    region = Rect(0, 300, 1080, 900)
    comp = s.composite(region)
    assert comp.source.shape == (region.h, region.w)
    assert comp.source.min() >= 0 and comp.source.max() < len(comp.sources)
    rng = np.random.default_rng(0)
    xs = rng.integers(region.x, region.right, 300)
    ys = rng.integers(region.y, region.bottom, 300)
    src, dark, sources = s.composite_points(xs, ys)
    for x, y, i, d in zip(xs, ys, src, dark):
        assert sources[i] == comp.source_at(x, y)
        assert d == comp.dark[y - region.y, x - region.x]


# -- reachable-state invariants --------------------------------------------


class StackMachine(RuleBasedStateMachine):
    apps = [WALLET, MAL, BARE, AppId("other")]

    def __init__(self):
        super().__init__()
        self.stack = WindowStack()
        self.now = 0
        self.reshown_at: dict[int, int] = {}

    @rule(app=st.sampled_from(apps))
    def add_activity(self, app):
        self.stack.add_window(app, Window(app, WindowKind.ACTIVITY, SCREEN, created_at=self.now))

    @rule(app=st.sampled_from(apps), kind=st.sampled_from([WindowKind.ALERT_OVERLAY, WindowKind.TOAST_OVERLAY]),
          x=st.integers(0, 900), y=st.integers(0, 1700))
    def add_overlay(self, app, kind, x, y):
        try:
            self.stack.add_window(app, Window(app, kind, Rect(x, y, 100, 100), created_at=self.now))
        except PermissionDenied:
            assert not app.has(Permission.ALERT_WINDOW)

    @precondition(lambda self: self.stack.windows())
    @rule(data=st.data())
    def remove(self, data):
        w = data.draw(st.sampled_from(self.stack.windows()))
        self.stack.remove_window(w.id)

    @precondition(lambda self: any(w.kind is WindowKind.TOAST_OVERLAY for w in self.stack.windows()))
    @rule(data=st.data())
    def reshow(self, data):
        toasts = [w for w in self.stack.windows() if w.kind is WindowKind.TOAST_OVERLAY]
        w = data.draw(st.sampled_from(toasts))
        self.stack.reshow(w.id, self.now)

    @rule(dt=st.integers(0, 2_000_000))
    def tick(self, dt):
        self.now += dt
        self.stack.expire_toasts(self.now)

    @precondition(lambda self: self.stack.windows())
    @rule(app=st.sampled_from(apps))
    def foreground(self, app):
        try:
            self.stack.set_foreground(app)
        except UnknownWindow:
            pass

    @invariant()
    def overlays_above_activities(self):
        ws = self.stack.windows()
        act = [z for z, w in enumerate(ws) if w.kind is WindowKind.ACTIVITY]
        ovl = [z for z, w in enumerate(ws) if w.kind.is_overlay]
        if act and ovl:
            assert max(act) < min(ovl)

    @invariant()
    def alert_overlays_permitted(self):
        for w in self.stack.windows():
            if w.kind is WindowKind.ALERT_OVERLAY:
                assert w.owner.has(Permission.ALERT_WINDOW)

    @invariant()
    def toasts_alive(self):
        for w in self.stack.windows():
            if w.kind is WindowKind.TOAST_OVERLAY:
                assert w.created_at + w.ttl > self.now

    @invariant()
    def dispatch_deterministic(self):
        ev = TouchEvent((540, 960))
        assert self.stack.dispatch_touch(ev) == self.stack.dispatch_touch(ev)


StackMachine.TestCase.settings = settings(max_examples=60, stateful_step_count=30, deadline=None)
TestStackMachine = StackMachine.TestCase
