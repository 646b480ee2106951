import math

import pytest

from overlaysim.defenses import (
    Admit,
    Cue,
    DefenseConfig,
    OtpChallenge,
    OtpResult,
    OtpService,
    PerceptionOracle,
    Reject,
    apply_overlay_policy,
    new_otp,
    overlay_policy,
    perception_notice,
)
from overlaysim.ledgernet import Network
from overlaysim.simcore import MS, Simulator, SplitMix64
from overlaysim.windowstack import (
    SCREEN,
    AppId,
    Permission,
    QrContent,
    Rect,
    RejectedBySensitivePolicy,
    View,
    Window,
    WindowKind,
    WindowStack,
)
from overlaysim.qrcodec import encode

WALLET = AppId("wallet")
MAL = AppId("malview", {Permission.ALERT_WINDOW})
DISPLAY = Rect(165, 460, 750, 750)
OVER_DISPLAY = Window(MAL, WindowKind.ALERT_OVERLAY, DISPLAY)


def test_sensitive_rejects_overlay():
    cfg = DefenseConfig(sensitive_views=True)
    assert apply_overlay_policy(OVER_DISPLAY, cfg, [(WALLET, DISPLAY)], WALLET) is Reject


def test_sensitive_ignores_own_views_and_disjoint_rects():
    cfg = DefenseConfig(sensitive_views=True)
    own = Window(WALLET, WindowKind.ALERT_OVERLAY, DISPLAY)
    assert isinstance(apply_overlay_policy(own, cfg, [(WALLET, DISPLAY)], WALLET), Admit)
    far = Window(MAL, WindowKind.ALERT_OVERLAY, Rect(0, 1800, 100, 100))
    assert isinstance(apply_overlay_policy(far, cfg, [(WALLET, DISPLAY)], WALLET), Admit)


def test_framed_marks_foreign_overlay():
    verdict = apply_overlay_policy(OVER_DISPLAY, DefenseConfig(framed_overlays=True), [], WALLET)
    assert isinstance(verdict, Admit) and verdict.window.frame_marked


def test_framed_leaves_foreground_app_alone():
    own = Window(WALLET, WindowKind.ALERT_OVERLAY, DISPLAY)
    verdict = apply_overlay_policy(own, DefenseConfig(framed_overlays=True), [], WALLET)
    assert not verdict.window.frame_marked


def test_all_off_is_identity():
    assert apply_overlay_policy(OVER_DISPLAY, DefenseConfig(), [(WALLET, DISPLAY)], WALLET) == Admit(OVER_DISPLAY)


def test_policy_wired_into_stack():
    s = WindowStack(overlay_policy=overlay_policy(DefenseConfig(sensitive_views=True)))
    view = View(DISPLAY, "qr-display", QrContent(encode(b"a")), sensitive=True)
    s.add_window(WALLET, Window(WALLET, WindowKind.ACTIVITY, SCREEN, views=(view,)))
    with pytest.raises(RejectedBySensitivePolicy):
        s.add_window(MAL, OVER_DISPLAY)
    assert len(s.windows()) == 1


def test_perception_boundaries():
    rng = SplitMix64(1)
    assert all(perception_notice(Cue.FRAME, PerceptionOracle(p_miss_frame=0.0), rng) for _ in range(200))
    assert not any(perception_notice(Cue.FRAME, PerceptionOracle(p_miss_frame=1.0), rng) for _ in range(200))


def test_perception_miss_rate():
    rng = SplitMix64(2017)
    oracle = PerceptionOracle()
    n = 10_000
    misses = sum(not perception_notice(Cue.FRAME, oracle, rng) for _ in range(n))
    sigma = math.sqrt(0.36 * 0.64 / n)
    assert abs(misses / n - 0.36) <= 0.02
    assert abs(misses / n - 0.36) <= 3 * sigma


def test_nickname_uses_its_own_probability():
    rng = SplitMix64(3)
    oracle = PerceptionOracle(p_miss_frame=1.0, p_miss_nickname=0.0)
    assert perception_notice(Cue.NICKNAME, oracle, rng)
    assert not perception_notice(Cue.FRAME, oracle, rng)


def test_oracle_range_checked():
    with pytest.raises(ValueError):
        PerceptionOracle(p_miss_frame=1.2)


def test_otp_code_shape():
    rng = SplitMix64(4)
    codes = [new_otp(rng).code for _ in range(50)]
    assert all(len(c) == 6 and c.isdigit() for c in codes)
    with pytest.raises(ValueError):
        OtpChallenge("12ab56")


def _otp(loss):
    sim = Simulator()
    net = Network(sim, SplitMix64(5))
    svc = OtpService(sim, net, SplitMix64(6), timeout=60_000 * MS, loss=loss)
    results = []
    svc.otp_flow(("addr", 10), lambda r, now: results.append((r, now)))
    sim.run_until(120_000 * MS)
    return results


def test_otp_confirms_after_one_hop():
    [(result, at)] = _otp(0.0)
    assert result is OtpResult.CONFIRMED
    assert 0 < at < 1_000 * MS


def test_otp_drop_abandons():
    [(result, at)] = _otp(1.0)
    assert result is OtpResult.ABANDONED
    assert at == 60_000 * MS
