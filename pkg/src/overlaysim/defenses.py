"""Countermeasure policies: touch filtering, framed overlays, OTP, sensitive views.

Touch filtering and sensitive views are flags the wallet app puts on its own
views; the window stack enforces them. Framed overlays and sensitive-view
exclusion are applied to every overlay through :func:`overlay_policy`.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace

from .simcore import SplitMix64
from .windowstack import AppId, Rect, Window, WindowStack

OTP_PROFILE = "cellular4g"


@dataclass(frozen=True)
class DefenseConfig:
    touch_filtering: bool = False
    framed_overlays: bool = False
    otp: bool = False
    sensitive_views: bool = False


@dataclass(frozen=True)
class PerceptionOracle:
    """Chance that a user misses a visual warning.

    ``p_miss_frame`` defaults to the 36% of study participants who were not
    alerted by the framed overlay.
    """

    p_miss_frame: float = 0.36
    p_miss_nickname: float = 0.8

    def __post_init__(self):
        for name in ("p_miss_frame", "p_miss_nickname"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} outside [0, 1]")


class Cue(enum.Enum):
    FRAME = "Frame"
    NICKNAME = "Nickname"


@dataclass(frozen=True)
class Admit:
    window: Window


@dataclass(frozen=True)
class _Reject:
    def __repr__(self):
        return "Reject"


Reject = _Reject()


def apply_overlay_policy(
    spec: Window,
    cfg: DefenseConfig,
    sensitive_rects: list[tuple[AppId, Rect]] = (),
    foreground: AppId | None = None,
) -> Admit | _Reject:
    if cfg.sensitive_views:
        for owner, rect in sensitive_rects:
            if owner != spec.owner and rect.intersects(spec.rect):
                return Reject
    if cfg.framed_overlays and spec.owner != foreground:
        return Admit(replace(spec, frame_marked=True))
    return Admit(spec)


def overlay_policy(cfg: DefenseConfig):
    """Adapter plugging :func:`apply_overlay_policy` into a :class:`WindowStack`."""

    def policy(spec: Window, stack: WindowStack) -> Window | None:
        verdict = apply_overlay_policy(spec, cfg, stack.sensitive_rects(), stack.foreground())
        return verdict.window if isinstance(verdict, Admit) else None

    return policy


def perception_notice(kind: Cue, oracle: PerceptionOracle, rng: SplitMix64) -> bool:
    """One Bernoulli draw; True means the user noticed and aborts."""
    p_miss = oracle.p_miss_frame if kind is Cue.FRAME else oracle.p_miss_nickname
    return not rng.bernoulli(p_miss)


@dataclass(frozen=True)
class OtpChallenge:
    code: str

    def __post_init__(self):
        if len(self.code) != 6 or not self.code.isdigit():
            raise ValueError("OTP code must be 6 decimal digits")


def new_otp(rng: SplitMix64) -> OtpChallenge:
    # nothing about the transaction goes into the code
    return OtpChallenge(f"{rng.randbelow(1_000_000):06d}")


class OtpResult(enum.Enum):
    CONFIRMED = "Confirmed"
    ABANDONED = "Abandoned"


class OtpService:
    """Delivers one-time codes to the payer over a cellular hop.

    The payer types whatever code arrives, so the flow confirms any
    transaction it is attached to. A lost message ends in ``ABANDONED`` once
    ``timeout`` elapses.
    """

    endpoint = "payer-sms"

    def __init__(self, sim, network, rng: SplitMix64, timeout: int, loss: float = 0.0,
                 profile: str = OTP_PROFILE):
        self.sim = sim
        self.network = network
        self.rng = rng
        self.timeout = timeout
        self.loss = loss
        self.profile = profile
        self._pending: dict[int, object] = {}
        self._next = 1
        network.register(self.endpoint, self._on_sms)
        sim.register("otp:timeout", self._on_timeout)

    def otp_flow(self, details, done) -> OtpChallenge:
        """Start a challenge; ``done(result, now)`` is called exactly once."""
        challenge = new_otp(self.rng)
        flow_id = self._next
        self._next += 1
        self._pending[flow_id] = done
        self.network.send("otp-service", self.endpoint, (flow_id, challenge.code, details),
                          self.profile, loss=self.loss)
        self.sim.after(self.timeout, "otp:timeout", flow_id)
        return challenge

    def _on_sms(self, msg) -> None:
        flow_id = msg.payload[0]
        done = self._pending.pop(flow_id, None)
        if done is not None:
            done(OtpResult.CONFIRMED, self.sim.now)

    def _on_timeout(self, ev) -> None:
        done = self._pending.pop(ev.payload, None)
        if done is not None:
            done(OtpResult.ABANDONED, self.sim.now)
