"""Screen model: permission-gated windows, z-order, toasts, touch dispatch, compositing.

The stack is two layers. Activities sit below, with the foreground app's
windows on top of that layer. Overlays (alert windows and toasts) are always
above every activity, with newer overlays above older ones.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Callable, Union

import numpy as np

from .qrcodec import QUIET_ZONE, SIZE as QR_SIZE, QrMatrix
from .simcore import MS, SimTime

SCREEN_W = 1080
SCREEN_H = 1920
TOAST_TTL = 3_500 * MS
ALPHA_VISIBLE = 0.01
FRAME_WIDTH = 8
HAZARD_STRIPE = 16


class Permission(enum.Enum):
    ALERT_WINDOW = "ALERT_WINDOW"
    INTERNET = "INTERNET"


class WindowKind(enum.Enum):
    ACTIVITY = "Activity"
    ALERT_OVERLAY = "AlertOverlay"
    TOAST_OVERLAY = "ToastOverlay"

    @property
    def is_overlay(self) -> bool:
        return self is not WindowKind.ACTIVITY


class PermissionDenied(PermissionError):
    pass


class RejectedBySensitivePolicy(PermissionError):
    pass


class UnknownWindow(KeyError):
    pass


class InvalidWindow(ValueError):
    pass


@dataclass(frozen=True)
class AppId:
    name: str
    permissions: frozenset = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "permissions", frozenset(self.permissions))

    def has(self, perm: Permission) -> bool:
        return perm in self.permissions


@dataclass(frozen=True)
class Rect:
    x: int
    y: int
    w: int
    h: int

    @property
    def right(self) -> int:
        return self.x + self.w

    @property
    def bottom(self) -> int:
        return self.y + self.h

    def contains(self, px: int, py: int) -> bool:
        return self.x <= px < self.right and self.y <= py < self.bottom

    def contains_rect(self, other: "Rect") -> bool:
        return (
            self.x <= other.x
            and self.y <= other.y
            and other.right <= self.right
            and other.bottom <= self.bottom
        )

    def intersects(self, other: "Rect") -> bool:
        return (
            self.x < other.right
            and other.x < self.right
            and self.y < other.bottom
            and other.y < self.bottom
        )

    def offset(self, dx: int, dy: int) -> "Rect":
        return Rect(self.x + dx, self.y + dy, self.w, self.h)

    def center(self) -> tuple[int, int]:
        return self.x + self.w // 2, self.y + self.h // 2


SCREEN = Rect(0, 0, SCREEN_W, SCREEN_H)


@dataclass(frozen=True)
class SolidColor:
    dark: bool = False


@dataclass(frozen=True)
class QrContent:
    matrix: QrMatrix


@dataclass(frozen=True)
class Label:
    text: str


Content = Union[SolidColor, QrContent, Label]


@dataclass(frozen=True)
class View:
    rect: Rect  # relative to the owning window
    tag: str
    content: Content = SolidColor()
    filter_touches_when_obscured: bool = False
    sensitive: bool = False


@dataclass(frozen=True)
class Window:
    owner: AppId
    kind: WindowKind
    rect: Rect
    alpha: float = 1.0
    touchable: bool = True
    created_at: SimTime = 0
    ttl: SimTime | None = None
    views: tuple[View, ...] = ()
    frame_marked: bool = False
    id: int = 0

    def view_screen_rect(self, view: View) -> Rect:
        return view.rect.offset(self.rect.x, self.rect.y)

    def view_at(self, px: int, py: int) -> View | None:
        for view in reversed(self.views):
            if self.view_screen_rect(view).contains(px, py):
                return view
        return None


@dataclass(frozen=True)
class TouchEvent:
    point: tuple[int, int]
    at: SimTime = 0


@dataclass(frozen=True)
class DeliveredTo:
    window_id: int
    view_tag: str | None


@dataclass(frozen=True)
class _Discarded:
    def __repr__(self):
        return "Discarded"


@dataclass(frozen=True)
class _NoTarget:
    def __repr__(self):
        return "NoTarget"


Discarded = _Discarded()
NoTarget = _NoTarget()
DispatchResult = Union[DeliveredTo, _Discarded, _NoTarget]

# Called for every overlay before insertion; returns the (possibly modified)
# window or None to reject it.
OverlayPolicy = Callable[[Window, "WindowStack"], Union[Window, None]]


@dataclass(frozen=True)
class PixelSource:
    window_id: int | None  # None = wallpaper
    view_tag: str | None = None
    hazard: bool = False


WALLPAPER = PixelSource(None)


@dataclass
class Composite:
    """Result of compositing a screen region.

    ``source[r, c]`` indexes ``sources``; ``dark[r, c]`` is what a camera
    reads at that pixel.
    """

    region: Rect
    source: np.ndarray
    sources: list[PixelSource]
    dark: np.ndarray

    @property
    def hazard(self) -> np.ndarray:
        flags = np.array([s.hazard for s in self.sources], dtype=bool)
        return flags[self.source]

    def source_at(self, px: int, py: int) -> PixelSource:
        return self.sources[self.source[py - self.region.y, px - self.region.x]]


@dataclass
class WindowStack:
    width: int = SCREEN_W
    height: int = SCREEN_H
    overlay_policy: OverlayPolicy | None = None
    _activities: list[Window] = field(default_factory=list)
    _overlays: list[Window] = field(default_factory=list)
    _next_id: int = 1

    @property
    def screen(self) -> Rect:
        return Rect(0, 0, self.width, self.height)

    # -- queries --------------------------------------------------------

    def windows(self) -> list[Window]:
        """All windows bottom to top."""
        return self._activities + self._overlays

    def snapshot(self) -> tuple[Window, ...]:
        return tuple(self.windows())

    def get(self, wid: int) -> Window:
        for w in self.windows():
            if w.id == wid:
                return w
        raise UnknownWindow(wid)

    def __contains__(self, wid: int) -> bool:
        return any(w.id == wid for w in self.windows())

    def z_of(self, wid: int) -> int:
        for z, w in enumerate(self.windows()):
            if w.id == wid:
                return z
        raise UnknownWindow(wid)

    def foreground(self) -> AppId | None:
        return self._activities[-1].owner if self._activities else None

    def sensitive_rects(self) -> list[tuple[AppId, Rect]]:
        return [
            (w.owner, w.view_screen_rect(v))
            for w in self._activities
            for v in w.views
            if v.sensitive
        ]

    # -- mutation ---------------------------------------------------------

    def _check(self, spec: Window) -> Window:
        if not 0.0 <= spec.alpha <= 1.0:
            raise InvalidWindow(f"alpha {spec.alpha} outside [0, 1]")
        if not self.screen.contains_rect(spec.rect) or spec.rect.w <= 0 or spec.rect.h <= 0:
            raise InvalidWindow(f"{spec.rect} not within screen")
        local = Rect(0, 0, spec.rect.w, spec.rect.h)
        for v in spec.views:
            if not local.contains_rect(v.rect):
                raise InvalidWindow(f"view {v.tag!r} exceeds window")
        if spec.kind is WindowKind.TOAST_OVERLAY:
            if spec.ttl is None:
                spec = replace(spec, ttl=TOAST_TTL)
        elif spec.ttl is not None:
            raise InvalidWindow("ttl only applies to toasts")
        return spec

    def add_window(self, owner: AppId, spec: Window) -> int:
        """Insert a window and return its id.

        Raises:
            PermissionDenied: alert overlay without ALERT_WINDOW.
            RejectedBySensitivePolicy: the overlay policy refused it.
        """
        spec = self._check(replace(spec, owner=owner))
        if spec.kind is WindowKind.ALERT_OVERLAY and not owner.has(Permission.ALERT_WINDOW):
            raise PermissionDenied(f"{owner.name} lacks ALERT_WINDOW")
        if spec.kind.is_overlay and self.overlay_policy is not None:
            admitted = self.overlay_policy(spec, self)
            if admitted is None:
                raise RejectedBySensitivePolicy(f"overlay by {owner.name} covers a sensitive view")
            spec = admitted
        win = replace(spec, id=self._next_id)
        self._next_id += 1
        (self._overlays if win.kind.is_overlay else self._activities).append(win)
        return win.id

    def remove_window(self, wid: int) -> None:
        for layer in (self._overlays, self._activities):
            for i, w in enumerate(layer):
                if w.id == wid:
                    del layer[i]
                    return
        raise UnknownWindow(wid)

    def remove_owned(self, owner: AppId) -> list[int]:
        gone = [w.id for w in self.windows() if w.owner == owner]
        for wid in gone:
            self.remove_window(wid)
        return gone

    def reshow(self, wid: int, now: SimTime) -> int:
        """Remove a toast and add it again with a fresh lifetime; returns the new id."""
        old = self.get(wid)
        self.remove_window(wid)
        return self.add_window(old.owner, replace(old, created_at=now, id=0))

    def expire_toasts(self, now: SimTime) -> list[int]:
        gone = [
            w.id
            for w in self._overlays
            if w.kind is WindowKind.TOAST_OVERLAY and w.created_at + w.ttl <= now
        ]
        self._overlays = [w for w in self._overlays if w.id not in gone]
        return gone

    def set_foreground(self, app: AppId) -> None:
        mine = [w for w in self._activities if w.owner == app]
        if not mine:
            raise UnknownWindow(f"{app.name} has no activity")
        self._activities = [w for w in self._activities if w.owner != app] + mine

    # -- input ----------------------------------------------------------

    def dispatch_touch(self, ev: TouchEvent) -> DispatchResult:
        px, py = ev.point
        stack = self.windows()
        for z in range(len(stack) - 1, -1, -1):
            win = stack[z]
            if not win.touchable or not win.rect.contains(px, py):
                continue
            view = win.view_at(px, py)
            if win.kind is WindowKind.ACTIVITY and view is not None and view.filter_touches_when_obscured:
                for above in stack[z + 1:]:
                    if above.owner != win.owner and above.rect.contains(px, py):
                        return Discarded
            return DeliveredTo(win.id, view.tag if view else None)
        return NoTarget

    # -- output ---------------------------------------------------------

    def composite_points(self, xs: np.ndarray, ys: np.ndarray):
        """Composite arbitrary screen points.

        Returns ``(source_index, dark, sources)`` with the same shape as ``xs``.
        """
        xs = np.asarray(xs)
        ys = np.asarray(ys)
        sources: list[PixelSource] = [WALLPAPER]
        index = {WALLPAPER: 0}

        def sid(src: PixelSource) -> int:
            if src not in index:
                index[src] = len(sources)
                sources.append(src)
            return index[src]

        out = np.zeros(xs.shape, dtype=np.int32)
        dark = np.zeros(xs.shape, dtype=bool)
        for win in self.windows():
            r = win.rect
            inside = (xs >= r.x) & (xs < r.right) & (ys >= r.y) & (ys < r.bottom)
            if not inside.any():
                continue
            if win.alpha > ALPHA_VISIBLE:
                out[inside] = sid(PixelSource(win.id))
                dark[inside] = False
                for view in win.views:
                    vr = win.view_screen_rect(view)
                    vm = inside & (xs >= vr.x) & (xs < vr.right) & (ys >= vr.y) & (ys < vr.bottom)
                    if not vm.any():
                        continue
                    out[vm] = sid(PixelSource(win.id, view.tag))
                    dark[vm] = _render(view.content, vr, xs[vm], ys[vm])
            if win.frame_marked:
                fw = FRAME_WIDTH
                band = inside & (
                    (xs < r.x + fw) | (xs >= r.right - fw) | (ys < r.y + fw) | (ys >= r.bottom - fw)
                )
                if band.any():
                    out[band] = sid(PixelSource(win.id, None, hazard=True))
                    dark[band] = ((xs[band] + ys[band]) // HAZARD_STRIPE) % 2 == 0
        return out, dark, sources

    def composite(self, region: Rect | None = None) -> Composite:
        region = region or self.screen
        if not self.screen.contains_rect(region):
            raise InvalidWindow(f"{region} not within screen")
        ys, xs = np.mgrid[region.y:region.bottom, region.x:region.right]
        src, dark, sources = self.composite_points(xs, ys)
        return Composite(region, src, sources, dark)

    def frame_visible(self, region: Rect) -> bool:
        """Whether any hazard-band pixel shows inside ``region``.

        Only the band strips of frame-marked overlays are composited: every
        pixel across a strip, every ``FRAME_WIDTH // 2`` along it.
        """
        step = FRAME_WIDTH // 2
        xs_all, ys_all = [], []
        for w in self._overlays:
            if not (w.frame_marked and w.rect.intersects(region)):
                continue
            r, fw = w.rect, FRAME_WIDTH
            strips = (
                Rect(r.x, r.y, r.w, min(fw, r.h)),
                Rect(r.x, max(r.y, r.bottom - fw), r.w, min(fw, r.h)),
                Rect(r.x, r.y, min(fw, r.w), r.h),
                Rect(max(r.x, r.right - fw), r.y, min(fw, r.w), r.h),
            )
            for st in strips:
                x0, x1 = max(st.x, region.x), min(st.right, region.right)
                y0, y1 = max(st.y, region.y), min(st.bottom, region.bottom)
                if x0 < x1 and y0 < y1:
                    sx, sy = (step, 1) if st.w > st.h else (1, step)
                    ys, xs = np.mgrid[y0:y1:sy, x0:x1:sx]
                    xs_all.append(xs.ravel())
                    ys_all.append(ys.ravel())
        if not xs_all:
            return False
        src, _, sources = self.composite_points(np.concatenate(xs_all), np.concatenate(ys_all))
        flags = np.array([s.hazard for s in sources], dtype=bool)
        return bool(flags[src].any())


def _render(content: Content, vr: Rect, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    if isinstance(content, SolidColor):
        return np.full(xs.shape, content.dark, dtype=bool)
    if isinstance(content, Label):
        return np.zeros(xs.shape, dtype=bool)
    total = QR_SIZE + 2 * QUIET_ZONE
    mx = (xs - vr.x) * total // vr.w - QUIET_ZONE
    my = (ys - vr.y) * total // vr.h - QUIET_ZONE
    ok = (mx >= 0) & (mx < QR_SIZE) & (my >= 0) & (my < QR_SIZE)
    res = np.zeros(xs.shape, dtype=bool)
    res[ok] = content.matrix.modules[my[ok], mx[ok]]
    return res


def module_centers(region: Rect) -> tuple[np.ndarray, np.ndarray]:
    """Screen coordinates of the 25x25 module centres of a QR drawn in ``region``."""
    total = QR_SIZE + 2 * QUIET_ZONE
    idx = np.arange(QR_SIZE) + QUIET_ZONE
    cx = region.x + ((2 * idx + 1) * region.w) // (2 * total)
    cy = region.y + ((2 * idx + 1) * region.h) // (2 * total)
    xs, ys = np.meshgrid(cx, cy)
    return xs, ys


def camera_capture(stack: WindowStack, region: Rect) -> QrMatrix:
    """Read a module grid off the composited screen, one sample per module centre."""
    xs, ys = module_centers(region)
    _, dark, _ = stack.composite_points(xs, ys)
    return QrMatrix(dark)
