"""Irreversible coin ledger with per-transaction addresses, plus a latency network.

Balances move only when a transaction validates, so the sum over all wallets
is constant for the whole run. Validated transactions are frozen and
appended; nothing is ever rewritten.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Any, Callable

from .simcore import MS, EventRecord, SimTime, Simulator, SplitMix64

BASE58 = "123456789ABCDEFGHJKLMNPQRSTUVWXYZabcdefghijkmnopqrstuvwxyz"
ADDRESS_LEN = 34
MIN_LATENCY = 1 * MS
DEFAULT_VALIDATION_DELAY = 2_000 * MS

Address = str


class InsufficientFunds(ValueError):
    pass


class UnknownAddress(KeyError):
    pass


class UnknownEndpoint(KeyError):
    pass


class UnknownProfile(KeyError):
    pass


def is_valid_address(addr: object) -> bool:
    return isinstance(addr, str) and len(addr) == ADDRESS_LEN and all(c in BASE58 for c in addr)


@dataclass(frozen=True)
class LinkProfile:
    name: str
    mean_one_way: SimTime
    jitter_sd: SimTime

    def __post_init__(self):
        if self.mean_one_way <= 0:
            raise ValueError("mean_one_way must be positive")
        if self.jitter_sd < 0:
            raise ValueError("jitter_sd must be non-negative")

    def sample(self, rng: SplitMix64) -> SimTime:
        if self.jitter_sd == 0:
            return max(MIN_LATENCY, self.mean_one_way)
        return max(MIN_LATENCY, round(rng.gauss(self.mean_one_way, self.jitter_sd)))


DEFAULT_PROFILES: dict[str, LinkProfile] = {
    "wifi": LinkProfile("wifi", 15 * MS, 5 * MS),
    "cellular4g": LinkProfile("cellular4g", 60 * MS, 20 * MS),
    "cellular3g": LinkProfile("cellular3g", 120 * MS, 40 * MS),
    "wired": LinkProfile("wired", 40 * MS, 5 * MS),
}


@dataclass
class Wallet:
    owner: str
    balance: int = 0
    issued: list[Address] = field(default_factory=list)
    next_receive: Address | None = None
    _seen: set[Address] = field(default_factory=set, repr=False, compare=False)


@dataclass(frozen=True)
class Transaction:
    txid: int
    from_addr: Address
    to_addr: Address
    amount: int
    submitted_at: SimTime
    validated_at: SimTime | None = None


@dataclass(frozen=True)
class Notification:
    """Ledger-to-listener message for one validated transaction."""

    txid: int
    to_addr: Address
    from_addr: Address
    amount: int
    validated_at: SimTime


@dataclass(frozen=True)
class NetMessage:
    src: str
    dst: str
    payload: Any
    sent_at: SimTime
    deliver_at: SimTime


def fresh_address(w: Wallet, rng: SplitMix64, taken: set[Address] | frozenset = frozenset()) -> Address:
    """Draw a new Base58 address for ``w``, retrying on any collision."""
    while True:
        addr = "".join(BASE58[rng.randbelow(len(BASE58))] for _ in range(ADDRESS_LEN))
        if addr not in w._seen and addr not in taken:
            w.issued.append(addr)
            w._seen.add(addr)
            return addr


class Network:
    """Endpoints exchanging messages with per-profile sampled latency."""

    def __init__(self, sim: Simulator, rng: SplitMix64, profiles: dict[str, LinkProfile] | None = None):
        self.sim = sim
        self.rng = rng
        self.profiles = dict(DEFAULT_PROFILES if profiles is None else profiles)
        self._endpoints: dict[str, Callable[[NetMessage], None]] = {}
        self.dropped: list[NetMessage] = []
        self.delivered = 0

    def register(self, endpoint: str, handler: Callable[[NetMessage], None]) -> None:
        self._endpoints[endpoint] = handler
        self.sim.register("net:" + endpoint, self._deliver)

    def has(self, endpoint: str) -> bool:
        return endpoint in self._endpoints

    def profile(self, name: str) -> LinkProfile:
        try:
            return self.profiles[name]
        except KeyError:
            raise UnknownProfile(name) from None

    def send(
        self,
        src: str,
        dst: str,
        payload: Any,
        profile: str,
        now: SimTime | None = None,
        loss: float = 0.0,
    ) -> NetMessage:
        """Schedule delivery of ``payload``; lost messages are kept in ``dropped``."""
        if dst not in self._endpoints:
            raise UnknownEndpoint(dst)
        prof = self.profile(profile)
        now = self.sim.now if now is None else now
        latency = prof.sample(self.rng)
        msg = NetMessage(src, dst, payload, now, now + latency)
        if loss > 0.0 and self.rng.bernoulli(loss):
            self.dropped.append(msg)
            return msg
        self.sim.schedule(msg.deliver_at, "net:" + dst, msg)
        return msg

    def _deliver(self, ev: EventRecord) -> None:
        msg: NetMessage = ev.payload
        self.delivered += 1
        self._endpoints[msg.dst](msg)


@dataclass(frozen=True)
class _Listener:
    endpoint: str
    profile: str


class Ledger:
    """Accepts transactions, validates them after a fixed delay, notifies listeners."""

    def __init__(
        self,
        sim: Simulator,
        network: Network,
        validation_delay: SimTime = DEFAULT_VALIDATION_DELAY,
        endpoint: str = "ledger",
    ):
        self.sim = sim
        self.network = network
        self.validation_delay = validation_delay
        self.endpoint = endpoint
        self.wallets: dict[str, Wallet] = {}
        self._owner_of: dict[Address, Wallet] = {}
        self._rngs: dict[str, SplitMix64] = {}
        self._listeners: dict[Address, _Listener] = {}
        self._pending: dict[int, Transaction] = {}
        self._reserved: dict[str, int] = {}
        self.validated: list[Transaction] = []
        self.notifications_sent = 0
        self.notifications_dropped = 0
        self._next_txid = 1
        sim.register("ledger:validate", self._on_validate)

    # -- wallets --------------------------------------------------------

    def open_wallet(self, owner: str, balance: int, rng: SplitMix64) -> Wallet:
        if owner in self.wallets:
            raise ValueError(f"wallet {owner!r} exists")
        if balance < 0:
            raise ValueError("balance must be non-negative")
        w = Wallet(owner, balance)
        self.wallets[owner] = w
        self._rngs[owner] = rng
        self._reserved[owner] = 0
        return w

    def fresh_address(self, w: Wallet) -> Address:
        addr = fresh_address(w, self._rngs[w.owner], self._owner_of.keys())
        self._owner_of[addr] = w
        return addr

    def owner_of(self, addr: Address) -> Wallet:
        try:
            return self._owner_of[addr]
        except KeyError:
            raise UnknownAddress(addr) from None

    def total_balance(self) -> int:
        return sum(w.balance for w in self.wallets.values())

    # -- transactions ---------------------------------------------------

    def submit_tx(self, from_addr: Address, to_addr: Address, amount: int, now: SimTime | None = None) -> int:
        payer = self.owner_of(from_addr)
        self.owner_of(to_addr)
        if amount <= 0:
            raise ValueError("amount must be positive")
        available = payer.balance - self._reserved[payer.owner]
        if amount > available:
            raise InsufficientFunds(f"{payer.owner}: {available} < {amount}")
        now = self.sim.now if now is None else now
        tx = Transaction(self._next_txid, from_addr, to_addr, amount, now)
        self._next_txid += 1
        self._pending[tx.txid] = tx
        self._reserved[payer.owner] += amount
        self.sim.schedule(now + self.validation_delay, "ledger:validate", tx.txid)
        return tx.txid

    def _on_validate(self, ev: EventRecord) -> None:
        tx = replace(self._pending.pop(ev.payload), validated_at=ev.fire_at)
        payer = self._owner_of[tx.from_addr]
        payee = self._owner_of[tx.to_addr]
        self._reserved[payer.owner] -= tx.amount
        payer.balance -= tx.amount
        payee.balance += tx.amount
        self.validated.append(tx)
        listener = self._listeners.get(tx.to_addr)
        if listener is None:
            self.notifications_dropped += 1
            return
        note = Notification(tx.txid, tx.to_addr, tx.from_addr, tx.amount, tx.validated_at)
        self.network.send(self.endpoint, listener.endpoint, note, listener.profile, now=ev.fire_at)
        self.notifications_sent += 1

    def register_listener(self, addr: Address, endpoint: str, profile: str) -> None:
        self.owner_of(addr)
        if not self.network.has(endpoint):
            raise UnknownEndpoint(endpoint)
        self.network.profile(profile)
        self._listeners[addr] = _Listener(endpoint, profile)

    def snapshot(self) -> tuple[Transaction, ...]:
        return tuple(self.validated)

    def transaction(self, txid: int) -> Transaction:
        for tx in self.validated:
            if tx.txid == txid:
                return tx
        return self._pending[txid]
