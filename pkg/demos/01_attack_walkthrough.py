"""
One payment, step by step
=========================

Follow a single scan-and-pay payment while the overlay malware is active,
first with the honest wallet alone and then with the attack running.
"""

import numpy as np

from overlaysim import Outcome, World, WorldConfig
from overlaysim.agents import MalviewConfig, Strategy
from overlaysim.qrcodec import DecodeError, decode
from overlaysim.simcore import MS
from overlaysim.windowstack import camera_capture

# a world with no malware: the payer reads the payee's own address
world = World(WorldConfig(seed=7, n_payments=1))
[p] = world.run()
print("honest run:", p.outcome.value, "paid to", p.decoded)

# now with an alert-window overlay; keep the event trace to read afterwards
world = World(WorldConfig(seed=7, n_payments=1, malware=MalviewConfig(Strategy.ALERT_WINDOW)),
              keep_trace=True)

# peek at the screen every 250 ms while the payment is in flight
frames = []


def look(w):
    region = w.layout["qr-display"]
    try:
        addr = decode(camera_capture(w.stack, region)).decode()
    except DecodeError:
        addr = "<no code>"
    owners = [x.owner.name for x in w.stack.windows()]
    frames.append((w.sim.now, addr, owners))


world.add_probe(250 * MS, look)
[p] = world.run()

for t, addr, owners in frames[:16]:
    print(f"{t / MS:8.0f} ms  qr={addr[:12]:<12}  stack={owners}")

# the timeline recorded for the payment
print()
print("wallet in foreground ", p.foreground_at / MS, "ms")
print("fake code ready      ", p.ready_at / MS, "ms  (setup", p.setup_time / MS, "ms)")
print("tap captured         ", p.tap_captured_at / MS, "ms")
print("payer scanned        ", p.scanned_at / MS, "ms")
print("payer confirmed      ", p.confirm_at / MS, "ms")
print("notification shown   ", p.notified_at / MS, "ms  (fake:", p.fake_notification, ")")
assert p.outcome is Outcome.STOLEN_UNDETECTED

# where the coins went
balances = {name: w.balance for name, w in world.ledger.wallets.items()}
print()
print("balances:", balances)
print("paid to attacker address:", p.decoded in world.server.wallet.issued)

# the wallet app itself never received a touch
print("wallet touch log:", world.wallet_app.touch_log)

# the first few lines of the event trace
for rec in world.sim.trace[:12]:
    print(rec)

# share of screen samples that showed the attacker's code
shown = np.array([addr == p.decoded for _, addr, _ in frames])
print(f"attacker code visible in {shown.mean():.0%} of {shown.size} samples")
