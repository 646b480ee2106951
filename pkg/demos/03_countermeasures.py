"""
Which defenses stop the overlay attack
======================================

Every attack variant against every defense, 5 sets of 30 payments each.
"""

from collections import Counter
from dataclasses import replace

import numpy as np

from overlaysim import Outcome, parse_scenario, run_scenario
from overlaysim.defenses import DefenseConfig

attacks = ["alert_window", "toast", "dos"]
defenses = {
    "none": DefenseConfig(),
    "touch filtering": DefenseConfig(touch_filtering=True),
    "framed overlays": DefenseConfig(framed_overlays=True),
    "otp": DefenseConfig(otp=True),
    "sensitive views": DefenseConfig(sensitive_views=True),
}
base = parse_scenario('{"amounts": {"min": 10, "max": 500}}')
columns = [o.value for o in Outcome]

for attack in attacks:
    print(f"\n== {attack}")
    print(f"{'defense':<18}" + "".join(f"{c:>18}" for c in columns))
    for label, cfg in defenses.items():
        counts = Counter()
        for seed in range(5):
            counts.update(o.value for o in run_scenario(replace(base, seed=seed, attack=attack,
                                                                  defenses=cfg)).outcomes())
        print(f"{label:<18}" + "".join(f"{counts[c]:>18}" for c in columns))

# the framed-overlay defense only helps when people notice the frame
print("\nframed overlays vs how often the frame is missed")
for p_miss in np.linspace(0, 1, 6):
    s = replace(base, attack="alert_window", n_payments=200,
                defenses=DefenseConfig(framed_overlays=True),
                perception=replace(base.perception, p_miss_frame=float(p_miss)))
    rep = run_scenario(s)
    stolen = sum(o is Outcome.STOLEN_UNDETECTED for o in rep.outcomes()) / len(rep.records)
    print(f"  p_miss={p_miss:.1f}  stolen {stolen:.2f}")
