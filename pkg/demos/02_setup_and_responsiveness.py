"""
Setup time and notification overhead
====================================

How long the malware needs before the fake code is on screen, and how much
later the payee's (fake) notification arrives compared with an honest run.
Each row is a set of 30 payments on the calibrated profile.
"""

from dataclasses import replace

import numpy as np

from overlaysim import load_builtin, run_scenario, sweep
from overlaysim.simcore import MS

calib = load_builtin("paper-calib")
honest = replace(calib, attack="none")

links = ["wifi", "cellular4g", "cellular3g"]
attacked = sweep(calib, "link", links)
baseline = sweep(honest, "link", links)

print(f"{'link':<12}{'setup (ms)':>18}{'honest delay (ms)':>22}{'attack delay (ms)':>22}{'overhead':>10}")
for link, a, b in zip(links, attacked, baseline):
    st = np.array(a.setup_times) / MS
    da = np.array(a.notification_delays) / MS
    db = np.array(b.notification_delays) / MS
    print(f"{link:<12}{st.mean():>10.1f} ± {st.std(ddof=1):<5.1f}"
          f"{db.mean():>14.1f} ± {db.std(ddof=1):<5.1f}"
          f"{da.mean():>14.1f} ± {da.std(ddof=1):<5.1f}{da.mean() - db.mean():>9.0f}")

# setup time never exceeds one poll period plus two window creations
polls = []
for seed in range(40):
    polls += run_scenario(replace(calib, seed=seed)).setup_times
polls = np.array(polls) / MS
print()
print(f"setup over {polls.size} payments: min {polls.min():.1f}  median {np.median(polls):.1f}  "
      f"max {polls.max():.1f} ms")

# a histogram in text
counts, edges = np.histogram(polls, bins=10)
for c, lo, hi in zip(counts, edges, edges[1:]):
    print(f"{lo:6.0f}-{hi:<6.0f} {'#' * (c // 4)}")

# slower polling stretches the setup time linearly
for period in (50, 100, 200, 400):
    s = replace(calib, malware=replace(calib.malware, poll_period_ms=period))
    st = np.array(run_scenario(s).setup_times) / MS
    print(f"poll {period:>3} ms -> mean setup {st.mean():6.1f} ms, max {st.max():6.1f} ms")
