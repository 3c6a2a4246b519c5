"""Solve a general two-harvester instance end to end and audit the result.

The schedule problem is a min-max: per epoch the delivered rate is the
smaller of two bounds, and which one binds depends on the very powers being
optimized.  The solver reformulates with per-epoch weights, maximizes the
weighted throughput over the causality polytopes, minimizes over the weight
box, and certifies the result through independently recomputed KKT
residuals.
"""

import numpy as np

from ehrelay import (
    ChannelParams,
    HarvestEvent,
    HarvestProfile,
    epochs,
    invariant_report,
    kkt_residual,
    solve_minmax,
)

ch = ChannelParams(a=2.0, b=1.0, noise=1.0)
profile = HarvestProfile(events=(HarvestEvent(0.0, 4.0, 0.5),
                                 HarvestEvent(1.5, 2.0, 6.0)),
                         horizon=4.0)

sol = solve_minmax(ch, profile)

print("converged: %s   total: %.9f bits over %g s" %
      (sol.converged, sol.total_bits, profile.horizon))
print("min-max gap |weighted - min-form|: %.2e" % sol.minmax_gap)
print("\n%6s %10s %10s %10s %8s %12s %s"
      % ("epoch", "start", "p1 (W)", "p2 (W)", "weight", "rate (bit/s)", "branch"))
for i, ep in enumerate(epochs(profile)):
    print("%6d %10g %10.6f %10.6f %8.4f %12.6f %s"
          % (ep.index, ep.start, sol.allocation.p1[i], sol.allocation.p2[i],
             sol.lam[i], sol.rates[i].active, sol.rates[i].tag))

rep = kkt_residual(ch, profile, sol.allocation, sol.duals, sol.lam)
print("\nKKT certificate (recomputed from primal + dual values):")
print("  stationarity %.2e   slackness %.2e   feasibility %.2e"
      % (rep.stationarity, rep.slackness, rep.feasibility))
print("  source prefix multipliers xi:  %s" % np.round(sol.duals.xi, 6))
print("  relay prefix multipliers mu:   %s" % np.round(sol.duals.mu, 6))

print("\nstructure checks:")
flagged = False
for c in invariant_report(ch, profile, sol.allocation):
    print("  %-24s %s (residual %.2e, tol %.2e)"
          % (c.name, "ok" if c.passed else "flagged", c.residual, c.tolerance))
    flagged = flagged or not c.passed
if flagged:
    print("\nNote: this instance has a crossing harvest pattern (relay poor"
          "\nearly, rich late), so the optimal source power is front-loaded"
          "\nwhile its own battery is still slack.  Monotone powers and"
          "\ntight-at-change causality hold for proportional and"
          "\nsingle-harvester profiles but not for such crossings; the checks"
          "\nflag the structure honestly. The allocation above is still the"
          "\ncertified optimum (try demos/04_oracle_crosscheck.py's bracket).")
