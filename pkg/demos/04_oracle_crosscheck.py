"""Sandwich the solver between brute force and closed form.

A proportional profile (relay harvests exactly half of what the source
does) admits a closed-form staircase solution; an exhaustive feasible-grid
search brackets the optimum from below with an explicit slack bound.  All
three agree.
"""

from ehrelay import (
    ChannelParams,
    GridConfig,
    HarvestEvent,
    HarvestProfile,
    grid_search,
    proportionality,
    solve_minmax,
    solve_proportional,
)

ch = ChannelParams(a=2.0, b=1.0, noise=1.0)
profile = HarvestProfile(events=(HarvestEvent(0.0, 2.0, 1.0),
                                 HarvestEvent(2.0, 8.0, 4.0),
                                 HarvestEvent(4.0, 2.0, 1.0)),
                         horizon=6.0)

gamma = proportionality(profile)
print("detected proportional profile with gamma = %g\n" % gamma)

closed = solve_proportional(ch, profile, gamma)
print("closed form: p1 = %s, p2 = %s" % ([float(v) for v in closed.allocation.p1],
                                         [float(v) for v in closed.allocation.p2]))
print("             total = %.12f bits" % closed.total_bits)

general = solve_minmax(ch, profile)
print("general:     total = %.12f bits (gap to closed form %.2e)"
      % (general.total_bits, abs(general.total_bits - closed.total_bits)))

res = grid_search(ch, profile, GridConfig(points_per_dim=20,
                                          refinement_rounds=2, budget=1e10))
print("grid oracle: total = %.12f bits (slack bound %.2e, %d evaluations)"
      % (res.total_bits, res.slack, res.evaluations))

assert general.total_bits >= res.total_bits - res.slack
assert general.total_bits <= res.total_bits + 1e-7
print("\nsolver value sits inside [grid best - slack, grid best + 1e-7]: ok")
