"""String-tautening staircase on a worked harvest sequence.

One node harvests 2 J at t=0, 8 J at t=2, 2 J at t=4, deadline T=6.  The
tautest feasible cumulative-spend path runs at 1 W until t=2 (draining the
first harvest exactly) and at 2.5 W afterwards; powers only ever step up,
and every step coincides with a drained battery.
"""

from fractions import Fraction

import numpy as np

from ehrelay import staircase, segment_powers

times = [0, 2, 4, 6]
energies = [2, 8, 2]

bp = staircase(times, energies)
print("harvests %s J at t=%s, deadline %s s" % (energies, times[:-1], times[-1]))
print("segments (epoch ranges): %s" % (bp.indices,))
print("segment powers:          %s W" % (bp.powers,))
print("per-epoch powers:        %s W" % segment_powers(bp, 3))

exact = staircase([Fraction(t) for t in times], [Fraction(e) for e in energies])
print("exact rational powers:   %s" % [str(p) for p in exact.powers])

# cumulative consumption never exceeds cumulative harvest, and drains it
# exactly at each breakpoint
lengths = np.diff(times)
p = np.array(segment_powers(bp, 3), dtype=float)
spend = np.cumsum(p * lengths)
caps = np.cumsum(energies)
print("\n%8s %12s %12s" % ("t (s)", "spent (J)", "available (J)"))
for t, s, c in zip(times[1:], spend, caps):
    print("%8g %12g %12g%s" % (t, s, c, "   <- drained" if s == c else ""))
