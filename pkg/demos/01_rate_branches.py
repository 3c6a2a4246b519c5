"""Walk through the two cut bounds of the relay link.

The achievable rate is the smaller of two bounds: the multi-access bound
(how fast the destination can absorb the joint transmission) and the
broadcast bound (how fast the relay can decode the source).  Sweeping relay
power at fixed source power shows the multi-access bound climbing until the
branch condition flips, after which extra relay power buys nothing.
"""

import numpy as np

from ehrelay import ChannelParams, capacity_min, rho_maxmin

ch = ChannelParams(a=2.0, b=1.0, noise=1.0)
p1 = 1.0
boundary = (ch.a ** 2 - 1.0) * p1

print("channel: a=%g b=%g N=%g, source power %g W" % (ch.a, ch.b, ch.noise, p1))
print("branch condition boundary: p2 = (a^2-1)*p1 = %g W\n" % boundary)

print("%8s  %22s  %12s  %12s  %12s" % ("p2 (W)", "active branch",
                                       "rate (bit/s)", "multi-access", "broadcast"))
for p2 in np.linspace(0.0, 5.0, 11):
    rb = capacity_min(ch, p1, float(p2))
    print("%8.2f  %22s  %12.6f  %12.6f  %12.6f"
          % (p2, rb.tag, rb.active, rb.multi_access, rb.broadcast))

print("\nCross-check against the correlation-grid max-min rate (1e5 points):")
for p2 in (0.0, 1.0, 2.0, 3.0):
    rb = capacity_min(ch, p1, p2)
    grid = rho_maxmin(ch, p1, p2, 10 ** 5)
    print("  p2=%.1f  closed form %.6f  rho grid %.6f  |diff| %.2e"
          % (p2, rb.active, grid, abs(rb.active - grid)))
