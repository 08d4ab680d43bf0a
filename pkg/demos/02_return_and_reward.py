"""
One return, one reward
======================

The task has a single step: the ball arrives at the hitting plane, the racket
pitch, yaw and speed are chosen, and the return is scored by where it lands
and how high it flew. The sweep at the end shows why height matters: a flat
and a lobbed return can land on the same spot.
"""

import numpy as np

from ttrl import env as E

cfg = E.EnvConfig(serve=E.ServeBounds().center())  # the same serve every time
ball = E.sample_serve(np.random.default_rng(0), cfg)
print("ball at the hitting plane:", np.round(ball.as_vector(), 3))

goal = E.Goal(2.0, 0.0)
for action in [E.Action(0, 0, 0.6), E.Action(10, 0, 0.8), E.Action(-10, 0, 1.0)]:
    out = E.step(ball, action, goal, cfg)
    rp = out.reward_params
    print(f"{action}: {out.terminal_event.value}, landing ({rp.achieved_x:.3f}, {rp.achieved_y:.3f}), "
          f"height {rp.height:.3f} m, reward {out.reward:.3f}")

# Sweep the pitch at 1 m/s and look for two pitches landing at the same x
rows = []
for alpha in np.linspace(-20, 20, 81):
    out = E.step(ball, E.Action(alpha, 0, 1.0), goal, cfg)
    if out.terminal_event is E.EventKind.TABLE_BOUNCE:
        rows.append((alpha, out.reward_params.achieved_x, out.reward_params.height))
rows = np.array(rows)
i, j = min(((i, j) for i in range(len(rows)) for j in range(i + 1, len(rows))
            if abs(rows[i, 2] - rows[j, 2]) > 0.1),
           key=lambda ij: abs(rows[ij[0], 1] - rows[ij[1], 1]))
print("pitch %.1f deg and %.1f deg both land near x = %.3f m; heights %.2f vs %.2f m"
      % (rows[i, 0], rows[j, 0], rows[i, 1], rows[i, 2], rows[j, 2]))
