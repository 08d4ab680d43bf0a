"""
Flying a ball across the table
==============================

Integrate a serve from the human end, bounce it on the robot's half and stop
where it crosses the hitting plane.
"""

import numpy as np

from ttrl.physics import BallState, EventKind, PhysicsParams, TableGeometry, simulate_until_event, table_bounce

# A serve from 2.6 m out, slightly topspun. Coordinates are table metres:
# x runs from the robot end (0) to the human end (2.74), z = 0 is the surface.
ball = BallState(position=[2.6, 0.0, 0.3], velocity=[-4.75, 0.0, 1.75], spin=[0.0, 20.0, 0.0])
geo = TableGeometry(hit_plane_x=0.3)

events = []
state = ball
while True:
    ev = simulate_until_event(state, geo, PhysicsParams(), record=True)
    events.append(ev)
    print(f"{ev.kind.value:>12} at t={ev.state_at_event.time:.3f} s, "
          f"x={ev.state_at_event.position[0]:.3f} m, z={ev.state_at_event.position[2]:.3f} m")
    if ev.kind is not EventKind.TABLE_BOUNCE:
        break
    state = table_bounce(ev.state_at_event)

# Apex of the first arc, from the recorded samples (columns t, x, y, z)
path = events[0].samples
print("apex height before the bounce: %.3f m" % path[:, 3].max())

# Drag and spin matter: without air the same serve lands elsewhere.
vacuum = simulate_until_event(ball, geo, PhysicsParams(k_drag=0.0, k_magnus=0.0))
print("bounce x with air %.3f m, in vacuum %.3f m"
      % (events[0].state_at_event.position[0], vacuum.state_at_event.position[0]))
