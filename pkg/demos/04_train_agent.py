"""
Training an agent
=================

Run the full loop on the serve scenario: 30 warm-up episodes of noisy
pretested actions, then actor and critic updates after every episode and
gradient refinement of each action against the critic. Takes a few seconds.
"""

import numpy as np

from ttrl import AprgConfig, EnvConfig, run_training
from ttrl.harness import running_average

result = run_training(EnvConfig(), AprgConfig(), seed=0)
errors = result.goal_errors
smooth = running_average(errors, 30)
for e in range(0, len(errors), 25):
    print(f"episode {e:3d}: goal error {1000 * errors[e]:6.1f} mm, 30-episode mean {1000 * smooth[e]:6.1f} mm")
print("mean error, episodes 31-80: %.1f mm" % (1000 * errors[30:80].mean()))
print("mean error, last 50:        %.1f mm" % (1000 * errors[-50:].mean()))

# The critic predicts landing point and height for any state/action pair.
last = result.buffer.records[-1]
s = EnvConfig().normalize_state(last.observed_state)
q = result.critic(np.concatenate([s, last.action.normalized()]))
print("critic estimate for the last episode:", np.round(q, 3))
print("what happened:                       ", np.round(last.reward_params.as_array(), 3))
