"""
Experiments: modes, noise and search
====================================

The harness runs several seeds, writes logs and summaries to disk and
compares the three training variants on identical serves. Same calls as the
``ttrl`` command line. Runs for about a minute.
"""

import tempfile
from dataclasses import replace

from ttrl import harness as H
from ttrl.env import EnvConfig

out = tempfile.mkdtemp()
# With three seeds the gap between aprg and prg is within seed-to-seed noise;
# ten seeds separate them reliably. The scalar critic trails clearly either way.
cfg = H.ExperimentConfig(seeds=(0, 1, 2), out_dir=out)
for row in H.compare_modes(cfg):
    print(f"{row['mode']:>6}: mean last-50 error {1000 * row['mean_error']:.1f} mm")
print("logs, checkpoints and summaries written under", out)

# Emulated system noise: execution noise scaled so a fixed action scatters ~120 mm
noisy_env, floor = H.calibrate_system_noise(EnvConfig(), target_rms=0.12)
noisy = H.run_experiment(replace(cfg, env=noisy_env, out_dir=None, seeds=(0, 1)))
print("noise floor %.1f mm, trained error under noise %.1f mm" % (1000 * floor, 1000 * noisy.mean_error))

# A tiny random search; the harness ranks trials by mean last-50 error
space = H.SearchSpace(trials=3, seeds_per_trial=1)
for row in H.run_search(space, replace(cfg, out_dir=None), master_seed=1):
    print(f"trial {row['trial']}: {1000 * row['mean_error']:.1f} mm, critic lr {row['agent.critic_lr']:.1e}")
