"""
Federated driving agents under poisoning
========================================

Each agent trains a DQN car-following policy (leader, ego, IDM follower) on
its own mix of cruise, stop-and-go and hard-brake scenarios.  Two of ten
agents flip the sign of their update.  We compare plain averaging with the
coordinate median and with distance filtering plus validation on
twin-generated probe scenarios.

Reduced scale (few rounds, short episodes) so it runs in a few minutes;
full-scale numbers come from the acceptance suite.
"""

import dataclasses

import numpy as np

from dntml import driveenv as de
from dntml.securefrl import AttackSpec, FRLConfig, LocalHyper, RobustRule, run_frl

# %%
# A scripted braking controller is collision-free on the scenario
# distribution, so a good policy exists.
scen = de.generate_drive_scenarios(200, rng=np.random.default_rng(0))
print("braking oracle no-collision rate:", de.no_collision_rate(de.run_policy(de.braking_policy, scen)))
print("always +2 m/s^2:", de.no_collision_rate(de.run_policy(lambda o: np.full(len(o), 4), scen)))

# %%
base = FRLConfig(seed=0, agents=10, adversary_fraction=0.2, attack=AttackSpec("sign_flip"),
                 rounds=4, heldout=100, probe=40, hyper=LocalHyper(episodes=60))

for rule in ("mean", "coordinate_median", "filtered_twin_validated"):
    rep = run_frl(dataclasses.replace(base, rule=RobustRule(rule)))
    print(f"{rule:<24} per-round no-collision {np.round(rep.series, 2)}  fallbacks {sum(rep.fallbacks)}")
