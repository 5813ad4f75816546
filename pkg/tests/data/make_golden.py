"""Regenerate golden_trajectory.csv for the frozen-format test.

Run from the repository root:  python tests/data/make_golden.py
"""

import os

from rewardlangevin import outputs
from rewardlangevin import sampler as smp
from rewardlangevin.config import load_config


def main():
    built = load_config(None, ["sampler.steps=5"], seed=123).build()
    _, traj = smp.run(*built)
    path = os.path.join(os.path.dirname(__file__), "golden_trajectory.csv")
    outputs.write_trajectory_csv(traj, path)
    print(f"wrote {path} ({traj.n_steps} rows)")


if __name__ == "__main__":
    main()
