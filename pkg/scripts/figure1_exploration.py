"""Reward-agnostic exploration on the two-room grid.

Writes per-trial final states (the scatter of visited end cells) and prints the
room-A share over the first 250 trials and the late-phase final-state entropy.
"""
import numpy as np

from _common import run_configs
from cca.harness import read_metrics
from cca.tabular import MAX_ENTROPY_18, final_state_entropy

if __name__ == "__main__":
    (out,) = run_configs(["figure1_exploration.cfg"], __doc__.splitlines()[0])
    for path in sorted(out.glob("seed_*.csv")):
        final = read_metrics(path)["final_state"].astype(int)
        room_a = np.mean((final[:250] - 1) % 6 < 3)
        h = final_state_entropy(final[999:2000]) / MAX_ENTROPY_18
        print(f"{path.stem}: room-A share (trials 1-250) {room_a:.3f}, "
              f"entropy/ln18 (trials 1000-2000) {h:.3f}")
