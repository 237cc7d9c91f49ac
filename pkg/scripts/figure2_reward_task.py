"""Reward task on the two-room grid: CCA against epsilon-greedy Q-learning."""
from _common import run_configs

if __name__ == "__main__":
    run_configs(["figure2_cca.cfg", "figure2_qlearning.cfg"], __doc__)
