"""Continuous mountain car: actor-critic CCA against SAC-lite (long; tens of minutes per seed)."""
from _common import run_configs

if __name__ == "__main__":
    run_configs(["mountaincar_cca.cfg", "mountaincar_saclite.cfg"], __doc__)
