# experiments/validate.py
from dataclasses import replace

from experiments.bcsk import run_bcsk
from experiments.common import SECTION
from experiments.impulse import run_impulse
from model.errors import ConfigError


def run_validate(scenario, log, verbose=False, max_workers=None):
    """
    Analytic engine against the particle engine on the same scenario; every
    check has to pass.
    """
    if scenario.kind not in ("impulse", "bcsk"):
        raise ConfigError(f"validation compares impulse or BCSK scenarios, not {scenario.kind!r}", scenario.source)
    log(SECTION + "\nValidating the analytic engine against particle realizations...")
    both = replace(scenario, engine="both")
    if scenario.kind == "impulse":
        result = run_impulse(both, log, verbose, max_workers=max_workers)
    else:
        result = run_bcsk(both, log, verbose, max_workers=max_workers)
    failed = [c for c in result.checks if not c.passed]
    if failed:
        log(f"{len(failed)} of {len(result.checks)} checks failed", when="validate", severity="WARNING")
    else:
        log(f"all {len(result.checks)} checks passed", when="validate", severity="INFO")
    return result
