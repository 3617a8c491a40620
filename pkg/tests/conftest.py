import functools
import warnings
from datetime import datetime, timezone

import pytest

from glucosindy.pipeline import Settings
from glucosindy.sindy import SindyHyper
from glucosindy.synthetic import SYNTHETIC_BERGER, SYNTHETIC_THRESHOLD, SynthSpec, synthesize_dataset
from glucosindy.timeseries import segment_days

T0 = datetime(2027, 5, 13, tzinfo=timezone.utc)

SYNTH_SETTINGS = Settings(berger_bolus=SYNTHETIC_BERGER, berger_carbs=SYNTHETIC_BERGER,
                          hyper=SindyHyper(threshold=SYNTHETIC_THRESHOLD))


@functools.lru_cache(maxsize=None)
def synthetic(n_days=3, noise_sd=0.0, seed=0, **kw):
    """Cached (segmented days, ground truth) for a synthetic patient."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        ds, truth = synthesize_dataset(SynthSpec(n_days=n_days, noise_sd=noise_sd, seed=seed, **kw))
        seg = segment_days(ds.glucose, ds.basal, ds.bolus, ds.meals)
    return seg.days, truth


@pytest.fixture
def t0():
    return T0


# acceptance lines collected by test_acceptance.py and echoed after the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
