"""
Recovering a planted glucose model from one day of data
=======================================================

Synthetic days come from a known sparse model. Fitting a single day with
sequential thresholded least squares should return the same terms with
nearly the same coefficients, with and without sensor noise.
"""

import warnings

from glucosindy.pipeline import Settings, absorb_day
from glucosindy.sindy import SindyHyper, fit_day
from glucosindy.synthetic import DEFAULT_TRUE_MODEL, SYNTHETIC_BERGER, SYNTHETIC_THRESHOLD, SynthSpec, synthesize_dataset
from glucosindy.timeseries import ShiftConfig, segment_days

warnings.simplefilter("ignore")
print("planted:", DEFAULT_TRUE_MODEL)

settings = Settings(berger_bolus=SYNTHETIC_BERGER, berger_carbs=SYNTHETIC_BERGER,
                    hyper=SindyHyper(threshold=SYNTHETIC_THRESHOLD))
shifts = ShiftConfig(6, 1)

# %%
# Fit each day separately and report the worst relative coefficient error.
for noise in (0.0, 2.0):
    ds, truth = synthesize_dataset(SynthSpec(n_days=3, noise_sd=noise, seed=1))
    days = segment_days(ds.glucose, ds.basal, ds.bolus, ds.meals).days
    print(f"\nglucose noise sd = {noise} mg/dL")
    for day in days:
        model = fit_day(absorb_day(day, settings), shifts, settings.hyper)
        err = max(abs(model.coefficient(t) / c - 1) for t, c in truth.model.as_dict().items())
        print(f"  {day.date}: same terms = {model.support == truth.model.support}, "
              f"worst error = {100 * err:.2f}%")
        print("   ", model)
