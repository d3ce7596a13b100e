# # Drifting dynamics and sliding windows
#
# When the mean of an OU process moves slowly, a single stationary fit
# forecasts towards the wrong centre.  Refitting on the last W snapshots,
# with W set from the autocorrelation time of the cross-sectional mean,
# tracks the drift.

import warnings

import numpy as np

from dpdd import DpddConfig, DgpSpec, dpdd_forecast, fit_dpdd, generate, mse_w2
from dpdd.sliding import mixing_time, sw_dpdd_forecast, window_from_mixing

panel = generate(DgpSpec("drifting_ou", n_paths=400, T=20, seed=3))
train = 14
tau = mixing_time(panel.summary_means(0, train))
W = window_from_mixing(tau, 3, max_length=train)
print(f"mixing time {tau}, window {W}")

x, y = panel.pairs(0, train)
cfg = DpddConfig()
with warnings.catch_warnings():
    warnings.simplefilter("ignore")
    global_model = fit_dpdd(x, y, cfg, density_samples=panel.pooled(0, train))
    tests = [panel[t] for t in range(train, panel.n_times)]
    global_fc = [dpdd_forecast(global_model, panel[t - 1], 1) for t in range(train, panel.n_times)]
    window_fc = [sw_dpdd_forecast(panel, t - 1, W, 1, cfg) for t in range(train, panel.n_times)]

rng = np.random.default_rng(0)
print("global fit MSE_W2:  ", round(mse_w2(tests, global_fc, rng=rng), 4))
print("sliding window MSE_W2:", round(mse_w2(tests, window_fc, rng=rng), 4))
