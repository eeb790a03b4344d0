"""
Auto-oscillation ring on daily market moves
============================================

Feed the scaled daily moves of the bundled 2013 S&P 500 closes into the ring
one per 0.3 ns interval, then train the three readouts on the per-interval
features. A short run keeps this quick; the full experiment lives in
configs/stock_aor_amplitude_ann.json.
"""

import numpy as np

from magnonrc.aor import AorConfig, run_aor, trace_features
from magnonrc.data import dataset_path, load_stock
from magnonrc.harness import write_overlay
from magnonrc.readout import evaluate, fit_ensemble, fit_linear, fit_mlp

days = load_stock(dataset_path("sp500_2013.csv"))
n = 60
inputs, targets = days.sequences[:n, 0], days.targets[:n]
print(f"{n} days, {100 * targets.mean():.0f} % up moves")

config = AorConfig(dt=100e-15)
trace = run_aor(inputs, config)
print("ANN gain per interval (first 8):", np.round(trace.ann_gain[:8], 3))
trace.to_csv("aor_trace.csv")
write_overlay("aor_overlay.csv", trace.input_samples, trace.output_samples)

X = np.hstack([trace_features(trace), np.ones((n, 1))])
train, test = np.arange(40), np.arange(40, n)
lm = fit_linear(X[train], targets[train])
ens = fit_ensemble(X[train], targets[train], N=5)
mlp = fit_mlp(X[train, :-1], targets[train])
for name, model, feats in (("linear", lm, X), ("ensemble", ens, X), ("mlp", mlp, X[:, :-1])):
    print(f"{name:8s} test accuracy {evaluate(model, feats[test], targets[test]):.0f} %")
