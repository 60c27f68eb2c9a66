"""
Does reported uncertainty follow the error?
===========================================

Per variable, pool every (window, step) point and correlate each uncertainty
channel with the absolute error.  A permutation test gives p-values.
"""
import numpy as np

from mogu import (ExpertSpec, MixtureModel, MixtureSpec, ModelSpec, SplitSpec, TrainConfig, prepare,
                  synth_heteroscedastic, train)
from mogu.evaluation import uncertainty_error_correlation

series, _ = synth_heteroscedastic(seed=1, n=4000, v=2)
data = prepare(series, SplitSpec(), 48, 12)
spec = ModelSpec(ExpertSpec(kind="dlinear", lookback=48, horizon=12, num_variables=2), MixtureSpec(k=3))
model = MixtureModel(spec, seed=1)
train(model, data.train, data.val, TrainConfig(max_epochs=3, learning_rate=1e-3))

out = model.predict(data.test.inputs)
report = uncertainty_error_correlation(out, data.test.targets, series.variable_names, n_perm=200)
print(f"MAE {report.mae:.4f}  MSE {report.mse:.4f}")
for channel in ("aleatoric", "epistemic", "total"):
    avg = report.average[channel]
    print(f"{channel:>9}: R {avg['pearson']:+.3f}  rho {avg['spearman']:+.3f}  p {report.pvalues[channel]}")
print("per-step R (total):", np.round(report.per_horizon["total"], 3))
