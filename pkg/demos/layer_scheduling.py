"""Where does LCPS spend its queries?

The objective has four parameter blocks but only the second one matters.
PPS perturbs all 40 numbers at once, so three quarters of every probe is
noise. LCPS updates one block at a time, notices which block pays off, and
routes its spare queries there.

    python3 demos/layer_scheduling.py
"""
import numpy as np

from feedtune import FunctionChannel, LcpsConfig, PpsConfig, layered_quadratic, lcps_run, pps_run

fn, partition, _ = layered_quadratic(layer_dim=10, n_layers=4, signal_layer=2, seed=10_000)
theta0 = np.zeros(partition.dim)
q = 3000

cfg = LcpsConfig(q, learning_rate=0.005, batch_size=60, sigma=0.1, unit_size=2, beta=20.0)
_, lt, ledger = lcps_run(theta0, partition, FunctionChannel(fn, q), cfg)
_, pt = pps_run(theta0, FunctionChannel(fn, q), PpsConfig(q, learning_rate=0.005, sigma=0.1))

print("stage-2 unit updates per block:", lt.stage2_picks)
print("final layer probabilities:", np.round(lt.importance.probs, 3))
for name, trace in (("LCPS", lt), ("PPS", pt)):
    print(f"{name}: best {trace.best_score:.3f}, queries to reach 0.9: {trace.queries_to_reach(0.9)}")
print(f"regret {ledger.regret:.2f} against a hindsight gain of {ledger.g_max:.2f}")
