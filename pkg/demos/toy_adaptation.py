"""Adapting a pre-trained classifier to shifted data with 80 queries.

A small MLP is trained on two Gaussian blobs. The target data keeps the class
means but stretches one axis and squeezes the other, so the frozen model
loses accuracy. The provider may only submit candidate last-layer weights and
read back support accuracy; PPS climbs that feedback. OPT, ordinary
supervised tuning of the same weights with full data access, is the
reference ceiling.

    python3 demos/toy_adaptation.py
"""
import numpy as np

from feedtune import FeedbackOracle, PpsConfig, evaluate, get_scenario, opt_reference, pps_run, prepare

sc = get_scenario("toy")
rows = []
for seed in range(5):
    prep = prepare(sc, seed)
    oracle = FeedbackOracle(prep.model, "last", prep.support, prep.holdout, "accuracy", budget=80)
    theta0 = oracle.initial_parameters()
    best, trace = pps_run(theta0, oracle, PpsConfig(80, learning_rate=0.5, batch_size=8, sigma=0.4, seed=seed))
    oracle.finish()
    (sup,), (hol,) = oracle.final_report(best)
    opt = opt_reference(sc, prep)
    rows.append((evaluate(prep.model, prep.support, "accuracy")[0], sup, hol,
                 evaluate(opt, prep.support, "accuracy")[0], trace.best_query))
    print(f"seed {seed}: INI {rows[-1][0]:.3f}  PPS support {sup:.3f} holdout {hol:.3f}  "
          f"OPT {rows[-1][3]:.3f}  best found at query {trace.best_query}")

ini, sup, hol, opt, _ = np.mean(rows, axis=0)
print(f"\nmean over seeds: INI {ini:.3f} -> PPS {sup:.3f} (holdout {hol:.3f}); OPT {opt:.3f}")
