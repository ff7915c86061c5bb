"""Trading accuracy against demographic parity.

The source data ties the sensitive attribute to the label, so the
pre-trained model leans on it. On the target data that link is gone. The
holder returns accuracy and the parity gap; the search climbs
``rho * accuracy - gap``. Smaller ``rho`` weighs fairness more.

    python3 demos/fair_tuning.py
"""
from feedtune import FairnessConfig, FeedbackOracle, fairness_pps_run, get_scenario, prepare

sc = get_scenario("fairness")
prep = prepare(sc, 0)
theta0 = FeedbackOracle(prep.model, "last", prep.support, prep.holdout, sc.metric).initial_parameters()

for rho in (0.0, 0.4, 2.0):
    oracle = FeedbackOracle(prep.model, "last", prep.support, prep.holdout, sc.metric, budget=400)
    best, _ = fairness_pps_run(theta0, oracle, FairnessConfig(400, 0.03, 8, 0.1, seed=0, rho=rho))
    oracle.finish()
    _, (acc, gap) = oracle.final_report(best)
    print(f"rho {rho:>3}: holdout accuracy {acc:.3f}, parity gap {gap:.3f}")

ref = FeedbackOracle(prep.model, "last", prep.support, prep.holdout, sc.metric)
ref.finish()
_, (acc0, gap0) = ref.final_report(theta0)
print(f"untuned : holdout accuracy {acc0:.3f}, parity gap {gap0:.3f}")
