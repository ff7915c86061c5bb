"""Tuning across a process boundary.

The holder keeps the data and the model and answers scores over a socket;
the provider only ever sees score tuples and the remaining budget. Running
the same search in process and over the wire gives the same parameters bit
for bit, which is what makes the remote mode trustworthy.

    python3 demos/remote_tuning.py
"""
import numpy as np

from feedtune import FeedbackOracle, PpsConfig, connect, pps_run, prepare, serve

prep = prepare("toy", 0)
cfg = PpsConfig(80, learning_rate=0.5, batch_size=8, sigma=0.4, seed=0)


def holder():
    return FeedbackOracle(prep.model, "last", prep.support, prep.holdout, "accuracy", budget=80, decimals=2)


local = holder()
best_local, _ = pps_run(local.initial_parameters(), local, cfg)

remote = holder()
with serve(remote) as server:
    channel = connect("%s:%d" % server.address, capture=True)
    best_remote, trace = pps_run(remote.initial_parameters(), channel, cfg)
    sent, received = channel.bytes_sent, channel.bytes_received
    channel.finish(best_remote)

print("identical parameters:", np.array_equal(best_local, best_remote))
print(f"{trace.queries_spent} queries: {sent} bytes to the holder, {received} bytes back "
      f"({sent / trace.queries_spent:.0f} per candidate)")
print("holder-side report (support, holdout):", server.report)
print("a feedback frame as seen on the wire:", channel.received_frames[1][4:].decode())
