"""Train ES and PPO on the point-mass task with the distributed local stack.

Each run launches a learner (or master) and actor processes, streams the
training log and tears everything down.  Prints the 20-iteration trailing
mean of the per-iteration return every 25 iterations.
"""

import sys

from minisurreal.algo import ESTrainConfig, PPOConfig
from minisurreal.algo.train import es_train, ppo_train, smoothed_returns

iters_es = int(sys.argv[1]) if len(sys.argv) > 1 else 150
iters_ppo = int(sys.argv[2]) if len(sys.argv) > 2 else 150


def show(name, records):
    sm = smoothed_returns(records)
    for r, s in zip(records, sm):
        if r["iter"] % 25 == 0:
            print(f"{name} iter {r['iter']:4d}  return {r['mean_return']:8.1f}  smoothed {s:8.1f}")


show("es", es_train(ESTrainConfig(actors=4, population=64, iters=iters_es, seed=0)))
show("ppo", ppo_train(PPOConfig(actors=4, iters=iters_ppo, seed=0)))
