"""One full collapse, fronts and all, then the Born check.

Two channels start at probabilities (0.3, 0.7) with their marked
regions seeded at opposite ends of the box. The fronts advance toward
each other; wherever marked and unmarked atoms coexist, rare incoherent
collisions kick a little probability between the channels. The kicks
are a fair game (a martingale), but once a channel's probability hits
zero it is out, so the walk always ends with one channel holding
everything. Which one wins is random; over many runs the win frequency
is the initial weight.

The ensemble at the end uses the frozen uniform background instead of
advancing fronts: a closed box eventually saturates (no unmarked atoms
left to collide), while a uniform background stands in for the open
system where the wave keeps finding fresh environment.

Run:  python3 demos/single_collapse.py
"""

import warnings

import numpy as np

from lecollapse.engine import (
    CollapseSetup,
    SlipParams,
    SmallNumbersWarning,
    born_statistics,
    run_collapse,
    run_ensemble,
)
from lecollapse.wave import Grid, KineticParams

# the desk ensembles aggregate many slips per step on purpose; the
# warning is for users probing the one-event-at-a-time regime
warnings.filterwarnings("ignore", category=SmallNumbersWarning)


def desk_slips(rate_calibration):
    return SlipParams(
        w=0.4,
        tau=1.0,
        lam=1.0,
        n_a=100.0,
        rate_calibration=rate_calibration,
        absorb_floor=1e-5,
    )


def main():
    grid = Grid((32.0,), 0.25)
    kin = KineticParams(lam=1.0, tau=1.0)

    seeded = CollapseSetup(
        kinetics=kin,
        slips=desk_slips(5000.0),
        grid=grid,
        p0=(0.3, 0.7),
        dt=0.04,
        max_steps=5000,
        seed_regions=((0.0, 2.0), (30.0, 32.0)),
        record_every=25,
    )
    result = run_collapse(seeded, seed=1)

    print("single trajectory with advancing fronts:")
    print(f"{'t':>7} {'p_1':>8} {'p_2':>8}")
    stride = max(1, len(result.trajectory) // 12)
    shown = list(range(0, len(result.trajectory), stride))
    if shown[-1] != len(result.trajectory) - 1:
        shown.append(len(result.trajectory) - 1)
    for i in shown:
        row = result.trajectory[i]
        print(f"{row[0]:7.2f} {row[1]:8.4f} {row[2]:8.4f}")
    print(f"-> {result.status} at t = {result.collapse_time:.2f} tau, "
          f"winner channel {result.winner + 1}, "
          f"{result.slip_count} slips along the way")
    print()

    uniform = CollapseSetup(
        kinetics=kin,
        slips=desk_slips(10000.0),
        grid=grid,
        p0=(0.3, 0.7),
        dt=0.04,
        max_steps=20000,
        f_init=0.4,
        advance_fields=False,
    )
    ensemble = run_ensemble(uniform, seed=42, n_runs=1000)
    stats = born_statistics(ensemble.results)
    times = np.array([r.collapse_time for r in ensemble.results
                      if r.collapse_time is not None])

    print(f"ensemble of {stats.n_results} runs on the frozen background:")
    for k, (freq, lo, hi) in enumerate(
        zip(stats.frequencies, stats.wilson_low, stats.wilson_high)
    ):
        print(f"  channel {k + 1}: frequency {freq:.3f} "
              f"(95% interval {lo:.3f}..{hi:.3f}, weight {uniform.p0[k]})")
    print(f"  chi-square p-value: {stats.p_value:.3f}")
    print(f"  collapse times: median {np.median(times):.0f} tau, "
          f"slowest {times.max():.0f} tau")


if __name__ == "__main__":
    main()
