"""Compare the compiled and numpy solver kernels.

Usage::

    python benchmarks/bench_kernels.py [--repeat 200] [--channels 32 10]

Times ``solve_ssplsc`` on one beta-band bin of the default simulation with
each backend and prints median wall time per solve.
"""

import argparse
import statistics
import time

from ssplsc._backend import compiled_kernels
from ssplsc.optim import RegParams, SolverConfig, solve_ssplsc
from ssplsc.simgen import SimConfig, generate_subject
from ssplsc.spectra import band_frequencies, prepare_spectra


def bench(x, y, laps, params, backend, repeat, inner):
    cfg = SolverConfig(backend=backend, inner_prox_steps=inner)
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        solve_ssplsc(x, y, laps, params, cfg)
        times.append(time.perf_counter() - t0)
    return statistics.median(times)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=200)
    ap.add_argument("--channels", type=int, nargs=2, default=(32, 10), metavar=("EEG", "EMG"))
    args = ap.parse_args()

    sim = SimConfig(n_subjects=1, eeg_channels=args.channels[0], emg_channels=args.channels[1])
    s = generate_subject(sim, 0)
    ds = prepare_spectra(s.eeg, s.emg, band_frequencies([(15, 30)], 200, 200.0))
    laps = ds.laplacians(15, 30)
    x, y = ds.sample(int(ds.band_indices(21, 22)[0]))
    params = RegParams(0.01, 0.01, 1.0, 1.0)

    backends = ["python"] + (["cython"] if compiled_kernels is not None else [])
    print(f"{'inner':>5} " + " ".join(f"{b:>12}" for b in backends) + "   speedup")
    for inner in (1, 5):
        t = {b: bench(x, y, laps, params, b, args.repeat, inner) for b in backends}
        speed = f"{t['python'] / t['cython']:8.1f}x" if "cython" in t else "       -"
        print(f"{inner:>5} " + " ".join(f"{t[b] * 1e6:10.1f}us" for b in backends) + "  " + speed)


if __name__ == "__main__":
    main()
