"""Compare the numba-compiled kernels with the pure numpy fallback.

Usage::

    python3 benchmarks/bench_kernels.py [--repeat 5]

Times the two hot kernels directly (frame ODE stepping and stencil
assembly), then the end-to-end frame solve and operator assembly with
``curvedtube._kernels.USE_NUMBA`` toggled, which is what the environment
flag ``CURVEDTUBE_DISABLE_NUMBA=1`` does at import time.  Compilation is
excluded: every kernel is warmed up once before timing.
"""
import argparse
import timeit

import numpy as np

from curvedtube import _kernels as KN
from curvedtube import operator as O
from curvedtube import profiles as P
from curvedtube import section as S
from curvedtube import tang as T
from curvedtube import tube as TB


def _best(fn, repeat):
    fn()
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def _rotation_inputs(nsteps, m, seed=0):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((nsteps, 3, m, m))
    return 0.5 * (A - np.swapaxes(A, -1, -2)), np.eye(m), 0.01


def _assembly_inputs():
    prof = P.make_profile(3, [P.gaussian(1.0, 1.0), P.gaussian(0.5, 2.0)])
    tube = TB.tube_from_profile(prof, S.make_disk(0.4), (-11.0, 11.0))
    return tube, O.make_grid(tube.section, 10.0, 1 / 32)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    if not KN.HAVE_NUMBA:
        print("numba is not installed; only the numpy path is available")
        return 1
    rows = []
    for nsteps, m in ((20000, 2), (20000, 3)):
        K, R0, ds = _rotation_inputs(nsteps, m)
        t_np = _best(lambda: KN.rotation_steps_numpy(K, R0, ds), args.repeat)
        t_nb = _best(lambda: KN.rotation_steps_numba(K, R0, ds), args.repeat)
        rows.append((f"rotation_steps  n={nsteps} m={m}", t_np, t_nb))

    tube, grid = _assembly_inputs()
    prof3 = P.profile_from_closures(4, [lambda s: 0.4 + 0.1 * np.cos(s),
                                        lambda s: 0.3 + 0.2 * np.sin(0.5 * s),
                                        lambda s: 0.5 + 0.0 * s])
    cases = [("solve_frame_ode d=4 [-50, 50]", lambda: T.solve_frame_ode(prof3, (-50.0, 50.0))),
             (f"assemble_form   {grid.ns}x{grid.nu} nodes", lambda: O.assemble_form(tube, grid))]
    saved = KN.USE_NUMBA
    try:
        for label, fn in cases:
            KN.USE_NUMBA = False
            t_np = _best(fn, args.repeat)
            KN.USE_NUMBA = True
            t_nb = _best(fn, args.repeat)
            rows.append((label, t_np, t_nb))
    finally:
        KN.USE_NUMBA = saved

    print(f"{'case':42s} {'numpy [s]':>10s} {'numba [s]':>10s} {'speed-up':>9s}")
    for label, t_np, t_nb in rows:
        print(f"{label:42s} {t_np:10.4f} {t_nb:10.4f} {t_np / t_nb:8.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
