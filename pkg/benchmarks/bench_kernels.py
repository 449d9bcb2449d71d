"""Compare the numba and pure-numpy variants of the hot kernels.

Usage::

    python benchmarks/bench_kernels.py [--repeat 20] [--n 1024]

Also times one Hamiltonian action and a short propagation with each backend
(in subprocesses, since the backend is fixed at import time by
``CAVITYDYN_NO_NUMBA``).
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from cavitydyn import _kernels as K


def best_of(fn, repeat):
    fn()  # warm-up (and JIT compilation)
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def kernel_cases(n, rng):
    y = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    v = rng.standard_normal(n)
    three = rng.standard_normal((3, n)) + 1j * rng.standard_normal((3, n))
    s = np.ones(n, dtype=complex)
    f = rng.standard_normal(n)
    zeros = np.zeros(n, dtype=complex)
    m = 48
    corr = rng.standard_normal((m, m)) + 1j * rng.standard_normal((m, m))
    w = rng.random(m)
    e = np.exp(1j * rng.random(m))
    nf = min(n, 512)
    return {
        "fd8_gradient": (lambda impl: impl(y, 0.01), K.fd8_gradient_numpy, K.fd8_gradient_numba),
        f"fgh_matrix (n={nf})": (lambda impl: impl(v[:nf], 0.01, 3650.0), K.fgh_matrix_numpy, K.fgh_matrix_numba),
        "combine": (lambda impl: impl(three, three, three, s), K.combine_numpy, K.combine_numba),
        "add_coupling": (lambda impl: impl(three.copy(), 1, 2, f, three, zeros, zeros, -0.5),
                         K.coupling_numpy, K.coupling_numba),
        f"triangle_sum (m={m})": (lambda impl: impl(corr, w, w, e, e), K.triangle_sum_numpy, K.triangle_sum_numba),
    }


PROPAGATION_SNIPPET = """
import time
from cavitydyn import _kernels
from cavitydyn.scenarios import check_config, parse_config, shipped_configs
cfg = [p for p in shipped_configs() if p.stem == "photonic-catalyst"][0]
scn, _ = check_config(parse_config(cfg, {{("grid", "n_points"): {n}}}))
scn.run_populations(t_final_fs=1.0)
t = time.perf_counter()
tr = scn.run_populations(t_final_fs={t_fs})[0]
print(_kernels.BACKEND, time.perf_counter() - t, repr(float(tr.P_plus[-1])))
"""


def propagation(n, t_fs):
    rows = []
    for flag in ("0", "1"):
        env = dict(os.environ, CAVITYDYN_NO_NUMBA=flag)
        out = subprocess.run([sys.executable, "-c", PROPAGATION_SNIPPET.format(n=n, t_fs=t_fs)], env=env,
                             capture_output=True, text=True, check=True).stdout.split()
        rows.append((out[0], float(out[1]), float(out[2])))
    return rows


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=1024)
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--t-fs", type=float, default=20.0, help="propagation length for the end-to-end timing")
    args = ap.parse_args(argv)
    if not K.HAVE_NUMBA:
        sys.exit("numba is not importable; nothing to compare")

    rng = np.random.default_rng(0)
    print(f"kernels, n = {args.n}, best of {args.repeat}")
    print(f"{'kernel':<24}{'numpy [us]':>12}{'numba [us]':>12}{'speed-up':>10}")
    for name, (call, np_impl, nb_impl) in kernel_cases(args.n, rng).items():
        t_np = best_of(lambda: call(np_impl), args.repeat)
        t_nb = best_of(lambda: call(nb_impl), args.repeat)
        print(f"{name:<24}{t_np * 1e6:>12.1f}{t_nb * 1e6:>12.1f}{t_np / t_nb:>10.2f}")

    print(f"\ncatalyst propagation, {args.t_fs:g} fs, n = {args.n}")
    rows = propagation(args.n, args.t_fs)
    for backend, t, p in rows:
        print(f"{backend:<8}{t:>8.2f} s   P+ = {p:.15f}")
    print(f"|P+ difference| = {abs(rows[0][2] - rows[1][2]):.1e}")


if __name__ == "__main__":
    main()
