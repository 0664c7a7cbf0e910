"""Time the search kernels compiled with numba against the plain-Python path.

Each variant runs in its own interpreter because the switch is read at import
time. Usage::

    python3 benchmarks/bench_kernels.py --requests 5 --samples 200
"""

import argparse
import json
import os
import subprocess
import sys

WORKER = r"""
import json, sys, time
from mipsplace import _jit
from mipsplace.baselines import ffd_icmp
from mipsplace.errors import PlacementError
from mipsplace.mcts import MctsConfig, csmp_stage, icmp_stage, run_stage
from mipsplace.topology import ClusterConfig, build_cluster
from mipsplace.workload import WorkloadConfig, generate_request

n_requests, samples, repeat = map(int, sys.argv[1:4])
cfg = MctsConfig(max_samples_per_step=samples)
state = build_cluster(ClusterConfig())
jobs = []
seed = 0
while len(jobs) < n_requests:
    req = generate_request(WorkloadConfig(seed=seed), 0)
    seed += 1
    try:
        x = ffd_icmp(req)
    except PlacementError:
        continue
    jobs.append((icmp_stage(req, 0.5), csmp_stage(state, req, x)))

# warm-up compiles (or loads cached) kernels
run_stage(jobs[0][0], MctsConfig(max_samples_per_step=5), 0)
run_stage(jobs[0][1], MctsConfig(max_samples_per_step=5), 0)

values, times = [], {"icmp": [], "csmp": []}
for r in range(repeat):
    for k, (s1, s2) in enumerate(jobs):
        for name, stage in (("icmp", s1), ("csmp", s2)):
            t0 = time.perf_counter()
            try:
                res = run_stage(stage, cfg, k)
                values.append(res.value.hex())
            except PlacementError:
                values.append(None)
            times[name].append(time.perf_counter() - t0)
print(json.dumps({"jit": _jit.JIT_ENABLED, "values": values, "times": times}))
"""


def run_variant(disable_jit: bool, args) -> dict:
    env = dict(os.environ)
    env.pop("MIPSPLACE_DISABLE_JIT", None)
    if disable_jit:
        env["MIPSPLACE_DISABLE_JIT"] = "1"
    proc = subprocess.run([sys.executable, "-c", WORKER, str(args.requests), str(args.samples), str(args.repeat)],
                          env=env, capture_output=True, text=True, check=True)
    return json.loads(proc.stdout)


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--requests", type=int, default=5, help="requests per variant")
    parser.add_argument("--samples", type=int, default=200, help="samples per decision step")
    parser.add_argument("--repeat", type=int, default=1, help="passes over the requests")
    args = parser.parse_args(argv)

    jit, plain = run_variant(False, args), run_variant(True, args)
    if not jit["jit"]:
        print("warning: numba unavailable, both variants ran uncompiled", file=sys.stderr)
    print(f"{'stage':<6} {'numba s/run':>12} {'python s/run':>13} {'speed-up':>9}")
    for name in ("icmp", "csmp"):
        a = sum(jit["times"][name]) / len(jit["times"][name])
        b = sum(plain["times"][name]) / len(plain["times"][name])
        print(f"{name:<6} {a:12.4f} {b:13.4f} {b / a:8.1f}x")
    same = jit["values"] == plain["values"]
    print(f"identical results: {'yes' if same else 'NO'}")
    return 0 if same else 1


if __name__ == "__main__":
    sys.exit(main())
