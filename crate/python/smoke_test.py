#!/usr/bin/env python3
"""Build the chaos_sampler_py extension and exercise it end to end.

Run from anywhere:  python3 python/smoke_test.py
Exits nonzero on the first failed check.
"""

import cmath
import itertools
import json
import math
import random
import shutil
import subprocess
import sys
import tempfile
from pathlib import Path

REPO_ROOT = Path(__file__).resolve().parent.parent


def build_extension() -> Path:
    """Compiles the cdylib and stages it under an importable name."""
    subprocess.run(
        ["cargo", "build", "-p", "chaos-sampler-py"],
        cwd=REPO_ROOT,
        check=True,
        capture_output=True,
        text=True,
    )
    built = REPO_ROOT / "target" / "debug" / "libchaos_sampler_py.so"
    stage = Path(tempfile.mkdtemp(prefix="chaos_sampler_py."))
    shutil.copy2(built, stage / "chaos_sampler_py.so")
    return stage


def brute_force_permanent(rows):
    n = len(rows)
    total = 0j
    for perm in itertools.permutations(range(n)):
        term = 1 + 0j
        for i, j in enumerate(perm):
            term *= rows[i][j]
        total += term
    return total


def tiny_config():
    return {
        "modes": 4,
        "photons": 2,
        "input_pattern": [0, 1, 1, 0],
        "otoc_output": [1, 0, 0, 1],
        "times": [0.7, 2.0],
        "regimes": [
            {"label": "integrable", "lambda_cap": 0.01, "realizations": [2, 2]},
            {"label": "chaotic", "lambda_cap": 100.0, "realizations": [2, 2]},
        ],
        "master_seed": 5,
        "sff_ensemble_size": 16,
        "sff_time_grid": {"t_min": 0.5, "t_max": 4.0, "n_points": 8, "spacing": "log"},
    }


def main() -> int:
    stage = build_extension()
    sys.path.insert(0, str(stage))
    import chaos_sampler_py as cs

    checks = 0

    def ok(condition, label):
        nonlocal checks
        checks += 1
        if not condition:
            print(f"FAIL  {label}")
            return False
        print(f"ok    {label}")
        return True

    failed = False

    # Reference constants.
    failed |= not ok(
        abs(cs.haar_entropy(28) - 2.9271710389663683) < 1e-12,
        "haar_entropy(28) matches the exact harmonic sum",
    )
    failed |= not ok(cs.config_counts(8, 2) == (28, 36), "config counts (D, N0) at M=8, N=2")

    # Permanent against brute force.
    rng = random.Random(0)
    rows = [
        [complex(rng.gauss(0, 1), rng.gauss(0, 1)) for _ in range(4)]
        for _ in range(4)
    ]
    got = cs.permanent(rows)
    want = brute_force_permanent(rows)
    failed |= not ok(abs(got - want) / abs(want) < 1e-10, "permanent agrees with brute force (n=4)")
    failed |= not ok(cs.permanent([[1, 0], [0, 1]]) == 1, "permanent of the identity")

    # Spectra and evolution.
    spec = cs.sample_crossover_spectrum(8, 1000.0, 7, 0)
    eig = spec.eigenvalues()
    failed |= not ok(all(a <= b for a, b in zip(eig, eig[1:])), "eigenvalues ascend")
    failed |= not ok(spec.evolve(1.3).unitarity_defect() < 1e-12, "evolve(1.3) is unitary")
    u0 = spec.evolve(0.0)
    failed |= not ok(
        all(
            u0.entries()[i][j] == (1 if i == j else 0)
            for i in range(8)
            for j in range(8)
        ),
        "evolve(0) is the exact identity",
    )
    failed |= not ok(u0.otoc_value((2, 3), (2, 3)) == 1.0, "t=0 correlator on the input pair is 1")
    failed |= not ok(u0.otoc_value((2, 3), (4, 5)) == 0.0, "t=0 correlator on a disjoint pair is 0")

    # Distributions from a Haar draw.
    haar = cs.sample_haar_unitary(8, 7, 0)
    dist = cs.output_distribution(haar, [2, 3])
    probs = dist.probs()
    failed |= not ok(len(probs) == 28, "28 collision-free outputs")
    failed |= not ok(abs(sum(probs) - 1.0) < 1e-12, "conditional probabilities sum to 1")
    failed |= not ok(0.0 < dist.entropy() < math.log(28), "entropy in (0, ln 28)")
    failed |= not ok(1.0 <= dist.participation_ratio() <= 28.0, "participation ratio in [1, D]")
    first_modes = [i for i, n in enumerate(dist.configs()[0]) if n]
    failed |= not ok(dist.prob_of(first_modes) == probs[0], "prob_of addresses the first config")
    mass = cs.raw_collision_free_mass(haar, [2, 3])
    failed |= not ok(0.0 < mass < 1.0, "raw collision-free mass in (0, 1)")

    # Two-photon interference: a balanced coupler cancels the collision-free
    # sector, which must surface as a ValueError.
    s = 1.0 / math.sqrt(2.0)
    balanced = cs.Unitary.from_entries([[s, s], [s, -s]])
    try:
        cs.output_distribution(balanced, [0, 1])
        failed |= not ok(False, "degenerate conditioning raises")
    except ValueError as e:
        failed |= not ok("mass" in str(e), "degenerate conditioning raises")

    # Density endpoints.
    exact_pt = 28.0 * math.exp(-28.0 * 0.03)
    failed |= not ok(
        abs(cs.conditional_pt_density(0.03, 28, 28) - exact_pt) < 1e-12,
        "conditional density reduces to Porter-Thomas at D = N0",
    )

    # Fourier-space participation ratio: a clean tone concentrates, noise
    # spreads.
    t = [i / 256.0 for i in range(256)]
    tone = [2.0 + math.cos(2 * math.pi * 8 * x) for x in t]
    noise = [2.0 + rng.gauss(0, 0.3) for _ in t]
    pr_tone = cs.fft_participation_ratio(tone)
    pr_noise = cs.fft_participation_ratio(noise)
    failed |= not ok(pr_tone < 3.0 < pr_noise, "FFT participation separates tone from noise")

    # Whole-experiment runs are deterministic and structured.
    config = json.dumps(tiny_config())
    report_a = cs.run_experiment_json(config)
    report_b = cs.run_experiment_json(config)
    failed |= not ok(report_a == report_b, "run_experiment_json is deterministic")
    report = json.loads(report_a)
    failed |= not ok(report["d_configs"] == 6, "report carries D")
    labels = sorted(r["label"] for r in report["regimes"])
    failed |= not ok(labels == ["chaotic", "integrable"], "report carries both regimes")
    series = report["regimes"][0]["series"]
    failed |= not ok(
        sorted(series) == ["entropy", "otoc", "participation_ratio", "pt_distance", "sff"],
        "all five probe series present",
    )

    # Oracle suite.
    results = cs.validate()
    failed |= not ok(
        len(results) == 4 and all(passed for _, passed, _ in results),
        "validate() passes all oracle checks",
    )

    if failed:
        print(f"smoke test: FAILURES out of {checks} checks")
        return 1
    print(f"smoke test: all {checks} checks passed")
    return 0


if __name__ == "__main__":
    sys.exit(main())
