"""Shared fixtures.

``pipeline`` runs the full CLI chain on the quick profile (20 phantom
subjects, fixed seed): once end to end with all three residual sources, and a
second time with the dynamic source only, so the end-to-end, ablation and
determinism checks in test_acceptance.py can share the artifacts.
"""

import time

import pytest

from resseg.cli import main


def run_cmd(*argv):
    rc = main(list(argv))
    assert rc == 0, f"command failed ({rc}): {' '.join(argv)}"


@pytest.fixture(scope="session")
def pipeline(tmp_path_factory):
    out_a = str(tmp_path_factory.mktemp("run_a"))
    out_b = str(tmp_path_factory.mktemp("run_b"))

    # primary chain (phantom -> plot, dynamic residuals), timed end to end
    t0 = time.perf_counter()
    run_cmd("phantom", "--out", out_a)
    run_cmd("preprocess", "--out", out_a)
    run_cmd("train-diffusion", "--out", out_a)
    run_cmd("train-seg", "--out", out_a)
    run_cmd("evaluate", "--out", out_a)
    run_cmd("plot", "--out", out_a)
    core_runtime = time.perf_counter() - t0

    # residual archives on the held-out split, plus the ablation arms
    run_cmd("synthesize", "--out", out_a, "--split", "test")
    for source in ("static", "zero"):
        run_cmd("train-seg", "--out", out_a, "--set", f"residual.source={source}")
        run_cmd("evaluate", "--out", out_a, "--set", f"residual.source={source}")

    # independent repetition of the primary chain with identical seeds
    run_cmd("phantom", "--out", out_b)
    run_cmd("preprocess", "--out", out_b)
    run_cmd("train-diffusion", "--out", out_b)
    run_cmd("train-seg", "--out", out_b)
    run_cmd("evaluate", "--out", out_b)

    return {"a": out_a, "b": out_b, "core_runtime": core_runtime}
