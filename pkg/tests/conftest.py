import time

import pytest

from idcnet.inference import generate
from idcnet.training import RunConfig, build_dataset, train_stage1

_RESULTS = {}

OVERFIT_STEPS = 5000
OVERFIT_RUN = {
    "training": {"steps": OVERFIT_STEPS, "batch": 4, "log_every": 0},
    "dataset": {"height": 32, "width": 48, "frames": 13, "scenes": [0]},
}


@pytest.fixture
def criterion():
    """``criterion(n, name, ok, detail)`` records one acceptance line and returns ``ok``."""

    def record(n, name, ok, detail=""):
        _RESULTS[n] = (name, bool(ok), detail)
        return ok

    return record


@pytest.fixture(scope="session")
def overfit():
    """Stage-1 model fit to one 13-frame room clip, plus a 50-step sample of that clip."""
    start = time.perf_counter()
    run = RunConfig.from_dict(OVERFIT_RUN)
    ds = build_dataset(run.dataset, run.codec)
    result = train_stage1(run, ds)
    clip = ds.clips[0]
    seq = generate(
        result.model, clip.rgb[0], clip.depth[0], clip.trajectory, ds.depth_divisor,
        run.schedule.build(), run.codec, n_steps=50, seed=4242, use_camera=False,
    )
    return {
        "run": run, "dataset": ds, "model": result.model, "losses": result.losses,
        "clip": clip, "seq": seq, "seconds": time.perf_counter() - start,
    }


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in range(1, 12):
        if n not in _RESULTS:
            terminalreporter.write_line(f"criterion {n:>2} NOT RUN")
            continue
        name, ok, detail = _RESULTS[n]
        line = f"criterion {n:>2} {'PASS' if ok else 'FAIL'}  {name}"
        terminalreporter.write_line(f"{line}  ({detail})" if detail else line)
