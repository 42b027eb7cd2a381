import pytest

from aflstm.cli import main


@pytest.fixture(scope="session")
def synth_cli_run(tmp_path_factory):
    """One AF-LSTM (conv) run through the command line on the synthetic corpus."""
    root = tmp_path_factory.mktemp("synth_cli")
    train, dev, test = root / "train.jsonl", root / "dev.jsonl", root / "test.jsonl"
    for path, n, seed in ((train, 1000, 1), (dev, 200, 2), (test, 200, 3)):
        assert main(["synth", "--n", str(n), "--seed", str(seed), "--out", str(path)]) == 0
    out = root / "run"
    code = main(["train", "--variant", "af-lstm", "--fusion", "conv", "--data", str(train),
                 "--dev", str(dev), "--test", str(test), "--binary", "--d", "64", "--k", "64",
                 "--max-len", "16", "--embed-std", "1.0", "--out", str(out)])
    assert code == 0
    return {"root": root, "out": out, "train": train, "dev": dev, "test": test}


@pytest.fixture(scope="session")
def synth_runs():
    """Library-level runs for the synthetic acceptance criteria, each done twice."""
    import time

    from aflstm.synthetic import run_synthetic

    runs, elapsed = {}, {}
    for repeat in (0, 1):
        for name, variant, fusion in (("conv", "af-lstm", "conv"), ("mul", "af-lstm", "mul"),
                                      ("lstm", "lstm", None)):
            t0 = time.perf_counter()
            runs[name, repeat] = run_synthetic(variant, fusion)
            elapsed[name, repeat] = time.perf_counter() - t0
    return runs, elapsed


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
