import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from hiergraph.cli import main  # noqa: E402

DATA = Path(__file__).resolve().parents[1] / "src" / "hiergraph" / "data"
TOY_CORPUS = DATA / "toy_corpus"
TOY_QA = DATA / "toy_qa.jsonl"


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def toy_index_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("toy") / "index"
    assert main(["build", "--mock-providers", "--corpus", str(TOY_CORPUS), "--out", str(out)]) == 0
    assert main(["hierarchy", "--mock-providers", "--index", str(out)]) == 0
    return out


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[number])
