import os
import subprocess
import sys

import pytest


def run(code, disable):
    env = dict(os.environ)
    if disable:
        env["HIERGRAPH_DISABLE_NUMBA"] = "1"
    else:
        env.pop("HIERGRAPH_DISABLE_NUMBA", None)
    return subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True).stdout


CODE = """
from hiergraph import kernels
from hiergraph.louvain import louvain_partition
edges = [(i, (i * 7 + 3) % 40, 1.0 + (i % 3)) for i in range(40)] + [(i, i + 1, 1.0) for i in range(39)]
print(kernels.HAS_NUMBA)
print(sorted(louvain_partition(range(40), edges).items()))
"""


def test_env_flag_selects_pure_python_with_same_result():
    slow = run(CODE, True).splitlines()
    assert slow[0] == "False"
    fast = run(CODE, False).splitlines()
    pytest.importorskip("numba")
    assert fast[0] == "True"
    assert fast[1] == slow[1]
