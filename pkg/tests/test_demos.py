import os
import subprocess
import sys

import pytest

DEMOS = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "demos")


@pytest.mark.parametrize("name", ["01_patch_selection.py", "03_aggregation_and_metrics.py",
                                  "04_discount_regression.py"])
def test_demo_runs(name):
    proc = subprocess.run([sys.executable, os.path.join(DEMOS, name)], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert proc.stdout.strip()
