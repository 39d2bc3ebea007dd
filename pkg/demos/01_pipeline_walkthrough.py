"""
Two-branch pipeline on the synthetic fixture
============================================

Writes the bundled 5,000-post corpus, runs every stage and prints the
report tables. Takes under a minute on a laptop CPU.
"""

import sys
import tempfile
from pathlib import Path

from leia.pipeline import ExperimentConfig, load_reports, run_experiment
from leia.synthetic import write_fixture

out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(tempfile.mkdtemp(prefix="leia-demo-"))
cfg_path = write_fixture(out)
print("fixture written to", out)

###############################################################################
# The config is plain TOML; paths are relative to its directory.
print(cfg_path.read_text())

cfg = ExperimentConfig.load(cfg_path)
run_dir = run_experiment(cfg)

###############################################################################
# Each stage leaves a ``stage.json`` next to its outputs. A second call finds
# them all and does nothing.
run_experiment(cfg)
print((run_dir / "run_manifest.json").read_text())

###############################################################################
# Main table, then the intermediate comparison of the two branches and the soup
reports = run_dir / "evaluate" / "reports"
for name in ("in_domain", "intermediate_in_domain", "out_of_domain", "intermediate_out_of_domain"):
    print(f"== {name}")
    print((reports / f"{name}.md").read_text())

best = max((r for r in load_reports(run_dir) if r.dataset == "random"), key=lambda r: r.macro)
print(f"best on random_test: {best.model} {best.macro:.2f} CI {best.ci['macro']}")
