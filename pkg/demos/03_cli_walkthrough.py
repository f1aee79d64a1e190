"""The command-line workflow end to end, driven from Python.

Everything here can be typed in a shell as ``gcause <subcommand> ...``; the
script calls the same entry point so it also works without the console
script on ``PATH``. All files go to a temporary directory, which is printed
so the outputs can be inspected before the script exits.

Steps:
  1. write a JSON config for a synthetic instance
  2. ``synth`` writes the ground-truth graph and the series
  3. ``discover`` trains, intervenes, tests and writes report.json
  4. ``eval`` scores the report against the graph
  5. ``benchmark`` repeats this over densities and seeds and tabulates

Run with ``python demos/03_cli_walkthrough.py`` (well under a minute).
"""

import json
import tempfile
from pathlib import Path

from gcause.cli import main

work = Path(tempfile.mkdtemp(prefix="gcause-demo-"))
print(f"working in {work}\n")

config = {
    "seed": 11,
    "synth": {"groups": [2, 2], "density": 0.6, "T": 1000},
    "forecaster": {"epochs": 30},
    "inference": {"alpha": 0.05, "correction": "holm"},
}
cfg_path = work / "run.json"
cfg_path.write_text(json.dumps(config, indent=2))

print("$ gcause synth")
main(["synth", "--config", str(cfg_path), "--out", str(work / "synth")])
graph = json.loads((work / "synth" / "graph.json").read_text())
print(f"  {len(graph['edges'])} edges, declared direction {graph['direction']}\n")

print("$ gcause discover --emit-plots")
code = main(["discover", "--config", str(cfg_path), "--out", str(work / "run"), "--emit-plots"])
report = json.loads((work / "run" / "report.json").read_text())
print(f"  exit {code}; links {report['decisions']['links']}")
print(f"  plots: {sorted(p.name for p in (work / 'run' / 'plots').iterdir())}\n")

print("$ gcause eval")
main(["eval", "--run-dir", str(work / "run")])

# A small grid keeps the demo quick; the defaults sweep densities 0.2 to 1.0 with 3 seeds.
bench = {"seed": 0, "benchmark": {"densities": [0.3, 0.9], "seeds": 2, "T": 800}}
bench_path = work / "bench.json"
bench_path.write_text(json.dumps(bench))
print("\n$ gcause benchmark")
main(["benchmark", "--config", str(bench_path), "--out", str(work / "bench")])
print("\nrerunning resumes from the finished cells:")
main(["benchmark", "--config", str(bench_path), "--out", str(work / "bench")])
