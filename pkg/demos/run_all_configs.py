"""Run every scenario in configs/ and summarize what each one produced.

    python3 demos/run_all_configs.py [pattern]

Outputs land in output/<config name>/. Fit reports are summarized by their
main parameters.
"""

import json
import sys
import time
from pathlib import Path

from lerspin.cli import run_scenario

ROOT = Path(__file__).resolve().parent.parent


def main(pattern="*.json"):
    failed = 0
    for cfg in sorted((ROOT / "configs").glob(pattern)):
        t0 = time.perf_counter()
        code, files = run_scenario(cfg)
        dt = time.perf_counter() - t0
        print(f"{cfg.stem:<36} exit {code}  {len(files):>2} files  {dt:6.2f} s")
        failed += code != 0
        for f in files:
            if f.name.endswith("_fit.json"):
                rep = json.loads(f.read_text())
                for item in rep.get("fits", [rep]):
                    params = item.get("report", item).get("params", {})
                    shown = ", ".join(f"{k}={v:.4g}" for k, v in params.items() if isinstance(v, (int, float)))
                    print(f"{'':<38}{f.name}: {shown}")
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main(*sys.argv[1:]))
