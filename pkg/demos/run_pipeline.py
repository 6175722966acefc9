"""Run qc-pca, simulate, scan and power on the demo panel, then print the AUC table.

Usage: python3 demos/run_pipeline.py [--threads N] [--replicates N]

``--replicates`` overrides the H0/H1 counts of example.ini (default 20 each,
which finishes in a few minutes; the configured 200 + 200 takes longer).
"""

import argparse
import tempfile
from pathlib import Path

from gxesim.cli import main as gxesim
from make_panel import main as make_panel

HERE = Path(__file__).parent


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--threads", type=int, default=1)
    parser.add_argument("--replicates", type=int, default=20)
    args = parser.parse_args()

    text = (HERE / "example.ini").read_text()
    text = text.replace("n_h0 = 200", f"n_h0 = {args.replicates}").replace("n_h1 = 200", f"n_h1 = {args.replicates}")
    work = Path(tempfile.mkdtemp(prefix="gxesim-demo-"))
    make_panel(work / "panel")
    config = work / "run.ini"
    config.write_text(text)

    for step in ("qc-pca", "simulate", "scan", "power"):
        code = gxesim([step, "--config", str(config), "--threads", str(args.threads), "--log-level", "warning"])
        if code:
            raise SystemExit(f"{step} exited with {code}")

    print((work / "out" / "power" / "auc_table.tsv").read_text())
    print(f"all artifacts under {work / 'out'}")


if __name__ == "__main__":
    main()
