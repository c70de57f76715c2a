"""Group-size sweeps at the full desk budget (about 10 minutes per setting on one core).

    python scripts/run_sweeps.py [workdir]

Writes sweep_Kg.csv and sweep_Ks.csv under ``workdir``.
"""
import sys
from pathlib import Path

from grouped_hoi import cli

if __name__ == "__main__":
    work = Path(sys.argv[1] if len(sys.argv) > 1 else "runs/sweeps")
    data = work / "data"
    cli.main(["gen-data", "--out", str(data)])
    for axis, values in (("Kg", "2,3,4,5"), ("Ks", "1,2,3,4")):
        cli.main(["sweep", "--axis", axis, "--values", values, "--data", str(data), "--out", str(work / axis)])
