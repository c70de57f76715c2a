"""Default desk run: generate data, train 2000 steps, report loss drop, val mAP and wall time.

    python scripts/desk_run.py [workdir] [--write-fixture]

``--write-fixture`` stores the per-step loss curve in tests/fixtures/desk_loss_curve.json.
"""
import json
import sys
import time
from pathlib import Path

import numpy as np

from grouped_hoi.config import build_config
from grouped_hoi.synth import make_splits
from grouped_hoi.training import train

FIXTURE = Path(__file__).resolve().parents[1] / "tests" / "fixtures" / "desk_loss_curve.json"


def desk_run(workdir: Path) -> dict:
    cfg = build_config({})
    t0 = time.perf_counter()
    make_splits(cfg.synth, cfg.train.n_train, cfg.train.n_val, cfg.train.data_seed, workdir / "data")
    res = train(cfg, workdir / "data", workdir / "run")
    seconds = time.perf_counter() - t0
    first, last = float(np.mean(res.losses[:10])), float(np.mean(res.losses[-10:]))
    return {"steps": res.steps, "seconds": seconds, "first10": first, "last10": last,
            "drop": 1 - last / first, "val_map": res.report.full, "val_maps": res.val_maps, "losses": res.losses}


if __name__ == "__main__":
    args = [a for a in sys.argv[1:] if not a.startswith("--")]
    workdir = Path(args[0] if args else "runs/desk")
    out = desk_run(workdir)
    print(f"steps {out['steps']}  time {out['seconds']:.1f}s  loss {out['first10']:.3f} -> {out['last10']:.3f} "
          f"(drop {out['drop']:.1%})  val mAP {out['val_map']:.4f}")
    if "--write-fixture" in sys.argv:
        FIXTURE.parent.mkdir(parents=True, exist_ok=True)
        FIXTURE.write_text(json.dumps({"loss": out["losses"], "val_map": out["val_map"]}) + "\n")
        print(f"wrote {FIXTURE}")
