"""Regenerate the small regression fixtures: the 200-step, 10-scene overfit curve."""
import json
from pathlib import Path

from grouped_hoi.config import build_config
from grouped_hoi.model import HOIModel
from grouped_hoi.synth import SynthConfig, generate_scene
from grouped_hoi.training import prepare_scenes, train_step

FIXTURES = Path(__file__).resolve().parents[1] / "tests" / "fixtures"


def overfit_curve(steps: int = 200) -> list[float]:
    cfg = build_config({})
    data = prepare_scenes([generate_scene(s, SynthConfig()) for s in range(10)], cfg)
    model = HOIModel(cfg.model)
    return [train_step(model, data.features, data.pos, data.targets, cfg.train.lr, cfg.train, data.centers)["loss"]
            for _ in range(steps)]


if __name__ == "__main__":
    FIXTURES.mkdir(parents=True, exist_ok=True)
    curve = overfit_curve()
    (FIXTURES / "overfit_curve.json").write_text(json.dumps({"loss": curve}) + "\n")
    print(f"overfit: {curve[0]:.3f} -> {curve[-1]:.3f}")
