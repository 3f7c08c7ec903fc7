"""
A poisoned federation, round by round
=====================================

Uses the calibrated profile in configs/acceptance.toml, shortened to ten
rounds, and compares no attack against the two engines.
"""
from pathlib import Path

from delphi_lab.config import parse_config, with_overrides
from delphi_lab.runner import build, run_experiment

profile = parse_config(Path(__file__).resolve().parents[1] / "configs" / "acceptance.toml")

for method in ("none", "bo", "lstr"):
    cfg = with_overrides(profile, {"rounds": 10, "attack.method": method})
    exp = build(cfg)
    records = run_experiment(cfg, experiment=exp)
    conf = [round(r.metrics.mean_confidence, 3) for r in records]
    print(f"{method:5s} confidence by round {conf}")
    if exp.attack is not None:
        last = records[-1].metrics
        print(f"      rho {last.rho:.4f}  bound {last.rho_bound:.4f}  epsilon {last.epsilon_measured:.4f}")
        for entry in exp.attack.log[:3]:
            print(f"      round {entry['round']} client {entry['client']}: "
                  f"KL {entry['kl_before']:.3f} -> {entry['kl_after']:.3f}")

# multi-Krum drops the uploads farthest from the rest
cfg = with_overrides(profile, {"rounds": 10, "attack.method": "bo", "aggregation.method": "krum"})
print("krum  final confidence", round(run_experiment(cfg)[-1].metrics.mean_confidence, 3))
