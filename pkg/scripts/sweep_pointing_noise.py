"""How DADM and the single models degrade as the pointing direction gets noisier.

    python scripts/sweep_pointing_noise.py --n 1000 --seed 42
"""

import argparse
import dataclasses

from eru_fusion.metrics import evaluate
from eru_fusion.synth import SynthConfig, TopOne, generate

NOISE_DEG = (0.0, 1.0, 3.0, 6.0, 10.0, 15.0, 25.0)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=42)
    ap.add_argument("--tau", type=float, default=0.25)
    args = ap.parse_args()

    base = SynthConfig(args.n, args.seed)
    strategies = {"only-aug": TopOne("aug"), "only-depth": TopOne("depth"), "a": "a", "dadm": "dadm"}
    print("| noise (deg) | " + " | ".join(strategies) + " |")
    print("|---:|" + "---:|" * len(strategies))
    for noise in NOISE_DEG:
        records = generate(dataclasses.replace(base, pointing_noise_deg=noise))
        accs = [100 * evaluate(records, s, thresholds=(args.tau,)).accuracy(args.tau) for s in strategies.values()]
        print(f"| {noise:g} | " + " | ".join(f"{a:.1f}" for a in accs) + " |")


if __name__ == "__main__":
    main()
