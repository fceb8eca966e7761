#!/usr/bin/env python3
"""Run the object-union vs random masking-policy comparison.

Trains matched finetune pairs per seed (equal budgets, same data; only
the mask policy differs), scores each model by the judge's Mask-Simple
judged alignment-correct rate, and reports the object-union win-rate.

Example:
    python3 scripts/run_policy_comparison.py --seed-pairs 5 \
        --out policy_comparison.json
"""

import argparse
import json
from dataclasses import replace
from pathlib import Path

from inpaintlab.experiments import (PolicyComparisonConfig,
                                    policy_comparison_winrate)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seed-pairs", type=int, default=5)
    parser.add_argument("--pretrain-steps", type=int, default=None)
    parser.add_argument("--finetune-steps", type=int, default=None)
    parser.add_argument("--eval-items", type=int, default=None)
    parser.add_argument("--out", type=Path, default=None)
    args = parser.parse_args()

    cfg = PolicyComparisonConfig()
    overrides = {}
    if args.pretrain_steps is not None:
        overrides["pretrain_steps"] = args.pretrain_steps
    if args.finetune_steps is not None:
        overrides["finetune_steps"] = args.finetune_steps
    if args.eval_items is not None:
        overrides["n_eval_items"] = args.eval_items
    if overrides:
        cfg = replace(cfg, **overrides)

    result = policy_comparison_winrate(args.seed_pairs, cfg, log=print)
    print(f"object-union win-rate: {result['win_rate']:.2f} "
          f"({result['wins']}/{result['n_pairs']})")
    if args.out:
        args.out.write_text(json.dumps(result, indent=2))
        print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
