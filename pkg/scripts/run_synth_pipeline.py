#!/usr/bin/env python3
"""Drive the whole pipeline on a synthetic corpus, end to end.

Synthesizes record files with planted class structure, ingests them, builds
propagation graphs, generates the sentence-pair corpus, trains the model,
and evaluates on the held-out split. Artifacts land under --work-dir.

Usage:
    python3 scripts/run_synth_pipeline.py --work-dir /tmp/run
        [--n-graphs 60] [--feature-dim 32] [--signal-strength 4.0]
        [--signal-mode node] [--max-epochs 40] [--seed 0]
"""

import argparse
import json
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from rumorgraph.cli import main as cli


def step(*argv) -> None:
    shown = " ".join(str(a) for a in argv)
    print(f"\n$ rumorgraph {shown}")
    code = cli([str(a) for a in argv])
    if code != 0:
        raise SystemExit(code)


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--work-dir", required=True)
    parser.add_argument("--n-graphs", type=int, default=60)
    parser.add_argument("--feature-dim", type=int, default=32)
    parser.add_argument("--signal-strength", type=float, default=4.0)
    parser.add_argument("--signal-mode", choices=["node", "edge"], default="node")
    parser.add_argument("--hidden", type=int, default=16)
    parser.add_argument("--dropout", type=float, default=0.1)
    parser.add_argument("--lr", type=float, default=0.02)
    parser.add_argument("--max-epochs", type=int, default=60)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    work = Path(args.work_dir)
    corpus = work / "corpus"
    ingested = work / "ingested"
    run_dir = work / "run"

    step("synth", "--out-dir", corpus, "--n-graphs", args.n_graphs,
         "--feature-dim", args.feature_dim,
         "--signal-strength", args.signal_strength,
         "--signal-mode", args.signal_mode, "--seed", args.seed)
    step("ingest",
         "--factchecks", corpus / "factchecks.jsonl",
         "--tweets", corpus / "tweets.jsonl",
         "--comments", corpus / "comments.jsonl",
         "--reposts", corpus / "reposts.jsonl",
         "--users", corpus / "users.jsonl",
         "--out-dir", ingested)
    step("build-graphs", "--post-sets", ingested / "post_sets.jsonl",
         "--out", work / "graphs.jsonl")
    step("gen-pairs", "--post-sets", ingested / "post_sets.jsonl",
         "--out", work / "pairs.jsonl", "--neg-per-pos", 5,
         "--seed", args.seed)
    step("train", "--graphs", work / "graphs.jsonl",
         "--features", corpus / "features.nfv1",
         "--out-dir", run_dir,
         "--in-dim", args.feature_dim, "--hidden", args.hidden,
         "--edge-hidden", args.hidden, "--dropout", args.dropout,
         "--lr", args.lr, "--batch-size", 8,
         "--max-epochs", args.max_epochs, "--patience", args.max_epochs,
         "--seed", args.seed, "--curves")
    step("evaluate", "--graphs", work / "graphs.jsonl",
         "--features", corpus / "features.nfv1",
         "--checkpoint", run_dir / "checkpoint.npz",
         "--subset", "test", "--out", work / "metrics.json")
    step("export-curves", "--trainlog", run_dir / "trainlog.json",
         "--out", work / "curves.csv")

    metrics = json.loads((work / "metrics.json").read_text())["metrics"]
    print(f"\ntest accuracy {metrics['accuracy']:.3f}, "
          f"macro-F1 {metrics['macro_f1']:.3f} "
          f"({metrics['n_samples']} held-out graphs)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
