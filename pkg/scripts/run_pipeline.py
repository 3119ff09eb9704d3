#!/usr/bin/env python3
"""Run the full desk-scale pipeline into a work directory.

Generates a zero-noise corpus, extracts samples, calibrates the chosen
physics model, trains the residual predictor, and scores it on the test
split.  Every stage is a CLI invocation, so each one leaves a manifest.
"""

import argparse
import sys

from phyres.cli import main as cli


def run(argv):
    print("+ phyres " + " ".join(argv))
    code = cli(argv)
    if code != 0:
        sys.exit(code)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--workdir", required=True)
    ap.add_argument("--seed", type=int, default=11)
    ap.add_argument("--model", choices=["newell", "idm", "fvd"],
                    default="newell")
    ap.add_argument("--variant", choices=["nn", "pinn", "perl"],
                    default="perl")
    ap.add_argument("--platoons", type=int, default=10)
    ap.add_argument("--noise-sigma", type=float, default=0.0)
    args = ap.parse_args()

    w = args.workdir.rstrip("/")
    corpus = f"{w}/corpus.csv"
    samples = f"{w}/samples.jsonl"
    calib = f"{w}/calibration/report.json"
    train = f"{w}/train"
    preds = f"{w}/predictions.jsonl"
    metrics = f"{w}/metrics.json"

    run(["synth", "--out", corpus, "--seed", str(args.seed),
         "--platoons", str(args.platoons),
         "--noise-sigma", str(args.noise_sigma)])
    run(["extract", "--input", corpus, "--out", samples])
    run(["calibrate", "--samples", samples, "--out", calib,
         "--seed", "3", "--model", args.model])
    train_argv = ["train", "--samples", samples, "--out", train,
                  "--seed", "1", "--variant", args.variant]
    if args.variant in ("pinn", "perl"):
        train_argv += ["--params-file", calib]
    run(train_argv)
    predict_argv = ["predict", "--samples", samples, "--out", preds,
                    "--variant", args.variant,
                    "--weights", f"{train}/weights.json"]
    if args.variant in ("pinn", "perl"):
        predict_argv += ["--params-file", calib]
    run(predict_argv)
    run(["evaluate", "--samples", samples, "--records", preds,
         "--out", metrics])
    print(f"done; metrics in {metrics}")


if __name__ == "__main__":
    main()
