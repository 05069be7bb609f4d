"""Baseline accuracies for each sensor subset on the default synthetic data.

    python3 scripts/baseline_sweep.py [--seed 0]

A quick look (seconds, no GRU training) at how much each sensor contributes:
KNN, RF and SVM are fit on the train+validation part of the default split and
scored on the test part, for both sensors together and each one alone.
"""

import argparse

import numpy as np

from gasgru import cli, dataset, fit_baseline, simgen, wavelet


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    run = cli.load_run_config(seed=args.seed)
    full = simgen.generate_dataset(run.generate)
    split = dataset.stratified_split(full, run.split.test_fraction, args.seed)
    cfg = run.baselines
    subsets = [list(full.channel_names)] + [[c] for c in full.channel_names]
    print(f"{'sensors':<20}" + "".join(f"{m:>8}" for m in ("KNN", "RF", "SVM")))
    for channels in subsets:
        ds = dataset.select_channels(full, channels)
        feats = {s.id: wavelet.extract_features(s) for s in ds}
        labels = {s.id: int(s.label) for s in ds}
        tr = [feats[i] for i in split.trainval_ids]
        tr_y = [labels[i] for i in split.trainval_ids]
        te = [feats[i] for i in split.test_ids]
        te_y = np.array([labels[i] for i in split.test_ids])
        accs = [float(np.mean(fit_baseline(m, tr, tr_y, cfg).predict(te) == te_y)) for m in ("KNN", "RF", "SVM")]
        print(f"{'+'.join(channels):<20}" + "".join(f"{a:8.3f}" for a in accs))


if __name__ == "__main__":
    main()
