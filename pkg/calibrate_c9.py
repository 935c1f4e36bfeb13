"""Calibration run for the end-to-end synthetic-task criterion."""
import sys
import tempfile
import time

import numpy as np

from skelfont.data import read_manifest, load_dataset, synth_fonts
from skelfont.models import desk_spec
from skelfont.trainer import (
    TrainConfig, diversity_diagnostic, generate, load_bundle, train,
)

STEPS = 500


def run(seed, skeleton_channel, data_dir, ds):
    cfg = TrainConfig(
        epochs=1000, max_steps=STEPS, batch_size=4, seed=seed,
        spec=desk_spec(), skeleton_channel=skeleton_channel,
    )
    t0 = time.time()
    with tempfile.NamedTemporaryFile(suffix=".sgce") as fh:
        _, rows = train(cfg, ds, fh.name)
        bundle, cfg_l = load_bundle(fh.name)
        gen = generate(bundle, cfg_l, ds.test_x, "xy")
    dt = time.time() - t0
    cyc = [b.cyc for _, b in rows]
    k = len(cyc) // 10
    first, last = float(np.mean(cyc[:k])), float(np.mean(cyc[-k:]))
    score, _ = diversity_diagnostic(gen, ds.test_y)
    finite = all(b.is_finite() for _, b in rows)
    return first, last, score, finite, dt


def main():
    seeds = [int(s) for s in sys.argv[1:]] or [0, 1, 2, 3, 4]
    tmp = tempfile.mkdtemp()
    synth_fonts(100, 32, seed=42, out_dir=tmp)
    man = read_manifest(f"{tmp}/manifest.tsv")
    ds = load_dataset(man, tmp, "thin", "thick", 32)
    print(f"dataset: {len(ds.train_x)} train, {len(ds.test_x)} test per font")
    div_on, div_off = [], []
    for seed in seeds:
        for enabled in (True, False):
            first, last, score, finite, dt = run(seed, enabled, tmp, ds)
            drop = 100 * (1 - last / first)
            (div_on if enabled else div_off).append(score)
            print(f"seed {seed} skel={'on ' if enabled else 'off'} "
                  f"cyc {first:.4f}->{last:.4f} (drop {drop:5.1f}%) "
                  f"diversity {score:.4f} finite={finite} [{dt:.0f}s]",
                  flush=True)
    print(f"median diversity on ={np.median(div_on):.4f}")
    print(f"median diversity off={np.median(div_off):.4f}")


if __name__ == "__main__":
    main()
