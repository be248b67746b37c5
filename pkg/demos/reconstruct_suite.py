"""Reconstruct 9x9 light fields from 3x3 inputs, with and without a trained network.

Trains the restoration network briefly on the synthetic training split and
compares mean novel-view PSNR against the bicubic-only chain on the held-out
split. Takes a few minutes on one core.

Run: python demos/reconstruct_suite.py [iterations]
"""

import sys

import numpy as np

from epilf import (
    PipelineConfig,
    TrainConfig,
    build_training_set,
    init_network,
    make_benchmark_suite,
    make_kernel,
    psnr,
    reconstruct_lightfield,
    train,
)


def mean_novel_psnr(scenes, cfg):
    scores = []
    for sparse, dense, meta in scenes:
        recon = reconstruct_lightfield(sparse, cfg)
        for t in range(9):
            for s in range(9):
                if t % meta["step"] or s % meta["step"]:
                    scores.append(psnr(recon.samples[t, s], dense.samples[t, s]))
    return float(np.mean(scores))


def main(iterations=2000):
    suite = make_benchmark_suite(seed=0)
    kernel = make_kernel("gaussian", 1.5)
    cfg = TrainConfig(total_iterations=iterations, optimizer="adam",
                      lr_schedule=((0, 1e-4), (int(0.75 * iterations), 1e-5)),
                      scale_augmentation=True, log_every=250)
    pairs = build_training_set([d for _, d, m in suite if m["split"] == "train"], kernel, (2,), cfg)
    print(f"{len(pairs)} training patches")
    net, _ = train(init_network(0), pairs, cfg,
                   progress=lambda st: print(f"  iteration {st.iteration}: loss {st.loss_history[-1][1]:.3e}"))
    held_out = [x for x in suite if x[2]["split"] == "test" and 1 <= x[2]["d_max"] <= 4]
    base = mean_novel_psnr(held_out, PipelineConfig(kernel))
    learned = mean_novel_psnr(held_out, PipelineConfig(kernel, net=net))
    print(f"bicubic-only chain: {base:.2f} dB")
    print(f"with trained network: {learned:.2f} dB ({learned - base:+.2f} dB)")


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 2000)
