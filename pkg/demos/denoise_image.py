"""
Denoise a synthetic piecewise-constant image with four agents that each hold
a quarter of the 8x8 patches, then write the clean, noisy and restored
images as PGM files.

    python demos/denoise_image.py [--budget 1000] [--out denoise_out]
"""

import argparse
from pathlib import Path

from d4l import experiment as ex
from d4l import io


def main():
    parser = argparse.ArgumentParser(description=__doc__.strip().splitlines()[0])
    parser.add_argument("--budget", type=int, default=1000)
    parser.add_argument("--out", default="denoise_out")
    args = parser.parse_args()

    cfg = ex.ExperimentConfig(data="image", image_size=64, image_noise=0.1, patch=8, K=16,
                              num_agents=4, lam=1 / 8, mu=1 / 8, msg_budget=args.budget)
    state, trace, p, extra = ex.execute(cfg)
    restored, scores = ex.denoise(p, state, extra, cfg.patch)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name, img in (("clean", extra["clean"]), ("noisy", extra["noisy"]), ("restored", restored)):
        io.write_pgm(out / f"{name}.pgm", img)
    print(f"exchanges {state.msg_count}, consensus error {trace[-1]['consensus_err']:.2e}")
    print(f"PSNR noisy {scores['psnr_in_db']:.2f} dB, restored {scores['psnr_out_db']:.2f} dB")
    print(f"images written to {out}/")


if __name__ == "__main__":
    main()
