"""Render one synthetic staff and write every augmentation next to it.

    python demos/augment_gallery.py OUT_DIR
"""

import sys
from pathlib import Path

import numpy as np

from omrf.augment import OP_KINDS, AugmentConfig, apply_pipeline, augment_op, sample_rng
from omrf.data import render_staff, write_image


def main(out):
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    staff = render_staff([1, 4, 2, 7, 3, 0, 5], np.random.default_rng(0))
    write_image(out / "original.png", staff)
    for kind in OP_KINDS:
        img = augment_op(kind, staff[None], np.random.default_rng(1))[0]
        write_image(out / f"{kind}.png", img)
        print(f"{kind:26s} mean |change| {np.abs(img - staff).mean():.4f}")

    # the full pipeline is deterministic given (seed, sample id, epoch)
    cfg = AugmentConfig()
    for epoch in range(3):
        trace = []
        img = apply_pipeline(staff[None], cfg, sample_rng(0, "staff", epoch), trace=trace)[0]
        write_image(out / f"pipeline_epoch{epoch}.png", img)
        print(f"epoch {epoch}: {', '.join(trace) or 'no ops fired'}")
    print(f"wrote {len(OP_KINDS) + 4} images to {out}")


if __name__ == "__main__":
    if len(sys.argv) != 2:
        sys.exit(__doc__)
    main(sys.argv[1])
