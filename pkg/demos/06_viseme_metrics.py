"""Evaluation: weighting coefficient error by what the mouth is doing.

A tracking error during a bilabial /P/ closure is far more visible than
the same error mid-silence. The shipped viseme table encodes that:
every phoneme maps to a mouth-shape class with an importance weight,
and the sequence metric weights per-frame error accordingly.
"""

import numpy as np

from blendfit import BscSequence, RigidPose, SequenceFrame
from blendfit.metrics import (
    FrameAlignment,
    VisemeTable,
    hybrid_l1_cosine,
    phoneme_to_viseme,
    viseme_weighted_error,
)

table = VisemeTable.default()
print(f"{len(table.visemes)} visemes over {len(table.phonemes)} phonemes\n")
print(f"{'viseme':>7} {'weight':>7}  phonemes")
for v in sorted(table.visemes, key=lambda v: -table.weights[v]):
    members = sorted(p for p, vv in table.viseme_of.items() if vv == v)
    print(f"{v:>7} {table.weights[v]:7.2f}  {' '.join(members)}")

word = ["m", "ay", "dh", "er", "sil"]
print("\nphoneme lookup for 'mither':",
      {p: phoneme_to_viseme(table, p) for p in word})

# a toy two-frame evaluation: perfect on the vowel, sloppy on the closure
def seq(rows):
    frames = tuple(SequenceFrame(i, i / 30.0, RigidPose.identity(), np.array(r))
                   for i, r in enumerate(rows))
    return BscSequence(("jaw", "pucker"), frames)

gt = seq([[0.0, 1.0], [0.6, 0.1]])
pred = seq([[0.0, 0.8], [0.6, 0.1]])
align = FrameAlignment(("p", "aa"))

score, breakdown = viseme_weighted_error(pred, gt, align, table)
print(f"\nframe 0 (/p/, weight 1.00): pucker off by 0.2")
print(f"frame 1 (/aa/, weight 0.59): exact")
print(f"viseme-weighted error: {score:.4f}")
for v, bucket in breakdown.per_viseme.items():
    print(f"  {v}: {bucket.frames} frame(s), weight {bucket.weight}, "
          f"mean error {bucket.mean_error:.4f}")

# the same mistake during silence costs nothing
silent = FrameAlignment(("sil", "aa"))
score_sil, bd = viseme_weighted_error(pred, gt, silent, table)
print(f"\nsame prediction scored with frame 0 silent: {score_sil:.4f}")

# the per-frame loss blends magnitude and direction of the error
a, b = np.array([0.5, 0.0, 0.2]), np.array([0.4, 0.1, 0.2])
print(f"\nhybrid per-frame loss, alpha=0.5: {hybrid_l1_cosine(a, b):.4f} "
      f"(alpha=1 is plain MAE: {hybrid_l1_cosine(a, b, alpha=1.0):.4f})")
