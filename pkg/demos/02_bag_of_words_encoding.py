"""Encode whole clips as bag-of-visual-word histograms.

Pretrains a small two-layer network on synthetic moving-bar clips, fits a
k-means vocabulary over the stacked features, and encodes clips moving in
opposite directions.  The resulting histograms live on different visual
words, which is what the downstream classifier feeds on.

Run:  python3 demos/02_bag_of_words_encoding.py
"""

import numpy as np

from isarec.blocks import BlockGeometry
from isarec.isa import IsaTrainConfig, LayerSpec, StackGeometry, pretrain_network
from isarec.synthetic import moving_bar_clip
from isarec.video import GRAY
from isarec.vocabulary import clip_descriptors, encode_clip, kmeans_fit

geometry = StackGeometry(
    layer1=BlockGeometry(6, 6, 3, 2, 2, 2),   # strides = placements in a layer-2 block
    layer2=BlockGeometry(8, 8, 5, 8, 8, 5),   # strides = dense grid over the clip
)
spec1 = LayerSpec(
    whiten_dim=24, whiten_eps=0.1, n_filters=24, group_size=2,
    n_patches=1500, sample_seed=11,
    train=IsaTrainConfig(step_size=0.5, max_iters=60, seed=12),
)
spec2 = LayerSpec(
    whiten_dim=20, whiten_eps=0.1, n_filters=20, group_size=2,
    n_patches=600, sample_seed=13,
    train=IsaTrainConfig(step_size=0.5, max_iters=60, seed=14),
)


def make_clip(name, direction, seed):
    return moving_bar_clip(
        name, GRAY, width=48, height=36, n_frames=16, direction=direction,
        speed=1.5, bar_half_width=2.5, contrast=0.5, background=0.2,
        noise=0.02, seed=seed,
    )


print("generating 8 moving-bar clips (half leftward, half rightward) ...")
clips = [make_clip(f"clip{i}", 1 if i % 2 == 0 else -1, seed=40 + i) for i in range(8)]

print("pretraining the two-layer network (labels never consulted) ...")
net, info = pretrain_network(clips, geometry, spec1, spec2)
print("  layer-1 objective %.2f -> %.2f" % (info["layer1_trace"][0], info["layer1_trace"][-1]))
print("  layer-2 objective %.2f -> %.2f" % (info["layer2_trace"][0], info["layer2_trace"][-1]))
print("  stacked feature dimension: %d" % net.feature_dim)

print("fitting a 12-word vocabulary on all clip descriptors ...")
pool = np.concatenate([clip_descriptors(net, c) for c in clips])
vocab = kmeans_fit(pool, 12, seed=21)
print("  %d descriptors -> %d centroids" % (pool.shape[0], vocab.size))

print("encoding one clip per direction:")
for clip in (clips[0], clips[1]):
    hist = encode_clip(net, vocab, clip)
    bars = " ".join("%.2f" % w for w in hist.weights)
    print("  %-6s  [%s]  (sums to %.6f)" % (clip.clip_id, bars, hist.weights.sum()))

right = encode_clip(net, vocab, clips[0]).weights
left = encode_clip(net, vocab, clips[1]).weights
print("L1 distance between the two direction histograms: %.3f" % np.abs(right - left).sum())
