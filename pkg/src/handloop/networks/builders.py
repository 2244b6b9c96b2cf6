"""Architectures of the predictor, synthesizer and updater networks."""
import numpy as np

from ..autodiff import LayerSpec, Model

LATENT_MAPS = 32
LATENT_SIZE = 8


def check_resolution(resolution):
    r = int(resolution)
    if r < 8 or r % 8 or (r // 8) & (r // 8 - 1):
        raise ValueError(f"resolution {resolution} is not a power-of-two multiple of 8")
    return r


def synth_stages(resolution):
    """Number of unpool+conv stages taking the 8x8 latent maps to ``resolution``."""
    return int(np.log2(check_resolution(resolution) // LATENT_SIZE))


def build_predictor(resolution, joints=14, seed=0, filters=8, kernel=5, pool=4, hidden=1024):
    r = int(resolution)
    conv_out = r - kernel + 1
    if conv_out % pool:
        raise ValueError(f"resolution {r}: conv output {conv_out} not divisible by pool {pool}")
    flat = filters * (conv_out // pool) ** 2
    layers = [
        LayerSpec("conv", "conv1", {"in": 1, "out": filters, "size": kernel}),
        LayerSpec("relu"),
        LayerSpec("maxpool", args={"window": pool}),
        LayerSpec("reshape", args={"shape": (-1,)}),
        LayerSpec("fc", "fc1", {"in": flat, "out": hidden}),
        LayerSpec("relu"),
        LayerSpec("fc", "out", {"in": hidden, "out": 3 * joints}),
        LayerSpec("linear"),
    ]
    return Model("predictor", layers, (1, r, r), {"resolution": r, "joints": joints}, seed=seed)


def synthesizer_layers(stages, joints=14, hidden=1024, filters=32, kernel=5):
    latent = LATENT_MAPS * LATENT_SIZE * LATENT_SIZE
    layers = [
        LayerSpec("fc", "fc1", {"in": 3 * joints, "out": hidden}), LayerSpec("relu"),
        LayerSpec("fc", "fc2", {"in": hidden, "out": hidden}), LayerSpec("relu"),
        LayerSpec("fc", "fc3", {"in": hidden, "out": hidden}), LayerSpec("relu"),
        LayerSpec("fc", "fc4", {"in": hidden, "out": latent}), LayerSpec("relu"),
        LayerSpec("reshape", args={"shape": (LATENT_MAPS, LATENT_SIZE, LATENT_SIZE)}),
    ]
    channels = LATENT_MAPS
    for s in range(1, stages + 1):
        layers += [
            LayerSpec("unpool", args={"factor": 2}),
            LayerSpec("conv", f"up{s}", {"in": channels, "out": filters, "size": kernel,
                                         "pad": kernel // 2}),
            LayerSpec("relu"),
        ]
        channels = filters
    layers += [
        LayerSpec("conv", "combine", {"in": channels, "out": 1, "size": kernel, "pad": kernel // 2}),
        LayerSpec("linear"),
    ]
    return layers


def build_synthesizer(resolution, joints=14, seed=0, stages=None):
    """Synthesizer producing ``(1, R', R')`` images, ``R' = 8 * 2**stages``.

    ``stages`` defaults to the full ladder for ``resolution``.
    """
    r = check_resolution(resolution)
    full = synth_stages(r)
    stages = full if stages is None else stages
    if not 0 <= stages <= full:
        raise ValueError(f"stages must be in [0, {full}]")
    out_res = LATENT_SIZE * 2 ** stages
    meta = {"resolution": out_res, "joints": joints, "stages": stages}
    return Model("synthesizer", synthesizer_layers(stages, joints), (3 * joints,), meta, seed=seed)


UPDATER_KERNELS = (5, 5, 3, 3)


def _path_extent(resolution, strides):
    extent = resolution
    for k, s in zip(UPDATER_KERNELS, strides):
        if extent < k:
            return 0
        extent = (extent - k) // s + 1
    return extent


def updater_strides(resolution, min_extent=3):
    """Default strides ``(2, 2, 2, 1)``, with leading 2s relaxed to 1 until each
    path still ends with at least ``min_extent`` pixels per side."""
    strides = [2, 2, 2, 1]
    while _path_extent(resolution, strides) < min_extent:
        if 2 not in strides:
            raise ValueError(f"resolution {resolution} too small for the updater")
        strides[strides.index(2)] = 1
    return tuple(strides)


def build_updater(resolution, joints=14, seed=0, strides=None, filters=8, hidden=1024):
    r = int(resolution)
    strides = tuple(strides) if strides is not None else updater_strides(r)
    path = []
    channels = 1
    for k, (size, stride) in enumerate(zip(UPDATER_KERNELS, strides), start=1):
        path += [LayerSpec("conv", f"path{k}", {"in": channels, "out": filters, "size": size,
                                                "stride": stride}),
                 LayerSpec("relu")]
        channels = filters
    extent = _path_extent(r, strides)
    if extent < 1:
        raise ValueError(f"updater strides {strides} collapse a {r}x{r} input")
    feat = 2 * filters * extent * extent
    head = [
        LayerSpec("fc", "fc1", {"in": feat, "out": hidden}), LayerSpec("relu"),
        LayerSpec("fc", "fc2", {"in": hidden, "out": hidden}), LayerSpec("relu"),
        LayerSpec("fc", "out", {"in": hidden, "out": 3 * joints}), LayerSpec("linear"),
    ]
    meta = {"resolution": r, "joints": joints, "strides": ",".join(map(str, strides))}
    return Model("updater", path + [LayerSpec("concat")] + head, (1, r, r), meta, seed=seed)
