"""Regenerate the workload presets shipped in src/cotopo/presets/.

Model shapes follow the published configurations of each network.  Compute
times are not profiled here; they are estimated from FLOP counts at a fixed
sustained server throughput (dense math) and from HBM bandwidth (embedding
lookups), then frozen into the JSON files.

    python scripts/build_presets.py
"""

import json
from pathlib import Path

OUT = Path(__file__).resolve().parents[1] / "src" / "cotopo" / "presets"

GPUS = 4
SERVER_FLOPS_PER_US = GPUS * 120e12 / 1e6   # sustained, mixed precision
SERVER_HBM_BYTES_PER_US = GPUS * 1.5e12 / 1e6


def dense(name, params, flops_per_sample, act_bytes, samples, prec=4, repeat=1, kind="dense"):
    fwd = flops_per_sample * samples / SERVER_FLOPS_PER_US
    entry = dict(name=name, kind=kind, param_bytes=float(params * prec),
                 activation_bytes_per_sample=float(act_bytes),
                 fwd_compute_us=round(fwd, 3), bwd_compute_us=round(2 * fwd, 3))
    if repeat > 1:
        entry["repeat"] = repeat
    return entry


def linear(name, width, samples, prec=4, repeat=1, width_in=None):
    width_in = width_in or width
    p = width_in * width
    return dense(name, p, 2 * p, width * prec, samples, prec, repeat)


def table(name, rows, dim, samples, prec=4, repeat=1, param_bytes=None):
    read = samples * dim * prec
    fwd = read / SERVER_HBM_BYTES_PER_US
    entry = dict(name=name, kind="embedding",
                 param_bytes=float(param_bytes if param_bytes is not None else rows * dim * prec),
                 activation_bytes_per_sample=float(dim * prec),
                 fwd_compute_us=round(fwd, 3), bwd_compute_us=round(2 * fwd, 3))
    if repeat > 1:
        entry["repeat"] = repeat
    return entry


def job(name, n, batch, layers, prec=4, note=""):
    return dict(name=name, num_servers=n, batch_per_gpu=batch, gpus_per_server=GPUS,
                precision_bytes=prec, note=note, layers=layers)


def dlrm(name, n, batch, tables, dim, rows, feat_layers, feat_size, top_layers, top_size, note):
    s = batch * GPUS
    return job(name, n, batch, [
        linear("bottom", feat_size, s, repeat=feat_layers),
        table("emb", rows, dim, s, repeat=tables),
        linear("top", top_size, s, repeat=top_layers),
    ], note=note)


def candle(name, n, batch, feat_layers, feat_size, top_layers, top_size, note):
    s = batch * GPUS
    return job(name, n, batch, [
        linear("feat", feat_size, s, repeat=feat_layers),
        linear("dense", top_size, s, repeat=top_layers),
    ], note=note)


def bert(name, n, batch, blocks, hidden, seq, embed, note, vocab=30522):
    s = batch * GPUS
    block_params = 12 * hidden * hidden
    block_flops = 2 * block_params * seq + 4 * seq * seq * hidden
    emb = table("tok_emb", vocab, embed, s * seq)
    emb["activation_bytes_per_sample"] = float(seq * embed * 4)
    return job(name, n, batch, [
        emb,
        dense("proj", embed * hidden, 2 * embed * hidden * seq, seq * hidden * 4, s),
        dense("block", block_params, block_flops, seq * hidden * 4, s,
              repeat=blocks, kind="attention"),
        dense("head", hidden * hidden, 2 * hidden * hidden, hidden * 4, s),
    ], note=note)


def vgg(name, n, batch, note):
    s = batch * GPUS
    cfg = [64, 64, "M", 128, 128, "M", 256, 256, 256, "M",
           512, 512, 512, "M", 512, 512, 512, "M"]
    layers, cin, hw, i = [], 3, 224, 0
    for c in cfg:
        if c == "M":
            hw //= 2
            layers[-1]["activation_bytes_per_sample"] = float(cin * hw * hw * 4)
            continue
        p = 9 * cin * c
        layers.append(dense(f"conv{i}", p, 2 * p * hw * hw, c * hw * hw * 4, s, kind="conv"))
        cin, i = c, i + 1
    layers.append(dense("fc0", 25088 * 4096, 2 * 25088 * 4096, 4096 * 4, s))
    layers.append(dense("fc1", 4096 * 4096, 2 * 4096 * 4096, 4096 * 4, s))
    layers.append(dense("fc2", 4096 * 1000, 2 * 4096 * 1000, 1000 * 4, s))
    return job(name, n, batch, layers, note=note)


def resnet50(name, n, batch, note):
    s = batch * GPUS
    # (name, params, MACs per sample, output channels, spatial, blocks)
    stages = [("conv1", 9_408, 118e6, 64, 56, 1),
              ("res2", 215_808, 680e6, 256, 56, 3),
              ("res3", 1_219_584, 1030e6, 512, 28, 4),
              ("res4", 7_098_368, 1470e6, 1024, 14, 6),
              ("res5", 14_964_736, 810e6, 2048, 7, 3)]
    layers = []
    for nm, p, macs, c, hw, blocks in stages:
        layers.append(dense(nm, p / blocks, 2 * macs / blocks, c * hw * hw * 4, s,
                            repeat=blocks, kind="conv"))
    layers.append(dense("fc", 2048 * 1000, 2 * 2048 * 1000, 1000 * 4, s))
    return job(name, n, batch, layers, note=note)


def ncf(name, n, batch, note):
    s = batch * GPUS
    return job(name, n, batch, [
        table("user_mf", 10**6, 64, s, repeat=32),
        table("user_mlp", 10**6, 128, s, repeat=32),
        table("item_mf", 10**6, 64, s, repeat=32),
        table("item_mlp", 10**6, 128, s, repeat=32),
        linear("mlp", 4096, s, repeat=8),
    ], note=note)


def dlrm_example16():
    # four 5 GB tables plus 2 GB of dense layers: 22 GB in total, fp64
    s = 2048 * GPUS
    prec = 8
    return job("dlrm16", 16, 2048, [
        table("emb", 10**7, 512, s, prec=prec, repeat=4, param_bytes=5e9),
        dense("top", 1e9 / prec, 2e9 / prec, 512 * prec, s, prec=prec, repeat=2),
    ], prec=prec, note="four-table DLRM on 16 servers, 8192 samples per server")


PRESETS = [
    dlrm("dlrm", 128, 128, 64, 128, 10**7, 16, 4096, 8, 2048,
         "dedicated-cluster DLRM"),
    dlrm("dlrm_a2a", 128, 2048, 128, 128, 10**7, 16, 4096, 8, 2048,
         "one embedding table per server; large batch makes the all-to-all heavy"),
    dlrm("dlrm_shared", 16, 256, 16, 256, 10**7, 16, 2048, 8, 1024,
         "shared-cluster DLRM"),
    candle("candle", 128, 256, 16, 16384, 8, 16384, "dedicated-cluster CANDLE"),
    candle("candle_shared", 16, 256, 16, 4096, 8, 4096, "shared-cluster CANDLE"),
    bert("bert", 128, 16, 12, 1024, 64, 512, "dedicated-cluster BERT"),
    bert("bert_shared", 16, 16, 6, 768, 256, 512, "shared-cluster BERT"),
    vgg("vgg", 128, 64, "VGG16"),
    vgg("vgg_shared", 16, 64, "VGG16, shared cluster"),
    resnet50("resnet50", 128, 128, "ResNet50"),
    ncf("ncf", 128, 128, "NCF"),
    dlrm_example16(),
]


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    for p in PRESETS:
        (OUT / f"{p['name']}.json").write_text(json.dumps(p, indent=1) + "\n")
        print("wrote", p["name"])


if __name__ == "__main__":
    main()
