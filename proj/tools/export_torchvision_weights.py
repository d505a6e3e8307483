"""Export torchvision ImageNet backbones into the weight-store format read by skinres.

    python3 tools/export_torchvision_weights.py --out /data/weights
    python3 tools/export_torchvision_weights.py --out /tmp/w --arch ResNet18 --random

Writes <out>/<Arch>.weights plus a <Arch>.weights.sha256 sidecar. Layout (little-endian):
"SKRW", u32 version 1, u32 count, then per tensor: u32 name length, name, u32 ndim,
i64 dims, float32 data. The classifier (fc / classifier) and integer buffers are dropped.
"""
import argparse
import hashlib
import pathlib
import struct

import torch
import torchvision

ARCHES = {
    "ResNet18": (torchvision.models.resnet18, "IMAGENET1K_V1", "fc."),
    "ResNet50": (torchvision.models.resnet50, "IMAGENET1K_V1", "fc."),
    "DenseNet121": (torchvision.models.densenet121, "IMAGENET1K_V1", "classifier."),
}


def export(arch, out_dir, random_init):
    build, weights, head = ARCHES[arch]
    model = build(weights=None if random_init else weights)
    entries = [(k, v) for k, v in model.state_dict().items()
               if not k.startswith(head) and v.is_floating_point()]
    blob = bytearray(b"SKRW")
    blob += struct.pack("<II", 1, len(entries))
    for name, t in entries:
        raw = name.encode()
        blob += struct.pack("<I", len(raw)) + raw
        blob += struct.pack("<I", t.dim())
        blob += struct.pack(f"<{t.dim()}q", *t.shape)
        blob += t.detach().to(torch.float32).contiguous().numpy().astype("<f4").tobytes()
    path = pathlib.Path(out_dir) / f"{arch}.weights"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(bytes(blob))
    digest = hashlib.sha256(blob).hexdigest()
    path.with_name(path.name + ".sha256").write_text(f"{digest}  {path.name}\n")
    print(f"{path}: {len(entries)} tensors, sha256 {digest}")


def main():
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--out", required=True)
    p.add_argument("--arch", choices=sorted(ARCHES), action="append")
    p.add_argument("--random", action="store_true", help="random init instead of ImageNet weights (no download)")
    args = p.parse_args()
    for arch in args.arch or sorted(ARCHES):
        export(arch, args.out, args.random)


if __name__ == "__main__":
    main()
