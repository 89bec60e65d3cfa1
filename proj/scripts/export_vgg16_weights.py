#!/usr/bin/env python3
"""Export torchvision VGG16 ImageNet convolution weights to an MFRNET-WTS-1 file."""

import argparse
import os
import struct

import torch
import torchvision


def write_weights(path, tensors):
    with open(path + ".tmp", "wb") as f:
        f.write(b"MFRNET-WTS-1")
        f.write(struct.pack("<I", len(tensors)))
        for name, t in tensors:
            data = t.detach().to(torch.float32).contiguous().numpy()
            encoded = name.encode()
            f.write(struct.pack("<I", len(encoded)))
            f.write(encoded)
            f.write(struct.pack("<I", data.ndim))
            f.write(struct.pack(f"<{data.ndim}i", *data.shape))
            f.write(data.astype("<f4").tobytes())
    os.replace(path + ".tmp", path)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("out", help="destination .wts file")
    args = parser.parse_args()
    model = torchvision.models.vgg16(weights=torchvision.models.VGG16_Weights.IMAGENET1K_V1)
    tensors = [(k, v) for k, v in model.state_dict().items() if k.startswith("features.")]
    write_weights(args.out, tensors)
    print(f"wrote {len(tensors)} tensors to {args.out}")


if __name__ == "__main__":
    main()
