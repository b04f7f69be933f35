"""Build the small CLIP-architecture encoder bundle used by the test suites.

Pretrained checkpoints are large and need network access to a model hub, so the
repository ships a randomly initialised model with the ViT-B/32 layout scaled
down (patch 32, 224 input, 77-token context, real CLIP BPE vocabulary). The
golden fixtures are produced in this same process with the reference
PIL/torchvision preprocessing and the reference Python tokenizer.

Usage: python tools/make_test_bundle.py --out assets/tiny-clip
"""

import argparse
import gzip
import hashlib
import json
import os
import shutil

import numpy as np
import open_clip
import torch
from open_clip.tokenizer import SimpleTokenizer
from PIL import Image
from torchvision import transforms as T

MEAN = (0.48145466, 0.4578275, 0.40821073)
STD = (0.26862954, 0.26130258, 0.27577711)
SEED = 20231019

GOLDEN_TEXTS = [
    "",
    "Pleural effusion",
    "No visible cavities or consolidations",
    "Absence of pleural effusions",
    "Venous beading and loops",
    "Neovascularization",
    "Air bronchogram sign",
    "Restricted diffusion on MRI",
    "it's   a Photo of   TUBERCULOSIS!!",
    "donaudampfschifffahrtsgesellschaftskapitänsmütze 42",
    " ".join(["lungs"] * 1000),
]


def sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def reference_preprocess(path):
    tf = T.Compose([
        T.Resize(224, interpolation=T.InterpolationMode.BICUBIC),
        T.CenterCrop(224),
        T.ToTensor(),
        T.Normalize(MEAN, STD),
    ])
    return tf(Image.open(path).convert("RGB"))


def make_images(out):
    rng = np.random.default_rng(SEED)
    specs = []
    # RGB gradient with noise, landscape 448x336, stored as JPEG
    h, w = 336, 448
    yy, xx = np.mgrid[0:h, 0:w]
    rgb = np.stack([
        (xx * 255 / (w - 1)),
        (yy * 255 / (h - 1)),
        ((xx + yy) % 97) * 255 / 96,
    ], axis=-1)
    rgb = np.clip(rgb + rng.normal(0, 12, rgb.shape), 0, 255).astype(np.uint8)
    Image.fromarray(rgb, "RGB").save(os.path.join(out, "gradient_448x336.jpg"), quality=92)
    specs.append("gradient_448x336.jpg")
    # grayscale chest-film-like blob, portrait 250x300, PNG
    h, w = 300, 250
    yy, xx = np.mgrid[0:h, 0:w]
    blob = 200 * np.exp(-(((xx - 80) / 40.0) ** 2 + ((yy - 150) / 90.0) ** 2))
    blob += 200 * np.exp(-(((xx - 170) / 40.0) ** 2 + ((yy - 150) / 90.0) ** 2))
    gray = np.clip(30 + blob + rng.normal(0, 6, blob.shape), 0, 255).astype(np.uint8)
    Image.fromarray(gray, "L").save(os.path.join(out, "xray_like_250x300.png"))
    specs.append("xray_like_250x300.png")
    # small RGB checkerboard, upsampling path, 160x120 PNG
    h, w = 120, 160
    yy, xx = np.mgrid[0:h, 0:w]
    chk = (((xx // 10) + (yy // 10)) % 2) * 255
    small = np.stack([chk, 255 - chk, (xx * 255 // (w - 1))], axis=-1).astype(np.uint8)
    Image.fromarray(small, "RGB").save(os.path.join(out, "checker_160x120.png"))
    specs.append("checker_160x120.png")
    return specs


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", required=True)
    args = ap.parse_args()
    out = args.out
    os.makedirs(out, exist_ok=True)
    golden_dir = os.path.join(out, "golden")
    os.makedirs(golden_dir, exist_ok=True)

    torch.manual_seed(SEED)
    torch.backends.mha.set_fastpath_enabled(False)
    model = open_clip.CLIP(
        embed_dim=64,
        vision_cfg=dict(image_size=224, layers=2, width=64, head_width=32, patch_size=32),
        text_cfg=dict(context_length=77, vocab_size=49408, width=32, heads=2, layers=2),
    ).eval()

    class Visual(torch.nn.Module):
        def __init__(self, m):
            super().__init__()
            self.m = m

        def forward(self, image):
            return self.m.encode_image(image)

    class Text(torch.nn.Module):
        def __init__(self, m):
            super().__init__()
            self.m = m

        def forward(self, text):
            return self.m.encode_text(text)

    visual_path = os.path.join(out, "visual.onnx")
    text_path = os.path.join(out, "text.onnx")
    with torch.no_grad():
        torch.onnx.export(
            Visual(model), (torch.zeros(1, 3, 224, 224),), visual_path,
            input_names=["image"], output_names=["image_features"],
            dynamic_axes={"image": {0: "batch"}, "image_features": {0: "batch"}},
            opset_version=17, dynamo=False,
        )
        torch.onnx.export(
            Text(model), (torch.zeros(1, 77, dtype=torch.long),), text_path,
            input_names=["text"], output_names=["text_features"],
            dynamic_axes={"text": {0: "batch"}, "text_features": {0: "batch"}},
            opset_version=17, dynamo=False,
        )

    vocab_src = os.path.join(os.path.dirname(open_clip.__file__), "bpe_simple_vocab_16e6.txt.gz")
    vocab_path = os.path.join(out, "bpe_simple_vocab_16e6.txt.gz")
    shutil.copyfile(vocab_src, vocab_path)

    tok = SimpleTokenizer(bpe_path=vocab_src)
    token_fixtures = []
    for text in GOLDEN_TEXTS:
        ids = tok([text], context_length=77)[0].tolist()
        token_fixtures.append({"text": text, "ids": ids})

    text_fixtures = []
    with torch.no_grad():
        ids = torch.tensor([t["ids"] for t in token_fixtures[1:8]], dtype=torch.long)
        feats = model.encode_text(ids)
        feats = feats / feats.norm(dim=-1, keepdim=True)
    for t, e in zip(token_fixtures[1:8], feats):
        text_fixtures.append({"text": t["text"], "embedding": e.tolist()})

    image_fixtures = []
    for name in make_images(golden_dir):
        path = os.path.join(golden_dir, name)
        x = reference_preprocess(path)
        tensor_name = name.rsplit(".", 1)[0] + ".tensor.f32"
        tensor_path = os.path.join(golden_dir, tensor_name)
        x.numpy().astype("<f4").tofile(tensor_path)
        with torch.no_grad():
            e = model.encode_image(x.unsqueeze(0))[0]
            e = e / e.norm()
        image_fixtures.append({
            "image": name,
            "image_sha256": sha256(path),
            "tensor": tensor_name,
            "tensor_sha256": sha256(tensor_path),
            "shape": list(x.shape),
            "embedding": e.tolist(),
        })

    golden = {
        "seed": SEED,
        "tokens": token_fixtures,
        "texts": text_fixtures,
        "images": image_fixtures,
    }
    golden_path = os.path.join(golden_dir, "golden.json")
    with open(golden_path, "w") as f:
        json.dump(golden, f, indent=1)

    manifest = {
        "format_version": 1,
        "model_name": "tiny-clip-b32-random",
        "source": "open_clip.CLIP random init (seed %d); ViT-B/32 layout, reduced width/depth" % SEED,
        "embedding_dim": 64,
        "visual": {"path": "visual.onnx", "sha256": sha256(visual_path),
                   "input": "image", "output": "image_features"},
        "text": {"path": "text.onnx", "sha256": sha256(text_path),
                 "input": "text", "output": "text_features"},
        "tokenizer": {"merges": {"path": "bpe_simple_vocab_16e6.txt.gz", "sha256": sha256(vocab_path)},
                      "context_length": 77},
        "preprocess": {"image_size": 224, "mean": list(MEAN), "std": list(STD),
                       "interpolation": "bicubic"},
        "golden": {"path": "golden/golden.json", "sha256": sha256(golden_path)},
    }
    with open(os.path.join(out, "manifest.json"), "w") as f:
        json.dump(manifest, f, indent=2)
    print("wrote", out)


if __name__ == "__main__":
    main()
