"""Write the offline LLM response cache shipped in data/llm-cache.

The answers are hand-written in the style of a chat-completions reply. They
are not captures from a live endpoint; each entry says so in `provenance`.
Phrases from published explainability examples are included
verbatim so the parsed knowledge bases contain them.

Cache layout mirrors the Rust client: one JSON file per
sha256(template_id NUL category NUL model NUL).
"""

import argparse
import hashlib
import json
from pathlib import Path

MODEL = "gpt-3.5-turbo"
CAPTURED_AT = "2026-10-19T00:00:00Z"
PROVENANCE = "hand-authored fixture (not a live capture); temperature 0 style answer"

TEMPLATES = {
    "designed-v1": "Q: According to published literature, what are useful medical visual features for distinguishing {Diagnostic Category} in a photo?",
    "baseline-v1": "Q: What are useful visual features for distinguishing {Diagnostic Category} in a photo?",
}

DESIGNED = {
    "Normal lungs": [
        "No visible cavities or consolidations",
        "Absence of pleural effusions",
        "Clear and distinct lung borders",
        "Sharp costophrenic angles",
        "Normal size and shape of the heart",
        "Symmetrical lung fields with normal vascular markings",
        "Trachea in the midline",
    ],
    "Tuberculosis": [
        "Upper lobe infiltrates",
        "Cavitation with thick walls",
        "Hilar and mediastinal lymphadenopathy",
        "Miliary nodules scattered throughout both lungs",
        "Pleural effusion",
        "Fibrotic scarring and volume loss in the upper zones",
        "Calcified granulomas",
    ],
    "Pneumonia": [
        "Air bronchogram sign",
        "Lobar or segmental consolidation",
        "Patchy alveolar opacities",
        "Blurred heart or diaphragm borders (silhouette sign)",
        "Parapneumonic pleural effusion",
        "Interstitial infiltrates",
    ],
    "No Diabetic Retinopathy": [
        "Clear and well-defined optic disc margins",
        "Normal retinal vessel caliber",
        "Absence of microaneurysms",
        "No retinal hemorrhages or exudates",
        "Uniform retinal background color",
    ],
    "Mild Nonproliferative Retinopathy": [
        "Few scattered microaneurysms",
        "Small dot hemorrhages",
        "Absence of venous beading",
        "No neovascularization",
    ],
    "Moderate Nonproliferative Retinopathy": [
        "Multiple microaneurysms and dot-blot hemorrhages",
        "Hard exudates near the macula",
        "Cotton wool spots",
        "Mild venous caliber changes",
    ],
    "Severe Nonproliferative Retinopathy": [
        "Venous beading and loops",
        "Neovascularization",
        "Extensive intraretinal hemorrhages in all four quadrants",
        "Intraretinal microvascular abnormalities",
        "Numerous cotton wool spots",
    ],
    "Proliferative Retinopathy": [
        "Fibrous proliferation",
        "Tractional retinal detachment",
        "Vitreous hemorrhage",
        "New vessels at the optic disc",
        "Preretinal hemorrhage",
    ],
    "Primary Central Nervous System Lymphoma": [
        "Restricted diffusion on MRI",
        "Absence of calcifications",
        "Homogeneous contrast enhancement",
        "Periventricular location",
        "Lesions crossing the corpus callosum",
    ],
}

BASELINE = {
    "Normal lungs": [
        "Dark areas on both sides of the image",
        "Visible ribs",
        "Even brightness",
        "Smooth outlines",
    ],
    "Tuberculosis": [
        "White patches in the lungs",
        "Holes or cavities",
        "Cloudy areas",
        "Coughing up blood",
        "Weight loss",
    ],
    "Pneumonia": [
        "White cloudy areas",
        "Fluid in the lungs",
        "Fever and chills",
        "Blurry edges",
    ],
    "No Diabetic Retinopathy": [
        "Orange-red background",
        "Visible blood vessels",
        "Bright round optic disc",
    ],
    "Mild Nonproliferative Retinopathy": [
        "Small red dots",
        "Slight blurriness",
        "Mostly normal appearance",
    ],
    "Moderate Nonproliferative Retinopathy": [
        "More red dots and spots",
        "Yellow patches",
        "Blurred vision",
    ],
    "Severe Nonproliferative Retinopathy": [
        "Many dark red spots",
        "Swollen blood vessels",
        "White fluffy patches",
    ],
    "Proliferative Retinopathy": [
        "Abnormal new blood vessels",
        "Bleeding into the eye",
        "Scar tissue",
        "Floaters",
    ],
    "Primary Central Nervous System Lymphoma": [
        "Bright spot in the brain",
        "Swelling around the tumor",
        "Headaches",
    ],
}


def answer(category, phrases, designed):
    if designed:
        head = f"According to published literature, useful medical visual features for distinguishing {category} include:"
    else:
        head = f"Some useful visual features for distinguishing {category} in a photo are:"
    body = "\n".join(f"{i}. {p}." for i, p in enumerate(phrases, 1))
    return f"{head}\n\n{body}"


def key(template_id, category, model):
    h = hashlib.sha256()
    for part in (template_id, category, model):
        h.update(part.encode())
        h.update(b"\0")
    return h.hexdigest()


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="data/llm-cache")
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    n = 0
    for template_id, table in (("designed-v1", DESIGNED), ("baseline-v1", BASELINE)):
        for category, phrases in table.items():
            entry = {
                "template_id": template_id,
                "category": category,
                "model": MODEL,
                "prompt": TEMPLATES[template_id].replace("{Diagnostic Category}", category),
                "response": answer(category, phrases, template_id == "designed-v1"),
                "captured_at": CAPTURED_AT,
                "provenance": PROVENANCE,
            }
            path = out / f"{key(template_id, category, MODEL)}.json"
            path.write_text(json.dumps(entry, indent=2, ensure_ascii=False) + "\n")
            n += 1
    print(f"wrote {n} entries to {out}")


if __name__ == "__main__":
    main()
