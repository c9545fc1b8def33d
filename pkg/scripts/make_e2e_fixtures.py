#!/usr/bin/env python3
"""Regenerate the committed offline end-to-end fixture set.

Writes tests/fixtures/e2e/: four 10-sample datasets in their native file
formats, five UMR exemplar files, and one replay fixture per (dataset,
method, sample) request hash. Deterministic: rerunning produces identical
bytes. Rerun this after any change to the prompt templates or request
hashing, then commit the result.
"""

from __future__ import annotations

import json
import shutil
import sys
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(REPO / "src"))

from acsa_harness.datasets import load_dataset  # noqa: E402
from acsa_harness.llm import write_cache_file  # noqa: E402
from acsa_harness.runner import RunConfig, prepare_jobs  # noqa: E402

E2E = REPO / "tests" / "fixtures" / "e2e"

MODEL_ID = "fixture-model-a"
SEED = 7

MISSPELLED_POLARITY = {"positive": "positve", "negative": "negtive", "neutral": "netural"}

# ---------------------------------------------------------------------------
# Synthetic datasets (10 samples each, official file schemas)

RESTAURANT_SAMPLES = [
    ("e2e:0", "The pasta was outstanding and the sauce was rich.", [("FOOD#QUALITY", "positive")]),
    ("e2e:1", "Our waiter ignored us for twenty minutes.", [("SERVICE#GENERAL", "negative")]),
    ("e2e:2", "Great wine list, but the cocktails were overpriced.",
     [("DRINKS#STYLE_OPTIONS", "positive"), ("DRINKS#PRICES", "negative")]),
    ("e2e:3", "The dining room felt warm and inviting.", [("AMBIENCE#GENERAL", "positive")]),
    ("e2e:4", "We walked past it twice before finding the entrance.", [("LOCATION#GENERAL", "negative")]),
    ("e2e:5", "The tasting menu is fairly priced for the portions.", [("RESTAURANT#PRICES", "positive")]),
    ("e2e:6", "Bread arrived stale and cold.", [("FOOD#QUALITY", "negative")]),
    ("e2e:7", "A solid neighborhood spot overall.", [("RESTAURANT#GENERAL", "positive")]),
    ("e2e:8", "The espresso was average at best.", [("DRINKS#QUALITY", "neutral")]),
    ("e2e:9", "They validated our parking without being asked.", [("SERVICE#GENERAL", "positive")]),
]

LAPTOP_SAMPLES = [
    ("e2e:0", "The battery easily lasts a full work day.", [("BATTERY#OPERATION_PERFORMANCE", "positive")]),
    ("e2e:1", "Keyboard flex makes typing unpleasant.", [("KEYBOARD#DESIGN_FEATURES", "negative")]),
    ("e2e:2", "Gorgeous display, though the speakers are tinny.",
     [("DISPLAY#QUALITY", "positive"), ("MULTIMEDIA_DEVICES#QUALITY", "negative")]),
    ("e2e:3", "Support took three weeks to answer one email.", [("SUPPORT#QUALITY", "negative")]),
    ("e2e:4", "It boots in seconds and never stutters.", [("LAPTOP#OPERATION_PERFORMANCE", "positive")]),
    ("e2e:5", "For this price you get a lot of machine.", [("LAPTOP#PRICE", "positive")]),
    ("e2e:6", "The hinge started creaking within a month.", [("LAPTOP#QUALITY", "negative")]),
    ("e2e:7", "Does everything I need it to do.", [("LAPTOP#GENERAL", "positive")]),
    ("e2e:8", "The trackpad is fine, nothing special.", [("MOUSE#GENERAL", "neutral")]),
    ("e2e:9", "Fan noise under load is noticeable.", [("LAPTOP#OPERATION_PERFORMANCE", "negative")]),
]

MAMS_SAMPLES = [
    ("e2e:0", "The dumplings were fantastic but the hostess was curt.",
     [("food", "positive"), ("staff", "negative")]),
    ("e2e:1", "Portions are generous for the price.", [("price", "positive")]),
    ("e2e:2", "The menu offers little for vegetarians.", [("menu", "negative")]),
    ("e2e:3", "Lovely patio seating in the summer.", [("ambience", "positive")]),
    ("e2e:4", "Service was quick even during the lunch rush.", [("service", "positive")]),
    ("e2e:5", "The place is cramped and loud.", [("place", "negative")]),
    ("e2e:6", "Food was okay, nothing memorable.", [("food", "neutral")]),
    ("e2e:7", "Our server forgot two of our dishes.", [("service", "negative")]),
    ("e2e:8", "An ordinary spot for an ordinary meal.", [("miscellaneous", "neutral")]),
    ("e2e:9", "The prix fixe menu changes weekly, which keeps it interesting.", [("menu", "positive")]),
]

SHOES_SAMPLES = [
    ("e2e:0", "These boots are incredibly comfortable straight out of the box. "
              "I wore them on a twelve hour shift and my feet felt fine.",
     [("comfort", "positive")]),
    ("e2e:1", "The sizing runs at least half a size small. I had to return my usual size "
              "and the exchange process was slow.", [("sizing", "negative"), ("customer service", "negative")]),
    ("e2e:2", "After two months the sole started separating from the upper. "
              "Disappointing for the price.", [("durability", "negative"), ("price", "negative")]),
    ("e2e:3", "Sharp looking sneakers that go with everything.", [("style", "positive")]),
    ("e2e:4", "The leather feels premium and the stitching is clean.", [("material", "positive")]),
    ("e2e:5", "Decent arch support, though the insole flattens quickly.",
     [("arch support", "neutral"), ("insole", "negative")]),
    ("e2e:6", "They kept my feet dry through a rainy commute.", [("waterproofing", "positive")]),
    ("e2e:7", "Laces are too short to double knot.", [("laces", "negative")]),
    ("e2e:8", "An average pair of running shoes at an average price.",
     [("value", "neutral")]),
    ("e2e:9", "The toe box is roomy enough for wide feet.", [("fit", "positive")]),
]


def write_restaurant_xml(path: Path, samples) -> None:
    lines = ['<?xml version="1.0" encoding="UTF-8"?>', "<Reviews>", '  <Review rid="e2e">', "    <sentences>"]
    for sid, text, pairs in samples:
        lines.append(f'      <sentence id="{sid}">')
        lines.append(f"        <text>{text}</text>")
        if pairs:
            lines.append("        <Opinions>")
            for category, polarity in pairs:
                lines.append(
                    f'          <Opinion target="NULL" category="{category}" '
                    f'polarity="{polarity}" from="0" to="0"/>'
                )
            lines.append("        </Opinions>")
        lines.append("      </sentence>")
    lines += ["    </sentences>", "  </Review>", "</Reviews>", ""]
    path.write_text("\n".join(lines), "utf-8")


def write_mams_xml(path: Path, samples) -> None:
    lines = ['<?xml version="1.0" encoding="UTF-8"?>', "<sentences>"]
    for sid, text, pairs in samples:
        lines.append(f'  <sentence id="{sid}">')
        lines.append(f"    <text>{text}</text>")
        lines.append("    <aspectCategories>")
        for category, polarity in pairs:
            lines.append(f'      <aspectCategory category="{category}" polarity="{polarity}"/>')
        lines.append("    </aspectCategories>")
        lines.append("  </sentence>")
    lines += ["</sentences>", ""]
    path.write_text("\n".join(lines), "utf-8")


def write_shoes_jsonl(path: Path, samples) -> None:
    lines = [
        json.dumps({"id": sid, "text": text, "pairs": [list(p) for p in pairs]}, sort_keys=True)
        for sid, text, pairs in samples
    ]
    path.write_text("\n".join(lines) + "\n", "utf-8")


# ---------------------------------------------------------------------------
# Exemplar files (five, mixed corpus and plain marker styles)

EXEMPLAR_SENTENCES = [
    ("The museum reopened after the renovation.",
     "(s{k}m / reopen-01\n  :ARG1 (s{k}m2 / museum)\n  :time (s{k}m3 / after\n    :op1 (s{k}m4 / renovation))\n  :aspect performance)"),
    ("Snow fell quietly over the harbor.",
     "(s{k}f / fall-01\n  :ARG1 (s{k}f2 / snow)\n  :manner (s{k}f3 / quiet)\n  :place (s{k}f4 / harbor)\n  :aspect activity)"),
    ("The committee approved the new schedule.",
     "(s{k}a / approve-01\n  :ARG0 (s{k}a2 / committee)\n  :ARG1 (s{k}a3 / schedule\n    :mod (s{k}a4 / new))\n  :aspect performance)"),
    ("Her garden has remarkable roses.",
     "(s{k}h / have-attribute-91\n  :ARG1 (s{k}h2 / rose\n    :part-of (s{k}h3 / garden))\n  :ARG2 (s{k}h4 / remarkable)\n  :aspect state)"),
    ("The train to the coast was delayed again.",
     "(s{k}d / delay-01\n  :ARG1 (s{k}d2 / train\n    :goal (s{k}d3 / coast))\n  :frequency (s{k}d4 / again)\n  :aspect performance)"),
]


def write_exemplars(directory: Path) -> list[str]:
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for f in range(5):
        entries = []
        # four entries in most files, exactly three in ex3: truncation must
        # keep the first three either way
        n_entries = 3 if f == 3 else 4
        for j in range(n_entries):
            text, graph = EXEMPLAR_SENTENCES[(f + j) % len(EXEMPLAR_SENTENCES)]
            graph = graph.replace("{k}", str(j + 1))
            if f < 2:  # corpus style with headers and skipped blocks
                entries.append(
                    f"# :: snt{j + 1}\t{text}\n"
                    f"Words: {text.rstrip('.')} .\n\n"
                    f"# sentence level graph:\n{graph}\n\n"
                    f"# alignment:\ns{j + 1}: 0-0\n\n"
                    f"# document level annotation:\n"
                    f"(s{j + 1}s0 / sentence\n  :temporal ((s{j + 1}t / document-creation-time)))\n"
                )
            else:  # plain marker style
                entries.append(f"::snt {text}\n{graph}\n")
        path = directory / f"ex{f}.umr"
        path.write_text("\n".join(entries), "utf-8")
        paths.append(str(path.relative_to(REPO)))
    return paths


# ---------------------------------------------------------------------------
# Canned model outputs


def _misspell(word: str) -> str:
    mid = len(word) // 2
    return word[: mid - 1] + word[mid:] if len(word) > 3 else word


def perturbed_pairs(index: int, gold, inventory, method: str):
    """Deterministic answer pairs for one sample: exact gold with a sprinkle
    of misses, spurious additions, and misspellings keyed on the index."""
    pairs = [[p.category, p.polarity.value] for p in sorted(gold)]
    branch = index % 10
    if branch == 2 and pairs:
        pairs = pairs[:-1] if method == "baseline" else pairs[1:]
    if branch == 5 and method == "baseline":
        used = {c for c, _ in pairs}
        extra = next(c for c in inventory if c not in used)
        pairs.append([extra, "neutral"])
    if branch == 3:
        pairs = [[_misspell(c), MISSPELLED_POLARITY[p]] for c, p in pairs]
    if branch == 8 and method == "umr":
        # maps to nothing in any inventory: canonicalization must drop it
        pairs.append(["qqqq zz vvvv", "positive"])
    return pairs


def render_list(pairs) -> str:
    if not pairs:
        return "[]"
    inner = ", ".join(f"('{c}', '{p}')" for c, p in pairs)
    return f"[{inner}]"


def canned_output(index: int, sample, inventory, method: str, domain: str) -> str:
    branch = index % 10
    if method == "baseline":
        if branch == 7:
            return (
                "I'm sorry, but I cannot identify a category-sentiment pair "
                "for this review with any confidence."
            )
        pairs = perturbed_pairs(index, sample.gold, inventory, method)
        return (
            f"Looking at the review, the relevant aspect categories and their "
            f"sentiments are:\n{render_list(pairs)}"
        )
    # structured four-step output
    if branch == 7:
        pairs = []
    else:
        pairs = perturbed_pairs(index, sample.gold, inventory, method)
    aspect_lines = "\n".join(
        f"Aspect: [{c.lower()}], Opinion: [{p}]" for c, p in pairs
    ) or "No relevant aspects found."
    category_lines = "\n".join(
        f"Aspect: [{c.lower()}], Category: [{c}]" for c, p in pairs
    ) or "No categories apply."
    return (
        "Step 1: UMR Parsing\n"
        f"::snt {sample.text}\n"
        "(s1h / have-attribute-91\n"
        f"  :ARG1 (s1a / {domain})\n"
        "  :ARG2 (s1o / opinion)\n"
        "  :aspect state)\n\n"
        "Step 2: Aspect and Opinion Extraction\n"
        f"{aspect_lines}\n\n"
        "Step 3: Aspect Categorization\n"
        f"{category_lines}\n\n"
        "Step 4: Sentiment Classification and Python List Output\n"
        f"{render_list(pairs)}"
    )


# ---------------------------------------------------------------------------


def main() -> None:
    if E2E.exists():
        shutil.rmtree(E2E)
    datasets_dir = E2E / "datasets"
    replay_dir = E2E / "replay"
    datasets_dir.mkdir(parents=True)
    replay_dir.mkdir(parents=True)

    write_restaurant_xml(datasets_dir / "laptop16_test.xml", LAPTOP_SAMPLES)
    write_restaurant_xml(datasets_dir / "restaurant16_test.xml", RESTAURANT_SAMPLES)
    write_mams_xml(datasets_dir / "mams_test.xml", MAMS_SAMPLES)
    write_shoes_jsonl(datasets_dir / "shoes_test.jsonl", SHOES_SAMPLES)
    exemplar_paths = write_exemplars(E2E / "exemplars")

    dataset_files = {
        "Laptop16": "datasets/laptop16_test.xml",
        "Restaurant16": "datasets/restaurant16_test.xml",
        "MAMS": "datasets/mams_test.xml",
        "Shoes": "datasets/shoes_test.jsonl",
    }

    n_fixtures = 0
    for dataset, rel_path in dataset_files.items():
        split = load_dataset(dataset, E2E / rel_path)
        inventory = list(split.categories)
        from acsa_harness.datasets import DOMAIN_BY_DATASET

        domain = DOMAIN_BY_DATASET[dataset]
        for method in ("baseline", "umr"):
            config = RunConfig(
                dataset=dataset,
                dataset_path=str(E2E / rel_path),
                method=method,
                model_id=MODEL_ID,
                backend="replay",
                fixture_dir=str(replay_dir),
                seed=SEED,
                output_path="unused.jsonl",
                exemplar_paths=tuple(str(REPO / p) for p in exemplar_paths)
                if method == "umr"
                else (),
            )
            jobs = prepare_jobs(config, split)
            for index, job in enumerate(jobs):
                text = canned_output(index, split.samples[index], inventory, method, domain)
                write_cache_file(replay_dir / f"{job.request.cache_key}.json", job.request, text)
                n_fixtures += 1

    meta = {
        "model_id": MODEL_ID,
        "seed": SEED,
        "datasets": dataset_files,
        "exemplars": exemplar_paths,
        "replay_dir": "replay",
        "n_fixtures": n_fixtures,
    }
    (E2E / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", "utf-8")
    print(f"wrote {n_fixtures} replay fixtures under {E2E}")


if __name__ == "__main__":
    main()
