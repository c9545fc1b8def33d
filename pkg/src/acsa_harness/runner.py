"""End-to-end experiment orchestration.

A run loads one dataset split, builds one prompt per sample (drawing a
UMR exemplar per sample position under the run seed), sends each request
through the cached chat client, post-processes the outputs, and writes
one JSONL record per sample plus a manifest. With the replay backend the
whole pipeline is bit-deterministic across runs and machines.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, fields
from datetime import datetime, timezone
from pathlib import Path

from . import datasets as ds
from . import postprocess as pp
from .llm import (
    BackendRefused,
    ChatClient,
    ChatRequest,
    DecodeParams,
    HttpBackend,
    MissingFixture,
    RateLimited,
    ReplayBackend,
    TransportError,
)
from .prompts import build_baseline_prompt, build_umr_prompt, template_version
from .umr import (
    EXEMPLAR_KEEP,
    exemplar_draw_indices,
    format_exemplars,
    load_document,
    truncate_document,
)

logger = logging.getLogger(__name__)

RESULTS_SCHEMA_VERSION = 1
MANIFEST_SCHEMA_VERSION = 1
TRANSPORT_FAILURE_LIMIT = 0.10

METHODS = ("baseline", "umr")
BACKENDS = ("http", "replay")


class ConfigError(Exception):
    pass


class RunDataError(Exception):
    """Results and dataset files that cannot be joined coherently."""


# ---------------------------------------------------------------------------
# Configuration


@dataclass
class RunConfig:
    dataset: str = ""
    dataset_path: str = ""
    method: str = ""
    model_id: str = ""
    backend: str = ""
    base_url: str = ""
    fixture_dir: str = ""
    api_key_env: str = "ACSA_API_KEY"
    exemplar_paths: tuple[str, ...] = ()
    seed: int = 0
    cutoff: float = pp.DEFAULT_CUTOFF
    concurrency: int = 4
    cache_dir: str = ""
    output_path: str = ""
    max_output_tokens: int = 4096
    temperature: float = 0.0
    top_p: float = 1.0
    strict_greedy: bool = False
    drop_conflict: bool = False
    inventory_path: str = ""
    split: str = "test"

    @classmethod
    def field_names(cls) -> tuple[str, ...]:
        return tuple(f.name for f in fields(cls))

    @classmethod
    def from_mapping(cls, mapping: dict) -> "RunConfig":
        config = cls()
        config.update(mapping)
        return config

    def update(self, mapping: dict) -> None:
        known = set(self.field_names())
        for key, value in mapping.items():
            if key not in known:
                raise ConfigError(f"unknown config key {key!r}")
            if key == "exemplar_paths":
                if not isinstance(value, (list, tuple)) or not all(
                    isinstance(v, str) for v in value
                ):
                    raise ConfigError("exemplar_paths must be an array of strings")
                value = tuple(value)
            setattr(self, key, value)

    def validate(self) -> None:
        if self.dataset not in ds.DATASET_NAMES:
            raise ConfigError(f"dataset must be one of {ds.DATASET_NAMES}, got {self.dataset!r}")
        if not self.dataset_path or not Path(self.dataset_path).exists():
            raise ConfigError(f"dataset_path does not exist: {self.dataset_path!r}")
        if self.method not in METHODS:
            raise ConfigError(f"method must be one of {METHODS}, got {self.method!r}")
        if not self.model_id:
            raise ConfigError("model_id is required")
        if self.backend not in BACKENDS:
            raise ConfigError(f"backend must be one of {BACKENDS}, got {self.backend!r}")
        if self.backend == "http" and not self.base_url:
            raise ConfigError("base_url is required for the http backend")
        if self.backend == "replay":
            if not self.fixture_dir or not Path(self.fixture_dir).is_dir():
                raise ConfigError(f"fixture_dir does not exist: {self.fixture_dir!r}")
        if self.method == "umr":
            if len(self.exemplar_paths) != 5:
                raise ConfigError(
                    f"method 'umr' needs exactly 5 exemplar_paths, got {len(self.exemplar_paths)}"
                )
            for path in self.exemplar_paths:
                if not Path(path).exists():
                    raise ConfigError(f"exemplar file does not exist: {path!r}")
        if self.inventory_path and not Path(self.inventory_path).exists():
            raise ConfigError(f"inventory_path does not exist: {self.inventory_path!r}")
        if not self.output_path:
            raise ConfigError("output_path is required")
        if self.concurrency < 1:
            raise ConfigError("concurrency must be >= 1")
        if not 0.0 <= self.cutoff <= 1.0:
            raise ConfigError(f"cutoff must be in [0, 1], got {self.cutoff}")
        if self.split not in ("train", "test"):
            raise ConfigError(f"split must be 'train' or 'test', got {self.split!r}")

    def manifest_path(self) -> Path:
        return Path(self.output_path).with_suffix(".manifest.json")


def parse_flat_config(text: str) -> dict:
    """Parse the flat TOML-shaped ``key = value`` config format.

    Values are quoted strings, single-line arrays of quoted strings,
    integers, floats, or true/false. ``#`` starts a comment outside
    quotes.
    """
    result: dict = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, _, rest = line.partition("=")
        key = key.strip()
        if not key:
            raise ConfigError(f"line {lineno}: missing key")
        result[key] = _parse_config_value(rest.strip(), lineno)
    return result


def _parse_config_value(text: str, lineno: int):
    if text.startswith('"'):
        value, remainder = _read_quoted(text, lineno)
        _expect_only_comment(remainder, lineno)
        return value
    if text.startswith("["):
        items = []
        rest = text[1:].lstrip()
        while True:
            if not rest:
                raise ConfigError(f"line {lineno}: unterminated array")
            if rest.startswith("]"):
                _expect_only_comment(rest[1:], lineno)
                return items
            if not rest.startswith('"'):
                raise ConfigError(f"line {lineno}: arrays may contain only quoted strings")
            value, rest = _read_quoted(rest, lineno)
            items.append(value)
            rest = rest.lstrip()
            if rest.startswith(","):
                rest = rest[1:].lstrip()
    bare = text.split("#", 1)[0].strip()
    if not bare:
        raise ConfigError(f"line {lineno}: missing value")
    if bare == "true":
        return True
    if bare == "false":
        return False
    try:
        return int(bare)
    except ValueError:
        pass
    try:
        return float(bare)
    except ValueError:
        raise ConfigError(f"line {lineno}: cannot parse value {bare!r}") from None


def _read_quoted(text: str, lineno: int) -> tuple[str, str]:
    out: list[str] = []
    i = 1
    while i < len(text):
        ch = text[i]
        if ch == "\\" and i + 1 < len(text) and text[i + 1] in '\\"':
            out.append(text[i + 1])
            i += 2
            continue
        if ch == '"':
            return "".join(out), text[i + 1 :]
        out.append(ch)
        i += 1
    raise ConfigError(f"line {lineno}: unterminated string")


def _expect_only_comment(rest: str, lineno: int) -> None:
    rest = rest.strip()
    if rest and not rest.startswith("#"):
        raise ConfigError(f"line {lineno}: unexpected trailing text {rest!r}")


def load_config(path: str | Path, overrides: dict | None = None) -> RunConfig:
    config = RunConfig.from_mapping(parse_flat_config(Path(path).read_text("utf-8")))
    if overrides:
        config.update(overrides)
    return config


# ---------------------------------------------------------------------------
# Run pipeline


@dataclass(frozen=True)
class _Job:
    index: int
    sample_id: str
    request: ChatRequest
    exemplar_file_id: str | None


@dataclass(frozen=True)
class RunSummary:
    results_path: str
    manifest_path: str
    n_samples: int
    n_cache_hits: int
    n_format_failures: int
    n_transport_errors: int
    n_dropped_pairs: int

    @property
    def transport_error_rate(self) -> float:
        return self.n_transport_errors / self.n_samples if self.n_samples else 0.0


def _load_split(config: RunConfig) -> ds.DatasetSplit:
    inventory = ds.read_inventory(config.inventory_path) if config.inventory_path else None
    return ds.load_dataset(
        config.dataset,
        config.dataset_path,
        split=config.split,
        drop_conflict=config.drop_conflict,
        inventory=inventory,
    )


def make_backend(config: RunConfig):
    if config.backend == "replay":
        return ReplayBackend(config.fixture_dir)
    return HttpBackend(config.base_url, api_key=os.environ.get(config.api_key_env))


def prepare_jobs(config: RunConfig, split: ds.DatasetSplit) -> list[_Job]:
    """Build every request up front, in sample order.

    The per-sample exemplar draw is indexed by the sample's position in
    the split, so concurrent completion order cannot perturb randomness.
    """
    categories = ds.category_inventory(split)
    params = DecodeParams(config.temperature, config.top_p, config.max_output_tokens)
    domain = ds.DOMAIN_BY_DATASET[config.dataset]
    jobs: list[_Job] = []
    if config.method == "umr":
        docs = [
            truncate_document(load_document(path), EXEMPLAR_KEEP)
            for path in config.exemplar_paths
        ]
        blocks = [format_exemplars(doc) for doc in docs]
        draws = exemplar_draw_indices(config.seed, len(split.samples), len(docs))
        for i, sample in enumerate(split.samples):
            doc = docs[draws[i]]
            bundle = build_umr_prompt(
                blocks[draws[i]],
                sample.text,
                domain,
                categories,
                exemplar_file_id=doc.source_id,
            )
            request = ChatRequest(config.model_id, bundle.system, bundle.user, params)
            jobs.append(_Job(i, sample.id, request, doc.source_id))
    else:
        for i, sample in enumerate(split.samples):
            bundle = build_baseline_prompt(categories, sample.text)
            request = ChatRequest(config.model_id, bundle.system, bundle.user, params)
            jobs.append(_Job(i, sample.id, request, None))
    return jobs


def _pairs_to_json(pairs) -> list[list[str]]:
    return sorted([p.category, p.polarity.value] for p in pairs)


def _outcome_to_json(outcome: pp.MappingOutcome) -> dict:
    return {
        "raw": [outcome.raw.category_text, outcome.raw.polarity_text],
        "mapped": None
        if outcome.mapped is None
        else [outcome.mapped.category, outcome.mapped.polarity.value],
        "similarity": outcome.similarity,
        "dropped_reason": outcome.dropped_reason,
    }


def _process_job(job: _Job, client: ChatClient, categories, cutoff: float):
    record = {
        "schema_version": RESULTS_SCHEMA_VERSION,
        "sample_id": job.sample_id,
        "prompt_sha256": job.request.cache_key,
        "template_version": template_version(),
        "exemplar_file_id": job.exemplar_file_id,
        "raw_output": None,
        "raw_pairs": [],
        "outcomes": [],
        "pairs": [],
        "format_failure": False,
        "error": None,
    }
    try:
        response = client.chat(job.request)
    except (TransportError, RateLimited, BackendRefused, MissingFixture) as err:
        record["error"] = f"{type(err).__name__}: {err}"
        return record, None, 0
    record["raw_output"] = response.text
    try:
        raw_pairs = pp.extract_pair_list(response.text)
    except pp.NoListFound:
        record["format_failure"] = True
        raw_pairs = []
    pairs, outcomes = pp.canonicalize(raw_pairs, categories, cutoff)
    record["raw_pairs"] = [[r.category_text, r.polarity_text] for r in raw_pairs]
    record["outcomes"] = [_outcome_to_json(o) for o in outcomes]
    record["pairs"] = _pairs_to_json(pairs)
    dropped = sum(1 for o in outcomes if o.dropped_reason is not None)
    return record, response.backend, dropped


def _atomic_write(path: Path, data: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f"{path.name}.tmp.{os.getpid()}.{threading.get_ident()}")
    tmp.write_text(data, "utf-8")
    os.replace(tmp, path)


def run(config: RunConfig) -> RunSummary:
    """Execute one (dataset, method, model) run end to end.

    Per-sample transport errors are recorded, not fatal; the caller
    decides what to do when their rate exceeds TRANSPORT_FAILURE_LIMIT.
    Results are written in sample order; the manifest is written last,
    atomically.
    """
    config.validate()
    started = datetime.now(timezone.utc).isoformat()
    t0 = time.perf_counter()
    split = _load_split(config)
    categories = ds.category_inventory(split)
    jobs = prepare_jobs(config, split)
    client = ChatClient(
        make_backend(config),
        cache_dir=config.cache_dir or None,
        strict_greedy=config.strict_greedy,
        max_concurrency=config.concurrency,
    )
    with ThreadPoolExecutor(max_workers=config.concurrency) as pool:
        futures = [
            pool.submit(_process_job, job, client, categories, config.cutoff)
            for job in jobs
        ]
        outcomes = [future.result() for future in futures]  # submission order

    records = [record for record, _, _ in outcomes]
    n_cache_hits = sum(1 for _, backend, _ in outcomes if backend == "cache")
    n_dropped = sum(dropped for _, _, dropped in outcomes)
    n_errors = sum(1 for record in records if record["error"] is not None)
    n_format = sum(1 for record in records if record["format_failure"])

    lines = [json.dumps(r, sort_keys=True, ensure_ascii=True) for r in records]
    results_blob = "\n".join(lines) + "\n" if lines else ""
    results_path = Path(config.output_path)
    _atomic_write(results_path, results_blob)

    manifest = {
        "schema_version": MANIFEST_SCHEMA_VERSION,
        "config": {**asdict(config), "exemplar_paths": list(config.exemplar_paths)},
        "template_version": template_version(),
        # Shoes holds full reviews; they are prompted as-is, never sentence-split
        "text_unit": "full-review" if config.dataset == "Shoes" else "sentence",
        "seed": config.seed,
        "started_at": started,
        "finished_at": datetime.now(timezone.utc).isoformat(),
        "duration_s": round(time.perf_counter() - t0, 3),
        "counts": {
            "samples": len(records),
            "cache_hits": n_cache_hits,
            "format_failures": n_format,
            "dropped_pairs": n_dropped,
            "transport_errors": n_errors,
            "conflict_dropped": split.n_conflict_dropped,
        },
        "results_sha256": hashlib.sha256(results_blob.encode("utf-8")).hexdigest(),
    }
    manifest_path = config.manifest_path()
    _atomic_write(manifest_path, json.dumps(manifest, sort_keys=True, indent=1) + "\n")

    logger.info(
        "%s/%s/%s: %d samples, %d cache hits, %d format failures, %d transport errors",
        config.dataset, config.method, config.model_id,
        len(records), n_cache_hits, n_format, n_errors,
    )
    return RunSummary(
        str(results_path),
        str(manifest_path),
        len(records),
        n_cache_hits,
        n_format,
        n_errors,
        n_dropped,
    )


# ---------------------------------------------------------------------------
# Scoring


def read_results(path: str | Path) -> dict[str, dict]:
    """Read a results JSONL file into a sample_id -> record map."""
    records: dict[str, dict] = {}
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, 1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as err:
                raise RunDataError(f"{path}:{lineno}: invalid JSON ({err})") from err
            sid = record.get("sample_id")
            if not isinstance(sid, str):
                raise RunDataError(f"{path}:{lineno}: record without sample_id")
            if sid in records:
                raise RunDataError(f"{path}:{lineno}: duplicate sample_id {sid!r}")
            records[sid] = record
    return records


def score_run(results_path: str | Path, split: ds.DatasetSplit):
    """Join results to gold by sample id and compute the micro-F1 report.

    Samples without a record are scored as empty predictions and reported
    via n_missing_records.
    """
    from .metrics import score

    records = read_results(results_path)
    known_ids = {sample.id for sample in split.samples}
    unknown = sorted(set(records) - known_ids)
    if unknown:
        raise RunDataError(
            f"{results_path}: {len(unknown)} record ids not present in the "
            f"dataset (first: {unknown[0]!r})"
        )
    preds = []
    golds = []
    ids = []
    n_missing = 0
    n_format = 0
    for sample in split.samples:
        record = records.get(sample.id)
        if record is None:
            n_missing += 1
            pred: frozenset = frozenset()
        else:
            pred = frozenset(
                ds.Pair(category, ds.Polarity(polarity))
                for category, polarity in record.get("pairs", [])
            )
            if record.get("format_failure"):
                n_format += 1
        preds.append(pred)
        golds.append(sample.gold)
        ids.append(sample.id)
    return score(preds, golds, ids, n_format_failures=n_format, n_missing_records=n_missing)
