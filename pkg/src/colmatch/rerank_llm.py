"""LLM-based reranking of retrieved candidates.

Each source column is sent to a chat-completion endpoint together with its
top candidates, rendered through a fixed four-block prompt.  The response
must follow the strict "name(score); ..." grammar; parsing is attempted up
to three times (transport errors included) before the column falls back to
its embedding scores.  Candidates the model did not score are kept but
rescaled so their best score lines up just under the model's lowest score.
"""

from __future__ import annotations

import json
import logging
import os
import re
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import requests

from .retrieval import MatchCandidate, MatchList

log = logging.getLogger(__name__)

DEFAULT_TOP_K = 20
RETRY_ATTEMPTS = 3
LEFTOVER_EPSILON = 1e-9
API_KEY_ENV = "LLM_API_KEY"
DEFAULT_TIMEOUT_SECONDS = 60.0
DEFAULT_MAX_CONCURRENT = 4

INSTRUCTION_BLOCK = (
    "From a score of 0.00 to 1.00, judge the similarity of the candidate "
    "column in the source table to each target column in the target table. "
    "Each column is represented by its name and a sample of its respective "
    "values, if available."
)

ONE_SHOT_BLOCK = (
    "Example:\n"
    "Candidate Column:\n"
    "Column: EmpID, Sample values: [100, 101, 102]\n"
    "Target Columns:\n"
    "Column: WorkerID, Sample values: [100, 101, 102]\n"
    "Column: EmpCode, Sample values: [00A, 00B, 00C]\n"
    'Column: StaffName, Sample values: ["Alice", "Bob", "Charlie"]\n'
    "Response: WorkerID(0.95); EmpCode(0.30); StaffName(0.05)"
)

FORMAT_BLOCK = (
    "Provide the name of each target column followed by its similarity "
    "score in parentheses, formatted to two decimals, and separated by "
    "semicolons. Rank the column-score pairs in descending order. Exclude "
    "additional information and quotations."
)

# one "name(score)" entry; names may not contain "(" or ";"
_ENTRY_RE = re.compile(r"\s*([^(;]*?)\s*\((\d+(?:\.\d{1,2})?)\)\s*")


class LlmTransportError(RuntimeError):
    """Request failed or the response envelope was malformed."""


class LlmParseError(ValueError):
    """Response content did not match the required grammar."""


@dataclass(frozen=True)
class LlmConfig:
    endpoint: str
    model: str = "default"
    temperature: float = 0.0
    retries: int = RETRY_ATTEMPTS
    timeout: float = DEFAULT_TIMEOUT_SECONDS
    max_concurrent: int = DEFAULT_MAX_CONCURRENT

    def __post_init__(self) -> None:
        if not self.endpoint:
            raise ValueError("llm endpoint required")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.retries != RETRY_ATTEMPTS:
            raise ValueError("retries is fixed at 3")
        if self.max_concurrent < 1:
            raise ValueError("max_concurrent must be >= 1")


def column_line(name: str, values: Sequence[str]) -> str:
    return f"Column: {name}, Sample values: [{', '.join(values)}]"


def build_prompt(source, candidates) -> str:
    """Assemble the four prompt blocks for one source column.

    `source` is a (name, sample values) pair, `candidates` an ordered list
    of such pairs.  Blocks are joined by blank lines; column renderings use
    the same comma-joined value style as the one-shot example.
    """
    if not candidates:
        raise ValueError("candidates must be non-empty")
    source_name, source_values = source
    input_block = "\n".join(
        ["Source Column:", column_line(source_name, source_values), "Target Columns:"]
        + [column_line(name, values) for name, values in candidates]
        + ["Response:"]
    )
    return "\n\n".join([INSTRUCTION_BLOCK, ONE_SHOT_BLOCK, FORMAT_BLOCK, input_block])


def parse_response(text: str):
    """Parse "name(score); name(score); ..." into (name, score) pairs.

    Scores allow at most two fraction digits and clamp into [0, 1].  The
    result is re-sorted by score descending (stable, so ties keep the
    model's order) even when the model ignored the requested ordering.
    """
    if text is None or not text.strip():
        raise LlmParseError("empty response")
    entries = []
    for segment in text.split(";"):
        match = _ENTRY_RE.fullmatch(segment)
        if match is None:
            raise LlmParseError(f"unparseable entry: {segment.strip()[:60]!r}")
        entries.append((match.group(1), min(float(match.group(2)), 1.0)))
    if not entries:
        raise LlmParseError("no entries in response")
    entries.sort(key=lambda entry: -entry[1])
    return entries


class HttpLlmClient:
    """Single-attempt chat-completion client; retry policy lives upstream."""

    def __init__(self, config: LlmConfig) -> None:
        self.config = config

    def complete(self, prompt: str) -> str:
        headers = {}
        api_key = os.environ.get(API_KEY_ENV)
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        payload = {
            "model": self.config.model,
            "temperature": self.config.temperature,
            "messages": [{"role": "user", "content": prompt}],
        }
        try:
            resp = requests.post(
                self.config.endpoint,
                json=payload,
                headers=headers,
                timeout=self.config.timeout,
            )
            resp.raise_for_status()
            content = resp.json()["choices"][0]["message"]["content"]
        except (requests.RequestException, ValueError, KeyError, IndexError, TypeError) as exc:
            raise LlmTransportError(
                f"llm endpoint {self.config.endpoint}: {exc}"
            ) from exc
        if not isinstance(content, str):
            raise LlmTransportError(
                f"llm endpoint {self.config.endpoint}: non-text message content"
            )
        return content


class ReplayLlmClient:
    """Replays recorded responses from a JSONL transcript.

    Each line is {"prompt": .., "response": ..}; repeated prompts are served
    in recording order, re-serving the last response when exhausted.  An
    unknown prompt raises LlmTransportError, which upstream treats like any
    failed attempt.
    """

    def __init__(self, path) -> None:
        self._responses = {}
        self._cursor = {}
        self._lock = threading.Lock()
        for line in Path(path).read_text(encoding="utf-8").splitlines():
            if not line.strip():
                continue
            record = json.loads(line)
            self._responses.setdefault(record["prompt"], []).append(record["response"])

    def complete(self, prompt: str) -> str:
        with self._lock:
            queue = self._responses.get(prompt)
            if not queue:
                raise LlmTransportError("no recorded response for prompt")
            i = self._cursor.get(prompt, 0)
            self._cursor[prompt] = i + 1
        return queue[min(i, len(queue) - 1)]


class RecordingLlmClient:
    """Wraps a client and appends successful exchanges to a JSONL transcript."""

    def __init__(self, inner, path) -> None:
        self.inner = inner
        self.path = Path(path)
        self._lock = threading.Lock()

    def complete(self, prompt: str) -> str:
        response = self.inner.complete(prompt)
        record = json.dumps({"prompt": prompt, "response": response}, ensure_ascii=False)
        with self._lock:
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(record + "\n")
        return response


def _rerank_column(
    candidates, source_name, source_samples, target_samples, client, retries, n_send
):
    if not candidates:
        return []
    sent = candidates[:n_send]
    prompt = build_prompt(
        (source_name, source_samples.get(source_name, [])),
        [(c.target, target_samples.get(c.target, [])) for c in sent],
    )
    log.debug("rerank prompt for %r: ~%d tokens", source_name, len(prompt.split()))
    parsed = None
    for attempt in range(retries):
        try:
            parsed = parse_response(client.complete(prompt))
            break
        except (LlmTransportError, LlmParseError) as exc:
            log.debug("attempt %d for %r failed: %s", attempt + 1, source_name, exc)
            parsed = None
    if parsed is None:
        return list(candidates)  # full fallback to embedding scores
    return _merge_scores(candidates, sent, parsed, source_name)


def _merge_scores(candidates, sent, parsed, source_name):
    by_name = {c.target: c for c in sent}
    matched = {}
    scored = []  # (target, llm score) in parse order
    for name, score in parsed:
        cand = by_name.get(name)
        if cand is None or cand.target in matched:
            continue  # unknown names ignored; first occurrence wins on repeats
        matched[cand.target] = score
        scored.append((cand.target, score))
    if not scored:
        return list(candidates)
    # leftovers: candidates the model omitted plus the not-sent tail
    s_min = min(score for _, score in scored)
    leftovers = [c for c in candidates if c.target not in matched]
    rescaled = []
    if leftovers:
        max_leftover = max(c.score for c in leftovers)
        g = 1.0
        if max_leftover >= s_min:
            g = s_min / (max_leftover + LEFTOVER_EPSILON)
        rescaled = [(c.target, c.score * g) for c in leftovers]
    merged = scored + rescaled
    merged.sort(key=lambda entry: -entry[1])  # stable: scored order, then leftovers
    return [
        MatchCandidate(source_name, target, score, rank)
        for rank, (target, score) in enumerate(merged, start=1)
    ]


def rerank_llm(
    matches: MatchList,
    source_samples,
    target_samples,
    config: Optional[LlmConfig] = None,
    n_send: int = DEFAULT_TOP_K,
    client=None,
) -> MatchList:
    """Re-score the top n_send candidates of every source column via the LLM.

    `source_samples` / `target_samples` map column names to the sampled
    values used in the prompt renderings.  A custom `client` (anything with
    complete(prompt) -> str) overrides the HTTP client, e.g. for replay.
    """
    if n_send < 1:
        raise ValueError("n_send must be >= 1")
    if client is None:
        if config is None:
            raise ValueError("llm endpoint required")
        client = HttpLlmClient(config)
    retries = config.retries if config is not None else RETRY_ATTEMPTS
    max_workers = config.max_concurrent if config is not None else DEFAULT_MAX_CONCURRENT

    sources = list(matches.per_source)

    def work(source_name):
        return _rerank_column(
            matches.per_source[source_name],
            source_name,
            source_samples,
            target_samples,
            client,
            retries,
            n_send,
        )

    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        results = list(pool.map(work, sources))
    per_source = dict(zip(sources, results))
    return MatchList(matches.source_table, matches.target_table, per_source, matches.k)
