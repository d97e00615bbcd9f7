"""Run a checkpoint over a treebank and emit word-level feature records.

Output is JSON Lines, one object per sentence:
``{"id", "tokens", "hidden"?, "attention"?, "attention_kind"}`` with
word-level matrices, matching the consumer's ingestion format bit-strictly
(attention rows sum to 1, prefix matrices exactly lower-triangular).

Hidden layer k indexes the model's hidden-state stack, where 0 is the
embedding output and the last entry is the top layer.  Attention keys are
``layer.head`` with 0-based transformer layers.  Impact matrices (how much
masking word j moves word i's vector) are stored under ``impact.<layer>``
attention keys, row-normalized.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Iterator

import numpy as np
import torch

from .pooling import AlignmentError, pool_attention, pool_hidden, word_groups
from .treebank import read_sentences

KINDS = ("hidden", "attention", "impact")

# model families with left-to-right attention; decoder configs also count
_CAUSAL_MODEL_TYPES = {
    "gpt2", "gpt_neo", "gpt_neox", "gptj", "gpt_bigcode", "llama", "mistral",
    "opt", "falcon", "bloom", "xglm", "transfo-xl", "openai-gpt",
}


class ExtractError(Exception):
    pass


@dataclass(frozen=True)
class ExtractionJob:
    model: str
    treebank: str
    out: str
    side: str = "original"
    kinds: tuple[str, ...] = ("hidden", "attention")
    layers: tuple[int, ...] | None = None   # None = all
    heads: tuple[int, ...] | None = None    # None = all
    keep_punct: bool = False
    attention_kind: str = "auto"            # auto | full | prefix
    impact_layer: int | None = None         # None = last
    batch_size: int = 8
    device: str = "cpu"

    def __post_init__(self) -> None:
        if self.side not in ("original", "reversed"):
            raise ExtractError(f"unknown side {self.side!r}")
        bad = [k for k in self.kinds if k not in KINDS]
        if bad or not self.kinds:
            raise ExtractError(f"unknown feature kinds {bad}; expected subset of {KINDS}")
        if self.attention_kind not in ("auto", "full", "prefix"):
            raise ExtractError(f"unknown attention kind {self.attention_kind!r}")
        if self.batch_size < 1:
            raise ExtractError("batch size must be >= 1")


def load_checkpoint(path: str, device: str = "cpu"):
    """Tokenizer and model from a local or hub checkpoint, in eval mode."""
    from transformers import AutoModel, AutoTokenizer

    try:
        tokenizer = AutoTokenizer.from_pretrained(path)
        model = AutoModel.from_pretrained(path, attn_implementation="eager")
    except (OSError, ValueError) as exc:
        raise ExtractError(f"cannot load checkpoint {path!r}: {exc}") from exc
    if not tokenizer.is_fast:
        raise ExtractError(
            "a fast tokenizer is required for subword-to-word alignment"
        )
    model.eval()
    model.to(device)
    return tokenizer, model


def detect_attention_kind(config) -> str:
    if getattr(config, "is_decoder", False):
        return "prefix"
    return "prefix" if getattr(config, "model_type", "") in _CAUSAL_MODEL_TYPES else "full"


def _forward(model, encoded, need_attentions: bool):
    try:
        with torch.no_grad():
            return model(
                **encoded,
                output_hidden_states=True,
                output_attentions=need_attentions,
            )
    except RuntimeError as exc:
        if "out of memory" in str(exc).lower():
            raise ExtractError(
                f"{exc}; reduce --batch-size or split long sentences"
            ) from exc
        raise


def _mask_token_id(tokenizer) -> int:
    if tokenizer.mask_token_id is not None:
        return tokenizer.mask_token_id
    if tokenizer.unk_token_id is not None:
        return tokenizer.unk_token_id
    raise ExtractError(
        "model tokenizer has neither a mask nor an unk token; cannot perturb"
    )


def impact_matrix(
    model,
    tokenizer,
    words: list[str],
    layer: int | None = None,
    device: str = "cpu",
) -> np.ndarray:
    """Perturbation impact: how far word i's vector moves when word j is masked.

    One forward pass on the intact sentence plus one per masked word; the
    distance is Euclidean, taken at ``layer`` (default: top layer).  Rows are
    returned raw; the caller normalizes.
    """
    encoded = tokenizer([words], is_split_into_words=True, return_tensors="pt").to(device)
    groups = word_groups(encoded.word_ids(0), words)
    out = _forward(model, encoded, need_attentions=False)
    layer = len(out.hidden_states) - 1 if layer is None else layer
    base = pool_hidden(out.hidden_states[layer][0].cpu().numpy(), groups)

    n = len(words)
    mask_id = _mask_token_id(tokenizer)
    impact = np.zeros((n, n))
    input_ids = encoded["input_ids"]
    for j in range(n):
        masked_ids = input_ids.clone()
        masked_ids[0, groups[j]] = mask_id
        masked = dict(encoded)
        masked["input_ids"] = masked_ids
        masked_out = _forward(model, masked, need_attentions=False)
        pooled = pool_hidden(masked_out.hidden_states[layer][0].cpu().numpy(), groups)
        impact[:, j] = np.linalg.norm(base - pooled, axis=1)
    return impact


def _normalize_impact(impact: np.ndarray, kind: str) -> np.ndarray:
    n = impact.shape[0]
    out = impact.astype(np.float64).copy()
    if kind == "prefix" and n > 1:
        out[np.triu_indices(n, k=1)] = 0.0
    sums = out.sum(axis=1)
    for row in np.flatnonzero(sums == 0.0):
        support = row + 1 if kind == "prefix" else n
        out[row, :support] = 1.0 / support
        sums[row] = 1.0
    return out / sums[:, None]


def _batched(items: list, size: int) -> Iterator[list]:
    for start in range(0, len(items), size):
        yield items[start : start + size]


def extract_records(
    model,
    tokenizer,
    sentences: Iterable[tuple[str, list[str]]],
    kinds: tuple[str, ...] = ("hidden", "attention"),
    layers: tuple[int, ...] | None = None,
    heads: tuple[int, ...] | None = None,
    attention_kind: str = "auto",
    impact_layer: int | None = None,
    batch_size: int = 8,
    device: str = "cpu",
) -> Iterator[dict]:
    """Yield one feature record per sentence, in input order."""
    kind = detect_attention_kind(model.config) if attention_kind == "auto" else attention_kind
    need_attn = "attention" in kinds
    sentences = list(sentences)
    for batch in _batched(sentences, batch_size):
        encoded = tokenizer(
            [words for _, words in batch],
            is_split_into_words=True,
            padding=True,
            return_tensors="pt",
        ).to(device)
        out = _forward(model, encoded, need_attentions=need_attn)
        n_layers_hidden = len(out.hidden_states)
        hidden_layers = layers if layers is not None else tuple(range(n_layers_hidden))
        for idx, (sent_id, words) in enumerate(batch):
            try:
                groups = word_groups(encoded.word_ids(idx), words)
            except AlignmentError as exc:
                raise ExtractError(f"{sent_id}: {exc}") from exc
            record: dict = {"id": sent_id, "tokens": list(words)}
            if "hidden" in kinds:
                record["hidden"] = {}
                for layer in hidden_layers:
                    if not 0 <= layer < n_layers_hidden:
                        raise ExtractError(
                            f"{sent_id}: hidden layer {layer} out of range "
                            f"(model has 0..{n_layers_hidden - 1})"
                        )
                    pooled = pool_hidden(out.hidden_states[layer][idx].cpu().numpy(), groups)
                    record["hidden"][str(layer)] = pooled.tolist()
            attention: dict[str, list] = {}
            if need_attn:
                n_attn_layers = len(out.attentions)
                n_heads = out.attentions[0].shape[1]
                attn_layers = layers if layers is not None else tuple(range(n_attn_layers))
                attn_heads = heads if heads is not None else tuple(range(n_heads))
                for layer in attn_layers:
                    if not 0 <= layer < n_attn_layers:
                        raise ExtractError(
                            f"{sent_id}: attention layer {layer} out of range "
                            f"(model has 0..{n_attn_layers - 1})"
                        )
                    for head in attn_heads:
                        if not 0 <= head < n_heads:
                            raise ExtractError(
                                f"{sent_id}: head {head} out of range "
                                f"(model has 0..{n_heads - 1})"
                            )
                        pooled = pool_attention(
                            out.attentions[layer][idx, head].cpu().numpy(),
                            groups, kind, sent_id,
                        )
                        attention[f"{layer}.{head}"] = pooled.tolist()
            if "impact" in kinds:
                raw = impact_matrix(model, tokenizer, words, impact_layer, device)
                resolved = (
                    len(out.hidden_states) - 1 if impact_layer is None else impact_layer
                )
                attention[f"impact.{resolved}"] = _normalize_impact(raw, kind).tolist()
            if attention:
                record["attention"] = attention
                record["attention_kind"] = kind
            yield record


def run_job(job: ExtractionJob) -> int:
    """Execute an extraction job; returns the number of records written."""
    tokenizer, model = load_checkpoint(job.model, job.device)
    try:
        with open(job.treebank, encoding="utf-8") as handle:
            sentence_words = list(read_sentences(handle, keep_punct=job.keep_punct))
    except OSError as exc:
        raise ExtractError(f"cannot read treebank {job.treebank!r}: {exc}") from exc
    sentences = [(f"s{i}", words) for i, words in enumerate(sentence_words)]
    if job.side == "reversed":
        sentences = [(sid, words[::-1]) for sid, words in sentences]
    count = 0
    with open(job.out, "w", encoding="utf-8") as out:
        for record in extract_records(
            model, tokenizer, sentences,
            kinds=job.kinds, layers=job.layers, heads=job.heads,
            attention_kind=job.attention_kind, impact_layer=job.impact_layer,
            batch_size=job.batch_size, device=job.device,
        ):
            out.write(json.dumps(record) + "\n")
            count += 1
    return count
