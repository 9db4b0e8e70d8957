"""Sentiment model backends.

Two backends share one interface (``score_batch(texts) -> list of (p_pos,
p_neg, p_neu)``, probabilities summing to 1):

* ``builtin:<revision>`` — a pinned lexicon classifier with no external
  dependencies; fully deterministic, so fixtures stay stable forever.
* ``hf:<model-id-or-path>`` — a FinBERT-class transformers checkpoint, loaded
  from the local cache or a path; inference mode only.
"""

from __future__ import annotations

import math
import re
from typing import Protocol

DEFAULT_MODEL = "builtin:finlex-v1"

FINBERT_MODEL = "hf:ProsusAI/finbert"


class SentimentModel(Protocol):
    revision: str

    def score_batch(self, texts: list[str]) -> list[tuple[float, float, float]]: ...


class ModelLoadError(Exception):
    pass


# Pinned finlex-v1 wordlists. Editing these lists requires a new revision
# string, otherwise previously frozen fixtures would silently change.
_FINLEX_V1_POSITIVE = (
    "beat", "beats", "boom", "bullish", "buyback", "climb", "climbs", "exceed",
    "exceeds", "gain", "gains", "grow", "grows", "growth", "high", "higher",
    "jump", "jumps", "outperform", "outperforms", "profit", "profitable",
    "profits", "rally", "rallies", "rebound", "record", "rise", "rises",
    "soar", "soars", "strong", "surge", "surges", "surpass", "surpasses",
    "top", "tops", "up", "upbeat", "upgrade", "upgraded", "wins",
)
_FINLEX_V1_NEGATIVE = (
    "bankrupt", "bankruptcy", "bearish", "crash", "crashes", "cut", "cuts",
    "decline", "declines", "deficit", "down", "downgrade", "downgraded",
    "drop", "drops", "fall", "falls", "fear", "fears", "fine", "fined",
    "fraud", "lawsuit", "layoff", "layoffs", "loses", "loss", "losses",
    "low", "lower", "miss", "misses", "plunge", "plunges", "probe", "recall",
    "recession", "risk", "risks", "sink", "sinks", "slump", "slumps", "tumble",
    "tumbles", "weak", "worst",
)

_FINLEX_REVISIONS = {
    "finlex-v1": (_FINLEX_V1_POSITIVE, _FINLEX_V1_NEGATIVE, 0.5),
}


class LexiconModel:
    """Keyword-count classifier with a softmax over (pos, neg, neutral) logits."""

    def __init__(self, revision: str):
        if revision not in _FINLEX_REVISIONS:
            raise ModelLoadError(
                f"unknown builtin revision {revision!r}; available: {sorted(_FINLEX_REVISIONS)}"
            )
        positive, negative, neutral_bias = _FINLEX_REVISIONS[revision]
        self.revision = revision
        self._neutral_bias = neutral_bias
        self._positive = re.compile(
            r"(?<!\w)(?:" + "|".join(positive) + r")(?!\w)", re.IGNORECASE
        )
        self._negative = re.compile(
            r"(?<!\w)(?:" + "|".join(negative) + r")(?!\w)", re.IGNORECASE
        )

    def score_batch(self, texts: list[str]) -> list[tuple[float, float, float]]:
        return [self._score(text) for text in texts]

    def _score(self, text: str) -> tuple[float, float, float]:
        logits = (
            float(len(self._positive.findall(text))),
            float(len(self._negative.findall(text))),
            self._neutral_bias,
        )
        peak = max(logits)
        exps = [math.exp(l - peak) for l in logits]
        total = sum(exps)
        return exps[0] / total, exps[1] / total, exps[2] / total


class TransformersModel:
    """FinBERT-class text classifier via the transformers pipeline."""

    _LABEL_KEYS = {"positive": 0, "negative": 1, "neutral": 2}

    def __init__(self, model_id: str, revision: str | None, batch_size: int):
        try:
            from transformers import pipeline
        except ImportError as exc:
            raise ModelLoadError(f"transformers is not installed: {exc}") from None
        try:
            self._pipe = pipeline(
                "text-classification",
                model=model_id,
                revision=revision,
                top_k=None,
                batch_size=batch_size,
            )
        except Exception as exc:
            raise ModelLoadError(f"cannot load model {model_id!r}: {exc}") from None
        self.revision = revision or "default"
        self._model_id = model_id

    def score_batch(self, texts: list[str]) -> list[tuple[float, float, float]]:
        results = self._pipe(texts)
        scored = []
        for per_text in results:
            probs = [0.0, 0.0, 0.0]
            for entry in per_text:
                key = self._LABEL_KEYS.get(entry["label"].lower())
                if key is None:
                    raise ModelLoadError(
                        f"model {self._model_id!r} emits label {entry['label']!r}; "
                        "expected positive/negative/neutral"
                    )
                probs[key] = float(entry["score"])
            total = sum(probs)
            scored.append((probs[0] / total, probs[1] / total, probs[2] / total))
        return scored


def load_model(spec: str, batch_size: int = 64, revision: str | None = None) -> SentimentModel:
    """Resolve a model spec: ``builtin:<revision>`` or ``hf:<model-id-or-path>``."""
    if ":" not in spec:
        raise ModelLoadError(f"model spec {spec!r} must look like 'builtin:<rev>' or 'hf:<id>'")
    kind, _, ident = spec.partition(":")
    if kind == "builtin":
        return LexiconModel(ident)
    if kind == "hf":
        return TransformersModel(ident, revision, batch_size)
    raise ModelLoadError(f"unknown model backend {kind!r}")
