"""Concept embeddings and text conditioners.

A concept embedding is a named, learnable matrix of token vectors.  A text
conditioner turns a sequence of tokens (concept embeddings and/or frozen
vocabulary tokens) into the conditioning vector a denoiser consumes.
"""
from __future__ import annotations

from abc import abstractmethod
from dataclasses import dataclass, field
from typing import Sequence

import torch
import torch.nn as nn

from .errors import ShapeMismatchError
from .utils import torch_generator

# Token-sequence budget of CLIP-style text encoders; embeddings larger than
# this cannot be injected into a standard prompt.
MAX_VECTORS_PER_TOKEN = 75


@dataclass
class ConceptEmbedding:
    """Named learnable matrix of ``(n_vectors, dim)`` token vectors."""

    name: str
    vectors: torch.Tensor
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.vectors.dim() != 2:
            raise ShapeMismatchError(
                f"embedding vectors must be 2-D (n_vectors, dim), got {tuple(self.vectors.shape)}"
            )
        n = self.vectors.shape[0]
        if not (1 <= n <= MAX_VECTORS_PER_TOKEN):
            raise ValueError(
                f"n_vectors must be in [1, {MAX_VECTORS_PER_TOKEN}], got {n}"
            )
        if not torch.isfinite(self.vectors).all():
            raise ValueError("embedding vectors must be finite")

    @property
    def n_vectors(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def detached(self) -> "ConceptEmbedding":
        return ConceptEmbedding(self.name, self.vectors.detach().clone(), dict(self.metadata))


class TextConditioner(nn.Module):
    """Interface: ``encode(tokens) -> conditioning vector``.

    Encoding is deterministic; gradients flow only into concept-embedding
    vectors, never into the frozen vocabulary.
    """

    @property
    @abstractmethod
    def dim(self) -> int:
        raise NotImplementedError

    @abstractmethod
    def encode(self, tokens: Sequence[ConceptEmbedding | str]) -> torch.Tensor:
        raise NotImplementedError

    def unconditional(self) -> torch.Tensor | None:
        """The distinguished unconditional conditioning value."""
        return None


class ToyConditioner(TextConditioner):
    """Mean-pooling conditioner with a small frozen random vocabulary.

    ``encode`` concatenates the token rows of all inputs and mean-pools them
    into a single ``(dim,)`` vector.  Vocabulary tokens are unit-norm rows
    drawn once from ``vocab_seed`` and registered as buffers, so they are
    frozen by construction and participate in parameter fingerprints.
    """

    VOCAB = ("object", "healthy-base", "diseased-base")

    def __init__(
        self,
        dim: int = 32,
        vocab_seed: int = 271_828,
        vocab: dict | None = None,
        vocab_names: Sequence[str] | None = None,
    ):
        super().__init__()
        self._dim = dim
        self.vocab_seed = vocab_seed
        if vocab is not None:
            self._names = tuple(vocab)
        elif vocab_names is not None:
            self._names = tuple(vocab_names)
        else:
            self._names = self.VOCAB
        g = torch_generator(vocab_seed)
        for name in self._names:
            if vocab is not None:
                row = vocab[name].detach().clone().reshape(1, dim)
            else:
                row = torch.randn(1, dim, generator=g)
                row = row / row.norm()
            self.register_buffer(self._buffer_key(name), row)

    @staticmethod
    def _buffer_key(name: str) -> str:
        return "vocab_" + name.replace("-", "_")

    @property
    def dim(self) -> int:
        return self._dim

    @property
    def vocab_names(self) -> tuple[str, ...]:
        return self._names

    def token_rows(self, token: ConceptEmbedding | str) -> torch.Tensor:
        if isinstance(token, ConceptEmbedding):
            if token.dim != self._dim:
                raise ShapeMismatchError(
                    f"embedding dim {token.dim} does not match conditioner dim {self._dim}"
                )
            return token.vectors
        if token not in self._names:
            raise ValueError(f"unknown vocabulary token {token!r}; known: {self._names}")
        return getattr(self, self._buffer_key(token))

    def encode(self, tokens: Sequence[ConceptEmbedding | str]) -> torch.Tensor:
        if len(tokens) == 0:
            raise ValueError("cannot encode an empty token sequence")
        rows = torch.cat([self.token_rows(t) for t in tokens], dim=0)
        return rows.mean(dim=0)

    def unconditional(self) -> torch.Tensor:
        return torch.zeros(self._dim)

    def config(self) -> dict:
        return {"dim": self._dim, "vocab_seed": self.vocab_seed, "vocab_names": list(self._names)}
