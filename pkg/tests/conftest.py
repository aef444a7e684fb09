import numpy as np
import pytest

from selfspec.core import Vocab
from selfspec.synthmodel import ModelSpec, SyntheticModel


class ScriptedModel:
    """Draft Dists are one-hot on token 0; the verifier rejects at chosen absolute positions.

    At a rejecting position the verifier puts all mass on token 1, so the
    accept probability is exactly 0 and the residual is one-hot on 1.
    """

    def __init__(self, reject_at=(), vocab_size=6, draft_conf=1.0):
        self.vocab = Vocab(vocab_size)
        self.reject_at = set(reject_at)
        self.draft_conf = draft_conf
        self.calls = []

    def _onehot(self, i):
        d = np.zeros(self.vocab.size)
        d[i] = 1.0
        return d

    def forward(self, context, tokens, positions, mask, queries, *, verifier=False, predict_offset=0):
        self.calls.append("verify" if verifier else "draft")
        out = []
        for r in queries:
            pos = int(positions[r]) + predict_offset
            if verifier:
                out.append(self._onehot(1 if pos in self.reject_at else 0))
            else:
                d = np.zeros(self.vocab.size)
                d[0] = self.draft_conf
                d[1] = 1.0 - self.draft_conf
                out.append(d)
        return np.array(out).reshape(len(out), self.vocab.size)


@pytest.fixture
def scripted():
    return ScriptedModel


@pytest.fixture
def synth():
    def make(**kw):
        kw.setdefault("vocab_size", 32)
        kw.setdefault("seed", 11)
        return SyntheticModel(ModelSpec(**kw))
    return make
