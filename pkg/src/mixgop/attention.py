"""Learnable phoneme-wise attention over segment scores.

One logit per phoneme; softmax over an utterance's positions (repeated
phonemes share a logit) gives bounded weights summing to one. The logits
are trained to maximize a rank correlation between attention-pooled scores
and ground truth, made differentiable by soft ranking: the Euclidean
projection of the scaled inputs onto the permutahedron of (1..n), computed
with sort + pool-adjacent-violators isotonic regression. The Jacobian is
block-averaging on the isotonic blocks, so exact JVPs/VJPs are cheap.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata
from sklearn.base import BaseEstimator

from .errors import DegenerateInput, TooFewUtterances, UnknownPhoneme
from .evaluate import EvalReport, ScoreTable, kendall_tau
from .feature_store import FeatureSet
from .optim import Adam
from .validation import check_vector


def _isotonic_nonincreasing(y: np.ndarray) -> tuple[np.ndarray, list[int]]:
    """L2 isotonic fit under u_1 >= ... >= u_n via PAV.

    Returns the fit and the pooled block sizes (the Jacobian's structure).
    """
    sums: list[float] = []
    counts: list[int] = []
    for value in y:
        sums.append(float(value))
        counts.append(1)
        while len(sums) > 1 and sums[-2] * counts[-1] < sums[-1] * counts[-2]:
            sums[-2] += sums[-1]
            counts[-2] += counts[-1]
            sums.pop()
            counts.pop()
    out = np.empty_like(y)
    start = 0
    for total, count in zip(sums, counts):
        out[start : start + count] = total / count
        start += count
    return out, counts


@dataclass
class SoftRankResult:
    """Soft ranks plus enough structure to apply the (symmetric) Jacobian."""

    values: np.ndarray
    _perm: np.ndarray = field(repr=False)
    _inv_perm: np.ndarray = field(repr=False)
    _blocks: list[int] = field(repr=False)
    _scale: float = field(repr=False)

    def _block_average(self, v: np.ndarray) -> np.ndarray:
        out = np.empty_like(v)
        start = 0
        for size in self._blocks:
            out[start : start + size] = v[start : start + size].mean()
            start += size
        return out

    def jvp(self, vector) -> np.ndarray:
        """Jacobian-vector product d soft_rank(v) @ vector."""
        vector = np.asarray(vector, dtype=np.float64)
        inner = vector - self._block_average(vector[self._perm])[self._inv_perm]
        return inner * self._scale

    # the L2 projection Jacobian is symmetric
    vjp = jvp


def soft_rank_with_grad(v, regularization_strength: float = 1.0) -> SoftRankResult:
    """Ascending soft rank: projection of v/eps onto the permutahedron of 1..n."""
    if regularization_strength <= 0:
        raise ValueError("regularization_strength must be positive")
    v = check_vector(v, name="v")
    n = v.shape[0]
    theta = v / regularization_strength
    perm = np.argsort(-theta, kind="stable")
    s = theta[perm]
    w = np.arange(n, 0, -1, dtype=np.float64)
    dual, blocks = _isotonic_nonincreasing(s - w)
    primal = s - dual
    inv_perm = np.empty(n, dtype=np.intp)
    inv_perm[perm] = np.arange(n)
    return SoftRankResult(
        values=primal[inv_perm],
        _perm=perm,
        _inv_perm=inv_perm,
        _blocks=blocks,
        _scale=1.0 / regularization_strength,
    )


def soft_rank(v, regularization_strength: float = 1.0) -> np.ndarray:
    return soft_rank_with_grad(v, regularization_strength).values


class AttentionPooler(BaseEstimator):
    """Phoneme-wise attention pooling of segment scores.

    With all-zero logits this reduces exactly to mean pooling. Training
    gradient-ascends the Pearson correlation between soft ranks of the
    pooled predictions and (hard, tie-averaged) ranks of the ground truth,
    oriented by the correlation's initial sign so improvement always means
    a larger absolute rank correlation.
    """

    def __init__(
        self,
        inventory: tuple[str, ...] = (),
        lr: float = 1e-2,
        max_iter: int = 200,
        regularization_strength: float = 1.0,
    ):
        self.inventory = inventory
        self.lr = lr
        self.max_iter = max_iter
        self.regularization_strength = regularization_strength

    def _ensure_logits(self):
        if getattr(self, "w_", None) is None:
            self.w_ = np.zeros(len(self.inventory))
            self._index = {p: i for i, p in enumerate(self.inventory)}

    def _indices(self, phonemes) -> np.ndarray:
        self._ensure_logits()
        try:
            return np.array([self._index[p] for p in phonemes], dtype=np.intp)
        except KeyError as exc:
            raise UnknownPhoneme(f"phoneme {exc.args[0]!r} not in inventory") from None

    def attention_weights(self, phonemes) -> np.ndarray:
        """Per-position softmax weights; equal phonemes share one logit."""
        if len(phonemes) == 0:
            raise ValueError("phoneme list must be non-empty")
        self._ensure_logits()
        z = self.w_[self._indices(phonemes)]
        z = z - z.max()
        e = np.exp(z)
        return e / e.sum()

    def pool(self, segments) -> float:
        """Attention-weighted sum of (phoneme, score) segments.

        Computed as sum(e_i * s_i) / sum(e_i) with unnormalized exp weights,
        so zero logits reproduce the plain arithmetic mean bit-for-bit.
        """
        if len(segments) == 0:
            raise ValueError("segment list must be non-empty")
        phonemes = [p for p, _ in segments]
        scores = np.array([s for _, s in segments], dtype=np.float64)
        self._ensure_logits()
        z = self.w_[self._indices(phonemes)]
        e = np.exp(z - z.max())
        return float(np.add.reduce(e * scores) / np.add.reduce(e))

    def fit(self, utterances, y):
        """Train logits on [(phoneme, score), ...] lists with targets y."""
        self._ensure_logits()
        y = np.asarray(y, dtype=np.float64)
        if len(utterances) != y.shape[0]:
            raise ValueError("utterances and y must be aligned")
        if len(utterances) < 2:
            raise TooFewUtterances("need at least 2 utterances to train")
        idx = [self._indices([p for p, _ in segs]) for segs in utterances]
        scores = [np.array([s for _, s in segs], dtype=np.float64) for segs in utterances]

        target = rankdata(y, method="average")
        t_c = target - target.mean()
        t_norm = float(np.linalg.norm(t_c))
        if t_norm == 0.0:
            raise ValueError("ground truth is constant; correlation undefined")

        def predictions(w):
            m = np.empty(len(idx))
            alphas = []
            for u, (ids, s) in enumerate(zip(idx, scores)):
                z = w[ids]
                z = z - z.max()
                a = np.exp(z)
                a /= a.sum()
                alphas.append(a)
                m[u] = np.dot(a, s)
            return m, alphas

        def correlation(m):
            sr = soft_rank_with_grad(m, self.regularization_strength)
            r_c = sr.values - sr.values.mean()
            r_norm = float(np.linalg.norm(r_c))
            if r_norm == 0.0:
                return 0.0, None, None
            rho = float(np.dot(r_c, t_c) / (r_norm * t_norm))
            grad_r = t_c / (r_norm * t_norm) - rho * r_c / (r_norm**2)
            return rho, sr, grad_r

        m0, _ = predictions(self.w_)
        rho0, _, _ = correlation(m0)
        orient = 1.0 if rho0 >= 0 else -1.0

        opt = Adam(self.w_.shape, lr=self.lr)
        curve = []
        for _ in range(self.max_iter):
            m, alphas = predictions(self.w_)
            rho, sr, grad_r = correlation(m)
            curve.append(orient * rho)
            if sr is None:
                break
            g_m = sr.vjp(grad_r)
            g_w = np.zeros_like(self.w_)
            for u, (ids, s, a) in enumerate(zip(idx, scores, alphas)):
                np.add.at(g_w, ids, g_m[u] * a * (s - m[u]))
            self.w_ = self.w_ + opt.update(-orient * g_w)

        self.orientation_ = orient
        self.objective_curve_ = curve
        return self


def mixgop_attn(pooler: AttentionPooler, segments) -> float:
    """Attention-pooled utterance score for (phoneme, score) segments."""
    return pooler.pool(segments)


def _utterance_data(table: ScoreTable, fs: FeatureSet):
    """Sorted (utterance_id, segments, score) triples with ground truth."""
    truth = {
        r.utterance_id: r.utterance_score
        for r in fs.records
        if r.utterance_score is not None
    }
    groups = table.by_utterance()
    out = []
    for utt in sorted(groups):
        if utt in truth:
            segments = [(e.phoneme, e.score) for e in groups[utt]]
            out.append((utt, segments, truth[utt]))
    return out


def train_attention(
    table: ScoreTable,
    fs: FeatureSet,
    folds: int = 5,
    lr: float = 1e-2,
    max_iter: int = 200,
    regularization_strength: float = 1.0,
    seed: int = 0,
):
    """K-fold cross-validated attention training over precomputed scores.

    Each fold trains on the other folds' utterances and is evaluated on its
    own, reporting pre-training (uniform pooling) and post-training tau.
    Returns (pooler per fold, fold summary dict). Because the folds come
    from the scored split itself, the aggregate tau is not comparable with
    a plain train/test evaluation; the summary flags this.
    """
    data = _utterance_data(table, fs)
    if len(data) < folds:
        raise TooFewUtterances(f"{len(data)} utterances < {folds} folds")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(data))
    fold_of = np.empty(len(data), dtype=np.intp)
    fold_of[order] = np.arange(len(data)) % folds

    poolers: list[AttentionPooler] = []
    fold_rows = []
    for f in range(folds):
        train_idx = np.flatnonzero(fold_of != f)
        test_idx = np.flatnonzero(fold_of == f)
        pooler = AttentionPooler(
            inventory=fs.inventory,
            lr=lr,
            max_iter=max_iter,
            regularization_strength=regularization_strength,
        )
        pooler.fit(
            [data[i][1] for i in train_idx],
            [data[i][2] for i in train_idx],
        )
        poolers.append(pooler)

        y_test = np.array([data[i][2] for i in test_idx])
        uniform = AttentionPooler(inventory=fs.inventory)
        uniform._ensure_logits()
        pre = [uniform.pool(data[i][1]) for i in test_idx]
        post = [pooler.pool(data[i][1]) for i in test_idx]
        row = {"fold": f, "n_test": int(test_idx.size)}
        if test_idx.size >= 2 and not np.all(y_test == y_test[0]):
            row["pre_tau"] = kendall_tau(pre, y_test)
            row["post_tau"] = kendall_tau(post, y_test)
        else:
            row["pre_tau"] = row["post_tau"] = None
        fold_rows.append(row)

    valid = [r for r in fold_rows if r["post_tau"] is not None]
    if not valid:
        raise DegenerateInput("no fold had enough utterances for a tau")
    method_tags = {e.method_tag for e in table.entries}
    base_tag = next(iter(method_tags)) if len(method_tags) == 1 else "scores"
    report = EvalReport(
        method_tag=base_tag if base_tag.endswith("_attn") else base_tag + "_attn",
        level="utterance",
        kendall_tau=float(np.mean([r["post_tau"] for r in valid])),
        n=len(data),
        metadata={
            "encoder_tag": fs.encoder_tag,
            "layer_index": fs.layer_index,
            "folds": fold_rows,
            "mean_pre_tau": float(np.mean([r["pre_tau"] for r in valid])),
            "cv_protocol": "folds drawn from the scored split; "
            "not comparable with plain train/test evaluation",
        },
    )
    return poolers, report


__all__ = [
    "SoftRankResult",
    "soft_rank",
    "soft_rank_with_grad",
    "AttentionPooler",
    "mixgop_attn",
    "train_attention",
]
