"""Dual-channel graph classifier: a message-passing channel with an edge
scorer and explanation-weighted readout, a linear channel over summed node
features, and a temperature-annealed attention aggregator joining them.

Edge gating is deterministic: scores act directly as message weights,
which keeps gradients exact and small-scale training stable (no stochastic
gate sampling). The aggregator consumes each channel's pre-sigmoid logits,
re-squashed as sigmoid(logit / tau); annealing tau toward 0.3 drives the
aggregator inputs to near-binary activations.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, backward, concat, gather_rows, matmul, relu, \
    segment_sum, sigmoid, softmax_rows, tmean, tsum, zero_grads
from .datasets import DatasetSplit
from .errors import EmptyGraphError, FeatureDimMismatchError, NonFiniteError
from .graphs import Graph

TAU_START = 1.0
TAU_END = 0.3
SCORE_EPS = 1e-12  # clamp for probabilities entering logs


@dataclass
class TrainConfig:
    loss_variant: str = "ib"  # "ib" | "gisst"
    lambda1: float = 1.0
    lambda2: float = 1.0     # gisst only
    r: float = 0.5           # ib prior
    epochs: int = 80         # main phase epochs
    warmup_epochs: int = 20
    lr: float = 5e-3
    weight_decay: float = 1e-3   # L2 on the linear channel's W
    bias_decay: float = 0.1      # stronger L2 on the linear channel's bias
    lambda_entropy: float = 0.1  # aggregator attention entropy
    batch_size: int = 32
    seed: int = 0

    def to_json_obj(self) -> dict:
        return dict(self.__dict__)


class DualChannelModel:
    """Parameter container plus forward passes; all tensors float64."""

    def __init__(self, feature_dim: int, n_classes: int, hidden: int = 16,
                 layers: int = 3, aggr_hidden: int = 20, seed: int = 0):
        self.feature_dim = feature_dim
        self.n_classes = n_classes
        self.hidden = hidden
        self.layers = layers
        self.aggr_hidden = aggr_hidden
        self.params: dict[str, Tensor] = {}
        rng = np.random.default_rng((seed, 0xD0A1))

        def p(name, *shape):
            fan_in = shape[0] if len(shape) > 1 else shape[0]
            bound = 1.0 / math.sqrt(max(1, fan_in))
            t = ad.parameter(rng.uniform(-bound, bound, size=shape),
                             name=name)
            self.params[name] = t
            return t

        h = hidden
        for layer in range(layers):
            d_in = feature_dim if layer == 0 else h
            p(f"g1.l{layer}.W1", d_in, h)
            p(f"g1.l{layer}.b1", h)
            p(f"g1.l{layer}.W2", h, h)
            p(f"g1.l{layer}.b2", h)
        p("g1.score.W1", 2 * h, h)
        p("g1.score.b1", h)
        p("g1.score.W2", h, 1)
        p("g1.score.b2", 1)
        p("g1.head.W", h, n_classes)
        p("g1.head.b", n_classes)
        p("g2.W", feature_dim, n_classes)
        p("g2.b", n_classes)
        n_in = 2 * n_classes
        p("aggr.att", n_in)
        p("aggr.W1", n_in, aggr_hidden)  # no bias on the input layer
        p("aggr.W2", aggr_hidden, aggr_hidden)
        p("aggr.b2", aggr_hidden)
        p("aggr.W3", aggr_hidden, n_classes)
        p("aggr.b3", n_classes)

    def parameters(self) -> list[Tensor]:
        return [self.params[k] for k in sorted(self.params)]

    # --- channel g1 ---

    def _mp_layer(self, layer: int, h: Tensor, src: np.ndarray,
                  dst: np.ndarray, n: int,
                  weights: Optional[Tensor]) -> Tensor:
        if len(src):
            msgs = gather_rows(h, src)
            if weights is not None:
                # (2|E|, 1) -> (2|E|, width) so each score scales its row.
                wide = matmul(weights,
                              Tensor(np.ones((1, msgs.data.shape[1]))))
                msgs = msgs * wide
            agg = segment_sum(msgs, dst, n)
            x = h + agg
        else:
            x = h
        w1 = self.params[f"g1.l{layer}.W1"]
        b1 = self.params[f"g1.l{layer}.b1"]
        w2 = self.params[f"g1.l{layer}.W2"]
        b2 = self.params[f"g1.l{layer}.b2"]
        return relu(matmul(relu(matmul(x, w1) + b1), w2) + b2)

    def g1_forward(self, g: Graph) -> tuple[Tensor, Tensor, Optional[Tensor]]:
        """Returns (class probabilities, class logits, edge scores).

        First pass builds embeddings and the symmetric per-edge scores;
        the second pass scales messages by the scores and feeds the
        explanation-weighted readout.
        """
        if g.n == 0:
            raise EmptyGraphError("channel g1 needs at least one node")
        x_rows = g.features if g.features else \
            tuple(tuple(0.0 for _ in range(self.feature_dim))
                  for _ in range(g.n))
        if g.features and g.feature_dim != self.feature_dim:
            raise FeatureDimMismatchError(
                f"graph dim {g.feature_dim} != model dim {self.feature_dim}")
        x = Tensor(np.array(x_rows, dtype=float).reshape(g.n,
                                                         self.feature_dim))
        edges = list(g.edges)
        src = np.array([u for u, v in edges] + [v for u, v in edges],
                       dtype=int)
        dst = np.array([v for u, v in edges] + [u for u, v in edges],
                       dtype=int)

        h = x
        for layer in range(self.layers):
            h = self._mp_layer(layer, h, src, dst, g.n, None)

        scores: Optional[Tensor] = None
        if edges:
            hu = gather_rows(h, [u for u, v in edges])
            hv = gather_rows(h, [v for u, v in edges])
            w1, b1 = self.params["g1.score.W1"], self.params["g1.score.b1"]
            w2, b2 = self.params["g1.score.W2"], self.params["g1.score.b2"]

            def scorer(a, b):
                z = relu(matmul(concat([a, b], axis=1), w1) + b1)
                return matmul(z, w2) + b2
            raw = (scorer(hu, hv) + scorer(hv, hu)) * 0.5  # symmetric
            scores = sigmoid(raw)  # (|E|, 1)

        h2 = x
        edge_w = concat([scores, scores], axis=0) if edges else None
        for layer in range(self.layers):
            h2 = self._mp_layer(layer, h2, src, dst, g.n, edge_w)

        if edges:
            # Readout weight per node: mean incident edge score (1.0 if
            # isolated).
            incident = np.zeros((g.n, len(edges)))
            for j, (u, v) in enumerate(edges):
                incident[u, j] = 1.0
                incident[v, j] = 1.0
            deg = incident.sum(axis=1, keepdims=True)
            deg[deg == 0.0] = 1.0
            mean_mat = incident / deg
            node_w = matmul(Tensor(mean_mat), scores)  # (n, 1)
            iso = (incident.sum(axis=1, keepdims=True) == 0.0).astype(float)
            node_w = node_w + Tensor(iso)
            weights_full = matmul(node_w, Tensor(np.ones((1, self.hidden))))
            weighted = h2 * weights_full
        else:
            weighted = h2
        readout = _as_row(tsum(weighted, axis=0))  # (1, hidden)
        logits = matmul(readout, self.params["g1.head.W"]) \
            + self.params["g1.head.b"]  # (1, n_classes)
        return sigmoid(logits), logits, scores

    # --- channel g2 ---

    def g2_forward(self, g: Graph) -> tuple[Tensor, Tensor]:
        if not g.features:
            raise FeatureDimMismatchError("channel g2 needs node features")
        if g.feature_dim != self.feature_dim:
            raise FeatureDimMismatchError(
                f"graph dim {g.feature_dim} != model dim {self.feature_dim}")
        sums = np.array(g.features, dtype=float).sum(axis=0)[None, :]
        logits = matmul(Tensor(sums), self.params["g2.W"]) \
            + self.params["g2.b"]
        return sigmoid(logits), logits

    # --- aggregator ---

    def blen_aggregate(self, logits1: Tensor, logits2: Tensor, tau: float,
                       zero_channel: Optional[str] = None
                       ) -> tuple[Tensor, Tensor]:
        """Temperature-rescaled inputs, attention gating, 3-layer MLP.

        Returns (class logits, attention weights). ``zero_channel`` zeroes
        one channel's logits for ablation ("topo" or "rule"): the silenced
        channel then feeds the constant no-evidence activation sigmoid(0).
        """
        raw = concat([logits1, logits2], axis=1)
        if zero_channel is not None:
            mask = np.ones((1, 2 * self.n_classes))
            if zero_channel == "topo":
                mask[0, :self.n_classes] = 0.0
            elif zero_channel == "rule":
                mask[0, self.n_classes:] = 0.0
            else:
                raise ValueError(f"unknown channel {zero_channel!r}")
            raw = raw * Tensor(mask)
        z = sigmoid(raw * (1.0 / tau))
        att = softmax_rows(self.params["aggr.att"])  # (2C,)
        gated = z * _as_row(att)
        hsize = relu(matmul(gated, self.params["aggr.W1"]))  # no bias
        hsize = relu(matmul(hsize, self.params["aggr.W2"])
                     + self.params["aggr.b2"])
        out = matmul(hsize, self.params["aggr.W3"]) + self.params["aggr.b3"]
        return out, att

    def forward(self, g: Graph, tau: float,
                zero_channel: Optional[str] = None):
        a1, l1, scores = self.g1_forward(g)
        a2, l2 = self.g2_forward(g)
        logits, att = self.blen_aggregate(l1, l2, tau,
                                          zero_channel=zero_channel)
        return logits, att, scores, (a1, a2, l1, l2)

    def predict(self, g: Graph, tau: float = TAU_END,
                zero_channel: Optional[str] = None) -> int:
        logits, _, _, _ = self.forward(g, tau, zero_channel=zero_channel)
        return int(np.argmax(logits.data[0]))  # ties -> lowest class id

    def edge_scores(self, g: Graph) -> dict[tuple[int, int], float]:
        _, _, scores = self.g1_forward(g)
        if scores is None:
            return {}
        return {e: float(s) for e, s in zip(g.edges, scores.data[:, 0])}

    # --- persistence ---

    def save(self, path) -> None:
        obj = {"version": 1, "feature_dim": self.feature_dim,
               "n_classes": self.n_classes, "hidden": self.hidden,
               "layers": self.layers, "aggr_hidden": self.aggr_hidden,
               "params": {k: {"shape": list(v.data.shape),
                              "data": v.data.reshape(-1).tolist()}
                          for k, v in sorted(self.params.items())}}
        Path(path).write_text(json.dumps(obj, separators=(",", ":")) + "\n")

    @classmethod
    def load(cls, path) -> "DualChannelModel":
        obj = json.loads(Path(path).read_text())
        model = cls(obj["feature_dim"], obj["n_classes"], obj["hidden"],
                    obj["layers"], obj["aggr_hidden"])
        for k, spec in obj["params"].items():
            model.params[k].data = np.array(
                spec["data"], dtype=float).reshape(spec["shape"])
        return model


def _as_row(t: Tensor) -> Tensor:
    if t.data.ndim == 2:
        return t
    data = t.data

    def bwd(g):
        t._accumulate(g[0])
    out = Tensor(data[None, :], _parents=(t,))
    out._backward = bwd
    return out


# --- losses ---

def _clamp_probs(p: Tensor) -> Tensor:
    # Linear squeeze into [eps, 1-eps]; differentiable everywhere.
    return p * (1.0 - 2.0 * SCORE_EPS) + SCORE_EPS


def bce_loss(probs: Tensor, target_onehot: np.ndarray) -> Tensor:
    p = _clamp_probs(probs)
    t = Tensor(target_onehot.reshape(p.data.shape))
    ones = Tensor(np.ones_like(p.data))
    terms = t * ad.log(p) + (ones - t) * ad.log(ones - p)
    return -tmean(terms)


def ce_loss(logits: Tensor, label: int) -> Tensor:
    shift = float(np.max(logits.data))
    z = logits - shift
    lse = ad.log(tsum(ad.exp(z))) + shift
    target = logits * Tensor(_onehot_row(label, logits.data.shape[1]))
    return lse - tsum(target)


def _onehot_row(label: int, n: int) -> np.ndarray:
    row = np.zeros((1, n))
    row[0, label] = 1.0
    return row


def loss_gisst(ce: Tensor, edge_scores: Optional[Tensor],
               lambda1: float, lambda2: float) -> Tensor:
    """ce + lambda1 * mean(p) + lambda2 * mean(p log p + (1-p) log(1-p))."""
    if edge_scores is None:
        return ce
    p = _clamp_probs(edge_scores)
    ones = Tensor(np.ones_like(p.data))
    neg_entropy = p * ad.log(p) + (ones - p) * ad.log(ones - p)
    return ce + lambda1 * tmean(p) + lambda2 * tmean(neg_entropy)


def loss_ib(ce: Tensor, edge_scores: Optional[Tensor],
            lambda1: float, r: float) -> Tensor:
    """ce + lambda1 * sum KL(Bernoulli(p) || Bernoulli(r))."""
    if edge_scores is None:
        return ce
    p = _clamp_probs(edge_scores)
    ones = Tensor(np.ones_like(p.data))
    kl = p * (ad.log(p) - math.log(r)) \
        + (ones - p) * (ad.log(ones - p) - math.log(1.0 - r))
    return ce + lambda1 * tsum(kl)


def attention_entropy(att: Tensor) -> Tensor:
    p = _clamp_probs(att)
    return -tsum(p * ad.log(p))


# --- optimizer ---

class Adam:
    def __init__(self, params: Sequence[Tensor], lr: float,
                 beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]
        self.t = 0

    def step(self) -> None:
        self.t += 1
        for i, p in enumerate(self.params):
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            self.m[i] = self.beta1 * self.m[i] + (1 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1 - self.beta2) * g * g
            mhat = self.m[i] / (1 - self.beta1 ** self.t)
            vhat = self.v[i] / (1 - self.beta2 ** self.t)
            p.data = p.data - self.lr * mhat / (np.sqrt(vhat) + self.eps)


# --- training ---

@dataclass
class TrainHistory:
    epochs: list[dict] = field(default_factory=list)

    def to_json_obj(self) -> list[dict]:
        return self.epochs


def tau_schedule(epoch: int, total: int) -> float:
    if total <= 1:
        return TAU_END
    frac = min(1.0, epoch / (total - 1))
    return TAU_START + (TAU_END - TAU_START) * frac


def _edge_reg(cfg: TrainConfig, zero_ce: Tensor,
              scores: Optional[Tensor]) -> Tensor:
    if cfg.loss_variant == "gisst":
        return loss_gisst(zero_ce, scores, cfg.lambda1, cfg.lambda2)
    return loss_ib(zero_ce, scores, cfg.lambda1, cfg.r)


def train(model: DualChannelModel, split: DatasetSplit,
          cfg: TrainConfig) -> TrainHistory:
    """Warmup trains each channel against the labels independently; the
    main phase trains end-to-end through the aggregator with linear tau
    annealing and weight decay on the linear channel."""
    rng = np.random.default_rng((cfg.seed, 0x7121))
    params = model.parameters()
    opt = Adam(params, lr=cfg.lr)
    # Coupled L2 on the linear channel (added to the gradient, so the
    # zero-gradient point is the regularized optimum even under Adam's
    # step normalization). The bias is decayed harder: it then settles
    # at the smallest offset the labels actually require, which is what
    # makes the extracted rule's threshold meaningful.
    decay = {"g2.W": cfg.weight_decay, "g2.b": cfg.bias_decay}
    history = TrainHistory()
    records = split.records
    n = len(records)
    zero = Tensor(np.array(0.0))

    def run_epoch(epoch: int, phase: str, tau: float) -> None:
        order = rng.permutation(n)
        total_loss = 0.0
        correct = 0
        for start in range(0, n, cfg.batch_size):
            batch = order[start:start + cfg.batch_size]
            zero_grads(params)
            batch_loss = 0.0
            for idx in batch:
                rec = records[idx]
                if phase == "warmup":
                    a1, _, scores = model.g1_forward(rec.graph)
                    a2, _ = model.g2_forward(rec.graph)
                    onehot = _onehot_row(rec.label, model.n_classes)
                    loss = bce_loss(a1, onehot) + bce_loss(a2, onehot)
                    loss = _edge_reg(cfg, loss, scores)
                    pred = int(np.argmax(a2.data[0] + a1.data[0]))
                else:
                    logits, att, scores, _ = model.forward(rec.graph, tau)
                    loss = ce_loss(logits, rec.label)
                    loss = _edge_reg(cfg, loss, scores)
                    loss = loss + cfg.lambda_entropy * attention_entropy(att)
                    pred = int(np.argmax(logits.data[0]))
                if not np.isfinite(loss.data):
                    raise NonFiniteError("loss diverged", epoch=epoch)
                backward(loss * (1.0 / len(batch)))
                batch_loss += float(loss.data)
                correct += int(pred == rec.label)
            for pname, lam in decay.items():
                p = model.params[pname]
                p._accumulate(lam * p.data)
            opt.step()
            total_loss += batch_loss
        history.epochs.append({
            "phase": phase, "epoch": epoch, "tau": tau,
            "loss": total_loss / n, "acc": correct / n})

    for epoch in range(cfg.warmup_epochs):
        run_epoch(epoch, "warmup", TAU_START)
    for epoch in range(cfg.epochs):
        run_epoch(epoch, "main", tau_schedule(epoch, cfg.epochs))
    return history


def evaluate_accuracy(model: DualChannelModel, split: DatasetSplit,
                      tau: float = TAU_END,
                      zero_channel: Optional[str] = None) -> float:
    if not split.records:
        return 0.0
    hits = sum(1 for r in split.records
               if model.predict(r.graph, tau, zero_channel=zero_channel)
               == r.label)
    return hits / len(split.records)


# --- interpretation ---

@dataclass
class ChannelRelevance:
    topo: float
    rule: float
    selection: str  # "Topo" | "Rule" | "Both"
    raw_attention: list[float]

    def to_json_obj(self) -> dict:
        return {"topo": self.topo, "rule": self.rule,
                "selection": self.selection,
                "raw_attention": self.raw_attention}


def channel_relevance(model: DualChannelModel,
                      threshold: float = 0.1) -> ChannelRelevance:
    att = softmax_rows(model.params["aggr.att"]).data
    c = model.n_classes
    topo = float(att[:c].sum())
    rule = float(att[c:].sum())
    total = topo + rule
    topo, rule = topo / total, rule / total
    if topo >= threshold and rule >= threshold:
        sel = "Both"
    elif topo >= threshold:
        sel = "Topo"
    else:
        sel = "Rule"
    return ChannelRelevance(topo, rule, sel, att.tolist())


def ablate_channel(model: DualChannelModel, split: DatasetSplit,
                   which: str, tau: float = TAU_END) -> float:
    """Accuracy with one channel's aggregator inputs zeroed."""
    which = which.lower()
    if which not in ("topo", "rule"):
        raise ValueError("which must be 'topo' or 'rule'")
    return evaluate_accuracy(model, split, tau=tau, zero_channel=which)


@dataclass
class RuleReport:
    terms: list[tuple[str, float]]    # normalized kept weights
    bias: float                        # normalized bias
    threshold: Optional[float]         # -b / w for single-term rules
    rendered: str
    drop_ratio: float
    agreement: Optional[float]
    relevance: ChannelRelevance

    def to_json_obj(self) -> dict:
        return {"terms": [[n, w] for n, w in self.terms],
                "bias": self.bias, "threshold": self.threshold,
                "rendered": self.rendered, "drop_ratio": self.drop_ratio,
                "agreement": self.agreement,
                "relevance": self.relevance.to_json_obj()}


def _g2_decision_weights(model: DualChannelModel
                         ) -> tuple[np.ndarray, float]:
    w = model.params["g2.W"].data
    b = model.params["g2.b"].data
    if model.n_classes == 2:
        # Binary boundary: class 1 wins when (w1 - w0) . s + (b1 - b0) >= 0.
        return w[:, 1] - w[:, 0], float(b[1] - b[0])
    raise ValueError("rule extraction supports binary models")


def extract_rule(model: DualChannelModel, feature_names: Sequence[str],
                 drop_ratio: float = 1e-2,
                 eval_split: Optional[DatasetSplit] = None) -> RuleReport:
    """Render the linear channel's decision boundary as an inequality,
    dropping negligible weights and normalizing by the largest kept one."""
    from .errors import AllWeightsDroppedError

    w, b = _g2_decision_weights(model)
    max_w = float(np.max(np.abs(w)))
    if max_w == 0.0:
        raise AllWeightsDroppedError("all linear weights are zero")
    keep = np.abs(w) >= drop_ratio * max_w
    if not keep.any():
        raise AllWeightsDroppedError("every weight below the drop threshold")
    norm = float(np.max(np.abs(w[keep])))
    terms = [(feature_names[i], float(w[i] / norm))
             for i in range(len(w)) if keep[i]]
    bias = float(b / norm)
    threshold = None
    if len(terms) == 1:
        name, coef = terms[0]
        threshold = -bias / coef
        op = ">=" if coef > 0 else "<="
        rendered = f"x_{name} {op} {threshold:.2f}"
    else:
        lhs = [f"{coef:+.2f}*x_{name}" for name, coef in terms]
        rendered = f"{' '.join(lhs)} >= {-bias:.2f}"
        pos = [t for t in terms if t[1] > 0]
        neg = [t for t in terms if t[1] < 0]
        if len(pos) == 1 and len(neg) == 1 and abs(bias) < 0.1:
            rendered = f"x_{pos[0][0]} >= x_{neg[0][0]}"
    agreement = None
    if eval_split is not None:
        w_trunc = np.where(keep, w, 0.0)
        same = 0
        for rec in eval_split.records:
            sums = np.array(rec.graph.features, dtype=float).sum(axis=0)
            full = int(w @ sums + b >= 0)
            trunc = int(w_trunc @ sums + b >= 0)
            same += int(full == trunc)
        agreement = same / len(eval_split.records)
    return RuleReport(terms=terms, bias=bias, threshold=threshold,
                      rendered=rendered, drop_ratio=drop_ratio,
                      agreement=agreement,
                      relevance=channel_relevance(model))


def verify_loss_identities(trials: int = 20, seed: int = 0,
                           tol: float = 1e-6) -> dict:
    """Closed-form loss values on saturated score vectors.

    With scores in {eps, 1-eps} the sparsity/entropy loss collapses to
    ce + lambda1 * |q| / |E|, and with scores in {r, 1-eps} the
    information-bottleneck loss collapses to ce + lambda1 * |q| * log(1/r),
    where |q| counts the saturated-high edges.
    """
    rng = np.random.default_rng((seed, 0x105))
    failures = []
    for t in range(trials):
        n_edges = int(rng.integers(3, 30))
        lam1 = float(rng.uniform(0.1, 2.0))
        lam2 = float(rng.uniform(0.1, 2.0))
        r = float(rng.uniform(0.05, 0.9))
        ce_val = float(rng.uniform(0.0, 3.0))
        high = rng.random(n_edges) < 0.5
        q = int(high.sum())
        ce = Tensor(np.array(ce_val))

        p_g = np.where(high, 1.0 - SCORE_EPS, SCORE_EPS)[:, None]
        got_g = float(loss_gisst(ce, Tensor(p_g), lam1, lam2).data)
        want_g = ce_val + lam1 * q / n_edges
        p_i = np.where(high, 1.0 - SCORE_EPS, r)[:, None]
        got_i = float(loss_ib(ce, Tensor(p_i), lam1, r).data)
        want_i = ce_val + lam1 * q * math.log(1.0 / r)
        if abs(got_g - want_g) > tol or abs(got_i - want_i) > tol:
            failures.append({"trial": t, "gisst": [got_g, want_g],
                             "ib": [got_i, want_i]})
    return {"name": "loss-identities", "passed": not failures,
            "checked_graphs": trials, "counterexamples": failures,
            "details": {"tolerance": tol}}


def as_model_classifier(model: DualChannelModel, tau: float = TAU_END):
    """Graph -> class id view for the explanation/faithfulness machinery."""
    return lambda g: model.predict(g, tau)
