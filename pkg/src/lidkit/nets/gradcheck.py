"""Central finite-difference verification of every analytic gradient."""

import numpy as np

from .loss import cross_entropy
from .models import ClassifierConfig, SequenceBatch, build_model


def grad_check(
    cfg: ClassifierConfig,
    inputs: np.ndarray,
    labels: np.ndarray,
    lengths: np.ndarray | None = None,
    eps: float = 1e-5,
) -> float:
    """Max relative error between analytic and numeric gradients.

    inputs is (B, T, D) for sequence models or (B, F) for the DNN. Dropout
    must be 0 and batch norm runs in eval mode so the loss is a smooth,
    deterministic function of the parameters.
    """
    if cfg.dropout != 0.0:
        raise ValueError("grad_check requires dropout = 0")
    labels = np.asarray(labels, dtype=np.int64)
    model = build_model(cfg)

    if model.consumes == "sequence":
        if lengths is None:
            lengths = np.full(inputs.shape[0], inputs.shape[1], dtype=np.int64)
        batch = SequenceBatch(inputs, lengths, labels)

        def forward():
            return model.forward(batch, train=False)

    else:

        def forward():
            return model.forward(np.asarray(inputs, dtype=np.float64), train=False)

    logits, cache = forward()
    _, dlogits = cross_entropy(logits, labels)
    analytic = model.backward(cache, dlogits)

    def loss_at_current_params() -> float:
        lg, _ = forward()
        loss, _ = cross_entropy(lg, labels)
        return loss

    max_rel = 0.0
    for name, p in model.params.items():
        flat = p.reshape(-1)
        a_flat = analytic[name].reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + eps
            lp = loss_at_current_params()
            flat[j] = orig - eps
            lm = loss_at_current_params()
            flat[j] = orig
            numeric = (lp - lm) / (2.0 * eps)
            rel = abs(a_flat[j] - numeric) / max(abs(a_flat[j]), abs(numeric), 1e-8)
            max_rel = max(max_rel, rel)
    return max_rel
