"""Finite-difference check of every model variant."""
from aflstm.model import ModelConfig
from aflstm.training import check_model_gradients

# tiny dims keep the perturbation loop short; weights are redrawn in [-1, 1]
variants = [("nbow", None), ("lstm", None), ("at-lstm", None), ("atae-lstm", None),
            ("af-lstm", "mul"), ("af-lstm", "corr"), ("af-lstm", "conv")]

for variant, fusion in variants:
    cfg = ModelConfig(variant, vocab_size=10, embed_dim=8, hidden_dim=8, max_len=5, fusion=fusion)
    err = check_model_gradients(cfg)
    print(f"{variant:10s} {fusion or '':5s} max relative error {err:.2e}")
