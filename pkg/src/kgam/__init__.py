"""Kolmogorov-GAM networks: a fixed Köppen/KST embedding with additive ReLU outer functions."""

from .embedding import Normalizer, badic_embed, embed_batch, fit_normalizer, kst_embed
from .koppen import Digits, KstParams, beta, extract_digits, koppen_psi, lambda_coeffs, psi_series
from .model import KgamModel, build_model, evaluate, predict, predict_batch, train
from .neural import Mlp, TrainConfig, backward, forward, init_mlp, sgd_step

__version__ = "0.1.0"
