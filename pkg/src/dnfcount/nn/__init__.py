"""Message-passing estimator: numpy autodiff, model, training and checkpoints."""
from .model import ModelConfig, encode_graph, forward, init_params, kl_divergence, predict_wmc
from .train import TrainConfig, TrainingRecord, adam_step, compute_gradients, train
