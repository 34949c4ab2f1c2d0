"""Encoder-free representation learning: train a decoder alone by optimizing
its weights together with one representation per training sample."""
from . import analysis, architectures, autonet, data, latents, numkit, optimize, trainers
from .analysis import decoder_load, encoder_load, load_relation, load_report, pca, representation_score
from .autonet import Network
from .errors import (ConfigError, ConsistencyError, ContractError, DivergenceError, EncFreeError, FormatError,
                     LengthError, ParameterError, RankError, ShapeError, SizeError, VersionError)
from .latents import LatentTable, infer_latents, init_latents, latent_step
from .numkit import Rng
from .trainers import (MetricsLog, TrainConfig, evaluate, train_autoencoder, train_decoder,
                       train_denoising_encoder, train_encoder_on_frozen_decoder)

__version__ = "0.1.0"
