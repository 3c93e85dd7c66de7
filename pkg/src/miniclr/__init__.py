"""Desk-scale contrastive representation learning with autoencoder-seeded
projection heads: a from-scratch training engine, the full experiment grid
runner, and a linear-probe evaluation protocol."""

from .augment import AugmentedPair, TransformSpace, sample_pair
from .autoencoder import Autoencoder, AutoencoderSpec, build_autoencoder, train_autoencoder
from .config import ExperimentCell, GridConfig, enumerate_cells, load_config
from .data import ImageDataset, NormStats, SplitSpec, split, synth_blobs
from .evaluate import FeatureDataset, ProbeResult, SummaryStats, acc_at_1, extract_features, summarize, train_probe
from .losses import NTXentConfig, cosine_sim, mse, nt_xent, softmax_cross_entropy
from .nn import Activation, Conv2dLayer, DenseLayer, LayerStack, grad_check, init_params
from .optim import Adam, CosineAnnealing, ReduceOnPlateau, SgdMomentum, cosine_lr, initial_lr_from_batch, plateau_update
from .simclr import BackboneSpec, ProjectorSpec, SimclrConfig, build_backbone, build_projector, train_simclr
from .tensor import Rng, Tensor

__version__ = "0.1.0"
