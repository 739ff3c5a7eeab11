from .loop import (FeatureStore, TrainConfig, TrainResult, crop_or_pad, score_utterances,
                   train)
from .loss import OcsParams, ocs_loss, ocs_terms
from .optim import Adam, AdamHyper, AdamState, adam_step, lr_at
from .sampler import balanced_batches
