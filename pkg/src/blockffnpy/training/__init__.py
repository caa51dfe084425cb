# Copyright 2026 Jonas Claes
# SPDX-License-Identifier: Apache-2.0

"""Export the toy model, its training loop, checkpoints and reports."""
from .config import (
    DataConfig,
    ModelConfig,
    OptimConfig,
    TrainConfig,
    config_from_dict,
    config_to_dict,
    config_to_json,
    load_config,
)
from .tokenizer import EOT_TOKEN, VOCAB_SIZE, IngestError, decode, encode, ingest
from .model import ForwardResult, ToyLM, model_shapes
from .optimizer import AdamW, clip_grad_norm, learning_rate
from .checkpoint import (
    Checkpoint,
    CheckpointError,
    decode_checkpoint,
    encode_checkpoint,
    load_checkpoint,
    save_checkpoint,
)
from .trainer import (
    METRICS_HEADER,
    StepRecord,
    Trainer,
    TrainingDiverged,
    TrainResult,
    batch_sparsity,
    sample_batch,
    train,
)
from .evaluate import EmptyHeldoutError, evaluate_ppl, load_model, model_perplexity
from .report import ReportArtifacts, collect_activations, layer_reports, write_report
from .ablation import (
    AblationArm,
    AblationRow,
    calibrate_arm,
    measure_arm,
    parse_matrix,
    run_ablation,
    write_ablation_csv,
)
