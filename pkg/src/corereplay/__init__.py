"""Replay-buffer continual learning with forgetting-driven allocation and
feature-space exemplar selection."""
from .aqa import (AqaConfig, AttentionAllocation, allocate, attention_to_counts,
                  compute_attention, largest_remainder, uniform_allocation)
from .forgetting import AccuracyHistory, forgetting_rates, interference_rates, record_round
from .harness import (ExperimentConfig, ExperimentReport, SourceConfig, compute_metrics,
                      emit_report, load_config, run_ablation, run_all_seeds, run_experiment,
                      run_grid_search)
from .model import (Model, TrainConfig, TrainingMix, evaluate, extract_features, init_model,
                    train_round)
from .qfds import (ReplayBuffer, build_buffer, class_feature_mean, qfds_select,
                   random_select)
from .task_stream import (Dataset, Sample, TaskSpec, TaskStream, load_idx,
                          make_synthetic_stream, split_into_tasks, write_idx)

__version__ = "0.1.0"
