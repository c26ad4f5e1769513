"""Desk-scale black-box objectives: word search, two-objective strings, grids."""

from .base import SearchTask
from .embeddings import (EmbeddingTable, load_embedding_table, save_embedding_table,
                         synthesize_embedding_table)
from .grids import (DslProgram, GridMetrics, GridTask, compute_metrics, eval_program,
                    grid_task_from_dict, load_grid_task, parse_program, run_program,
                    synthesize_grid_task)
from .molecules import TwoObjectiveTask, is_valid, scalarize, scalarized_reward
from .words import WordSearchTask, word_reward

__all__ = [
    "SearchTask",
    "EmbeddingTable",
    "load_embedding_table",
    "save_embedding_table",
    "synthesize_embedding_table",
    "WordSearchTask",
    "word_reward",
    "TwoObjectiveTask",
    "scalarize",
    "scalarized_reward",
    "is_valid",
    "GridTask",
    "DslProgram",
    "GridMetrics",
    "parse_program",
    "run_program",
    "eval_program",
    "compute_metrics",
    "grid_task_from_dict",
    "load_grid_task",
    "synthesize_grid_task",
]
