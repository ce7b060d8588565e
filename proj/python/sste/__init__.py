"""Self-sampling training and evaluation for debiased recommendation."""

from ._core import (
    Branch,
    Checkpoint,
    Dataset,
    DatasetStats,
    EvalReport,
    FitResult,
    Interaction,
    MfModel,
    Objective,
    PropensityTable,
    Provenance,
    RankedList,
    RunConfig,
    RunResult,
    SampleProbTable,
    SyntheticData,
    SyntheticSpec,
    TrainConfig,
    Vocabulary,
    alpha,
    auc,
    build_auxiliary_family,
    build_ranked_lists,
    dataset_auc,
    draw_auxiliary,
    estimate_popularity_propensity,
    evaluate_metrics,
    fit,
    generate_synthetic,
    init_model,
    load_checkpoint,
    load_run_config,
    load_tsv,
    make_table,
    modified_score,
    ndcg_at,
    per_mille,
    predict,
    run_id,
    run_one,
    sampling_probabilities,
    save_checkpoint,
    save_tsv,
    self_evaluate,
    split_ratio,
    stats,
    topk_metrics,
    truncate,
)

__all__ = [name for name in dir() if not name.startswith("_")]
