//! Filter importance ranking, structural pruning and the pruning roadmap.

pub mod roadmap;
pub mod score;
pub mod surgery;
pub mod triplet;

pub use roadmap::{
    iterative_prune, retrain_to_floor, score_filters, select_victims, PruneConfig, PruneOutcome,
    PruneRecord, PrunedFilter, PruningRoadmap, ROADMAP_SCHEMA_VERSION,
};
pub use score::{
    l1_scores, l1_scores_all, rank_order, trr_scores, trr_scores_all, FilterScore, Ranking,
};
pub use surgery::{prune_filters, FilterRef, LayerReduction, Pruned, ReductionReport};
pub use triplet::{sample_triplets, Triplet};
