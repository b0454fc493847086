//! ACR ratings and the statistics computed over them.

mod aggregate;
mod record;
pub mod special;
mod stats;
mod table;

pub use aggregate::{
    aggregate, anova_table, cohens_h_table, correlation_table, paired_t_table, AnovaRow, CorrelationRow,
    GroupBy, GroupKey, MosRow, PairedTRow, ProportionRow, Skipped,
};
pub use record::{Dimension, RatingError, RatingRecord, RatingStore, Score};
pub use stats::{
    cohens_h, mean_ci, mos_ci, paired_t, pearson_r, rm_anova, MosResult, PairedT, RmAnova, StatResult, StatsError,
};
pub use table::{read_ratings_csv, write_ratings_csv, RatingRow, RowStatus};
