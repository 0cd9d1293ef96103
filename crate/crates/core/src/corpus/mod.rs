//! Interaction ingestion, k-core filtering, cross-domain indexing and splits.

pub mod archive;
pub mod dataset;
pub mod kcore;
pub mod raw;
pub mod split;

pub use archive::{load_archive, save_archive};
pub use dataset::{build_cross_domain, CrossDomainDataset, DomainData, InteractionSet, UserPartition, UserRole};
pub use kcore::filter_k_core;
pub use raw::{load_interactions, DomainId, RawInteractions, Record};
pub use split::{split_cross_domain, split_source, split_target, subsample_target, CrossDomainSplit, SplitDataset};
