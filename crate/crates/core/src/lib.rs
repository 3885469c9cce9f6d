//! Topic modeling and genre analysis for collections of dramatic texts:
//! TEI ingestion, linguistic preprocessing, LDA, classification,
//! model-selection sweeps, genre statistics, clustering and SVG figures.
//!
//! Numeric modules are generic over [`num::Scalar`] (`f32` or `f64`); the
//! aliases below fix the double-precision instantiations used by the
//! pipeline. Topic models themselves are always trained in `f64`.

pub mod analytics;
pub mod cluster;
pub mod corpus;
pub mod evalml;
pub mod lda;
pub mod lingpipe;
pub mod num;
pub mod report;
pub mod special;
pub mod sweep;
pub mod synth;

pub type FeatureMatrixF64 = evalml::FeatureMatrix<f64>;
pub type FeatureMatrixF32 = evalml::FeatureMatrix<f32>;
pub type GenreTopicTableF64 = analytics::GenreTopicTable<f64>;
pub type SectionDistributionF64 = analytics::SectionDistribution<f64>;
pub type PcaResultF64 = cluster::PcaResult<f64>;
pub type PcaResultF32 = cluster::PcaResult<f32>;
pub type MergeTreeF64 = cluster::MergeTree<f64>;
