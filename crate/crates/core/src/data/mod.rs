//! Fingerprint records, scaling, splitting, caching and the synthetic site.

pub mod cache;
pub mod dataset;
pub mod knn;
pub mod record;
pub mod scaler;
pub mod synthetic;
pub mod uji;

pub use cache::{fit_preparation, read_cache, write_cache, CacheManifest, PreparedData};
pub use dataset::{encode_building_floor, split_train_val, Dataset, Provenance, Split};
pub use knn::{knn_oracle, knn_predict};
pub use record::{is_detected, FingerprintRecord, RecordMeta, SitePlan, NOT_DETECTED};
pub use scaler::ScalerParams;
pub use synthetic::{generate_synthetic, generate_synthetic_records, SyntheticConfig, SyntheticSite};
pub use uji::{load_ujiindoorloc_csv, UjiRole};
