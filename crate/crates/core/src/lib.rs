//! Nonnegative restricted Boltzmann machines.
//!
//! Contrastive-divergence training with a quadratic barrier on negative
//! weights, dead-unit counting, an ℓ1-logistic classifier on hidden
//! posteriors, and bootstrap stability of the selected input features.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases at the crate root fix the precision to `f64`, with `*32`
//! variants for single precision.
//!
//! ```
//! use nrbm::{train, Data, TrainConfig};
//! use ndarray::array;
//!
//! let data = Data::new(array![[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]], None).unwrap();
//! let config = TrainConfig { hidden_count: 2, batch_size: 3, epochs: 2, ..TrainConfig::default() };
//! let (params, trace) = train(&data, &config).unwrap();
//! assert_eq!(params.n_hidden(), 2);
//! assert_eq!(trace.records.len(), 3);
//! ```

pub mod data;
pub mod error;
pub mod export;
pub mod knn;
pub mod lasso;
pub mod metrics;
pub mod persistence;
pub mod rbm;
pub mod rng;
pub mod scalar;
pub mod stability;
pub mod train;

pub use data::{bootstrap, make_batches, BatchPlan, BootstrapSample, CsvOptions, DataMatrix};
pub use error::{Error, Result};
pub use lasso::{fit_lasso, LassoModel, LassoSettings};
pub use metrics::{classification_metrics, mann_whitney_auc, AucEstimate, ClassificationMetrics};
pub use persistence::{load_model, save_model, ModelFile, ModelKind};
pub use rbm::{cd_statistics, ChainMode, Gradient, RbmParams, SufficientStats};
pub use scalar::Scalar;
pub use stability::{
    consistency_index, jaccard_index, run_stability_protocol, select_top, Method, StabilityConfig,
    StabilityOutcome,
};
pub use train::{
    dead_units, train, train_plain_rbm, train_with_options, DeadUnitConfig, DeadUnitReport, TrainConfig,
    TrainTrace, UpdateRule,
};

pub type Rbm = RbmParams<f64>;
pub type Rbm32 = RbmParams<f32>;
pub type Data = DataMatrix<f64>;
pub type Data32 = DataMatrix<f32>;
pub type Lasso = LassoModel<f64>;
pub type Lasso32 = LassoModel<f32>;
pub type Model = ModelFile<f64>;
