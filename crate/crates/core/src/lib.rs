//! Imputation of missing values in multivariate time series.
//!
//! Each coordinate of a representative series is summarized by its most
//! significant snippets (behavioral patterns found with MPdist). A
//! convolutional-recurrent classifier, the [`Recognizer`], learns which
//! snippet a gap-containing window follows; an autoencoder, the
//! Reconstructor, rebuilds the window from the gapped values and the
//! recognized snippets. Only originally-missing points are replaced.

pub mod autograd;
pub mod csvio;
pub mod error;
pub mod models;
pub mod mpdist;
pub mod pipeline;
pub mod scenarios;
pub mod snippets;
pub mod synth;
pub mod training;
pub mod ts;

pub use error::{Error, Result};
pub use models::{Reconstructor, Recognizer};
pub use pipeline::{impute, impute_report, ImputeReport};
pub use scenarios::{GapMask, ScenarioKind};
pub use snippets::{Snippet, SnippetSet};
pub use training::{ModelBundle, TrainConfig};
pub use ts::{NormParams, TimeSeries, Window};
