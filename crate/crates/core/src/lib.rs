//! Learning vector representations of peer-shared course artifacts and
//! predicting their popularity.
//!
//! The pipeline: interaction logs ([`event_log`]) become per-user asset
//! sequences that train skip-gram embeddings ([`skipgram`]); asset text is
//! embedded by averaging pretrained word vectors ([`content_embed`]);
//! representations are assembled per asset ([`features`]) and fed to
//! Poisson-loss predictors ([`models`]) under k-fold cross-validation
//! ([`eval`]). [`tsne`] projects embeddings to 2-D and [`synth`] generates
//! courses with planted structure.

pub mod content_embed;
pub mod error;
pub mod eval;
pub mod event_log;
pub mod features;
pub mod matrix;
pub mod models;
pub mod skipgram;
pub mod synth;
pub mod tsne;
pub mod vectors;

pub use error::{Error, Result};
pub use matrix::Matrix;
pub use vectors::AssetVectors;
