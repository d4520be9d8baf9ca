//! Score providers: anything that turns an arranged puzzle into unary and
//! binary tables.

pub mod features;
pub mod linear;
pub mod oracle;
pub mod train;

pub use features::{extract_features, FeatureSet, PatchFeatures};
pub use linear::{linear_score, loss_and_grad, Gradients, LinearScorer};
pub use oracle::{oracle_score, OracleScorer};
pub use train::{augmentation_path, train_sgd, TrainLog, TrainOptions};

use crate::cost::{BinaryTable, UnaryMatrix};
use crate::error::Result;
use crate::grid::{Configuration, GridShape};

#[derive(Clone, Debug, PartialEq)]
pub struct Scores {
    pub unary: UnaryMatrix,
    /// Absent on 3D grids.
    pub binary: Option<BinaryTable>,
}

/// What a provider may look at for one round.
#[derive(Clone, Copy, Debug)]
pub struct Arrangement<'a> {
    pub shape: &'a GridShape,
    /// Ground truth of the current arrangement, when known.
    pub truth: Option<&'a Configuration>,
    /// Features in current-slot order; present iff the provider asks for them.
    pub features: Option<&'a FeatureSet>,
}

pub trait ScoreProvider {
    fn accepts(&self, shape: &GridShape) -> bool;

    fn needs_features(&self) -> bool;

    fn score(&mut self, view: &Arrangement<'_>) -> Result<Scores>;

    /// Short label for reports.
    fn describe(&self) -> String;
}

impl<P: ScoreProvider + ?Sized> ScoreProvider for &mut P {
    fn accepts(&self, shape: &GridShape) -> bool {
        (**self).accepts(shape)
    }

    fn needs_features(&self) -> bool {
        (**self).needs_features()
    }

    fn score(&mut self, view: &Arrangement<'_>) -> Result<Scores> {
        (**self).score(view)
    }

    fn describe(&self) -> String {
        (**self).describe()
    }
}
