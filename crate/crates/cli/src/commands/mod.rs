pub mod eval;
pub mod mitigate;
pub mod probe;
pub mod synth;
pub mod train;
pub mod tune;

use std::path::Path;

use oscguard_core::dataset::{read_dataset_file, Dataset};
use oscguard_core::nn::{Checkpoint, Model};

use crate::error::CliError;

pub(crate) fn load_dataset(path: &Path) -> Result<Dataset, CliError> {
    if !path.exists() {
        return Err(CliError::Data(format!("{}: no such dataset", path.display())));
    }
    read_dataset_file(path).map_err(|e| CliError::from(e).at(path))
}

pub(crate) fn load_checkpoint(path: &Path) -> Result<(Checkpoint, Model), CliError> {
    if !path.exists() {
        return Err(CliError::Data(format!("{}: no such checkpoint", path.display())));
    }
    let ck = Checkpoint::load(path).map_err(|e| CliError::from(e).at(path))?;
    let model = ck.to_model().map_err(|e| CliError::from(e).at(path))?;
    Ok((ck, model))
}
