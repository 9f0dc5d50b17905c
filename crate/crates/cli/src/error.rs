use std::path::Path;

use oscguard_core::attack::AttackError;
use oscguard_core::dataset::DatasetError;
use oscguard_core::fleet::FleetError;
use oscguard_core::grid::GridError;
use oscguard_core::mitigation::MitigationError;
use oscguard_core::nn::NnError;
use oscguard_core::tuner::TunerError;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data(_) => EXIT_DATA,
            CliError::Numeric(_) => EXIT_NUMERIC,
        }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Data(format!("{}: {e}", path.display()))
    }

    /// Prefixes the message with a file path.
    pub fn at(self, path: &Path) -> Self {
        let p = path.display();
        match self {
            CliError::Usage(m) => CliError::Usage(format!("{p}: {m}")),
            CliError::Data(m) => CliError::Data(format!("{p}: {m}")),
            CliError::Numeric(m) => CliError::Numeric(format!("{p}: {m}")),
        }
    }
}

impl From<GridError> for CliError {
    fn from(e: GridError) -> Self {
        match e {
            GridError::SimulationFault { .. } | GridError::NumericalFault { .. } => CliError::Numeric(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        match e {
            DatasetError::Grid(g) => g.into(),
            DatasetError::Infeasible(_) | DatasetError::TooFewSamples(_) => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<NnError> for CliError {
    fn from(e: NnError) -> Self {
        match e {
            NnError::Divergence { .. } => CliError::Numeric(e.to_string()),
            NnError::Spec(_) | NnError::Config(_) => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<TunerError> for CliError {
    fn from(e: TunerError) -> Self {
        match e {
            TunerError::Nn(n) => n.into(),
            TunerError::Data(d) => d.into(),
            TunerError::AllDiverged => CliError::Numeric(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<AttackError> for CliError {
    fn from(e: AttackError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<FleetError> for CliError {
    fn from(e: FleetError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<MitigationError> for CliError {
    fn from(e: MitigationError) -> Self {
        match e {
            MitigationError::Grid(g) => g.into(),
            MitigationError::Nn(n) => n.into(),
            MitigationError::Data(d) => d.into(),
            MitigationError::Attack(a) => a.into(),
            MitigationError::Fleet(f) => f.into(),
            MitigationError::Config(_) => CliError::Usage(e.to_string()),
        }
    }
}
