//! Problem ingestion (MatrixMarket files, synthetic generation) and output
//! serialization (trace CSV, JSON summaries).

mod mtx;
mod output;
mod synthetic;

use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

pub use mtx::{
    parse_matrix_market, parse_matrix_market_with_header, parse_vector, write_matrix_market,
    write_vector, Field, Header, Layout, Symmetry,
};
pub use output::{write_json, write_summary_json, write_trace_csv, RunSummary, TRACE_CSV_HEADER};
pub use synthetic::{generate_synthetic, SyntheticSpec};

use crate::linalg::{LinalgError, LinearSystem, Matrix};

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("unsupported MatrixMarket field {0:?}")]
    UnsupportedField(String),
    #[error("invalid problem specification: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    MatrixMarket { path: PathBuf },
    Synthetic(SyntheticSpec),
}

/// A consistent system together with the solution used to build its
/// right-hand side.
#[derive(Debug, Clone)]
pub struct ProblemBundle {
    pub sys: LinearSystem,
    pub x_star_gen: Vec<f64>,
    pub provenance: Provenance,
}

/// Draws `n` standard normal entries.
pub fn standard_normal_vector(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

/// Reads a MatrixMarket file, using dense storage when that is cheaper.
pub fn read_matrix(path: &Path) -> Result<Matrix, IoError> {
    let file = File::open(path)?;
    Ok(Matrix::auto(parse_matrix_market(BufReader::new(file))?))
}

/// Reads a MatrixMarket column vector.
pub fn read_vector(path: &Path) -> Result<Vec<f64>, IoError> {
    let file = File::open(path)?;
    parse_vector(BufReader::new(file))
}

/// Builds a problem from a MatrixMarket matrix.
///
/// Without `rhs`, a standard normal solution is planted from `seed` and
/// `b = A x`. With `rhs`, `x_star_gen` is empty since no generating solution
/// is known.
pub fn load_matrix_market(
    path: &Path,
    rhs: Option<&Path>,
    seed: u64,
) -> Result<ProblemBundle, IoError> {
    let a = read_matrix(path)?;
    let provenance = Provenance::MatrixMarket {
        path: path.to_path_buf(),
    };
    match rhs {
        Some(rhs_path) => {
            let b = read_vector(rhs_path)?;
            Ok(ProblemBundle {
                sys: LinearSystem::build(a, b)?,
                x_star_gen: Vec::new(),
                provenance,
            })
        }
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = standard_normal_vector(&mut rng, a.cols());
            let b = a.mul_vec(&x);
            Ok(ProblemBundle {
                sys: LinearSystem::build(a, b)?,
                x_star_gen: x,
                provenance,
            })
        }
    }
}
