use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{standard_normal_vector, IoError, ProblemBundle, Provenance};
use crate::linalg::{DenseMatrix, LinearSystem, Matrix};

/// An `m x n` matrix with i.i.d. Uniform[t, 1] entries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub m: usize,
    pub n: usize,
    pub t: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn new(m: usize, n: usize, t: f64, seed: u64) -> Result<Self, IoError> {
        let spec = Self { m, n, t, seed };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), IoError> {
        if self.m == 0 || self.n == 0 {
            return Err(IoError::InvalidSpec(format!(
                "dimensions must be positive, got {}x{}",
                self.m, self.n
            )));
        }
        if !(0.0..1.0).contains(&self.t) {
            return Err(IoError::InvalidSpec(format!(
                "t must lie in [0, 1), got {}",
                self.t
            )));
        }
        Ok(())
    }
}

impl fmt::Display for SyntheticSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "m={},n={},t={},seed={}",
            self.m, self.n, self.t, self.seed
        )
    }
}

/// Parses `m=..,n=..,t=..[,seed=..]`; the seed defaults to 0.
impl FromStr for SyntheticSpec {
    type Err = IoError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (mut m, mut n, mut t, mut seed) = (None, None, None, 0u64);
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (key, value) = part
                .split_once('=')
                .ok_or_else(|| IoError::InvalidSpec(format!("expected key=value, got {part:?}")))?;
            let bad = || IoError::InvalidSpec(format!("invalid value for {key}: {value:?}"));
            match key.trim() {
                "m" => m = Some(value.trim().parse().map_err(|_| bad())?),
                "n" => n = Some(value.trim().parse().map_err(|_| bad())?),
                "t" => t = Some(value.trim().parse().map_err(|_| bad())?),
                "seed" => seed = value.trim().parse().map_err(|_| bad())?,
                other => return Err(IoError::InvalidSpec(format!("unknown key {other:?}"))),
            }
        }
        let missing = |k: &str| IoError::InvalidSpec(format!("missing {k}"));
        Self::new(
            m.ok_or_else(|| missing("m"))?,
            n.ok_or_else(|| missing("n"))?,
            t.ok_or_else(|| missing("t"))?,
            seed,
        )
    }
}

/// Generates `A` row by row from the seeded stream, then the planted
/// solution from the same stream, and sets `b = A x`.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<ProblemBundle, IoError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let width = 1.0 - spec.t;
    let data: Vec<f64> = (0..spec.m * spec.n)
        .map(|_| spec.t + width * rng.random::<f64>())
        .collect();
    let a = Matrix::from(DenseMatrix::from_row_major(spec.m, spec.n, data)?);
    let x = standard_normal_vector(&mut rng, spec.n);
    let b = a.mul_vec(&x);
    Ok(ProblemBundle {
        sys: LinearSystem::build(a, b)?,
        x_star_gen: x,
        provenance: Provenance::Synthetic(*spec),
    })
}
