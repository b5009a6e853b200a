//! Run configuration: the arbitrary-but-fixed choices (basepoint, reference
//! direction, windows, contour, tolerances, seed) every pipeline stage
//! shares.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::galois::AlienParams;
use crate::matrix::C64;
use crate::summation::SumParams;

/// Complex numbers are serialized as `[re, im]` throughout the file
/// formats.
pub mod c64_pair {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Complex64, s: S) -> std::result::Result<S::Ok, S::Error> {
        [v.re, v.im].serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        d: D,
    ) -> std::result::Result<Complex64, D::Error> {
        let [re, im] = <[f64; 2]>::deserialize(d)?;
        Ok(Complex64::new(re, im))
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// Fiber-functor basepoint `a`.
    #[serde(with = "c64_pair")]
    pub basepoint: C64,
    /// Reference summation direction `c0` (a representative).
    #[serde(with = "c64_pair")]
    pub reference_direction: C64,
    /// Formal truncation cap for the formal gauge.
    pub formal_cap: i64,
    /// Theta window half-width before auto-widening.
    pub theta_half_width: i64,
    /// Relative contour radius.
    pub contour_rho: f64,
    /// Contour samples (power of two, at least 32).
    pub contour_samples: usize,
    /// Non-resonance margin in log coordinates on `E_q`.
    pub resonance_margin: f64,
    /// Global relative tolerance for residual checks.
    pub rtol: f64,
    /// Quadrature stability tolerance under sample doubling.
    pub quad_tol: f64,
    /// Seed for all randomized suites.
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            basepoint: Complex64::new(0.77, 0.13),
            reference_direction: Complex64::new(-1.1, 0.3),
            formal_cap: 20,
            theta_half_width: 30,
            contour_rho: 1e-2,
            contour_samples: 64,
            resonance_margin: 1e-4,
            rtol: 1e-9,
            quad_tol: 1e-8,
            seed: 42,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.formal_cap <= 0 || self.theta_half_width <= 0 {
            return Err(Error::Parse("windows must be positive".into()));
        }
        if !(self.contour_rho > 0.0 && self.contour_rho < 0.1) {
            return Err(Error::Parse("contour rho must lie in (0, 0.1)".into()));
        }
        if !self.contour_samples.is_power_of_two() || self.contour_samples < 32 {
            return Err(Error::Parse(
                "contour samples must be a power of two >= 32".into(),
            ));
        }
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: RunConfig =
            serde_json::from_str(&text).map_err(|e| Error::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn sum_params(&self) -> SumParams {
        SumParams {
            resonance_margin: self.resonance_margin,
            tail_rel: 1e-14,
            half_width: Some(self.theta_half_width),
            max_widen: 3,
        }
    }

    pub fn alien_params(&self) -> AlienParams {
        AlienParams {
            basepoint: self.basepoint,
            reference_direction: self.reference_direction,
            contour_rho: self.contour_rho,
            samples: self.contour_samples,
            quad_tol: self.quad_tol,
            sum: self.sum_params(),
        }
    }
}
