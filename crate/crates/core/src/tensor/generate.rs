//! Seeded tensor generation.
//!
//! The stream is ChaCha8 seeded through `SeedableRng::seed_from_u64`; gaussian samples come
//! from `rand_distr::Normal` and uniform samples from `rand_distr::Uniform`. The algorithm is
//! part of the file-level contract: identical `(shape, seed, dist)` always yields identical
//! tensors.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, Normal, Uniform};

use super::{checked_numel, Tensor, TensorError};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Distribution {
    Gaussian { mean: f64, sd: f64 },
    Uniform { lo: f64, hi: f64 },
    Constant(f64),
}

impl Distribution {
    pub const STANDARD_NORMAL: Self = Self::Gaussian { mean: 0.0, sd: 1.0 };

    fn validate(&self) -> Result<(), TensorError> {
        let bad = |msg: String| Err(TensorError::InvalidDistribution(msg));
        match *self {
            Self::Gaussian { mean, sd } if !mean.is_finite() || !sd.is_finite() || sd < 0.0 => {
                bad(format!("gaussian needs finite mean and sd >= 0, got ({mean}, {sd})"))
            }
            Self::Uniform { lo, hi } if !lo.is_finite() || !hi.is_finite() || lo > hi => {
                bad(format!("uniform needs finite lo <= hi, got ({lo}, {hi})"))
            }
            Self::Constant(v) if !v.is_finite() => bad(format!("constant must be finite, got {v}")),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for Distribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Gaussian { mean, sd } => write!(f, "gaussian:{mean},{sd}"),
            Self::Uniform { lo, hi } => write!(f, "uniform:{lo},{hi}"),
            Self::Constant(v) => write!(f, "constant:{v}"),
        }
    }
}

/// Parses `gaussian`, `gaussian:MEAN,SD`, `uniform`, `uniform:LO,HI` or `constant:V`.
impl FromStr for Distribution {
    type Err = TensorError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let invalid = || TensorError::InvalidDistribution(s.to_string());
        let (name, args) = match s.split_once(':') {
            Some((name, args)) => (name.trim(), Some(args)),
            None => (s.trim(), None),
        };
        let numbers = |expected: usize| -> Result<Vec<f64>, TensorError> {
            let parsed: Vec<f64> = args
                .ok_or_else(invalid)?
                .split(',')
                .map(|p| p.trim().parse::<f64>().map_err(|_| invalid()))
                .collect::<Result<_, _>>()?;
            if parsed.len() != expected {
                return Err(invalid());
            }
            Ok(parsed)
        };
        let dist = match (name, args.is_some()) {
            ("gaussian" | "normal", false) => Self::STANDARD_NORMAL,
            ("gaussian" | "normal", true) => {
                let v = numbers(2)?;
                Self::Gaussian { mean: v[0], sd: v[1] }
            }
            ("uniform", false) => Self::Uniform { lo: 0.0, hi: 1.0 },
            ("uniform", true) => {
                let v = numbers(2)?;
                Self::Uniform { lo: v[0], hi: v[1] }
            }
            ("constant", true) => Self::Constant(numbers(1)?[0]),
            _ => return Err(invalid()),
        };
        dist.validate()?;
        Ok(dist)
    }
}

pub fn generate(shape: &[usize], seed: u64, dist: Distribution) -> Result<Tensor, TensorError> {
    dist.validate()?;
    let n = checked_numel(shape)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data: Vec<f64> = match dist {
        Distribution::Constant(v) => vec![v; n],
        Distribution::Gaussian { mean, sd } => {
            let normal = Normal::new(mean, sd).map_err(|e| TensorError::InvalidDistribution(e.to_string()))?;
            (0..n).map(|_| normal.sample(&mut rng)).collect()
        }
        Distribution::Uniform { lo, hi } if lo == hi => vec![lo; n],
        Distribution::Uniform { lo, hi } => {
            let uniform = Uniform::new_inclusive(lo, hi).map_err(|e| TensorError::InvalidDistribution(e.to_string()))?;
            (0..n).map(|_| uniform.sample(&mut rng)).collect()
        }
    };
    Tensor::new(shape.to_vec(), data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_fills() {
        let t = generate(&[2, 2], 0, Distribution::Constant(3.0)).unwrap();
        assert_eq!(t.shape(), &[2, 2]);
        assert!(t.data().iter().all(|&v| v == 3.0));
    }

    #[test]
    fn same_seed_same_tensor() {
        let a = generate(&[3, 5, 7], 42, Distribution::STANDARD_NORMAL).unwrap();
        let b = generate(&[3, 5, 7], 42, Distribution::STANDARD_NORMAL).unwrap();
        let c = generate(&[3, 5, 7], 43, Distribution::STANDARD_NORMAL).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn gaussian_moments() {
        let t = generate(&[1_000_000], 7, Distribution::STANDARD_NORMAL).unwrap();
        let n = t.len() as f64;
        let mean = t.data().iter().sum::<f64>() / n;
        let sd = (t.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        assert!(mean.abs() < 0.01, "mean {mean}");
        assert!((sd - 1.0).abs() < 0.01, "sd {sd}");
    }

    #[test]
    fn uniform_bounds() {
        let t = generate(&[10_000], 1, Distribution::Uniform { lo: -2.0, hi: 3.0 }).unwrap();
        assert!(t.data().iter().all(|&v| (-2.0..=3.0).contains(&v)));
        let degenerate = generate(&[4], 1, Distribution::Uniform { lo: 1.5, hi: 1.5 }).unwrap();
        assert!(degenerate.data().iter().all(|&v| v == 1.5));
    }

    #[test]
    fn rejects_invalid_parameters() {
        assert!(generate(&[2], 0, Distribution::Gaussian { mean: 0.0, sd: -1.0 }).is_err());
        assert!(generate(&[2], 0, Distribution::Uniform { lo: 1.0, hi: 0.0 }).is_err());
        assert!(generate(&[], 0, Distribution::Constant(1.0)).is_err());
    }

    #[test]
    fn parses_cli_syntax() {
        assert_eq!("gaussian".parse::<Distribution>().unwrap(), Distribution::STANDARD_NORMAL);
        assert_eq!(
            "gaussian:1.5,0.25".parse::<Distribution>().unwrap(),
            Distribution::Gaussian { mean: 1.5, sd: 0.25 }
        );
        assert_eq!("uniform:-1,1".parse::<Distribution>().unwrap(), Distribution::Uniform { lo: -1.0, hi: 1.0 });
        assert_eq!("constant:3".parse::<Distribution>().unwrap(), Distribution::Constant(3.0));
        assert!("constant".parse::<Distribution>().is_err());
        assert!("laplace:0,1".parse::<Distribution>().is_err());
        assert!("uniform:2,1".parse::<Distribution>().is_err());
    }
}
