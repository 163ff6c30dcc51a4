//! Sample summaries for repeated runs.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

/// Mean and two-sided 99% confidence half-width (Student-t, n-1 degrees
/// of freedom). The half-width is 0 for fewer than two samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
    pub ci99: f64,
}

impl Summary {
    pub fn of(xs: &[f64]) -> Summary {
        let n = xs.len();
        if n == 0 {
            return Summary { n, mean: f64::NAN, sd: f64::NAN, ci99: f64::NAN };
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        if n == 1 {
            return Summary { n, mean, sd: 0.0, ci99: 0.0 };
        }
        let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        let t = StudentsT::new(0.0, 1.0, (n - 1) as f64).expect("dof >= 1").inverse_cdf(0.995);
        Summary { n, mean, sd, ci99: t * sd / (n as f64).sqrt() }
    }

    pub fn lower(&self) -> f64 {
        self.mean - self.ci99
    }

    pub fn upper(&self) -> f64 {
        self.mean + self.ci99
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_interval() {
        // t(0.995, 9) = 3.2498355415921263
        let xs: Vec<f64> = (1..=10).map(f64::from).collect();
        let s = Summary::of(&xs);
        assert_eq!(s.mean, 5.5);
        let sd = (82.5f64 / 9.0).sqrt();
        assert!((s.sd - sd).abs() < 1e-12);
        assert!((s.ci99 - 3.249_835_541_592_126 * sd / 10f64.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn degenerate_sizes() {
        assert!(Summary::of(&[]).mean.is_nan());
        let one = Summary::of(&[2.0]);
        assert_eq!((one.mean, one.ci99), (2.0, 0.0));
    }
}
