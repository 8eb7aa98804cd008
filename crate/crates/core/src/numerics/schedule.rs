use std::f64::consts::PI;

use crate::{Error, Result};

/// Half-cosine interpolation from `start` (at `t = 0`) to `end` (at `t = total`).
pub fn cosine_anneal(t: usize, total: usize, start: f64, end: f64) -> Result<f64> {
    if total == 0 {
        return Err(Error::Argument("cosine_anneal: total steps must be >= 1".into()));
    }
    if t > total {
        return Err(Error::Argument(format!(
            "cosine_anneal: step {t} beyond total {total}"
        )));
    }
    let progress = (1.0 - (PI * t as f64 / total as f64).cos()) / 2.0;
    Ok(start + (end - start) * progress)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoints_and_midpoint() {
        assert_eq!(cosine_anneal(0, 100, 0.0, 1.0).unwrap(), 0.0);
        assert_eq!(cosine_anneal(100, 100, 0.0, 1.0).unwrap(), 1.0);
        assert!((cosine_anneal(50, 100, 0.0, 1.0).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(cosine_anneal(0, 0, 0.0, 1.0).is_err());
        assert!(cosine_anneal(11, 10, 0.0, 1.0).is_err());
    }

    #[test]
    fn symmetric_and_monotone() {
        let total = 37;
        let mut prev = f64::NEG_INFINITY;
        for t in 0..=total {
            let a = cosine_anneal(t, total, 0.2, 3.0).unwrap();
            let b = cosine_anneal(total - t, total, 0.2, 3.0).unwrap();
            assert!((a + b - 3.2).abs() < 1e-12);
            assert!(a >= prev);
            prev = a;
        }
    }
}
