use serde::{Deserialize, Serialize};

use super::{Dataset, Normalization, Split};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationWarning {
    pub concept: String,
    pub message: String,
}

/// Min-max scales every concept to `[0, 1]` using train-split ranges and
/// clips the other splits. A constant train column maps to 0.5.
///
/// The stored [`Normalization`] always describes the transform from the raw
/// annotation scale, so normalising an already normalised dataset composes
/// with the existing transform.
pub fn normalize_concepts(dataset: &Dataset) -> Result<(Dataset, Vec<NormalizationWarning>)> {
    let k = dataset.k();
    let mut lo = vec![f64::INFINITY; k];
    let mut hi = vec![f64::NEG_INFINITY; k];
    let mut any = false;
    for s in dataset.samples.iter().filter(|s| s.split == Split::Train) {
        any = true;
        for (j, &v) in s.c.iter().enumerate() {
            lo[j] = lo[j].min(v);
            hi[j] = hi[j].max(v);
        }
    }
    if !any {
        return Err(Error::Argument("normalize_concepts: train split is empty".into()));
    }

    let mut warnings = Vec::new();
    for j in 0..k {
        if hi[j] <= lo[j] {
            warnings.push(NormalizationWarning {
                concept: dataset.concept_names[j].clone(),
                message: format!("constant on train split ({}); mapped to 0.5", lo[j]),
            });
        }
    }

    let mut out = dataset.clone();
    for s in &mut out.samples {
        for (j, v) in s.c.iter_mut().enumerate() {
            *v = if hi[j] > lo[j] {
                ((*v - lo[j]) / (hi[j] - lo[j])).clamp(0.0, 1.0)
            } else {
                0.5
            };
        }
    }

    out.normalization = Some(match &dataset.normalization {
        None => Normalization { min: lo, max: hi },
        Some(prev) => {
            let mut min = prev.min.clone();
            let mut max = prev.max.clone();
            for j in 0..k {
                let range = prev.max[j] - prev.min[j];
                if range > 0.0 && hi[j] > lo[j] {
                    min[j] = prev.min[j] + lo[j] * range;
                    max[j] = prev.min[j] + hi[j] * range;
                }
            }
            Normalization { min, max }
        }
    });
    Ok((out, warnings))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Sample;

    fn dataset(cols: &[(&[f64], Split)]) -> Dataset {
        Dataset {
            concept_names: vec!["a".into(), "b".into()],
            label_names: vec!["x".into()],
            d: 1,
            text_only: true,
            samples: cols
                .iter()
                .enumerate()
                .map(|(i, (c, split))| Sample {
                    id: format!("s{i}"),
                    z: vec![0.0],
                    c: c.to_vec(),
                    y: 0,
                    split: *split,
                })
                .collect(),
            normalization: None,
        }
    }

    #[test]
    fn scales_clips_and_flags_constants() {
        let ds = dataset(&[
            (&[0.0, 3.0], Split::Train),
            (&[1.0, 3.0], Split::Train),
            (&[2.0, 3.0], Split::Train),
            (&[5.0, 1.0], Split::Test),
        ]);
        let (out, warnings) = normalize_concepts(&ds).unwrap();
        let col: Vec<f64> = out.samples.iter().map(|s| s.c[0]).collect();
        assert_eq!(col, vec![0.0, 0.5, 1.0, 1.0]);
        assert!(out.samples.iter().all(|s| s.c[1] == 0.5));
        assert_eq!(warnings.len(), 1);
        assert_eq!(warnings[0].concept, "b");
        assert_eq!(out.normalization.as_ref().unwrap().max[0], 2.0);
    }

    #[test]
    fn idempotent() {
        let ds = dataset(&[
            (&[0.3, -1.0], Split::Train),
            (&[1.7, 2.0], Split::Train),
            (&[0.9, 0.5], Split::Val),
            (&[-4.0, 9.0], Split::Test),
        ]);
        let (once, _) = normalize_concepts(&ds).unwrap();
        let (twice, _) = normalize_concepts(&once).unwrap();
        assert_eq!(once.samples, twice.samples);
        assert_eq!(once.normalization, twice.normalization);
    }

    #[test]
    fn empty_train_is_error() {
        let ds = dataset(&[(&[0.0, 0.0], Split::Test)]);
        assert!(normalize_concepts(&ds).is_err());
    }
}
