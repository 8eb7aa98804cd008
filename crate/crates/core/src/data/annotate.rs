use serde::{Deserialize, Serialize};

use super::{normalize_concepts, Dataset, NormalizationWarning};
use crate::{Error, Result};

/// One line of a concept-embedding file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptEmbedding {
    pub name: String,
    pub e: Vec<f64>,
}

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!(
            "cosine similarity of vectors with {} and {} entries",
            a.len(),
            b.len()
        )));
    }
    let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::Argument("cosine similarity of a zero-norm vector".into()));
    }
    Ok(a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (na * nb))
}

/// Raw concept scores: the sum over available modalities of the cosine
/// similarity to each concept embedding. Range `[-2, 2]` with both modalities.
pub fn annotate_concepts(
    image_emb: Option<&[f64]>,
    text_emb: &[f64],
    concept_embs: &[Vec<f64>],
) -> Result<Vec<f64>> {
    concept_embs
        .iter()
        .map(|e| {
            let text = cosine_similarity(text_emb, e)?;
            match image_emb {
                Some(img) => Ok(cosine_similarity(img, e)? + text),
                None => Ok(text),
            }
        })
        .collect()
}

/// Replaces the dataset's concept set and annotations with cosine scores
/// against `concepts`, then min-max normalises on the train split.
pub fn annotate_dataset(
    dataset: &Dataset,
    concepts: &[ConceptEmbedding],
) -> Result<(Dataset, Vec<NormalizationWarning>)> {
    if concepts.is_empty() {
        return Err(Error::Argument("no concept embeddings supplied".into()));
    }
    for c in concepts {
        if c.e.len() != dataset.d {
            return Err(Error::Shape(format!(
                "concept {:?} embedding has {} values, dataset d = {}",
                c.name,
                c.e.len(),
                dataset.d
            )));
        }
    }
    let embs: Vec<Vec<f64>> = concepts.iter().map(|c| c.e.clone()).collect();
    let mut out = dataset.clone();
    out.concept_names = concepts.iter().map(|c| c.name.clone()).collect();
    out.normalization = None;
    for s in &mut out.samples {
        let (img, text) = if dataset.text_only {
            (None, &s.z[..])
        } else {
            (Some(&s.z[..dataset.d]), &s.z[dataset.d..])
        };
        s.c = annotate_concepts(img, text, &embs)
            .map_err(|e| Error::Argument(format!("sample {:?}: {e}", s.id)))?;
    }
    out.validate()?;
    normalize_concepts(&out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_unit_vectors_score_two() {
        let e = vec![0.6, 0.8];
        let s = annotate_concepts(Some(&e), &e, std::slice::from_ref(&e)).unwrap();
        assert!((s[0] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn orthogonal_modalities_score_zero() {
        let s = annotate_concepts(Some(&[0.0, 1.0, 0.0]), &[0.0, 0.0, 2.0], &[vec![1.0, 0.0, 0.0]])
            .unwrap();
        assert_eq!(s, vec![0.0]);
    }

    #[test]
    fn mixed_cosines_add() {
        // unit concept on the x axis; image at cos 0.6, text at cos 0.2
        let concept = vec![1.0, 0.0];
        let image = vec![0.6, 0.8];
        let text = vec![0.2, (1.0f64 - 0.04).sqrt()];
        let s = annotate_concepts(Some(&image), &text, &[concept]).unwrap();
        assert!((s[0] - 0.8).abs() < 1e-12);
    }

    #[test]
    fn zero_vector_rejected() {
        assert!(annotate_concepts(None, &[0.0, 0.0], &[vec![1.0, 0.0]]).is_err());
    }
}
