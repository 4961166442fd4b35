use super::{MetricError, PrecisionRecall};
use crate::gateway::{cosine, Embedder, EmbeddingCapability};

/// Greedy token matching: each token takes its best cosine on the other side.
pub fn bertscore_greedy(
    candidate: &str,
    reference: &str,
    embedder: &dyn Embedder,
) -> Result<PrecisionRecall, MetricError> {
    if embedder.capability() == EmbeddingCapability::SentenceOnly {
        return Err(MetricError::Capability(
            "embedder has no token vectors; use sentence_similarity instead".into(),
        ));
    }
    let c = embedder.embed_tokens(candidate)?;
    let r = embedder.embed_tokens(reference)?;
    if c.is_empty() || r.is_empty() {
        return Ok(PrecisionRecall::new(0.0, 0.0));
    }
    let best = |from: &[std::sync::Arc<[f64]>], to: &[std::sync::Arc<[f64]>]| {
        from.iter()
            .map(|a| to.iter().map(|b| cosine(a, b)).fold(f64::NEG_INFINITY, f64::max))
            .sum::<f64>()
            / from.len() as f64
    };
    Ok(PrecisionRecall::new(best(&c.vectors, &r.vectors), best(&r.vectors, &c.vectors)))
}

/// Cosine of native sentence vectors when the embedder has them, else of
/// mean-pooled token vectors.
pub fn sentence_similarity(a: &str, b: &str, embedder: &dyn Embedder) -> Result<f64, MetricError> {
    if a.trim().is_empty() && b.trim().is_empty() {
        return Err(MetricError::EmptyInput);
    }
    if let (Some(x), Some(y)) = (embedder.embed_sentence(a)?, embedder.embed_sentence(b)?) {
        return Ok(cosine(&x, &y));
    }
    let pool = |t: &str| -> Result<Vec<f64>, MetricError> {
        Ok(embedder.embed_tokens(t)?.mean_pooled().unwrap_or_default())
    };
    Ok(cosine(&pool(a)?, &pool(b)?))
}
