use super::{RecogError, Result};

/// Insertions + deletions + substitutions turning `a` into `b`.
pub fn levenshtein<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Phoneme error rate of one utterance: `levenshtein(hyp, ref) / |ref|`.
pub fn per<T: PartialEq>(hyp: &[T], reference: &[T]) -> Result<f64> {
    if reference.is_empty() {
        return Err(RecogError::Argument("empty reference".into()));
    }
    Ok(levenshtein(hyp, reference) as f64 / reference.len() as f64)
}

/// Pooled error rate over many utterances: total edits over total reference length.
pub fn corpus_per<T: PartialEq>(pairs: &[(Vec<T>, Vec<T>)]) -> Result<f64> {
    let refs: usize = pairs.iter().map(|(_, r)| r.len()).sum();
    if refs == 0 {
        return Err(RecogError::Argument("no reference symbols".into()));
    }
    let edits: usize = pairs.iter().map(|(h, r)| levenshtein(h, r)).sum();
    Ok(edits as f64 / refs as f64)
}

/// `|first − last|` of a series ordered by training-set size.
pub fn range_metric(per_by_size: &[f64]) -> Result<f64> {
    match per_by_size {
        [first, .., last] => Ok((first - last).abs()),
        _ => Err(RecogError::Argument(format!(
            "range needs at least 2 values, got {}",
            per_by_size.len()
        ))),
    }
}

/// Mean over entries of `(base − large)²`.
pub fn model_variance(per_base: &[f64], per_large: &[f64]) -> Result<f64> {
    if per_base.len() != per_large.len() {
        return Err(RecogError::Argument(format!(
            "{} base values against {} large values",
            per_base.len(),
            per_large.len()
        )));
    }
    if per_base.is_empty() {
        return Err(RecogError::Argument("no values".into()));
    }
    let sq: f64 = per_base
        .iter()
        .zip(per_large)
        .map(|(b, l)| (b - l) * (b - l))
        .sum();
    Ok(sq / per_base.len() as f64)
}
