//! Word error rate over normalized transcripts.

use super::MetricError;

/// Case-folds, strips punctuation, and splits on whitespace.
pub fn normalize_transcript(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split_whitespace()
        .map(|word| {
            word.chars()
                .filter(|c| c.is_alphanumeric())
                .collect::<String>()
        })
        .filter(|w| !w.is_empty())
        .collect()
}

/// Minimal word-level edit distance (substitutions + insertions + deletions)
/// between two token sequences, via the classic two-row DP.
fn edit_distance(reference: &[String], hypothesis: &[String]) -> usize {
    let mut prev: Vec<usize> = (0..=hypothesis.len()).collect();
    let mut curr = vec![0; hypothesis.len() + 1];
    for (i, r) in reference.iter().enumerate() {
        curr[0] = i + 1;
        for (j, h) in hypothesis.iter().enumerate() {
            let sub = prev[j] + usize::from(r != h);
            curr[j + 1] = sub.min(prev[j + 1] + 1).min(curr[j] + 1);
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    prev[hypothesis.len()]
}

/// Word error rate: edit distance divided by reference word count. The
/// reference must contain at least one word after normalization.
pub fn wer(reference_text: &str, hypothesis_text: &str) -> Result<f64, MetricError> {
    let reference = normalize_transcript(reference_text);
    if reference.is_empty() {
        return Err(MetricError::EmptyReference);
    }
    let hypothesis = normalize_transcript(hypothesis_text);
    Ok(edit_distance(&reference, &hypothesis) as f64 / reference.len() as f64)
}
