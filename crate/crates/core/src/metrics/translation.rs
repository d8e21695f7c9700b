use std::collections::HashMap;

use super::text::Param;
use super::MetricsError;

/// Floor applied to every n-gram precision before taking its log.
pub const BLEU_PRECISION_FLOOR: f64 = 1e-9;

pub const TER_MAX_SHIFTS: usize = 10;

fn ngram_counts<T: AsRef<str>>(tokens: &[T], n: usize) -> HashMap<Vec<&str>, usize> {
    let mut m = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *m.entry(w.iter().map(AsRef::as_ref).collect()).or_insert(0) += 1;
        }
    }
    m
}

/// Clipped n-gram precision as (matches, total); total is at least 1.
pub fn modified_precision<T: AsRef<str>>(reference: &[T], hypothesis: &[T], n: usize) -> (usize, usize) {
    let hyp = ngram_counts(hypothesis, n);
    let reference = ngram_counts(reference, n);
    let matched = hyp
        .iter()
        .map(|(g, &c)| c.min(reference.get(g).copied().unwrap_or(0)))
        .sum();
    let total: usize = hyp.values().sum();
    (matched, total.max(1))
}

/// Sentence BLEU with uniform weights over 1..=4-grams.
pub fn bleu<T: AsRef<str>>(reference: &[T], hypothesis: &[T]) -> Result<f64, MetricsError> {
    bleu_weighted(reference, hypothesis, &[0.25; 4])
}

/// Sentence BLEU: brevity penalty times the weighted geometric mean of the
/// clipped n-gram precisions, each floored at [`BLEU_PRECISION_FLOOR`].
pub fn bleu_weighted<T: AsRef<str>>(
    reference: &[T],
    hypothesis: &[T],
    weights: &[f64],
) -> Result<f64, MetricsError> {
    if reference.is_empty() || hypothesis.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let mut log_sum = 0.0;
    for (k, w) in weights.iter().enumerate() {
        let (m, t) = modified_precision(reference, hypothesis, k + 1);
        let p = (m as f64 / t as f64).max(BLEU_PRECISION_FLOOR);
        log_sum += w * p.ln();
    }
    let (r, c) = (reference.len() as f64, hypothesis.len() as f64);
    let bp = if c > r { 1.0 } else { (1.0 - r / c).exp() };
    Ok(bp * log_sum.exp())
}

/// Token-level edit distance with unit costs.
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

/// Move `seq[start..start+len]` so it begins at `dest` in the sequence
/// that remains after removing it.
pub fn shift_block<T: Clone>(seq: &[T], start: usize, len: usize, dest: usize) -> Vec<T> {
    let mut rest: Vec<T> = seq[..start].to_vec();
    rest.extend_from_slice(&seq[start + len..]);
    let block = &seq[start..start + len];
    let mut out = rest[..dest].to_vec();
    out.extend_from_slice(block);
    out.extend_from_slice(&rest[dest..]);
    out
}

/// Edit count behind TER: greedy block shifts, each taken only when it
/// strictly lowers the edit distance to the reference, plus the remaining
/// edit distance. Each round takes the largest drop; ties go to the longer
/// block, then the earlier start and destination. At most
/// [`TER_MAX_SHIFTS`] shifts.
pub fn ter_edits<T: AsRef<str>>(reference: &[T], hypothesis: &[T]) -> usize {
    let r: Vec<&str> = reference.iter().map(AsRef::as_ref).collect();
    let mut h: Vec<&str> = hypothesis.iter().map(AsRef::as_ref).collect();
    let mut d = levenshtein(&h, &r);
    let mut shifts = 0;
    while shifts < TER_MAX_SHIFTS && d > 0 {
        let mut best: Option<(usize, Vec<&str>)> = None;
        let n = h.len();
        for len in (1..n).rev() {
            for start in 0..=n - len {
                for dest in 0..=n - len {
                    if dest == start {
                        continue;
                    }
                    let cand = shift_block(&h, start, len, dest);
                    let cd = levenshtein(&cand, &r);
                    if cd < best.as_ref().map_or(d, |b| b.0) {
                        best = Some((cd, cand));
                    }
                }
            }
        }
        match best {
            Some((cd, cand)) => {
                h = cand;
                d = cd;
                shifts += 1;
            }
            None => break,
        }
    }
    shifts + d
}

/// Translation edit rate: edits over reference length. Can exceed 1.
pub fn ter<T: AsRef<str>>(reference: &[T], hypothesis: &[T]) -> Result<f64, MetricsError> {
    if reference.is_empty() {
        return Err(MetricsError::EmptyReference);
    }
    Ok(ter_edits(reference, hypothesis) as f64 / reference.len() as f64)
}

/// 1 when the first tokens agree ignoring case.
pub fn vematch<T: AsRef<str>>(reference: &[T], hypothesis: &[T]) -> Result<u8, MetricsError> {
    match (reference.first(), hypothesis.first()) {
        (Some(r), Some(h)) => Ok(u8::from(r.as_ref().to_lowercase() == h.as_ref().to_lowercase())),
        _ => Err(MetricsError::EmptyInput),
    }
}

/// Parameter error rate. With reference parameters present, the share of
/// the first `min(|ref|, |hyp|)` positions that disagree, over `|ref|`;
/// 1 when only the hypothesis has parameters; 0 when neither does.
pub fn per(reference: &[Param], hypothesis: &[Param]) -> f64 {
    if !reference.is_empty() {
        let k = reference.len().min(hypothesis.len());
        let wrong = (0..k)
            .filter(|&i| !reference[i].matches(&hypothesis[i]))
            .count();
        wrong as f64 / reference.len() as f64
    } else if !hypothesis.is_empty() {
        1.0
    } else {
        0.0
    }
}

/// Parameter score: `1 - per`, lowered further when the hypothesis has a
/// different number of parameters than the reference.
pub fn s_per(reference: &[Param], hypothesis: &[Param]) -> f64 {
    let gap = reference.len().abs_diff(hypothesis.len()) as f64;
    let count_score = 1.0 - (gap / reference.len().max(1) as f64).min(1.0);
    (1.0 - per(reference, hypothesis)).min(count_score)
}

#[cfg(test)]
mod tests {
    use super::super::text::{tokenize, Unit};
    use super::*;

    fn t(s: &str) -> Vec<String> {
        tokenize(s, "en")
    }

    #[test]
    fn bleu_basics() {
        let a = t("move forward two meters now");
        assert_eq!(bleu(&a, &a).unwrap(), 1.0);
        let z = bleu(&t("a b c d"), &t("e f g h")).unwrap();
        assert!(z < 1e-8);
        assert_eq!(bleu::<String>(&[], &a), Err(MetricsError::EmptyInput));
    }

    #[test]
    fn ter_basics() {
        let r = t("turn left ninety degrees now");
        assert_eq!(ter(&r, &r).unwrap(), 0.0);
        assert_eq!(ter(&r, &t("turn right ninety degrees now")).unwrap(), 0.2);
        // a swapped block costs one shift
        assert_eq!(ter_edits(&t("a b c d e"), &t("c d a b e")), 1);
        assert!(ter(&t("go"), &t("please go now to the kitchen")).unwrap() > 1.0);
        assert_eq!(ter(&Vec::<String>::new(), &r), Err(MetricsError::EmptyReference));
    }

    #[test]
    fn shifting() {
        let s = ["a", "b", "c", "d"];
        assert_eq!(shift_block(&s, 0, 2, 2), ["c", "d", "a", "b"]);
        assert_eq!(shift_block(&s, 3, 1, 0), ["d", "a", "b", "c"]);
    }

    #[test]
    fn vematch_rule() {
        assert_eq!(vematch(&t("Move forward"), &t("move ahead")), Ok(1));
        assert_eq!(vematch(&t("Turn left"), &t("Rotate left")), Ok(0));
    }

    #[test]
    fn per_branches() {
        let p = |v: f64, u| Param::new(v, u);
        let r = [p(2.0, Unit::Meter), p(0.2, Unit::MeterPerSecond)];
        assert_eq!(per(&r, &r), 0.0);
        assert_eq!(per(&[], &[p(3.0, Unit::Meter)]), 1.0);
        assert_eq!(per(&[], &[]), 0.0);
        assert_eq!(per(&r, &[p(2.0, Unit::Meter), p(0.3, Unit::MeterPerSecond)]), 0.5);
        // units must agree
        assert_eq!(per(&r[..1], &[p(2.0, Unit::Second)]), 1.0);
        assert_eq!(s_per(&r, &r), 1.0);
        assert_eq!(s_per(&r, &[p(2.0, Unit::Meter), p(0.3, Unit::MeterPerSecond)]), 0.5);
        let padded = [r[0], r[1], p(5.0, Unit::Meter), p(1.0, Unit::Second)];
        assert_eq!(per(&r, &padded), 0.0);
        assert_eq!(s_per(&r, &padded), 0.0);
        let one_extra = [r[0], r[1], p(5.0, Unit::Meter)];
        assert_eq!(s_per(&r, &one_extra), 0.5);
    }
}
