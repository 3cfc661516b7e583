//! Boundary detection accuracy between a detected and a manual segmentation.
//!
//! Each matched pair of segments scores `|intersection| / max(|detected|,
//! |manual|)`; unmatched segments score 0, and the total is averaged over
//! `max(#detected, #manual)`. The matching is the one that maximizes the
//! total score. Both lists are ordered and disjoint, so two pairs with
//! positive overlap can never cross, and the optimum is found by an
//! alignment recurrence over the two sequences.

use crate::segmentation::StepSegment;

/// A matched detected/manual segment pair and its score.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct MatchedPair {
    pub detected: usize,
    pub manual: usize,
    pub score: f64,
}

pub fn pair_score(a: &StepSegment, b: &StepSegment) -> f64 {
    let inter = a.intersection(b);
    if inter == 0 {
        return 0.0;
    }
    f64::from(inter) / f64::from(a.len().max(b.len()))
}

/// Score-maximizing matching of segments with positive overlap.
pub fn bda_matching(detected: &[StepSegment], manual: &[StepSegment]) -> Vec<MatchedPair> {
    let (n, m) = (detected.len(), manual.len());
    let mut best = vec![vec![0.0f64; m + 1]; n + 1];
    for i in 1..=n {
        for j in 1..=m {
            let w = pair_score(&detected[i - 1], &manual[j - 1]);
            let take = if w > 0.0 { best[i - 1][j - 1] + w } else { f64::MIN };
            best[i][j] = best[i - 1][j].max(best[i][j - 1]).max(take);
        }
    }
    let mut pairs = Vec::new();
    let (mut i, mut j) = (n, m);
    while i > 0 && j > 0 {
        let w = pair_score(&detected[i - 1], &manual[j - 1]);
        if w > 0.0 && best[i][j] == best[i - 1][j - 1] + w {
            pairs.push(MatchedPair {
                detected: i - 1,
                manual: j - 1,
                score: w,
            });
            i -= 1;
            j -= 1;
        } else if best[i][j] == best[i - 1][j] {
            i -= 1;
        } else {
            j -= 1;
        }
    }
    pairs.reverse();
    pairs
}

/// Mean matched-pair score in `[0, 1]`. Two empty segmentations agree
/// perfectly and score 1.
pub fn bda(detected: &[StepSegment], manual: &[StepSegment]) -> f64 {
    let denom = detected.len().max(manual.len());
    if denom == 0 {
        return 1.0;
    }
    let total: f64 = bda_matching(detected, manual).iter().map(|p| p.score).sum();
    (total / denom as f64).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn segs(spans: &[(u32, u32)]) -> Vec<StepSegment> {
        spans
            .iter()
            .enumerate()
            .map(|(i, &(s, e))| StepSegment::new(i, s, e))
            .collect()
    }

    #[test]
    fn examples() {
        let x = segs(&[(0, 9), (20, 40), (50, 70)]);
        assert_eq!(bda(&x, &x), 1.0);
        assert_eq!(bda(&segs(&[(0, 49)]), &segs(&[(0, 99)])), 0.5);
        assert_eq!(bda(&segs(&[(0, 9)]), &segs(&[(50, 59)])), 0.0);
        assert_eq!(bda(&[], &[]), 1.0);
        assert_eq!(bda(&segs(&[(0, 9)]), &[]), 0.0);
    }

    #[test]
    fn unmatched_segments_dilute_score() {
        // one perfect pair plus an extra detection
        let d = segs(&[(0, 9), (30, 39)]);
        let m = segs(&[(0, 9)]);
        assert_eq!(bda(&d, &m), 0.5);
    }

    #[test]
    fn optimal_over_greedy_choice() {
        // Greedy-by-intersection would pair manual[0] with detected[1]
        // (overlap 5 vs 4) and leave manual[1] unmatched.
        let d = segs(&[(0, 3), (5, 30)]);
        let m = segs(&[(0, 9), (10, 30)]);
        let expected = (4.0 / 10.0 + 21.0 / 26.0) / 2.0;
        assert!((bda(&d, &m) - expected).abs() < 1e-15);
        let pairs = bda_matching(&d, &m);
        assert_eq!(pairs.len(), 2);
        assert_eq!((pairs[0].detected, pairs[0].manual), (0, 0));
    }
}
