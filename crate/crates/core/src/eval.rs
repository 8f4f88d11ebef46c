//! One-to-one tolerance matching of predicted and true change points.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchReport {
    /// `(predicted, true)` index pairs.
    pub matches: Vec<(usize, usize)>,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl MatchReport {
    fn from_matches(matches: Vec<(usize, usize)>, n_pred: usize, n_true: usize) -> Self {
        let tp = matches.len();
        let (precision, recall, f1) = prf(tp, n_pred, n_true);
        Self {
            matches,
            tp,
            fp: n_pred - tp,
            fn_: n_true - tp,
            precision,
            recall,
            f1,
        }
    }
}

/// Precision, recall and F1 with the 0/0 -> 0 convention.
pub fn prf(tp: usize, n_pred: usize, n_true: usize) -> (f64, f64, f64) {
    let precision = if n_pred == 0 { 0.0 } else { tp as f64 / n_pred as f64 };
    let recall = if n_true == 0 { 0.0 } else { tp as f64 / n_true as f64 };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    (precision, recall, f1)
}

#[derive(Clone, Copy, PartialEq, PartialOrd)]
struct Cell {
    count: usize,
    cost: usize,
}

impl Cell {
    fn better_than(self, other: Cell) -> bool {
        self.count > other.count || (self.count == other.count && self.cost < other.cost)
    }
}

/// Matches predictions to truths within tolerance `eta`, one-to-one.
///
/// Returns a maximum-cardinality matching and, among those, one with the
/// smallest total distance, so each truth pairs with its closest available
/// prediction. On a line an optimal matching never crosses, which lets a
/// dynamic program over the two sorted lists find it exactly.
pub fn match_points(preds: &[usize], truths: &[usize], eta: usize) -> MatchReport {
    let mut p = preds.to_vec();
    p.sort_unstable();
    p.dedup();
    let mut t = truths.to_vec();
    t.sort_unstable();
    t.dedup();
    let (np, nt) = (p.len(), t.len());

    // dp[i][j]: best matching among the first i preds and first j truths.
    let width = nt + 1;
    let mut dp = vec![Cell { count: 0, cost: 0 }; (np + 1) * width];
    // 0 = skip pred, 1 = skip truth, 2 = match.
    let mut choice = vec![0u8; (np + 1) * width];
    for i in 1..=np {
        for j in 1..=nt {
            let mut best = dp[(i - 1) * width + j];
            let mut how = 0;
            let skip_truth = dp[i * width + j - 1];
            if skip_truth.better_than(best) {
                best = skip_truth;
                how = 1;
            }
            let dist = p[i - 1].abs_diff(t[j - 1]);
            if dist <= eta {
                let prev = dp[(i - 1) * width + j - 1];
                let matched = Cell {
                    count: prev.count + 1,
                    cost: prev.cost + dist,
                };
                if matched.better_than(best) {
                    best = matched;
                    how = 2;
                }
            }
            dp[i * width + j] = best;
            choice[i * width + j] = how;
        }
    }

    let mut matches = Vec::new();
    let (mut i, mut j) = (np, nt);
    while i > 0 && j > 0 {
        match choice[i * width + j] {
            0 => i -= 1,
            1 => j -= 1,
            _ => {
                matches.push((p[i - 1], t[j - 1]));
                i -= 1;
                j -= 1;
            }
        }
    }
    matches.reverse();
    MatchReport::from_matches(matches, np, nt)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_pair() {
        let r = match_points(&[10], &[12], 5);
        assert_eq!(r.tp, 1);
        assert_eq!((r.precision, r.recall, r.f1), (1.0, 1.0, 1.0));
    }

    #[test]
    fn empty_predictions() {
        let r = match_points(&[], &[12], 5);
        assert_eq!((r.precision, r.recall, r.f1), (0.0, 0.0, 0.0));
        assert_eq!(r.fn_, 1);
        let r = match_points(&[], &[], 5);
        assert_eq!(r.f1, 0.0);
    }

    #[test]
    fn closest_prediction_wins() {
        let r = match_points(&[10, 13], &[12], 5);
        assert_eq!(r.matches, vec![(13, 12)]);
        assert_eq!((r.tp, r.fp, r.fn_), (1, 1, 0));
        assert_eq!(r.precision, 0.5);
        assert_eq!(r.recall, 1.0);
        assert!((r.f1 - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn nearest_greedy_would_lose_a_pair() {
        // Pairing 3 with its nearest truth 4 strands truth 0.
        let r = match_points(&[3, 7], &[0, 4], 4);
        assert_eq!(r.tp, 2);
        assert_eq!(r.matches, vec![(3, 0), (7, 4)]);
    }

    #[test]
    fn tolerance_boundary_is_inclusive() {
        assert_eq!(match_points(&[15], &[10], 5).tp, 1);
        assert_eq!(match_points(&[16], &[10], 5).tp, 0);
        assert_eq!(match_points(&[10], &[10], 0).tp, 1);
    }
}
