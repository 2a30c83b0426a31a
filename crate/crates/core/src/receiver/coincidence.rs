/// Matched index pairs `(i, j)` into the two tag lists, plus the expected
/// number of accidental matches for uncorrelated streams of the same rates.
#[derive(Debug, Clone, PartialEq)]
pub struct CoincidenceResult {
    pub pairs: Vec<(usize, usize)>,
    pub accidental_estimate: f64,
}

/// `r₁·r₂·window·T` with rates taken as counts over `duration`.
pub fn accidental_estimate(n_a: usize, n_b: usize, window: f64, duration: f64) -> f64 {
    if duration <= 0.0 {
        return 0.0;
    }
    (n_a as f64 / duration) * (n_b as f64 / duration) * window * duration
}

/// Greedy nearest-neighbour sweep over two sorted tag lists.
///
/// A candidate pair within `±window/2` is taken unless the next tag on either
/// side sits closer to the current partner; each tag is used at most once.
pub fn find_coincidences(a: &[f64], b: &[f64], window: f64, duration: f64) -> CoincidenceResult {
    let half = window / 2.0;
    let mut pairs = Vec::new();
    let (mut i, mut j) = (0, 0);
    if window > 0.0 {
        while i < a.len() && j < b.len() {
            let d = (b[j] - a[i]).abs();
            if d > half {
                if a[i] < b[j] {
                    i += 1;
                } else {
                    j += 1;
                }
                continue;
            }
            let next_a = a.get(i + 1).map_or(f64::INFINITY, |&x| (b[j] - x).abs());
            let next_b = b.get(j + 1).map_or(f64::INFINITY, |&y| (y - a[i]).abs());
            if next_a < d && next_a <= next_b {
                i += 1;
            } else if next_b < d {
                j += 1;
            } else {
                pairs.push((i, j));
                i += 1;
                j += 1;
            }
        }
    }
    CoincidenceResult {
        pairs,
        accidental_estimate: accidental_estimate(a.len(), b.len(), window, duration),
    }
}
