use serde::{Deserialize, Serialize};

/// Lower edges of the duration bins in days; the last bin is open.
pub const BIN_EDGES: [f64; 3] = [0.0, 10.0, 40.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualBin {
    pub lower: f64,
    pub upper: Option<f64>,
    pub count: usize,
    /// `None` for empty bins.
    pub mae: Option<f64>,
    /// Mean of `pred - true`; positive means overestimation.
    pub mean_signed_error: Option<f64>,
}

impl ResidualBin {
    pub fn label(&self) -> String {
        match self.upper {
            Some(u) => format!("[{},{})", self.lower, u),
            None => format!("[{},inf)", self.lower),
        }
    }
}

/// Bin test rows by true duration and summarize errors per bin.
pub fn residual_analysis(true_days: &[f64], pred_days: &[f64]) -> Vec<ResidualBin> {
    let mut sums = [(0usize, 0.0, 0.0); 3];
    for (t, p) in true_days.iter().zip(pred_days) {
        let b = BIN_EDGES.iter().rposition(|&e| *t >= e).unwrap_or(0);
        let e = p - t;
        sums[b].0 += 1;
        sums[b].1 += e.abs();
        sums[b].2 += e;
    }
    (0..3)
        .map(|b| {
            let (n, abs, signed) = sums[b];
            let mean = |v: f64| (n > 0).then(|| v / n as f64);
            ResidualBin {
                lower: BIN_EDGES[b],
                upper: BIN_EDGES.get(b + 1).copied(),
                count: n,
                mae: mean(abs),
                mean_signed_error: mean(signed),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_short_fires() {
        let bins = residual_analysis(&[2.0; 5], &[2.0; 5]);
        assert_eq!((bins[0].count, bins[0].mae), (5, Some(0.0)));
        assert_eq!((bins[1].count, bins[1].mae, bins[2].mae), (0, None, None));
    }

    #[test]
    fn three_bin_fixture() {
        // bin 0: errors +1, -3; bin 1: +5 (at the 10-day edge); bin 2: -20, -10
        let t = [1.0, 9.0, 10.0, 40.0, 100.0];
        let p = [2.0, 6.0, 15.0, 20.0, 90.0];
        let bins = residual_analysis(&t, &p);
        assert_eq!(bins.iter().map(|b| b.count).collect::<Vec<_>>(), vec![2, 1, 2]);
        assert_eq!(bins[0].mae, Some(2.0));
        assert_eq!(bins[0].mean_signed_error, Some(-1.0));
        assert_eq!(bins[1].mae, Some(5.0));
        assert_eq!(bins[2].mae, Some(15.0));
        assert_eq!(bins[2].mean_signed_error, Some(-15.0));
        assert_eq!(bins[2].label(), "[40,inf)");
    }
}
