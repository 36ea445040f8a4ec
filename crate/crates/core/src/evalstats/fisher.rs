use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// 2×2 table `[[a, b], [c, d]]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContingencyTable2x2 {
    pub a: u64,
    pub b: u64,
    pub c: u64,
    pub d: u64,
}

impl ContingencyTable2x2 {
    /// Validates signed counts.
    pub fn new(a: i64, b: i64, c: i64, d: i64) -> Result<Self> {
        if [a, b, c, d].iter().any(|&x| x < 0) {
            return Err(Error::InvalidTable(format!("negative count in [[{a}, {b}], [{c}, {d}]]")));
        }
        let t = ContingencyTable2x2 {
            a: a as u64,
            b: b as u64,
            c: c as u64,
            d: d as u64,
        };
        if t.total() == 0 {
            return Err(Error::InvalidTable("table total is zero".into()));
        }
        Ok(t)
    }

    pub fn total(&self) -> u64 {
        self.a + self.b + self.c + self.d
    }
}

fn ln_factorials(n: u64) -> Vec<f64> {
    let mut out = Vec::with_capacity(n as usize + 1);
    let mut acc = 0.0f64;
    out.push(0.0);
    for i in 1..=n {
        acc += (i as f64).ln();
        out.push(acc);
    }
    out
}

/// Two-sided Fisher exact test: sums the hypergeometric probabilities of
/// all tables with the observed margins whose point probability does not
/// exceed the observed one.
pub fn fisher_exact(t: &ContingencyTable2x2) -> Result<f64> {
    let n = t.total();
    if n == 0 {
        return Err(Error::InvalidTable("table total is zero".into()));
    }
    let row1 = t.a + t.b;
    let row2 = t.c + t.d;
    let col1 = t.a + t.c;
    let lf = ln_factorials(n);
    let ln_choose = |n: u64, k: u64| lf[n as usize] - lf[k as usize] - lf[(n - k) as usize];
    let log_p = |x: u64| ln_choose(row1, x) + ln_choose(row2, col1 - x) - ln_choose(n, col1);
    let lo = col1.saturating_sub(row2);
    let hi = row1.min(col1);
    let observed = log_p(t.a);
    // Relative tolerance for ties in point probability.
    let cutoff = observed + (1.0 + 1e-7f64).ln();
    let kept: Vec<f64> = (lo..=hi).map(log_p).filter(|&lp| lp <= cutoff).collect();
    let max = kept.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = kept.iter().map(|lp| (lp - max).exp()).sum();
    Ok((max + sum.ln()).exp().min(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn no_association_gives_one() {
        let t = ContingencyTable2x2::new(1, 1, 1, 1).unwrap();
        assert!((fisher_exact(&t).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn small_table_matches_hand_enumeration() {
        // [[3,1],[1,3]]: margins 4/4/4/4, n=8. P(x) = C(4,x)C(4,4-x)/70:
        // x=0..4 -> 1,16,36,16,1 (/70). Observed x=3 -> 16/70; tables with
        // probability <= 16/70 are x in {0,1,3,4} -> 34/70.
        let t = ContingencyTable2x2::new(3, 1, 1, 3).unwrap();
        assert!((fisher_exact(&t).unwrap() - 34.0 / 70.0).abs() < 1e-12);
    }

    #[test]
    fn invalid_tables() {
        assert!(ContingencyTable2x2::new(-1, 0, 0, 1).is_err());
        assert!(ContingencyTable2x2::new(0, 0, 0, 0).is_err());
    }

    proptest! {
        #[test]
        fn invariant_under_row_and_column_swap(a in 0u64..40, b in 0u64..40, c in 0u64..40, d in 0u64..40) {
            prop_assume!(a + b + c + d > 0);
            let t = ContingencyTable2x2 { a, b, c, d };
            let swapped = ContingencyTable2x2 { a: d, b: c, c: b, d: a };
            let p = fisher_exact(&t).unwrap();
            let q = fisher_exact(&swapped).unwrap();
            prop_assert!((p - q).abs() <= 1e-9 * p.max(1e-300));
            prop_assert!(p > 0.0 && p <= 1.0);
        }
    }
}
