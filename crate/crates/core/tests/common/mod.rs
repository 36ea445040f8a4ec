//! Brute-force and hand-derived reference computations. None of these call
//! into the library's own metric or feature code.
#![allow(dead_code)]

/// Exact non-negative fraction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Frac {
    pub num: u128,
    pub den: u128,
}

fn gcd(a: u128, b: u128) -> u128 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

impl Frac {
    pub fn new(num: u128, den: u128) -> Self {
        assert!(den > 0);
        let g = gcd(num, den).max(1);
        Frac {
            num: num / g,
            den: den / g,
        }
    }

    pub fn zero() -> Self {
        Frac::new(0, 1)
    }

    pub fn add(self, o: Frac) -> Frac {
        Frac::new(self.num * o.den + o.num * self.den, self.den * o.den)
    }

    pub fn div_int(self, n: u128) -> Frac {
        Frac::new(self.num, self.den * n)
    }

    pub fn to_f64(self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

/// 1-based rank of `id` in `ranking`, by linear scan.
fn rank_of(ranking: &[usize], id: usize) -> Option<usize> {
    let mut r = 0;
    for &x in ranking {
        r += 1;
        if x == id {
            return Some(r);
        }
    }
    None
}

pub fn recall(ranking: &[usize], gold: &[usize], k: usize) -> Frac {
    let found = gold.iter().filter(|&&g| rank_of(ranking, g).is_some_and(|r| r <= k)).count();
    Frac::new(found as u128, gold.len() as u128)
}

pub fn precision(ranking: &[usize], gold: &[usize], k: usize) -> Frac {
    let found = gold.iter().filter(|&&g| rank_of(ranking, g).is_some_and(|r| r <= k)).count();
    Frac::new(found as u128, k as u128)
}

/// Σ over retrieved gold of (gold ranked at or above it) / its rank, over |gold|.
pub fn average_precision(ranking: &[usize], gold: &[usize]) -> Frac {
    let ranks: Vec<usize> = gold.iter().filter_map(|&g| rank_of(ranking, g)).collect();
    let mut sum = Frac::zero();
    for &r in &ranks {
        let at_or_above = ranks.iter().filter(|&&o| o <= r).count();
        sum = sum.add(Frac::new(at_or_above as u128, r as u128));
    }
    sum.div_int(gold.len() as u128)
}

pub fn reciprocal_rank(ranking: &[usize], gold: &[usize]) -> Frac {
    match gold.iter().filter_map(|&g| rank_of(ranking, g)).min() {
        Some(r) => Frac::new(1, r as u128),
        None => Frac::zero(),
    }
}

/// κ = (p_o − p_e) / (1 − p_e) from a square confusion table.
pub fn kappa(confusion: &[Vec<u64>]) -> f64 {
    let n: u64 = confusion.iter().flatten().sum();
    let diag: u64 = (0..confusion.len()).map(|i| confusion[i][i]).sum();
    let p_o = diag as f64 / n as f64;
    let mut p_e = 0.0;
    for i in 0..confusion.len() {
        let row: u64 = confusion[i].iter().sum();
        let col: u64 = confusion.iter().map(|r| r[i]).sum();
        p_e += (row as f64 / n as f64) * (col as f64 / n as f64);
    }
    (p_o - p_e) / (1.0 - p_e)
}

pub fn digit_count(s: &str) -> usize {
    s.chars().filter(|c| c.is_ascii_digit()).count()
}

/// Longest common substring length by checking every pair of start points.
pub fn longest_common_substring(a: &str, b: &str) -> usize {
    let (a, b): (Vec<char>, Vec<char>) = (a.chars().collect(), b.chars().collect());
    let mut best = 0;
    for i in 0..a.len() {
        for j in 0..b.len() {
            let mut l = 0;
            while i + l < a.len() && j + l < b.len() && a[i + l] == b[j + l] {
                l += 1;
            }
            best = best.max(l);
        }
    }
    best
}

fn edge(s: &str, first: bool) -> String {
    let c: Vec<char> = s.chars().collect();
    if first {
        c[..5].iter().collect()
    } else {
        c[c.len() - 5..].iter().collect()
    }
}

/// 1 iff the first (or last) five characters agree; strings shorter than
/// five must be equal.
pub fn affix_match(a: &str, b: &str, first: bool) -> f64 {
    let short = a.chars().count() < 5 || b.chars().count() < 5;
    let hit = if short { a == b } else { edge(a, first) == edge(b, first) };
    if hit {
        1.0
    } else {
        0.0
    }
}

pub fn euclidean(u: &[f32], v: &[f32]) -> f64 {
    u.iter()
        .zip(v)
        .map(|(a, b)| (*a as f64 - *b as f64).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Exact two-sided Fisher p-value by summing hypergeometric point
/// probabilities (computed with log-gamma-free products) no larger than the
/// observed one.
pub fn fisher_two_sided(a: u64, b: u64, c: u64, d: u64) -> f64 {
    let (r1, r2, c1) = (a + b, c + d, a + c);
    let n = r1 + r2;
    let ln_choose = |n: u64, k: u64| -> f64 { (1..=k).map(|i| ((n - k + i) as f64).ln() - (i as f64).ln()).sum() };
    let ln_p = |x: u64| ln_choose(r1, x) + ln_choose(r2, c1 - x) - ln_choose(n, c1);
    let lo = c1.saturating_sub(r2);
    let hi = c1.min(r1);
    let observed = ln_p(a);
    (lo..=hi)
        .map(ln_p)
        .filter(|&lp| lp <= observed + 1e-7 * observed.abs().max(1.0))
        .map(f64::exp)
        .sum()
}
