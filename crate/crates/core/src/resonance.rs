//! Interaction phase, divisor counting and the resonant / non-resonant
//! frequency sets.
//!
//! A box index `m` is "near" `n` when `m ∈ {n-1, n, n+1}`. A triple
//! `(n1, n2, n3)` feeds box `n` when `n1 - n2 + n3` is near `n`; it is
//! non-resonant when neither `n1` nor `n3` is near `n`.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// `Φ = ξ² - ξ1² + ξ2² - ξ3²`.
pub fn phase_phi(xi: f64, xi1: f64, xi2: f64, xi3: f64) -> f64 {
    xi * xi - xi1 * xi1 + xi2 * xi2 - xi3 * xi3
}

pub fn near(a: i64, b: i64) -> bool {
    (a - b).abs() <= 1
}

/// How the integer phase of a triple is measured against thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PhaseForm {
    /// `Φ(n, n1, n2, n3)` on the integer tuple, slack included.
    #[default]
    Exact,
    /// `2(n - n1)(n - n3)`, ignoring the ±1 slack of the near-match.
    Factored,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct FrequencyTriple {
    pub n: i64,
    pub n1: i64,
    pub n2: i64,
    pub n3: i64,
}

impl FrequencyTriple {
    pub fn phase(&self, form: PhaseForm) -> i64 {
        integer_phase(form, self.n, self.n1, self.n2, self.n3)
    }

    pub fn is_resonant(&self) -> bool {
        near(self.n1, self.n) || near(self.n3, self.n)
    }
}

pub fn integer_phase(form: PhaseForm, n: i64, n1: i64, n2: i64, n3: i64) -> i64 {
    match form {
        PhaseForm::Exact => n * n - n1 * n1 + n2 * n2 - n3 * n3,
        PhaseForm::Factored => 2 * (n - n1) * (n - n3),
    }
}

/// Inclusive range of admissible box indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoxRange {
    pub lo: i64,
    pub hi: i64,
}

impl BoxRange {
    pub fn symmetric(window: i64) -> BoxRange {
        BoxRange { lo: -window, hi: window }
    }

    pub fn contains(&self, n: i64) -> bool {
        n >= self.lo && n <= self.hi
    }

    pub fn len(&self) -> usize {
        (self.hi - self.lo + 1).max(0) as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = i64> {
        self.lo..=self.hi
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TripleMode {
    /// `n1 ≈ n` and `n3 ≈ n`.
    ResonantR1,
    /// `n1 ≈ n` or `n3 ≈ n` (as a set, without duplicates).
    ResonantR2,
    /// Non-resonant with `|Φ| ≤ N`.
    NearPhase,
    /// Non-resonant with `|Φ| > N`.
    FarPhase,
    /// Every triple feeding `n`.
    All,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Threshold {
    pub n: f64,
    pub form: PhaseForm,
}

impl Threshold {
    pub fn new(n: f64) -> Result<Threshold> {
        if !(n > 0.0) {
            return Err(Error::Domain(format!("threshold N must be positive (got {n})")));
        }
        Ok(Threshold { n, form: PhaseForm::Exact })
    }

    pub fn with_form(mut self, form: PhaseForm) -> Threshold {
        self.form = form;
        self
    }
}

impl TripleMode {
    pub fn accepts(self, t: &FrequencyTriple, thr: &Threshold) -> bool {
        let r1 = near(t.n1, t.n);
        let r3 = near(t.n3, t.n);
        match self {
            TripleMode::All => true,
            TripleMode::ResonantR1 => r1 && r3,
            TripleMode::ResonantR2 => r1 || r3,
            TripleMode::NearPhase => !r1 && !r3 && (t.phase(thr.form).abs() as f64) <= thr.n,
            TripleMode::FarPhase => !r1 && !r3 && (t.phase(thr.form).abs() as f64) > thr.n,
        }
    }
}

/// Calls `f` for every triple feeding `n` with all indices in `range`, in
/// lexicographic `(n1, n3, n2)` order.
pub fn for_each_triple(n: i64, range: BoxRange, thr: &Threshold, mode: TripleMode, mut f: impl FnMut(FrequencyTriple)) {
    let (lo1, hi1, lo3, hi3) = match mode {
        TripleMode::ResonantR1 => (n - 1, n + 1, n - 1, n + 1),
        _ => (range.lo, range.hi, range.lo, range.hi),
    };
    for n1 in lo1.max(range.lo)..=hi1.min(range.hi) {
        for n3 in lo3.max(range.lo)..=hi3.min(range.hi) {
            for delta in [1, 0, -1] {
                // n1 - n2 + n3 = n + delta
                let n2 = n1 + n3 - n - delta;
                if !range.contains(n2) {
                    continue;
                }
                let t = FrequencyTriple { n, n1, n2, n3 };
                if mode.accepts(&t, thr) {
                    f(t);
                }
            }
        }
    }
}

/// Exhaustive enumeration within `[-window, window]`.
pub fn enumerate_triples(n: i64, window: i64, thr: &Threshold, mode: TripleMode) -> Result<Vec<FrequencyTriple>> {
    enumerate_triples_in(n, BoxRange::symmetric(window), thr, mode)
}

pub fn enumerate_triples_in(n: i64, range: BoxRange, thr: &Threshold, mode: TripleMode) -> Result<Vec<FrequencyTriple>> {
    if !range.contains(n) {
        return Err(Error::Range(format!("output box {n} outside [{}, {}]", range.lo, range.hi)));
    }
    let mut out = Vec::new();
    for_each_triple(n, range, thr, mode, |t| out.push(t));
    Ok(out)
}

/// Number of divisors of `m`.
pub fn divisor_count(m: i64) -> Result<u64> {
    if m <= 0 {
        return Err(Error::Domain(format!("divisor count needs m >= 1 (got {m})")));
    }
    let m = m as u64;
    let mut count = 0;
    let mut d = 1u64;
    while d * d <= m {
        if m % d == 0 {
            count += if d * d == m { 1 } else { 2 };
        }
        d += 1;
    }
    Ok(count)
}

/// `d(m)` for all `m ≤ limit` (index 0 unused).
pub fn divisor_counts_upto(limit: usize) -> Vec<u32> {
    let mut d = vec![0u32; limit + 1];
    for a in 1..=limit {
        let mut k = a;
        while k <= limit {
            d[k] += 1;
            k += a;
        }
    }
    d
}

/// `(m, d(m)/m^eps)` at the maximum over `1 ≤ m ≤ limit`.
pub fn divisor_growth_max(limit: usize, eps: f64) -> (usize, f64) {
    let d = divisor_counts_upto(limit);
    let mut best = (1, 1.0);
    for (m, &dm) in d.iter().enumerate().skip(1) {
        let r = dm as f64 / (m as f64).powf(eps);
        if r > best.1 {
            best = (m, r);
        }
    }
    best
}

/// Number of `(n1, n3)` in `[-window, window]²` with `2(n - n1)(n - n3) = mu`.
pub fn divisor_choice_count(n: i64, mu: i64, window: i64) -> u64 {
    if mu == 0 || mu % 2 != 0 {
        return 0;
    }
    let m = mu / 2;
    let range = BoxRange::symmetric(window);
    let abs = m.unsigned_abs();
    let mut count = 0;
    let mut d = 1u64;
    while d * d <= abs {
        if abs % d == 0 {
            let mut divisors = vec![d as i64, -(d as i64)];
            let e = (abs / d) as i64;
            if e != d as i64 {
                divisors.push(e);
                divisors.push(-e);
            }
            for a in divisors {
                let c = m / a;
                let (n1, n3) = (n - a, n - c);
                if range.contains(n1) && range.contains(n3) {
                    count += 1;
                }
            }
        }
        d += 1;
    }
    count
}

/// Membership in `C_J`: `|μ̃_{J+1}| ≤ (2J+3)³ max(|μ̃_J|, |μ_1|)^{0.99}`.
pub fn c_set_member(j: usize, mu_tilde_j: f64, mu_tilde_j1: f64, mu_1: f64) -> bool {
    let c = ((2 * j + 3) as f64).powi(3);
    let lhs = mu_tilde_j1.abs();
    lhs <= c * mu_tilde_j.abs().powf(0.99) || lhs <= c * mu_1.abs().powf(0.99)
}
