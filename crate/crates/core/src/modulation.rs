//! Frequency box projections and modulation-space norms.
//!
//! Two window families are provided, both behind the [`Window`] trait and
//! looked up by name through [`WindowRegistry`]:
//!
//! * `sharp_indicator`: `□_n` restricts to `[n, n+1)` (the default).
//! * `raised_cosine`: `σ_n(ξ) = cos²(π(ξ-n)/2)` on `|ξ-n| ≤ 1`, a C¹ partition of unity.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::spectral::{inverse, Grid, Spectrum};
use crate::{Error, Result, C64};

/// A family of frequency windows `σ_k(ξ) = σ_0(ξ - k)` (or the sharp boxes).
pub trait Window: Send + Sync {
    fn name(&self) -> &'static str;
    /// Weight of window `k` at frequency `xi`.
    fn weight(&self, k: i64, xi: f64) -> f64;
    /// Frequencies `ξ` with nonzero weight satisfy `lo <= ξ - k < hi`.
    fn support(&self) -> (f64, f64);
    /// Window indices meaningful on `grid` (inclusive).
    fn index_range(&self, grid: Grid) -> (i64, i64);
}

pub struct SharpIndicator;

impl Window for SharpIndicator {
    fn name(&self) -> &'static str {
        "sharp_indicator"
    }
    fn weight(&self, k: i64, xi: f64) -> f64 {
        let d = xi - k as f64;
        if (0.0..1.0).contains(&d) {
            1.0
        } else {
            0.0
        }
    }
    fn support(&self) -> (f64, f64) {
        (0.0, 1.0)
    }
    fn index_range(&self, grid: Grid) -> (i64, i64) {
        grid.box_bounds()
    }
}

pub struct RaisedCosine;

impl RaisedCosine {
    pub fn profile(d: f64) -> f64 {
        if d.abs() <= 1.0 {
            (0.5 * PI * d).cos().powi(2)
        } else {
            0.0
        }
    }
}

impl Window for RaisedCosine {
    fn name(&self) -> &'static str {
        "raised_cosine"
    }
    fn weight(&self, k: i64, xi: f64) -> f64 {
        Self::profile(xi - k as f64)
    }
    fn support(&self) -> (f64, f64) {
        (-1.0, 1.0)
    }
    fn index_range(&self, grid: Grid) -> (i64, i64) {
        // The top window reaches into the grid's last box, so it is kept to
        // complete the partition of unity.
        let (lo, hi) = grid.box_bounds();
        (lo, hi + 1)
    }
}

/// Name → window lookup.
pub struct WindowRegistry {
    entries: Vec<Arc<dyn Window>>,
}

impl Default for WindowRegistry {
    fn default() -> Self {
        let mut r = WindowRegistry { entries: Vec::new() };
        r.register(Arc::new(SharpIndicator));
        r.register(Arc::new(RaisedCosine));
        r
    }
}

impl WindowRegistry {
    pub fn register(&mut self, w: Arc<dyn Window>) {
        self.entries.retain(|e| e.name() != w.name());
        self.entries.push(w);
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn Window>> {
        self.entries
            .iter()
            .find(|w| w.name() == name)
            .cloned()
            .ok_or_else(|| Error::Config(format!("unknown window family '{name}'")))
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.iter().map(|w| w.name()).collect()
    }
}

/// A windowed piece of a spectrum. For the sharp family `coeffs` are exactly
/// the `B` bins of `[n, n+1)`; smooth windows carry their wider support.
#[derive(Debug, Clone, PartialEq)]
pub struct BandCoefficients {
    pub box_index: i64,
    pub grid: Grid,
    /// Bin index `j` of `coeffs[0]`.
    pub first_bin: i64,
    pub coeffs: Vec<C64>,
}

impl BandCoefficients {
    /// Sharp band of box `n` with the given coefficients.
    pub fn sharp(grid: Grid, n: i64, coeffs: Vec<C64>) -> Result<Self> {
        if coeffs.len() != grid.bins_per_box() {
            return Err(Error::GridMismatch(format!(
                "band has {} bins, grid has {} per box",
                coeffs.len(),
                grid.bins_per_box()
            )));
        }
        if !grid.has_box(n) {
            return Err(Error::Range(format!("box {n} outside the grid")));
        }
        Ok(BandCoefficients { box_index: n, grid, first_bin: n * grid.bins_per_box() as i64, coeffs })
    }

    pub fn zero(grid: Grid, n: i64) -> Result<Self> {
        Self::sharp(grid, n, vec![C64::new(0.0, 0.0); grid.bins_per_box()])
    }

    pub fn l2_norm(&self) -> f64 {
        band_norm(&self.coeffs, self.grid.bins_per_box())
    }

    /// Embeds the band into a full spectrum.
    pub fn to_spectrum(&self) -> Spectrum {
        let mut s = Spectrum::zeros(self.grid);
        self.add_into(&mut s);
        s
    }

    pub fn add_into(&self, s: &mut Spectrum) {
        for (a, c) in self.coeffs.iter().enumerate() {
            if let Some(slot) = self.grid.slot_of_bin(self.first_bin + a as i64) {
                s.coeffs[slot] += *c;
            }
        }
    }
}

/// `L²` norm of a run of bins with Riemann weight `1/B`.
pub fn band_norm(coeffs: &[C64], bins_per_box: usize) -> f64 {
    (coeffs.iter().map(|z| z.norm_sqr()).sum::<f64>() / bins_per_box as f64).sqrt()
}

pub fn box_project(f: &Spectrum, n: i64, w: &dyn Window) -> Result<BandCoefficients> {
    let g = f.grid;
    let (klo, khi) = w.index_range(g);
    if n < klo || n > khi {
        return Err(Error::Range(format!("box {n} outside window range [{klo}, {khi}]")));
    }
    let b = g.bins_per_box() as i64;
    let (slo, shi) = w.support();
    let first = ((n as f64 + slo) * b as f64).ceil() as i64;
    let last = ((n as f64 + shi) * b as f64).ceil() as i64 - 1;
    let mut coeffs = Vec::with_capacity((last - first + 1).max(0) as usize);
    for j in first..=last {
        let c = match g.slot_of_bin(j) {
            Some(s) => f.coeffs[s] * w.weight(n, j as f64 / b as f64),
            None => C64::new(0.0, 0.0),
        };
        coeffs.push(c);
    }
    Ok(BandCoefficients { box_index: n, grid: g, first_bin: first, coeffs })
}

pub fn reconstruct<'a>(grid: Grid, bands: impl IntoIterator<Item = &'a BandCoefficients>) -> Spectrum {
    let mut s = Spectrum::zeros(grid);
    for band in bands {
        band.add_into(&mut s);
    }
    s
}

/// `⟨k⟩ = (1 + k²)^{1/2}`.
pub fn japanese(k: f64) -> f64 {
    (1.0 + k * k).sqrt()
}

/// Combines per-box norms into `(Σ ⟨k⟩^{sq} a_k^q)^{1/q}` (sup for `q = ∞`).
pub fn weighted_lq(boxes: impl IntoIterator<Item = (i64, f64)>, s: f64, q: f64) -> Result<f64> {
    if !(q >= 1.0) {
        return Err(Error::Domain(format!("q must be >= 1 (got {q})")));
    }
    if q.is_infinite() {
        Ok(boxes.into_iter().map(|(k, a)| japanese(k as f64).powf(s) * a).fold(0.0, f64::max))
    } else {
        let sum: f64 = boxes
            .into_iter()
            .map(|(k, a)| (japanese(k as f64).powf(s) * a).powf(q))
            .sum();
        Ok(sum.powf(1.0 / q))
    }
}

/// Modulation norm `‖F‖_{M^s_{2,q}}` computed with window family `w`.
pub fn modulation_norm(f: &Spectrum, s: f64, q: f64, w: &dyn Window) -> Result<f64> {
    if !(q >= 1.0) {
        return Err(Error::Domain(format!("q must be >= 1 (got {q})")));
    }
    let (lo, hi) = w.index_range(f.grid);
    let mut norms = Vec::with_capacity((hi - lo + 1) as usize);
    for k in lo..=hi {
        norms.push((k, box_project(f, k, w)?.l2_norm()));
    }
    weighted_lq(norms, s, q)
}

/// Raised-cosine norm over sharp norm.
pub fn norm_equivalence_ratio(f: &Spectrum, s: f64, q: f64) -> Result<f64> {
    let sharp = modulation_norm(f, s, q, &SharpIndicator)?;
    if sharp == 0.0 {
        return Err(Error::Domain("norm ratio undefined for the zero spectrum".into()));
    }
    Ok(modulation_norm(f, s, q, &RaisedCosine)? / sharp)
}

/// Discrete `(‖□_n f‖_{p2}, ‖□_n f‖_{p1})` for a band-supported test field.
/// Accuracy is diagnostic only (sample quadrature of `L^p`).
pub fn multiplier_bound_check(band: &BandCoefficients, p1: f64, p2: f64) -> Result<(f64, f64)> {
    if !(p1 >= 1.0 && p2 >= p1) {
        return Err(Error::Domain(format!("need 1 <= p1 <= p2 (got {p1}, {p2})")));
    }
    let field = inverse(&band.to_spectrum());
    Ok((field.lp_norm(p2), field.lp_norm(p1)))
}
