//! Periodic grid, unitary discrete Fourier transform and the free propagator.
//!
//! The real line is replaced by a torus of circumference `L = 2πB`, which makes
//! the frequency lattice exactly `ξ_j = j/B`. Spectra are stored in centered
//! order: slot `i` holds bin `j = i - M/2`, so box `n` (frequencies `[n, n+1)`)
//! is the contiguous slice `[(n + n_max)B, (n + n_max + 1)B)`.
//!
//! Normalization: `û(ξ_j) = (2π)^{-1/2} Σ_m u(x_m) e^{-i x_m ξ_j} dx`, which is
//! the unitary transform, so `Σ_j |û_j|^2 / B = Σ_m |u_m|^2 dx`.

use std::cell::RefCell;
use std::f64::consts::PI;

use rustfft::FftPlanner;

use crate::{Error, Result, C64};

/// Largest sample count accepted by [`make_grid`].
pub const MAX_SAMPLES: usize = 1 << 24;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Grid {
    bins_per_box: usize,
    n_max: usize,
}

/// Builds a grid with `B` bins per unit frequency interval and boxes
/// `n ∈ [-n_max, n_max)`. Any even length is supported (mixed-radix FFT);
/// lengths above [`MAX_SAMPLES`] are refused.
pub fn make_grid(bins_per_box: usize, n_max: usize) -> Result<Grid> {
    if bins_per_box == 0 || n_max == 0 {
        return Err(Error::Config(format!(
            "grid needs B >= 1 and n_max >= 1 (got B={bins_per_box}, n_max={n_max})"
        )));
    }
    let m = 2usize
        .checked_mul(bins_per_box)
        .and_then(|x| x.checked_mul(n_max))
        .filter(|&m| m <= MAX_SAMPLES)
        .ok_or_else(|| Error::Config(format!("sample count 2*{bins_per_box}*{n_max} unsupported")))?;
    debug_assert!(m % 2 == 0);
    Ok(Grid { bins_per_box, n_max })
}

impl Grid {
    pub fn bins_per_box(&self) -> usize {
        self.bins_per_box
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn sample_count(&self) -> usize {
        2 * self.bins_per_box * self.n_max
    }

    pub fn circumference(&self) -> f64 {
        2.0 * PI * self.bins_per_box as f64
    }

    pub fn dx(&self) -> f64 {
        self.circumference() / self.sample_count() as f64
    }

    pub fn x(&self, m: usize) -> f64 {
        m as f64 * self.dx()
    }

    /// Frequency of centered slot `i`.
    pub fn xi(&self, slot: usize) -> f64 {
        self.bin_of_slot(slot) as f64 / self.bins_per_box as f64
    }

    pub fn bin_of_slot(&self, slot: usize) -> i64 {
        slot as i64 - (self.sample_count() / 2) as i64
    }

    pub fn slot_of_bin(&self, bin: i64) -> Option<usize> {
        let s = bin + (self.sample_count() / 2) as i64;
        (s >= 0 && (s as usize) < self.sample_count()).then_some(s as usize)
    }

    /// Lowest and highest box index held by the grid (inclusive).
    pub fn box_bounds(&self) -> (i64, i64) {
        (-(self.n_max as i64), self.n_max as i64 - 1)
    }

    pub fn has_box(&self, n: i64) -> bool {
        let (lo, hi) = self.box_bounds();
        n >= lo && n <= hi
    }

    /// Slot range of box `n`; `None` when the box lies outside the grid.
    pub fn box_slots(&self, n: i64) -> Option<std::ops::Range<usize>> {
        if !self.has_box(n) {
            return None;
        }
        let b = self.bins_per_box;
        let start = (n + self.n_max as i64) as usize * b;
        Some(start..start + b)
    }

    pub fn box_count(&self) -> usize {
        2 * self.n_max
    }

    /// Same bins per box, `factor` times as many boxes.
    pub fn widened(&self, factor: usize) -> Result<Grid> {
        make_grid(self.bins_per_box, self.n_max * factor)
    }

    pub fn max_xi_sq(&self) -> f64 {
        (self.n_max as f64).powi(2)
    }
}

/// Direction of the free propagator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// `e^{+it∂²}`, symbol `e^{-itξ²}`: maps `u` to the interaction picture `v`.
    Interaction,
    /// `e^{-it∂²}`, symbol `e^{+itξ²}`: the linear flow of the equation, maps `v` back to `u`.
    Physical,
}

impl Direction {
    pub fn inverse(self) -> Direction {
        match self {
            Direction::Interaction => Direction::Physical,
            Direction::Physical => Direction::Interaction,
        }
    }

    /// Sign `s` with symbol `e^{i s t ξ²}`.
    pub fn symbol_sign(self) -> f64 {
        match self {
            Direction::Interaction => -1.0,
            Direction::Physical => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub grid: Grid,
    pub samples: Vec<C64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub grid: Grid,
    pub coeffs: Vec<C64>,
}

impl Field {
    pub fn new(grid: Grid, samples: Vec<C64>) -> Result<Field> {
        if samples.len() != grid.sample_count() {
            return Err(Error::GridMismatch(format!(
                "field has {} samples, grid expects {}",
                samples.len(),
                grid.sample_count()
            )));
        }
        Ok(Field { grid, samples })
    }

    pub fn zeros(grid: Grid) -> Field {
        Field { grid, samples: vec![C64::new(0.0, 0.0); grid.sample_count()] }
    }

    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> C64) -> Field {
        let samples = (0..grid.sample_count()).map(|m| f(grid.x(m))).collect();
        Field { grid, samples }
    }

    pub fn l2_norm(&self) -> f64 {
        (self.samples.iter().map(|z| z.norm_sqr()).sum::<f64>() * self.grid.dx()).sqrt()
    }

    /// Discrete `L^p` norm of the samples (`p = ∞` gives the max modulus).
    pub fn lp_norm(&self, p: f64) -> f64 {
        if p.is_infinite() {
            self.samples.iter().map(|z| z.norm()).fold(0.0, f64::max)
        } else {
            (self.samples.iter().map(|z| z.norm().powf(p)).sum::<f64>() * self.grid.dx())
                .powf(1.0 / p)
        }
    }
}

impl Spectrum {
    pub fn new(grid: Grid, coeffs: Vec<C64>) -> Result<Spectrum> {
        if coeffs.len() != grid.sample_count() {
            return Err(Error::GridMismatch(format!(
                "spectrum has {} bins, grid expects {}",
                coeffs.len(),
                grid.sample_count()
            )));
        }
        Ok(Spectrum { grid, coeffs })
    }

    pub fn zeros(grid: Grid) -> Spectrum {
        Spectrum { grid, coeffs: vec![C64::new(0.0, 0.0); grid.sample_count()] }
    }

    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> C64) -> Spectrum {
        let coeffs = (0..grid.sample_count()).map(|i| f(grid.xi(i))).collect();
        Spectrum { grid, coeffs }
    }

    pub fn l2_norm(&self) -> f64 {
        (self.coeffs.iter().map(|z| z.norm_sqr()).sum::<f64>() / self.grid.bins_per_box as f64)
            .sqrt()
    }

    pub fn band(&self, n: i64) -> Option<&[C64]> {
        self.grid.box_slots(n).map(|r| &self.coeffs[r])
    }

    /// Copies the spectrum onto another grid with the same `B`, zero-filling or
    /// truncating boxes as needed.
    pub fn regrid(&self, target: Grid) -> Result<Spectrum> {
        if target.bins_per_box != self.grid.bins_per_box {
            return Err(Error::GridMismatch("regrid requires equal bins per box".into()));
        }
        let mut out = Spectrum::zeros(target);
        for (i, c) in self.coeffs.iter().enumerate() {
            if let Some(k) = target.slot_of_bin(self.grid.bin_of_slot(i)) {
                out.coeffs[k] = *c;
            }
        }
        Ok(out)
    }
}

fn run_fft(buf: &mut [C64], inverse: bool) {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        let fft = if inverse { p.plan_fft_inverse(buf.len()) } else { p.plan_fft_forward(buf.len()) };
        fft.process(buf);
    });
}

pub fn forward(f: &Field) -> Spectrum {
    let g = f.grid;
    let m = g.sample_count();
    let mut buf = f.samples.clone();
    run_fft(&mut buf, false);
    let scale = g.dx() / (2.0 * PI).sqrt();
    let half = m / 2;
    let mut coeffs = vec![C64::new(0.0, 0.0); m];
    // DFT index k holds bin k for k < M/2 and bin k - M for k >= M/2.
    for (k, z) in buf.into_iter().enumerate() {
        let slot = (k + half) % m;
        coeffs[slot] = z * scale;
    }
    Spectrum { grid: g, coeffs }
}

pub fn inverse(spec: &Spectrum) -> Field {
    let g = spec.grid;
    let m = g.sample_count();
    let half = m / 2;
    let mut buf = vec![C64::new(0.0, 0.0); m];
    for (slot, z) in spec.coeffs.iter().enumerate() {
        buf[(slot + half) % m] = *z;
    }
    run_fft(&mut buf, true);
    let scale = 1.0 / ((2.0 * PI).sqrt() * g.bins_per_box as f64);
    for z in buf.iter_mut() {
        *z *= scale;
    }
    Field { grid: g, samples: buf }
}

/// Applies `e^{±it∂²}` bin by bin.
pub fn free_propagate(spec: &Spectrum, t: f64, dir: Direction) -> Spectrum {
    let mut out = spec.clone();
    propagate_in_place(&mut out.coeffs, spec.grid, t, dir);
    out
}

pub fn propagate_in_place(coeffs: &mut [C64], grid: Grid, t: f64, dir: Direction) {
    if t == 0.0 {
        return;
    }
    let s = dir.symbol_sign() * t;
    for (i, z) in coeffs.iter_mut().enumerate() {
        let xi = grid.xi(i);
        *z *= C64::from_polar(1.0, s * xi * xi);
    }
}

/// Applies the propagator symbol to a single band of box `n`.
pub fn propagate_band(band: &mut [C64], n: i64, bins_per_box: usize, t: f64, dir: Direction) {
    if t == 0.0 {
        return;
    }
    let s = dir.symbol_sign() * t;
    let b = bins_per_box as f64;
    for (a, z) in band.iter_mut().enumerate() {
        let xi = (n as f64 * b + a as f64) / b;
        *z *= C64::from_polar(1.0, s * xi * xi);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_field(g: Grid, rng: &mut ChaCha8Rng) -> Field {
        let samples = (0..g.sample_count())
            .map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        Field::new(g, samples).unwrap()
    }

    fn rel_diff(a: &[C64], b: &[C64]) -> f64 {
        let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum();
        let den: f64 = b.iter().map(|y| y.norm_sqr()).sum();
        (num / den).sqrt()
    }

    #[test]
    fn grid_arithmetic() {
        let g = make_grid(16, 32).unwrap();
        assert_eq!(g.sample_count(), 1024);
        assert!((g.circumference() - 32.0 * PI).abs() < 1e-12);
        let g = make_grid(1, 1).unwrap();
        assert_eq!(g.sample_count(), 2);
        assert!((g.circumference() - 2.0 * PI).abs() < 1e-12);
        let g = make_grid(8, 4).unwrap();
        assert_eq!(g.sample_count(), 64);
        assert!((g.circumference() - 16.0 * PI).abs() < 1e-12);
        assert!(make_grid(0, 4).is_err());
        assert!(make_grid(1 << 20, 1 << 20).is_err());
    }

    #[test]
    fn box_slots_cover_frequencies() {
        let g = make_grid(4, 3).unwrap();
        for n in -3..3 {
            for s in g.box_slots(n).unwrap() {
                let xi = g.xi(s);
                assert!(xi >= n as f64 && xi < n as f64 + 1.0);
            }
        }
        assert!(g.box_slots(3).is_none());
    }

    #[test]
    fn constant_field_is_dc() {
        let g = make_grid(4, 4).unwrap();
        let f = Field::from_fn(g, |_| C64::new(1.0, 0.0));
        let s = forward(&f);
        let dc = g.slot_of_bin(0).unwrap();
        for (i, c) in s.coeffs.iter().enumerate() {
            if i == dc {
                // ∫ 1 dx / sqrt(2π) over the torus.
                assert!((c.re - g.circumference() / (2.0 * PI).sqrt()).abs() < 1e-10);
            } else {
                assert!(c.norm() < 1e-12);
            }
        }
    }

    #[test]
    fn pure_tone_single_bin() {
        let g = make_grid(4, 4).unwrap();
        let j = 7i64;
        let k = j as f64 / 4.0;
        let f = Field::from_fn(g, |x| C64::from_polar(1.0, k * x));
        let s = forward(&f);
        let slot = g.slot_of_bin(j).unwrap();
        for (i, c) in s.coeffs.iter().enumerate() {
            if i != slot {
                assert!(c.norm() < 1e-10);
            }
        }
        assert!(s.coeffs[slot].norm() > 1.0);
    }

    #[test]
    fn round_trip_and_parseval() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = make_grid(8, 4).unwrap();
        for _ in 0..100 {
            let f = random_field(g, &mut rng);
            let s = forward(&f);
            let back = inverse(&s);
            assert!(rel_diff(&back.samples, &f.samples) < 1e-12);
            let (a, b) = (f.l2_norm(), s.l2_norm());
            assert!(((a - b) / a).abs() < 1e-12);
        }
    }

    #[test]
    fn propagator_phase_and_group_law() {
        let g = make_grid(4, 4).unwrap();
        let mut s = Spectrum::zeros(g);
        let slot = g.slot_of_bin(8).unwrap(); // ξ = 2
        s.coeffs[slot] = C64::new(1.0, 0.0);
        let p = free_propagate(&s, 0.5, Direction::Interaction);
        let expected = C64::from_polar(1.0, -0.5 * 4.0);
        assert!((p.coeffs[slot] - expected).norm() < 1e-14);

        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = forward(&random_field(g, &mut rng));
        assert_eq!(free_propagate(&s, 0.0, Direction::Interaction), s);
        let ab = free_propagate(&free_propagate(&s, 0.3, Direction::Interaction), 0.9, Direction::Interaction);
        let direct = free_propagate(&s, 1.2, Direction::Interaction);
        assert!(rel_diff(&ab.coeffs, &direct.coeffs) < 1e-12);
        let back = free_propagate(&direct, 1.2, Direction::Physical);
        assert!(rel_diff(&back.coeffs, &s.coeffs) < 1e-12);
        for t in [0.1, 1.0, 10.0] {
            let p = free_propagate(&s, t, Direction::Interaction);
            assert!((p.l2_norm() / s.l2_norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn size_mismatch_is_rejected() {
        let g = make_grid(2, 2).unwrap();
        assert!(matches!(Field::new(g, vec![C64::default(); 3]), Err(Error::GridMismatch(_))));
        assert!(matches!(Spectrum::new(g, vec![C64::default(); 9]), Err(Error::GridMismatch(_))));
    }
}
