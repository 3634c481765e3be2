//! Trilinear interaction operators and the tree operators built from them.
//!
//! All band inputs live in the interaction picture. Frequencies are bin
//! indices `j` with `ξ = j / B`; sums carry the Riemann weight `1/B` per free
//! frequency and `(2π)^{-1}` per trilinear product, matching the discrete
//! transform in [`crate::spectral`].
//!
//! Kernel conventions: with `κ = (ξ-ξ1)(ξ-ξ3)` (half the interaction phase),
//!
//! * `q1`: weight `e^{-2itκ}`,
//! * `q1_tilde`: weight `e^{-2itκ} / κ`, so `∂_t q1_tilde = -2i q1` for frozen bands,
//! * `q_tree`: weight `e^{-2itκ̃_J} / Π_k κ̃_k` with `κ̃_k` the chronicle prefix
//!   sums of `fsgn · κ` over the expanded nodes.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::modulation::BandCoefficients;
use crate::resonance::near;
use crate::spectral::{forward, free_propagate, inverse, Direction, Grid, Spectrum};
use crate::trees::{compute_signs, IndexAssignment, OrderedTree};
use crate::{Error, Result, C64};

/// Largest generation count evaluated by the explicit kernel sum.
pub const KERNEL_J_MAX: usize = 3;

/// Continuous denominators below this are treated as singular.
const SINGULAR: f64 = 1e-9;

fn zero() -> C64 {
    C64::new(0.0, 0.0)
}

fn same_grid(bands: &[&BandCoefficients]) -> Result<Grid> {
    let g = bands[0].grid;
    if bands.iter().any(|b| b.grid != g) {
        return Err(Error::GridMismatch("bands live on different grids".into()));
    }
    Ok(g)
}

/// Raw sum over bins `j1 ∈ b1`, `j3 ∈ b3`, `j2 = j1 + j3 - j ∈ b2` for each
/// output bin `j` in `[out_first, out_first + out_len)`.
fn triple_sum(
    bins: usize,
    out_first: i64,
    out_len: usize,
    b1: &BandCoefficients,
    b2: &BandCoefficients,
    b3: &BandCoefficients,
    weight: impl Fn(f64, f64, f64) -> C64,
) -> Vec<C64> {
    let bf = bins as f64;
    let scale = 1.0 / (2.0 * PI * bf * bf);
    let (f1, f2, f3) = (b1.first_bin, b2.first_bin, b3.first_bin);
    let len2 = b2.coeffs.len() as i64;
    (0..out_len as i64)
        .map(|o| {
            let j = out_first + o;
            let xi = j as f64 / bf;
            let mut acc = zero();
            for (a1, c1) in b1.coeffs.iter().enumerate() {
                let j1 = f1 + a1 as i64;
                for (a3, c3) in b3.coeffs.iter().enumerate() {
                    let j3 = f3 + a3 as i64;
                    let a2 = j1 + j3 - j - f2;
                    if a2 < 0 || a2 >= len2 {
                        continue;
                    }
                    let c2 = b2.coeffs[a2 as usize];
                    acc += weight(xi, j1 as f64 / bf, j3 as f64 / bf) * c1 * c2.conj() * c3;
                }
            }
            acc * scale
        })
        .collect()
}

/// First-generation operator on box `n`: the boxed cubic interaction of three bands.
pub fn q1(n: i64, b1: &BandCoefficients, b2: &BandCoefficients, b3: &BandCoefficients, t: f64) -> Result<BandCoefficients> {
    let g = same_grid(&[b1, b2, b3])?;
    let b = g.bins_per_box();
    let coeffs = triple_sum(b, n * b as i64, b, b1, b2, b3, |xi, xi1, xi3| {
        C64::from_polar(1.0, -2.0 * t * (xi - xi1) * (xi - xi3))
    });
    BandCoefficients::sharp(g, n, coeffs)
}

/// Same operator through physical space: propagate, multiply, propagate back, project.
pub fn q1_physical(
    n: i64,
    b1: &BandCoefficients,
    b2: &BandCoefficients,
    b3: &BandCoefficients,
    t: f64,
) -> Result<BandCoefficients> {
    let g = same_grid(&[b1, b2, b3])?;
    // Twice as many boxes keeps cubic aliasing out of the original window.
    let wide = g.widened(2)?;
    let field = |band: &BandCoefficients| -> Result<Vec<C64>> {
        let s = band.to_spectrum().regrid(wide)?;
        Ok(inverse(&free_propagate(&s, t, Direction::Physical)).samples)
    };
    let (u1, u2, u3) = (field(b1)?, field(b2)?, field(b3)?);
    let prod: Vec<C64> = u1.iter().zip(&u2).zip(&u3).map(|((a, b), c)| a * b.conj() * c).collect();
    let spec = free_propagate(&forward(&crate::spectral::Field::new(wide, prod)?), t, Direction::Interaction);
    let band = spec.band(n).ok_or_else(|| Error::Range(format!("box {n} outside the grid")))?;
    BandCoefficients::sharp(g, n, band.to_vec())
}

/// Boundary operator of the first generation; requires `n1 ≉ n ≉ n3`.
pub fn q1_tilde(
    n: i64,
    b1: &BandCoefficients,
    b2: &BandCoefficients,
    b3: &BandCoefficients,
    t: f64,
) -> Result<BandCoefficients> {
    if near(b1.box_index, n) || near(b3.box_index, n) {
        return Err(Error::Precondition(format!(
            "resonant tuple n={n}, n1={}, n3={}",
            b1.box_index, b3.box_index
        )));
    }
    let g = same_grid(&[b1, b2, b3])?;
    let b = g.bins_per_box();
    let coeffs = triple_sum(b, n * b as i64, b, b1, b2, b3, |xi, xi1, xi3| {
        let kappa = (xi - xi1) * (xi - xi3);
        C64::from_polar(1.0 / kappa, -2.0 * t * kappa)
    });
    BandCoefficients::sharp(g, n, coeffs)
}

/// Leaf bands of a tree in depth-first leaf order, with conjugation flags.
#[derive(Debug, Clone)]
pub struct BandTuple {
    pub bands: Vec<BandCoefficients>,
    pub conj: Vec<bool>,
}

impl BandTuple {
    pub fn new(tree: &OrderedTree, bands: Vec<BandCoefficients>) -> Result<BandTuple> {
        let leaves = tree.leaves();
        if bands.len() != leaves.len() {
            return Err(Error::Precondition(format!("{} bands for {} leaves", bands.len(), leaves.len())));
        }
        same_grid(&bands.iter().collect::<Vec<_>>())?;
        let signs = compute_signs(tree);
        let conj = leaves.iter().map(|&l| signs.fsgn[l] < 0).collect();
        Ok(BandTuple { bands, conj })
    }

    /// Leaf bands read off a boxed spectrum at the assignment's leaf boxes.
    pub fn from_spectrum(tree: &OrderedTree, assign: &IndexAssignment, s: &Spectrum) -> Result<BandTuple> {
        let bands = tree
            .leaves()
            .into_iter()
            .map(|l| {
                let n = assign.freq[l];
                let c = s.band(n).ok_or_else(|| Error::Range(format!("leaf box {n} outside the grid")))?;
                BandCoefficients::sharp(s.grid, n, c.to_vec())
            })
            .collect::<Result<Vec<_>>>()?;
        BandTuple::new(tree, bands)
    }

    pub fn norm_product(&self) -> f64 {
        self.bands.iter().map(|b| b.l2_norm()).product()
    }
}

/// Precomputed structure for evaluating a tree operator.
#[derive(Debug, Clone)]
pub struct TreeKernel {
    chronicle: Vec<usize>,
    children: Vec<Option<[usize; 3]>>,
    fsgn: Vec<f64>,
    /// Leaf slot of each node, if terminal.
    leaf_slot: Vec<Option<usize>>,
}

impl TreeKernel {
    pub fn new(tree: &OrderedTree) -> Result<TreeKernel> {
        if tree.generations() > KERNEL_J_MAX {
            return Err(Error::ResourceGuard(format!(
                "explicit kernel limited to J <= {KERNEL_J_MAX}, got {}",
                tree.generations()
            )));
        }
        if tree.generations() == 0 {
            return Err(Error::Domain("tree operator needs at least one generation".into()));
        }
        let mut leaf_slot = vec![None; tree.node_count()];
        for (k, l) in tree.leaves().into_iter().enumerate() {
            leaf_slot[l] = Some(k);
        }
        Ok(TreeKernel {
            chronicle: tree.chronicle().to_vec(),
            children: (0..tree.node_count()).map(|id| tree.children(id)).collect(),
            fsgn: compute_signs(tree).fsgn.iter().map(|&s| s as f64).collect(),
            leaf_slot,
        })
    }

    /// Evaluates the tree operator on the root box of `assign`.
    pub fn eval(&self, assign: &IndexAssignment, leaves: &BandTuple, t: f64) -> Result<BandCoefficients> {
        let grid = leaves.bands[0].grid;
        let b = grid.bins_per_box() as i64;
        for (id, slot) in self.leaf_slot.iter().enumerate() {
            if let Some(k) = slot {
                let band = &leaves.bands[*k];
                if band.box_index != assign.freq[id] || band.coeffs.len() as i64 != b {
                    return Err(Error::Precondition(format!("leaf {id} band does not match box {}", assign.freq[id])));
                }
            }
        }
        let values: Vec<Vec<C64>> = leaves
            .bands
            .iter()
            .zip(&leaves.conj)
            .map(|(band, &c)| band.coeffs.iter().map(|z| if c { z.conj() } else { *z }).collect())
            .collect();
        let ctx = Ctx { k: self, assign, values: &values, b, t };
        let n_root = assign.freq[0];
        let mut bins = vec![0i64; self.children.len()];
        let mut coeffs = Vec::with_capacity(b as usize);
        for o in 0..b {
            bins[0] = n_root * b + o;
            coeffs.push(ctx.descend(0, &mut bins, 0.0, 1.0)?);
        }
        let jn = self.chronicle.len() as i32;
        let scale = (2.0 * PI).powi(-jn) * (b as f64).powi(-2 * jn);
        for z in coeffs.iter_mut() {
            *z *= scale;
        }
        BandCoefficients::sharp(grid, n_root, coeffs)
    }
}

struct Ctx<'a> {
    k: &'a TreeKernel,
    assign: &'a IndexAssignment,
    values: &'a [Vec<C64>],
    b: i64,
    t: f64,
}

impl Ctx<'_> {
    fn descend(&self, gen: usize, bins: &mut [i64], acc: f64, denom: f64) -> Result<C64> {
        let kern = self.k;
        if gen == kern.chronicle.len() {
            let mut prod = C64::from_polar(1.0 / denom, -2.0 * self.t * acc);
            for (id, slot) in kern.leaf_slot.iter().enumerate() {
                if let Some(s) = slot {
                    let off = bins[id] - self.assign.freq[id] * self.b;
                    prod *= self.values[*s][off as usize];
                }
            }
            return Ok(prod);
        }
        let a = kern.chronicle[gen];
        let [c1, c2, c3] = kern.children[a].expect("expanded node");
        let bf = self.b as f64;
        let ja = bins[a];
        let (lo1, lo2, lo3) = (self.assign.freq[c1] * self.b, self.assign.freq[c2] * self.b, self.assign.freq[c3] * self.b);
        let mut total = zero();
        for j1 in lo1..lo1 + self.b {
            for j3 in lo3..lo3 + self.b {
                let j2 = j1 + j3 - ja;
                if j2 < lo2 || j2 >= lo2 + self.b {
                    continue;
                }
                let kappa = (ja - j1) as f64 * (ja - j3) as f64 / (bf * bf);
                let acc2 = acc + kern.fsgn[a] * kappa;
                if acc2.abs() < SINGULAR {
                    return Err(Error::Precondition(format!("singular denominator at generation {}", gen + 1)));
                }
                bins[c1] = j1;
                bins[c2] = j2;
                bins[c3] = j3;
                total += self.descend(gen + 1, bins, acc2, denom * acc2)?;
            }
        }
        Ok(total)
    }
}

/// Tree operator on the root box of `assign`.
pub fn q_tree(tree: &OrderedTree, assign: &IndexAssignment, leaves: &BandTuple, t: f64) -> Result<BandCoefficients> {
    TreeKernel::new(tree)?.eval(assign, leaves, t)
}

/// `|μ̂_T|` in the half-phase normalization used by the kernels.
pub fn half_mu_hat(assign: &IndexAssignment) -> f64 {
    assign.phases.mu_tilde.iter().map(|&m| (m as f64 / 2.0).abs()).product()
}

fn random_band(grid: Grid, n: i64, rng: &mut impl Rng) -> Result<BandCoefficients> {
    let c = (0..grid.bins_per_box())
        .map(|_| C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
        .collect();
    BandCoefficients::sharp(grid, n, c)
}

/// Largest singular value and right singular vector of an `m × n` column-major matrix.
fn top_singular(cols: &[Vec<C64>]) -> (f64, Vec<C64>) {
    let n = cols.len();
    // Gram matrix G = M^H M.
    let mut gram = vec![vec![zero(); n]; n];
    for i in 0..n {
        for j in 0..n {
            gram[i][j] = cols[i].iter().zip(&cols[j]).map(|(a, b)| a.conj() * b).sum();
        }
    }
    let mut x: Vec<C64> = (0..n).map(|i| C64::new(1.0 + i as f64 * 0.1, 0.3)).collect();
    let mut lambda = 0.0;
    for _ in 0..200 {
        let y: Vec<C64> = (0..n).map(|i| (0..n).map(|j| gram[i][j] * x[j]).sum()).collect();
        let norm = y.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 {
            return (0.0, x);
        }
        let next: Vec<C64> = y.iter().map(|z| z / norm).collect();
        let done = (norm - lambda).abs() <= 1e-14 * norm;
        lambda = norm;
        x = next;
        if done {
            break;
        }
    }
    (lambda.sqrt(), x)
}

/// Empirical sup of `‖q_tree‖₂ · |μ̂_T| / Π‖v‖₂` over leaf tuples.
///
/// Each trial starts from random leaves and runs alternating ascent: with all
/// other leaves fixed the operator is (anti)linear in one leaf, whose best
/// direction is the top singular vector of that map.
pub fn certify_tree_bound(
    tree: &OrderedTree,
    assign: &IndexAssignment,
    grid: Grid,
    trials: usize,
    sweeps: usize,
    rng: &mut impl Rng,
) -> Result<f64> {
    let kernel = TreeKernel::new(tree)?;
    let leaves = tree.leaves();
    let weight = half_mu_hat(assign);
    let b = grid.bins_per_box();
    let mut best = 0.0f64;
    for _ in 0..trials {
        let bands = leaves.iter().map(|&l| random_band(grid, assign.freq[l], rng)).collect::<Result<Vec<_>>>()?;
        let mut tuple = BandTuple::new(tree, bands)?;
        let ratio = |tuple: &BandTuple| -> Result<f64> {
            let out = kernel.eval(assign, tuple, 0.0)?;
            Ok(out.l2_norm() * weight / tuple.norm_product())
        };
        best = best.max(ratio(&tuple)?);
        for _ in 0..sweeps {
            for slot in 0..leaves.len() {
                let mut cols = Vec::with_capacity(b);
                for e in 0..b {
                    let mut probe = tuple.clone();
                    let mut c = vec![zero(); b];
                    // Basis vectors are real, so conjugated slots see the same columns.
                    c[e] = C64::new(1.0, 0.0);
                    probe.bands[slot].coeffs = c;
                    cols.push(kernel.eval(assign, &probe, 0.0)?.coeffs);
                }
                let (_, x) = top_singular(&cols);
                tuple.bands[slot].coeffs = if tuple.conj[slot] { x.iter().map(|z| z.conj()).collect() } else { x };
                best = best.max(ratio(&tuple)?);
            }
        }
    }
    Ok(best)
}
