//! Resonance split of the cubic interaction, tree-indexed boundary and
//! insertion operators, the partial-sum map and its Picard solver.
//!
//! The evolution in the interaction picture is
//! `∂_t v_n = iσ Σ q1(n; v_{n1}, v_{n2}, v_{n3}, t)` over all triples, split into
//! the resonant union `R2 - R1`, the near-phase part `N11` and the far-phase
//! part `N12`. Differentiation by parts turns `iσ N12` into the time
//! derivative of `N0^{(2)}` plus insertions of `∂_t v` into the boundary term,
//! and so on for deeper trees.
//!
//! A tree `T` with `J` generations contributes the boundary operator
//! `B_T = -(σ/2)^J (Π_k fsgn(node_k)) q_tree(T)`. Generation operators are
//! indexed by the tree size `J` and produce the terms of order `J + 1`:
//!
//! * `N0^{(J+1)} = Σ_T Σ_n B_T(v)`,
//! * `Nr^{(J+1)} = -Σ_T Σ_α B_T[α ← iσ(R2 - R1)(v)]`,
//! * `N^{(J+1)} = -Σ_T Σ_α B_T[α ← iσ N1(v)]`, split into `N1^{(J+1)}` (the new
//!   phase lies in `C_J`) and `N2^{(J+1)}` (it does not).
//!
//! Index functions of `T` have `|μ1| > N` and every later generation outside
//! the previous `C_j`.

use rayon::prelude::*;

use crate::modulation::{weighted_lq, BandCoefficients};
use crate::multilinear::{q1, q1_tilde, BandTuple, TreeKernel};
use crate::resonance::{c_set_member, integer_phase, near, BoxRange, FrequencyTriple, PhaseForm, Threshold, TripleMode};
use crate::spectral::{forward, free_propagate, inverse, Direction, Field, Grid, Spectrum};
use crate::trees::{compute_signs, enumerate_trees, BoxMask, ChainFilter, IndexAssignment, IndexSearch, OrderedTree, PhaseRecord};
use crate::{Error, Result, C64};

fn zero() -> C64 {
    C64::new(0.0, 0.0)
}

/// Interaction-picture state: the box sequence `{v_n}` on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxedState {
    pub spectrum: Spectrum,
    pub t: f64,
}

impl BoxedState {
    pub fn new(spectrum: Spectrum, t: f64) -> BoxedState {
        BoxedState { spectrum, t }
    }

    pub fn zeros(grid: Grid, t: f64) -> BoxedState {
        BoxedState { spectrum: Spectrum::zeros(grid), t }
    }

    /// `v(t)` from the physical field `u(t)`.
    pub fn from_physical(u: &Field, t: f64) -> BoxedState {
        BoxedState { spectrum: free_propagate(&forward(u), t, Direction::Interaction), t }
    }

    /// Spectrum of the physical field `u(t) = e^{-it∂²} v(t)`.
    pub fn physical_spectrum(&self) -> Spectrum {
        free_propagate(&self.spectrum, self.t, Direction::Physical)
    }

    pub fn to_physical(&self) -> Field {
        inverse(&self.physical_spectrum())
    }

    pub fn grid(&self) -> Grid {
        self.spectrum.grid
    }

    pub fn range(&self) -> BoxRange {
        let (lo, hi) = self.grid().box_bounds();
        BoxRange { lo, hi }
    }

    pub fn coeffs(&self, n: i64) -> Result<&[C64]> {
        self.spectrum.band(n).ok_or_else(|| Error::Range(format!("box {n} outside the grid")))
    }

    pub fn band(&self, n: i64) -> Result<BandCoefficients> {
        BandCoefficients::sharp(self.grid(), n, self.coeffs(n)?.to_vec())
    }

    pub fn from_bands(grid: Grid, t: f64, bands: impl IntoIterator<Item = BandCoefficients>) -> Result<BoxedState> {
        let mut s = BoxedState::zeros(grid, t);
        for b in bands {
            if b.grid != grid {
                return Err(Error::GridMismatch("band from another grid".into()));
            }
            b.add_into(&mut s.spectrum);
        }
        Ok(s)
    }

    pub fn band_norms(&self) -> Vec<(i64, f64)> {
        let b = self.grid().bins_per_box();
        self.range()
            .iter()
            .map(|n| (n, crate::modulation::band_norm(self.spectrum.band(n).expect("box in range"), b)))
            .collect()
    }

    /// Sharp-box `M^s_{2,q}` norm.
    pub fn norm(&self, s: f64, q: f64) -> Result<f64> {
        weighted_lq(self.band_norms(), s, q)
    }

    /// `ℓ^∞ L²` norm.
    pub fn sup_norm(&self) -> f64 {
        self.band_norms().into_iter().map(|(_, a)| a).fold(0.0, f64::max)
    }

    /// Boxes whose band norm exceeds `prune_rel` times the largest band norm.
    pub fn support(&self, prune_rel: f64) -> BoxMask {
        let norms = self.band_norms();
        let top = norms.iter().map(|x| x.1).fold(0.0, f64::max);
        norms.iter().map(|&(_, a)| a > 0.0 && a > prune_rel * top).collect()
    }

    pub fn axpy(&mut self, a: C64, other: &BoxedState) {
        for (x, y) in self.spectrum.coeffs.iter_mut().zip(&other.spectrum.coeffs) {
            *x += a * y;
        }
    }

    pub fn scaled(&self, a: C64) -> BoxedState {
        let mut out = self.clone();
        for x in out.spectrum.coeffs.iter_mut() {
            *x *= a;
        }
        out
    }

    pub fn sub(&self, other: &BoxedState) -> BoxedState {
        let mut out = self.clone();
        out.axpy(C64::new(-1.0, 0.0), other);
        out
    }

    pub fn add(&self, other: &BoxedState) -> BoxedState {
        let mut out = self.clone();
        out.axpy(C64::new(1.0, 0.0), other);
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.spectrum.coeffs.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

/// Whether a sum uses the plain or the boundary kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kernel {
    Plain,
    Tilde,
}

/// Cached view of a state for repeated sums.
struct Frame<'a> {
    state: &'a BoxedState,
    range: BoxRange,
    mask: BoxMask,
    list: Vec<i64>,
}

impl<'a> Frame<'a> {
    fn new(state: &'a BoxedState, prune_rel: f64) -> Frame<'a> {
        let range = state.range();
        let mask = state.support(prune_rel);
        let list = range.iter().filter(|&n| mask[(n - range.lo) as usize]).collect();
        Frame { state, range, mask, list }
    }

    fn has(&self, n: i64) -> bool {
        self.range.contains(n) && self.mask[(n - self.range.lo) as usize]
    }

    fn band(&self, n: i64) -> BandCoefficients {
        self.state.band(n).expect("box in range")
    }

    /// Non-resonant and resonant triples feeding `n` with all inputs in the support.
    fn for_each_triple(&self, n: i64, mut f: impl FnMut(FrequencyTriple)) {
        for &n1 in &self.list {
            for &n3 in &self.list {
                for delta in [1, 0, -1] {
                    let n2 = n1 + n3 - n - delta;
                    if self.has(n2) {
                        f(FrequencyTriple { n, n1, n2, n3 });
                    }
                }
            }
        }
    }
}

/// Non-resonant triples feeding one box, sorted by `|Φ|`.
struct PhaseList {
    entries: Vec<(i64, FrequencyTriple)>,
}

/// Operator family at fixed threshold and sign.
#[derive(Debug, Clone, Copy)]
pub struct Ops {
    pub thr: Threshold,
    /// Sign of the nonlinearity, `+1` or `-1`.
    pub sigma: f64,
    /// Boxes below this fraction of the largest band norm are treated as empty.
    pub prune_rel: f64,
}

/// Which part of the insertion of non-resonant triples to keep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Extension {
    /// New phase inside `C_J`.
    InC,
    /// New phase outside `C_J`.
    NotInC,
}

impl Ops {
    pub fn new(thr: Threshold, sigma: f64) -> Result<Ops> {
        if sigma != 1.0 && sigma != -1.0 {
            return Err(Error::Config(format!("sign must be +1 or -1, got {sigma}")));
        }
        Ok(Ops { thr, sigma, prune_rel: 0.0 })
    }

    pub fn with_prune(mut self, prune_rel: f64) -> Ops {
        self.prune_rel = prune_rel;
        self
    }

    fn i_sigma(&self) -> C64 {
        C64::new(0.0, self.sigma)
    }

    fn accepts(&self, mode: TripleMode, t: &FrequencyTriple) -> bool {
        mode.accepts(t, &self.thr)
    }

    fn box_sum(&self, f: &Frame, n: i64, t: f64, kernel: Kernel, keep: impl Fn(&FrequencyTriple) -> bool) -> Result<BandCoefficients> {
        let g = f.state.grid();
        let mut acc = BandCoefficients::zero(g, n)?;
        let mut err = None;
        f.for_each_triple(n, |tr| {
            if err.is_some() || !keep(&tr) {
                return;
            }
            let (b1, b2, b3) = (f.band(tr.n1), f.band(tr.n2), f.band(tr.n3));
            let r = match kernel {
                Kernel::Plain => q1(n, &b1, &b2, &b3, t),
                Kernel::Tilde => q1_tilde(n, &b1, &b2, &b3, t),
            };
            match r {
                Ok(q) => acc.coeffs.iter_mut().zip(&q.coeffs).for_each(|(a, z)| *a += z),
                Err(e) => err = Some(e),
            }
        });
        match err {
            Some(e) => Err(e),
            None => Ok(acc),
        }
    }

    fn state_sum(
        &self,
        v: &BoxedState,
        t: f64,
        kernel: Kernel,
        keep: impl Fn(&FrequencyTriple) -> bool + Sync,
    ) -> Result<BoxedState> {
        let f = Frame::new(v, self.prune_rel);
        let boxes: Vec<i64> = f.range.iter().collect();
        let bands = boxes.par_iter().map(|&n| self.box_sum(&f, n, t, kernel, &keep)).collect::<Result<Vec<_>>>()?;
        BoxedState::from_bands(v.grid(), t, bands)
    }

    fn mode_sum(&self, v: &BoxedState, t: f64, mode: TripleMode) -> Result<BoxedState> {
        self.state_sum(v, t, Kernel::Plain, |tr| self.accepts(mode, tr))
    }

    /// Doubly matched resonant sum, one box.
    pub fn resonant_r1(&self, v: &BoxedState, n: i64, t: f64) -> Result<BandCoefficients> {
        let f = Frame::new(v, self.prune_rel);
        self.box_sum(&f, n, t, Kernel::Plain, |tr| self.accepts(TripleMode::ResonantR1, tr))
    }

    /// `Σ_{n1≈n} + Σ_{n3≈n}`, one box; the doubly matched triples count twice.
    pub fn resonant_r2(&self, v: &BoxedState, n: i64, t: f64) -> Result<BandCoefficients> {
        let f = Frame::new(v, self.prune_rel);
        let mut a = self.box_sum(&f, n, t, Kernel::Plain, |tr| near(tr.n1, tr.n))?;
        let b = self.box_sum(&f, n, t, Kernel::Plain, |tr| near(tr.n3, tr.n))?;
        a.coeffs.iter_mut().zip(&b.coeffs).for_each(|(x, y)| *x += y);
        Ok(a)
    }

    /// Near-phase non-resonant sum, one box.
    pub fn nonres_n11(&self, v: &BoxedState, n: i64, t: f64) -> Result<BandCoefficients> {
        let f = Frame::new(v, self.prune_rel);
        self.box_sum(&f, n, t, Kernel::Plain, |tr| self.accepts(TripleMode::NearPhase, tr))
    }

    pub fn r1(&self, v: &BoxedState, t: f64) -> Result<BoxedState> {
        self.mode_sum(v, t, TripleMode::ResonantR1)
    }

    pub fn r2(&self, v: &BoxedState, t: f64) -> Result<BoxedState> {
        Ok(self.r2_minus_r1(v, t)?.add(&self.r1(v, t)?))
    }

    /// Sum over the union of the two resonant families.
    pub fn r2_minus_r1(&self, v: &BoxedState, t: f64) -> Result<BoxedState> {
        self.mode_sum(v, t, TripleMode::ResonantR2)
    }

    pub fn n11(&self, v: &BoxedState, t: f64) -> Result<BoxedState> {
        self.mode_sum(v, t, TripleMode::NearPhase)
    }

    pub fn n12(&self, v: &BoxedState, t: f64) -> Result<BoxedState> {
        self.mode_sum(v, t, TripleMode::FarPhase)
    }

    /// All non-resonant triples.
    pub fn n1(&self, v: &BoxedState, t: f64) -> Result<BoxedState> {
        self.state_sum(v, t, Kernel::Plain, |tr| !tr.is_resonant())
    }

    /// Every triple in the window, as a bin sum.
    pub fn cubic_sum(&self, v: &BoxedState, t: f64) -> Result<BoxedState> {
        self.mode_sum(v, t, TripleMode::All)
    }

    /// Far-phase boundary sum `Σ_{A_N^c} q1_tilde`.
    pub fn n21(&self, v: &BoxedState, t: f64) -> Result<BoxedState> {
        self.state_sum(v, t, Kernel::Tilde, |tr| self.accepts(TripleMode::FarPhase, tr))
    }

    /// `Σ_T Σ_n B_T(v)` over trees with `j` generations.
    pub fn generation_n0(&self, v: &BoxedState, j: usize, t: f64) -> Result<BoxedState> {
        self.tree_sum(v, j, t, Body::Boundary)
    }

    /// `-Σ_T Σ_α B_T[α ← x]`.
    pub fn insert_sum(&self, v: &BoxedState, j: usize, x: &BoxedState, t: f64) -> Result<BoxedState> {
        self.tree_sum(v, j, t, Body::Insert(x))
    }

    pub fn generation_nr(&self, v: &BoxedState, j: usize, t: f64) -> Result<BoxedState> {
        let x = self.r2_minus_r1(v, t)?.scaled(self.i_sigma());
        self.insert_sum(v, j, &x, t)
    }

    /// Insertion of non-resonant triples restricted to one side of `C_j`, by explicit enumeration.
    pub fn extension(&self, v: &BoxedState, j: usize, t: f64, part: Extension) -> Result<BoxedState> {
        self.tree_sum(v, j, t, Body::Extension(part))
    }

    pub fn generation_n1(&self, v: &BoxedState, j: usize, t: f64) -> Result<BoxedState> {
        Ok(self.remainder_n2(v, j, t)?.sub(&self.extension(v, j, t, Extension::NotInC)?))
    }

    /// The full insertion of `iσ N1(v)` into every leaf, no `C_j` split.
    pub fn remainder_n2(&self, v: &BoxedState, j: usize, t: f64) -> Result<BoxedState> {
        let x = self.n1(v, t)?.scaled(self.i_sigma());
        self.insert_sum(v, j, &x, t)
    }

    /// The part of the insertion that is expanded further (outside `C_j`).
    pub fn remainder_chain(&self, v: &BoxedState, j: usize, t: f64) -> Result<BoxedState> {
        self.extension(v, j, t, Extension::NotInC)
    }

    /// Boxed cubic nonlinearity computed in physical space: the interaction-picture
    /// image of `|u|²u`, restricted to the window.
    pub fn direct_cubic(&self, v: &BoxedState, t: f64) -> Result<BoxedState> {
        let g = v.grid();
        let wide = g.widened(2)?;
        let u = inverse(&free_propagate(&v.spectrum.regrid(wide)?, t, Direction::Physical));
        let prod: Vec<C64> = u.samples.iter().map(|z| z * z.norm_sqr()).collect();
        let back = free_propagate(&forward(&Field::new(wide, prod)?), t, Direction::Interaction);
        Ok(BoxedState::new(back.regrid(g)?, t))
    }

    /// Integrand of the partial-sum map at one time: resonant, near-phase and the
    /// inserted terms `Nr + N1` of all trees up to `j_max` generations.
    pub fn integrand(&self, v: &BoxedState, j_max: usize, t: f64) -> Result<BoxedState> {
        let mut out = self.r2_minus_r1(v, t)?.add(&self.n11(v, t)?).scaled(self.i_sigma());
        if j_max == 0 {
            return Ok(out);
        }
        let cubic = self.direct_cubic(v, t)?.scaled(self.i_sigma());
        for j in 1..=j_max {
            out = out.add(&self.tree_sum(v, j, t, Body::Kept(&cubic))?);
        }
        Ok(out)
    }

    fn phase_lists(&self, f: &Frame) -> Vec<PhaseList> {
        f.range
            .iter()
            .collect::<Vec<_>>()
            .par_iter()
            .map(|&n| {
                let mut entries = Vec::new();
                f.for_each_triple(n, |tr| {
                    if !tr.is_resonant() {
                        entries.push((tr.phase(self.thr.form).abs(), tr));
                    }
                });
                entries.sort_by_key(|e| e.0);
                PhaseList { entries }
            })
            .collect()
    }

    fn tree_sum(&self, v: &BoxedState, j: usize, t: f64, body: Body) -> Result<BoxedState> {
        let f = Frame::new(v, self.prune_rel);
        let g = v.grid();
        let trees = enumerate_trees(j)?;
        let lists = match body {
            Body::Extension(_) | Body::Kept(_) => Some(self.phase_lists(&f)),
            _ => None,
        };
        let insert_mask: Option<BoxMask> = match body {
            Body::Boundary => None,
            Body::Insert(x) => Some(x.support(self.prune_rel)),
            Body::Extension(_) => {
                Some(lists.as_ref().expect("lists built").iter().map(|l| !l.entries.is_empty()).collect())
            }
            Body::Kept(x) => {
                let m = x.support(self.prune_rel);
                let l = lists.as_ref().expect("lists built");
                Some(m.iter().zip(l).map(|(&a, b)| a || !b.entries.is_empty()).collect())
            }
        };
        let mut total = BoxedState::zeros(g, t);
        for tree in &trees {
            let ctx = TreeCtx::new(self, &f, tree, lists.as_deref(), t)?;
            let boxes: Vec<i64> = f.range.iter().collect();
            let bands = boxes
                .par_iter()
                .map(|&n| ctx.root_band(n, body, insert_mask.as_ref()))
                .collect::<Result<Vec<_>>>()?;
            for b in bands.into_iter().flatten() {
                b.add_into(&mut total.spectrum);
            }
        }
        Ok(total)
    }
}

#[derive(Clone, Copy)]
enum Body<'x> {
    Boundary,
    Insert(&'x BoxedState),
    Extension(Extension),
    /// Insert `x - X2` where `X2` is the part outside `C_j`; `x = iσ · cubic`.
    Kept(&'x BoxedState),
}

struct TreeCtx<'a> {
    ops: &'a Ops,
    f: &'a Frame<'a>,
    tree: &'a OrderedTree,
    kernel: TreeKernel,
    coef: f64,
    fsgn: Vec<i8>,
    leaves: Vec<usize>,
    lists: Option<&'a [PhaseList]>,
    t: f64,
}

impl<'a> TreeCtx<'a> {
    fn new(ops: &'a Ops, f: &'a Frame<'a>, tree: &'a OrderedTree, lists: Option<&'a [PhaseList]>, t: f64) -> Result<Self> {
        Ok(TreeCtx {
            ops,
            f,
            tree,
            kernel: TreeKernel::new(tree)?,
            coef: boundary_coefficient(tree, ops.sigma),
            fsgn: compute_signs(tree).fsgn,
            leaves: tree.leaves(),
            lists,
            t,
        })
    }

    fn search(&self, insert_at: Option<(usize, &BoxMask)>) -> IndexSearch<'a> {
        let f = self.f;
        let tree = self.tree;
        IndexSearch::new(tree, f.range, self.ops.thr, ChainFilter::ComplementChain, &|id| {
            if !tree.is_terminal(id) {
                return None;
            }
            match insert_at {
                Some((leaf, m)) if leaf == id => Some(m.clone()),
                _ => Some(f.mask.clone()),
            }
        })
    }

    fn tuple(&self, freq: &[i64]) -> Result<BandTuple> {
        BandTuple::new(self.tree, self.leaves.iter().map(|&l| self.f.band(freq[l])).collect())
    }

    /// Sum of `iσ q1` over inserted triples at leaf `leaf` whose new phase lies on side `part`.
    fn extension_band(&self, freq: &[i64], mu: &[i64], leaf: usize, part: Extension) -> Result<BandCoefficients> {
        let lists = self.lists.expect("phase lists");
        let n = freq[leaf];
        let g = self.f.state.grid();
        let mut acc = BandCoefficients::zero(g, n)?;
        let list = &lists[(n - self.f.range.lo) as usize].entries;
        let j = mu.len();
        let mu1 = mu[0];
        let tilde: i64 = mu.iter().sum();
        let s = self.fsgn[leaf] as i64;
        let mut add = |tr: &FrequencyTriple| -> Result<()> {
            let q = q1(n, &self.f.band(tr.n1), &self.f.band(tr.n2), &self.f.band(tr.n3), self.t)?;
            acc.coeffs.iter_mut().zip(&q.coeffs).for_each(|(a, z)| *a += z);
            Ok(())
        };
        match part {
            Extension::NotInC => {
                // Only phases above this bound can leave C_j.
                let c = ((2 * j + 3) as f64).powi(3);
                let bound = c * (tilde.abs().max(mu1.abs()) as f64).powf(0.99) - tilde.abs() as f64;
                for (abs_phi, tr) in list.iter().rev() {
                    if (*abs_phi as f64) <= bound {
                        break;
                    }
                    let m = s * integer_phase(self.ops.thr.form, tr.n, tr.n1, tr.n2, tr.n3);
                    if !c_set_member(j, tilde as f64, (tilde + m) as f64, mu1 as f64) {
                        add(tr)?;
                    }
                }
            }
            Extension::InC => {
                for (_, tr) in list.iter() {
                    let m = s * integer_phase(self.ops.thr.form, tr.n, tr.n1, tr.n2, tr.n3);
                    if c_set_member(j, tilde as f64, (tilde + m) as f64, mu1 as f64) {
                        add(tr)?;
                    }
                }
            }
        }
        let is = self.ops.i_sigma();
        acc.coeffs.iter_mut().for_each(|z| *z *= is);
        Ok(acc)
    }

    fn root_band(&self, n: i64, body: Body, insert_mask: Option<&BoxMask>) -> Result<Option<BandCoefficients>> {
        let g = self.f.state.grid();
        let mut acc = BandCoefficients::zero(g, n)?;
        let mut touched = false;
        let mut err: Option<Error> = None;
        let mut add = |q: BandCoefficients, w: f64| {
            touched = true;
            acc.coeffs.iter_mut().zip(&q.coeffs).for_each(|(a, z)| *a += z * w);
        };
        match body {
            Body::Boundary => {
                self.search(None).for_each(n, |freq, mu| {
                    if err.is_some() {
                        return;
                    }
                    let a = IndexAssignment { freq: freq.to_vec(), phases: PhaseRecord::from_mu(mu.to_vec()) };
                    match self.tuple(freq).and_then(|tp| self.kernel.eval(&a, &tp, self.t)) {
                        Ok(q) => add(q, self.coef),
                        Err(e) => err = Some(e),
                    }
                });
            }
            _ => {
                let mask = insert_mask.expect("insert mask");
                for (slot, &leaf) in self.leaves.iter().enumerate() {
                    self.search(Some((leaf, mask))).for_each(n, |freq, mu| {
                        if err.is_some() {
                            return;
                        }
                        let r = (|| -> Result<Option<BandCoefficients>> {
                            let nl = freq[leaf];
                            let x = match body {
                                Body::Insert(x) => x.band(nl)?,
                                Body::Extension(part) => self.extension_band(freq, mu, leaf, part)?,
                                Body::Kept(x) => {
                                    let mut b = x.band(nl)?;
                                    let x2 = self.extension_band(freq, mu, leaf, Extension::NotInC)?;
                                    b.coeffs.iter_mut().zip(&x2.coeffs).for_each(|(p, q)| *p -= q);
                                    b
                                }
                                Body::Boundary => unreachable!(),
                            };
                            if x.coeffs.iter().all(|z| *z == zero()) {
                                return Ok(None);
                            }
                            let mut tp = self.tuple(freq)?;
                            tp.bands[slot] = x;
                            let a = IndexAssignment { freq: freq.to_vec(), phases: PhaseRecord::from_mu(mu.to_vec()) };
                            Ok(Some(self.kernel.eval(&a, &tp, self.t)?))
                        })();
                        match r {
                            Ok(Some(q)) => add(q, -self.coef),
                            Ok(None) => {}
                            Err(e) => err = Some(e),
                        }
                    });
                }
            }
        }
        if let Some(e) = err {
            return Err(e);
        }
        Ok(touched.then_some(acc))
    }
}

/// `-(σ/2)^J Π_k fsgn(node_k)`.
pub fn boundary_coefficient(tree: &OrderedTree, sigma: f64) -> f64 {
    let signs = compute_signs(tree);
    let prod: f64 = tree.chronicle().iter().map(|&a| signs.fsgn[a] as f64).product();
    -(sigma / 2.0).powi(tree.generations() as i32) * prod
}

/// Values of a function of time on quadrature nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<BoxedState>,
    /// Picard difference ratios `d_k / d_{k-1}`; empty unless produced by [`solve`].
    pub ratios: Vec<f64>,
    pub differences: Vec<f64>,
    pub iterations: usize,
}

impl Trajectory {
    pub fn constant(state: &BoxedState, times: &[f64]) -> Trajectory {
        let states = times.iter().map(|&t| BoxedState { spectrum: state.spectrum.clone(), t }).collect();
        Trajectory { times: times.to_vec(), states, ratios: Vec::new(), differences: Vec::new(), iterations: 0 }
    }

    /// `sup_t ‖v(t)‖_{M^s_{2,q}}`.
    pub fn sup_norm(&self, s: f64, q: f64) -> Result<f64> {
        self.states.iter().try_fold(0.0f64, |m, v| Ok(m.max(v.norm(s, q)?)))
    }

    pub fn sup_distance(&self, other: &Trajectory, s: f64, q: f64) -> Result<f64> {
        self.states.iter().zip(&other.states).try_fold(0.0f64, |m, (a, b)| Ok(m.max(a.sub(b).norm(s, q)?)))
    }

    pub fn last(&self) -> &BoxedState {
        self.states.last().expect("nonempty trajectory")
    }
}

pub fn uniform_nodes(t_final: f64, intervals: usize) -> Vec<f64> {
    (0..=intervals).map(|k| t_final * k as f64 / intervals as f64).collect()
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SolverParams {
    /// Number of generations `J` in the partial sum.
    pub j: usize,
    /// Phase threshold `N`.
    pub n_threshold: f64,
    pub t_final: f64,
    pub q: f64,
    pub s: f64,
    pub r: f64,
    pub r_tilde: f64,
    /// Quadrature intervals `K` (nodes `K + 1`).
    pub intervals: usize,
    pub picard_tol: f64,
    pub picard_max_iter: usize,
    pub sigma: f64,
    pub phase_form: PhaseForm,
    pub prune_rel: f64,
    /// Exponent slack used for every `N^{a+}`.
    pub eps: f64,
    /// Constant used in the time-step condition.
    pub constant: f64,
}

/// Constant in the time condition, measured as the largest certified operator
/// constant of the first-generation sweeps on the default grid.
pub const EMPIRICAL_C: f64 = 0.16;
pub const DEFAULT_EPS: f64 = 0.2;

fn conjugate_exponent(q: f64) -> f64 {
    if q == 1.0 { f64::INFINITY } else { q / (q - 1.0) }
}

/// Smallest integer `N ≥ (2 R̃²)^{100q′/(99(q′-1))}`; `q = 1` uses the limit `100/99`.
pub fn threshold_for(r_tilde: f64, q: f64) -> Result<f64> {
    if !(1.0..=2.0).contains(&q) {
        return Err(Error::Config(format!("q must lie in [1, 2], got {q}")));
    }
    let qp = conjugate_exponent(q);
    let expo = if qp.is_infinite() { 100.0 / 99.0 } else { 100.0 * qp / (99.0 * (qp - 1.0)) };
    Ok((2.0 * r_tilde * r_tilde).powf(expo).ceil())
}

/// Bracket of the time condition: `T · C · bracket < 1/10`.
pub fn time_bracket(n: f64, r_tilde: f64, q: f64, eps: f64) -> f64 {
    let qp = conjugate_exponent(q);
    let inv = if qp.is_infinite() { 0.0 } else { 1.0 / qp };
    let third = if qp.is_infinite() { -1.0 } else { (199.0 - 100.0 * qp) / (100.0 * qp) };
    let r2 = r_tilde * r_tilde;
    (1.0 + n.powf(inv + eps)) * r2 + 2.0 * n.powf(inv - 1.0 + eps) * r2 * r2 + 2.0 * n.powf(third + eps) * r2 * r2
}

/// Parameters for data of size `R`: `R̃ = 4R`, `N` from the geometric-series
/// condition, `T` from the time condition with constant `c` (99% of the bound).
pub fn choose_parameters(r: f64, q: f64, c: f64, eps: f64) -> Result<SolverParams> {
    if !(r >= 1.0) {
        return Err(Error::Config(format!("R must be at least 1, got {r}")));
    }
    if !(c > 0.0) || !(eps >= 0.0) {
        return Err(Error::Config("constant must be positive and eps nonnegative".into()));
    }
    let r_tilde = 4.0 * r;
    let n = threshold_for(r_tilde, q)?;
    let t_final = 0.99 * 0.1 / (c * time_bracket(n, r_tilde, q, eps));
    Ok(SolverParams {
        j: 2,
        n_threshold: n,
        t_final,
        q,
        s: 0.0,
        r,
        r_tilde,
        intervals: 16,
        picard_tol: 1e-12,
        picard_max_iter: 30,
        sigma: 1.0,
        phase_form: PhaseForm::Exact,
        prune_rel: 1e-15,
        eps,
        constant: c,
    })
}

impl SolverParams {
    pub fn validate(&self) -> Result<()> {
        if self.j == 0 {
            return Err(Error::Config("J must be at least 1".into()));
        }
        if self.intervals == 0 || !(self.t_final >= 0.0) {
            return Err(Error::Config("need K >= 1 and T >= 0".into()));
        }
        if !(1.0..=2.0).contains(&self.q) {
            return Err(Error::Config(format!("q must lie in [1, 2], got {}", self.q)));
        }
        if self.j - 1 > crate::multilinear::KERNEL_J_MAX {
            return Err(Error::ResourceGuard(format!("J = {} needs trees beyond the kernel limit", self.j)));
        }
        Ok(())
    }

    pub fn ops(&self) -> Result<Ops> {
        Ok(Ops::new(Threshold::new(self.n_threshold)?.with_form(self.phase_form), self.sigma)?.with_prune(self.prune_rel))
    }

    pub fn nodes(&self) -> Vec<f64> {
        uniform_nodes(self.t_final, self.intervals)
    }
}

/// The partial-sum map on a trajectory given at the parameter nodes.
pub fn gamma_partial(v0: &BoxedState, v: &Trajectory, p: &SolverParams) -> Result<Trajectory> {
    p.validate()?;
    if v.times.len() != p.intervals + 1 {
        return Err(Error::Config(format!("trajectory has {} nodes, expected {}", v.times.len(), p.intervals + 1)));
    }
    let ops = p.ops()?;
    let trees = p.j - 1;
    let mut base_boundary = BoxedState::zeros(v0.grid(), 0.0);
    for j in 1..=trees {
        base_boundary = base_boundary.add(&ops.generation_n0(v0, j, 0.0)?);
    }
    let mut integrands = Vec::with_capacity(v.times.len());
    let mut boundaries = Vec::with_capacity(v.times.len());
    for (state, &t) in v.states.iter().zip(&v.times) {
        integrands.push(ops.integrand(state, trees, t)?);
        let mut b = BoxedState::zeros(v0.grid(), t);
        for j in 1..=trees {
            b = b.add(&ops.generation_n0(state, j, t)?);
        }
        boundaries.push(b);
    }
    let mut states = Vec::with_capacity(v.times.len());
    let mut integral = BoxedState::zeros(v0.grid(), 0.0);
    for k in 0..v.times.len() {
        if k > 0 {
            let h = v.times[k] - v.times[k - 1];
            integral.axpy(C64::new(h / 2.0, 0.0), &integrands[k - 1]);
            integral.axpy(C64::new(h / 2.0, 0.0), &integrands[k]);
        }
        let mut out = v0.add(&boundaries[k]).sub(&base_boundary).add(&integral);
        out.t = v.times[k];
        states.push(out);
    }
    Ok(Trajectory { times: v.times.clone(), states, ratios: Vec::new(), differences: Vec::new(), iterations: 0 })
}

/// Picard iteration of the partial-sum map from the constant trajectory `v0`.
/// The result is the interaction-picture trajectory; use
/// [`BoxedState::physical_spectrum`] for `u`.
pub fn solve(u0: &Field, p: &SolverParams) -> Result<Trajectory> {
    p.validate()?;
    let v0 = BoxedState::from_physical(u0, 0.0);
    let times = p.nodes();
    let scale = v0.norm(p.s, p.q)?.max(f64::MIN_POSITIVE);
    let mut cur = Trajectory::constant(&v0, &times);
    let mut diffs = Vec::new();
    let mut ratios = Vec::new();
    let mut streak = 0;
    for it in 1..=p.picard_max_iter {
        let next = gamma_partial(&v0, &cur, p)?;
        let d = next.sup_distance(&cur, p.s, p.q)?;
        if let Some(&prev) = diffs.last() {
            let r = if prev > 0.0 { d / prev } else { 0.0 };
            ratios.push(r);
            streak = if r >= 1.0 { streak + 1 } else { 0 };
        }
        diffs.push(d);
        cur = next;
        if d <= p.picard_tol * scale {
            cur.ratios = ratios;
            cur.differences = diffs;
            cur.iterations = it;
            return Ok(cur);
        }
        if streak >= 3 {
            return Err(Error::Divergence { iterations: it, ratios });
        }
    }
    Err(Error::Divergence { iterations: p.picard_max_iter, ratios })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::make_grid;
    use crate::trees::enumerate_index_functions;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;
    use std::collections::HashSet;

    fn random_state(grid: Grid, boxes: &[i64], amp: f64, seed: u64) -> BoxedState {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = BoxedState::zeros(grid, 0.0);
        for &n in boxes {
            let r = grid.box_slots(n).unwrap();
            for slot in r {
                s.spectrum.coeffs[slot] = C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)) * amp;
            }
        }
        s
    }

    fn ops(n: f64) -> Ops {
        Ops::new(Threshold::new(n).unwrap(), 1.0).unwrap()
    }

    fn close(a: &BoxedState, b: &BoxedState, tol: f64) -> bool {
        let d = a.sub(b).max_abs();
        d <= tol * (1.0 + a.max_abs().max(b.max_abs()))
    }

    /// Sparse support for which second-generation chains exist at N = 2.
    const SPARSE: [i64; 6] = [-24, -3, 0, 2, 5, 27];

    #[test]
    fn zero_state_gives_zero() {
        let g = make_grid(2, 6).unwrap();
        let z = BoxedState::zeros(g, 0.0);
        let o = ops(3.0);
        for s in [o.r1(&z, 0.1), o.r2(&z, 0.1), o.n11(&z, 0.1), o.n12(&z, 0.1), o.generation_n0(&z, 1, 0.1)] {
            assert_eq!(s.unwrap().max_abs(), 0.0);
        }
        assert_eq!(o.remainder_n2(&z, 2, 0.0).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn decomposition_recombines_to_the_cubic() {
        let g = make_grid(3, 5).unwrap();
        let all: Vec<i64> = (-5..5).collect();
        for seed in 0..3 {
            let v = random_state(g, &all, 0.5, seed);
            let o = ops(20.0);
            let t = 0.3;
            let parts = o.r2_minus_r1(&v, t).unwrap().add(&o.n11(&v, t).unwrap()).add(&o.n12(&v, t).unwrap());
            let direct = o.direct_cubic(&v, t).unwrap();
            assert!(close(&parts, &direct, 1e-10));
            assert!(close(&o.cubic_sum(&v, t).unwrap(), &direct, 1e-10));
            assert!(close(&o.r2(&v, t).unwrap().sub(&o.r1(&v, t).unwrap()), &o.r2_minus_r1(&v, t).unwrap(), 1e-12));
            assert!(close(&o.n1(&v, t).unwrap(), &o.n11(&v, t).unwrap().add(&o.n12(&v, t).unwrap()), 1e-12));
        }
    }

    #[test]
    fn single_band_resonant_term() {
        let g = make_grid(4, 6).unwrap();
        let v = random_state(g, &[0], 1.0, 4);
        let o = ops(3.0);
        let b0 = v.band(0).unwrap();
        let expected = q1(0, &b0, &b0, &b0, 0.2).unwrap();
        let got = o.resonant_r1(&v, 0, 0.2).unwrap();
        assert_eq!(got.coeffs, expected.coeffs);
        let r2 = o.resonant_r2(&v, 0, 0.2).unwrap();
        for (a, b) in r2.coeffs.iter().zip(&expected.coeffs) {
            assert!((a - 2.0 * b).norm() < 1e-15);
        }
    }

    #[test]
    fn near_phase_part_empty_below_minimal_phase() {
        let g = make_grid(2, 6).unwrap();
        let all: Vec<i64> = (-6..6).collect();
        let v = random_state(g, &all, 1.0, 5);
        // Factored phases of non-resonant triples have modulus at least 8.
        let o = Ops::new(Threshold::new(7.0).unwrap().with_form(PhaseForm::Factored), 1.0).unwrap();
        assert_eq!(o.n11(&v, 0.0).unwrap().max_abs(), 0.0);
        assert!(o.n12(&v, 0.0).unwrap().max_abs() > 0.0);
    }

    #[test]
    fn first_boundary_term_matches_far_phase_sum() {
        let g = make_grid(2, 6).unwrap();
        let all: Vec<i64> = (-6..6).collect();
        let v = random_state(g, &all, 0.5, 6);
        for sigma in [1.0, -1.0] {
            let o = Ops::new(Threshold::new(12.0).unwrap(), sigma).unwrap();
            let lhs = o.generation_n0(&v, 1, 0.4).unwrap();
            let rhs = o.n21(&v, 0.4).unwrap().scaled(C64::new(-sigma / 2.0, 0.0));
            assert!(close(&lhs, &rhs, 1e-12));
            assert!(lhs.max_abs() > 0.0);
        }
    }

    fn fd_in_time(f: impl Fn(f64) -> BoxedState, t: f64, h: f64) -> BoxedState {
        f(t + h).sub(&f(t - h)).scaled(C64::new(0.5 / h, 0.0))
    }

    #[test]
    fn boundary_derivative_is_far_phase_term() {
        let g = make_grid(2, 6).unwrap();
        let all: Vec<i64> = (-6..6).collect();
        let v = random_state(g, &all, 0.5, 7);
        let o = ops(12.0);
        let t = 0.2;
        let fd = fd_in_time(|s| o.generation_n0(&v, 1, s).unwrap(), t, 1e-5);
        let exact = o.n12(&v, t).unwrap().scaled(C64::new(0.0, 1.0));
        assert!(fd.sub(&exact).max_abs() <= 1e-6 * exact.max_abs());
    }

    #[test]
    fn product_rule_along_a_trajectory() {
        // d/dτ N0(v + τw, t + τ) = iσ N12(v) - (insertion of w).
        let g = make_grid(2, 6).unwrap();
        let all: Vec<i64> = (-6..6).collect();
        let v = random_state(g, &all, 0.5, 8);
        let w = random_state(g, &all, 0.3, 9);
        let o = ops(12.0);
        let t = 0.1;
        let h = 1e-5;
        let path = |s: f64| {
            let mut x = v.clone();
            x.axpy(C64::new(s, 0.0), &w);
            o.generation_n0(&x, 1, t + s).unwrap()
        };
        let fd = path(h).sub(&path(-h)).scaled(C64::new(0.5 / h, 0.0));
        let exact = o.n12(&v, t).unwrap().scaled(C64::new(0.0, 1.0)).sub(&o.insert_sum(&v, 1, &w, t).unwrap());
        assert!(fd.sub(&exact).max_abs() <= 1e-6 * exact.max_abs());
    }

    #[test]
    fn second_boundary_derivative_is_the_expanded_remainder() {
        let g = make_grid(2, 32).unwrap();
        let v = random_state(g, &SPARSE, 0.5, 10);
        let o = ops(2.0);
        let t = 0.05;
        let chain = o.remainder_chain(&v, 1, t).unwrap();
        assert!(chain.max_abs() > 0.0, "no second-generation chains");
        let fd = fd_in_time(|s| o.generation_n0(&v, 2, s).unwrap(), t, 1e-6);
        assert!(fd.sub(&chain).max_abs() <= 1e-6 * chain.max_abs());
    }

    #[test]
    fn insertion_partitions() {
        let g = make_grid(2, 32).unwrap();
        let v = random_state(g, &SPARSE, 0.5, 11);
        let o = ops(2.0);
        let t = 0.07;
        let is = C64::new(0.0, 1.0);
        let cubic = o.cubic_sum(&v, t).unwrap().scaled(is);
        let total = o.insert_sum(&v, 1, &cubic, t).unwrap();
        let resonant = o.generation_nr(&v, 1, t).unwrap();
        let full = o.remainder_n2(&v, 1, t).unwrap();
        assert!(close(&total, &resonant.add(&full), 1e-10));
        let kept = o.extension(&v, 1, t, Extension::InC).unwrap();
        let expanded = o.extension(&v, 1, t, Extension::NotInC).unwrap();
        assert!(close(&full, &kept.add(&expanded), 1e-10));
        assert!(close(&o.generation_n1(&v, 1, t).unwrap(), &kept, 1e-10));
        // Kept insertion used by the integrand equals resonant plus kept parts.
        let combined = o.tree_sum(&v, 1, t, Body::Kept(&o.direct_cubic(&v, t).unwrap().scaled(is))).unwrap();
        assert!(close(&combined, &resonant.add(&kept), 1e-10));
    }

    #[test]
    fn expanded_insertions_biject_with_two_generation_chains() {
        let thr = Threshold::new(2.0).unwrap();
        let sup: HashSet<i64> = SPARSE.iter().copied().collect();
        let tree = &enumerate_trees(1).unwrap()[0];
        let signs = compute_signs(tree);
        let mut from_inserts = HashSet::new();
        let mut kept = 0usize;
        for n in -40..=40 {
            for a in enumerate_index_functions(tree, n, 40, &thr, ChainFilter::ComplementChain).unwrap() {
                let leaves = tree.leaves();
                for &leaf in &leaves {
                    if !leaves.iter().all(|&l| l == leaf || sup.contains(&a.freq[l])) {
                        continue;
                    }
                    let na = a.freq[leaf];
                    for &m1 in &SPARSE {
                        for &m3 in &SPARSE {
                            for d in [1, 0, -1] {
                                let m2 = m1 + m3 - na - d;
                                let tr = FrequencyTriple { n: na, n1: m1, n2: m2, n3: m3 };
                                if !sup.contains(&m2) || tr.is_resonant() {
                                    continue;
                                }
                                let mu = signs.fsgn[leaf] as i64 * tr.phase(thr.form);
                                let m = a.phases.mu[0];
                                if c_set_member(1, m as f64, (m + mu) as f64, m as f64) {
                                    kept += 1;
                                } else {
                                    from_inserts.insert((leaf, a.freq.clone(), m1, m2, m3));
                                }
                            }
                        }
                    }
                }
            }
        }
        let mut from_trees = HashSet::new();
        for t2 in enumerate_trees(2).unwrap() {
            let leaf = t2.chronicle()[1];
            let range = BoxRange::symmetric(40);
            let mask: BoxMask = range.iter().map(|n| sup.contains(&n)).collect();
            let search = IndexSearch::new(&t2, range, thr, ChainFilter::ComplementChain, &|id| {
                t2.is_terminal(id).then(|| mask.clone())
            });
            let [c1, c2, c3] = t2.children(leaf).unwrap();
            for n in range.iter() {
                search.for_each(n, |freq, _| {
                    from_trees.insert((leaf, freq[..4].to_vec(), freq[c1], freq[c2], freq[c3]));
                });
            }
        }
        assert!(!from_inserts.is_empty() && kept > 0);
        assert_eq!(from_inserts, from_trees);
    }

    #[test]
    fn remainder_support_follows_convolution_reach() {
        let g = make_grid(1, 40).unwrap();
        let v = random_state(g, &[0, 3], 1.0, 13);
        let o = ops(2.0);
        for j in 1..=2 {
            let r = o.remainder_n2(&v, j, 0.0).unwrap();
            let reach = (2 * j as i64 + 3) * 3 + j as i64 + 1;
            for (n, a) in r.band_norms() {
                if n.abs() > reach {
                    assert_eq!(a, 0.0, "box {n}");
                }
            }
        }
    }

    #[test]
    fn boundary_coefficients() {
        let t1 = &enumerate_trees(1).unwrap()[0];
        assert_eq!(boundary_coefficient(t1, 1.0), -0.5);
        assert_eq!(boundary_coefficient(t1, -1.0), 0.5);
        let left = OrderedTree::parse_dump("(0)(1)").unwrap();
        let middle = OrderedTree::parse_dump("(0)(2)").unwrap();
        assert_eq!(boundary_coefficient(&left, 1.0), -0.25);
        assert_eq!(boundary_coefficient(&middle, 1.0), 0.25);
    }

    #[test]
    fn threshold_examples_and_monotonicity() {
        assert_eq!(threshold_for(1.0, 2.0).unwrap(), 5.0);
        assert_eq!(threshold_for(2.0, 2.0).unwrap(), 67.0);
        assert!(threshold_for(1.0, 0.5).is_err());
        let q1_lim = threshold_for(1.0, 1.0).unwrap();
        assert_eq!(q1_lim, (2.0f64).powf(100.0 / 99.0).ceil());
        let mut prev = (0.0, f64::INFINITY);
        for r in [1.0, 1.5, 2.0, 3.0] {
            let p = choose_parameters(r, 2.0, EMPIRICAL_C, DEFAULT_EPS).unwrap();
            assert!(p.n_threshold >= prev.0 && p.t_final <= prev.1);
            assert_eq!(p.r_tilde, 4.0 * r);
            prev = (p.n_threshold, p.t_final);
        }
        let p = choose_parameters(1.0, 2.0, 1.0, 0.2).unwrap();
        assert!(p.t_final * time_bracket(p.n_threshold, p.r_tilde, 2.0, 0.2) < 0.1);
        assert!(choose_parameters(0.5, 2.0, 1.0, 0.2).is_err());
    }

    fn small_params(j: usize) -> SolverParams {
        SolverParams {
            j,
            n_threshold: 12.0,
            t_final: 0.01,
            q: 2.0,
            s: 0.0,
            r: 1.0,
            r_tilde: 4.0,
            intervals: 4,
            picard_tol: 1e-12,
            picard_max_iter: 30,
            sigma: 1.0,
            phase_form: PhaseForm::Exact,
            prune_rel: 0.0,
            eps: 0.2,
            constant: 1.0,
        }
    }

    #[test]
    fn partial_sum_map_of_zero_is_zero() {
        let g = make_grid(2, 6).unwrap();
        let z = BoxedState::zeros(g, 0.0);
        for j in 1..=3 {
            let p = small_params(j);
            let out = gamma_partial(&z, &Trajectory::constant(&z, &p.nodes()), &p).unwrap();
            assert!(out.states.iter().all(|s| s.max_abs() == 0.0));
        }
        let sol = solve(&Field::zeros(g), &small_params(2)).unwrap();
        assert_eq!(sol.iterations, 1);
        assert!(sol.states.iter().all(|s| s.max_abs() == 0.0));
    }

    #[test]
    fn extra_generation_without_chains_changes_nothing() {
        let g = make_grid(2, 6).unwrap();
        let all: Vec<i64> = (-6..6).collect();
        let v0 = random_state(g, &all, 0.3, 14);
        let (p2, p3) = (small_params(2), small_params(3));
        // Window of 12 boxes cannot leave C_1 once |μ1| > 12.
        let traj = Trajectory::constant(&v0, &p2.nodes());
        let a = gamma_partial(&v0, &traj, &p2).unwrap();
        let b = gamma_partial(&v0, &traj, &p3).unwrap();
        assert_eq!(a.states, b.states);
    }

    #[test]
    fn solver_matches_a_fine_explicit_integration() {
        // Reference: classical RK4 on the bin-sum cubic with many small steps.
        let g = make_grid(2, 6).unwrap();
        let all: Vec<i64> = (-4..4).collect();
        let mut v0 = random_state(g, &all, 0.2, 15);
        for n in -6..6 {
            if !all.contains(&n) {
                continue;
            }
            let _ = n;
        }
        let u0 = inverse(&v0.spectrum);
        v0.t = 0.0;
        let mut p = small_params(2);
        p.t_final = 0.02;
        p.intervals = 16;
        let sol = solve(&u0, &p).unwrap();
        let o = p.ops().unwrap();
        let f = |v: &BoxedState, t: f64| o.direct_cubic(v, t).unwrap().scaled(C64::new(0.0, 1.0));
        let steps = 400;
        let h = p.t_final / steps as f64;
        let mut v = v0.clone();
        for k in 0..steps {
            let t = k as f64 * h;
            let k1 = f(&v, t);
            let mut y = v.clone();
            y.axpy(C64::new(h / 2.0, 0.0), &k1);
            let k2 = f(&y, t + h / 2.0);
            let mut y = v.clone();
            y.axpy(C64::new(h / 2.0, 0.0), &k2);
            let k3 = f(&y, t + h / 2.0);
            let mut y = v.clone();
            y.axpy(C64::new(h, 0.0), &k3);
            let k4 = f(&y, t + h);
            v.axpy(C64::new(h / 6.0, 0.0), &k1);
            v.axpy(C64::new(h / 3.0, 0.0), &k2);
            v.axpy(C64::new(h / 3.0, 0.0), &k3);
            v.axpy(C64::new(h / 6.0, 0.0), &k4);
        }
        let change = v.sub(&v0).norm(0.0, 2.0).unwrap();
        let err = sol.last().sub(&v).norm(0.0, 2.0).unwrap();
        assert!(change > 1e-4);
        // Trapezoid error in the time integral dominates: O(h²) with h = T/16.
        assert!(err < 1e-2 * change, "err {err}, change {change}");
        assert!(sol.ratios.iter().all(|&r| r < 0.5));
    }
}
