//! Experiment runner: TOML configuration, a registry of named experiments,
//! JSON reports (`report_v1`) and CSV tables.
//!
//! Configuration keys are flat dotted keys, for example
//!
//! ```toml
//! kind = "solve"
//! seed = 7
//! grid.bins_per_box = 8
//! grid.n_max = 16
//! solver.j = 2
//! data.amplitude = 0.01
//! ```
//!
//! Unset solver keys `solver.n`, `solver.t` and `solver.r` are derived from the
//! data through [`choose_parameters`].

pub mod checks;
pub mod reference;

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::modulation::{modulation_norm, SharpIndicator};
use crate::normal_form::{choose_parameters, solve, SolverParams, DEFAULT_EPS, EMPIRICAL_C};
use crate::resonance::PhaseForm;
use crate::spectral::{forward, make_grid, Field, Grid};
use crate::trees::{double_factorial, enumerate_trees};
use crate::{Error, Result};
use checks::{CheckRecord, Outcome, Table};

pub const REPORT_SCHEMA: &str = "report_v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub bins_per_box: usize,
    pub n_max: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig { bins_per_box: 8, n_max: 16 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub j: usize,
    /// Threshold; derived from `r` when unset.
    pub n: Option<f64>,
    /// Time horizon; derived from `r` when unset.
    pub t: Option<f64>,
    /// Data size; defaults to `max(1, ‖u0‖_{M_{2,q}})`.
    pub r: Option<f64>,
    pub q: f64,
    pub s: f64,
    pub k: usize,
    pub picard_tol: f64,
    pub picard_max_iter: usize,
    pub sign: f64,
    pub eps: f64,
    pub constant: f64,
    pub phase_form: PhaseForm,
    pub prune_rel: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            j: 2,
            n: None,
            t: None,
            r: None,
            q: 2.0,
            s: 0.0,
            k: 16,
            picard_tol: 1e-12,
            picard_max_iter: 30,
            sign: 1.0,
            eps: DEFAULT_EPS,
            constant: EMPIRICAL_C,
            phase_form: PhaseForm::Exact,
            prune_rel: 1e-15,
        }
    }
}

/// Initial data `amplitude · e^{-(x/width)²}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub amplitude: f64,
    pub width: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig { amplitude: 0.01, width: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub kind: String,
    pub seed: u64,
    pub output: Option<String>,
    pub grid: GridConfig,
    pub solver: SolverConfig,
    pub data: DataConfig,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<ExperimentConfig> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<ExperimentConfig> {
        ExperimentConfig::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn grid(&self) -> Result<Grid> {
        make_grid(self.grid.bins_per_box, self.grid.n_max)
    }

    pub fn initial_data(&self) -> Result<Field> {
        Ok(checks::gaussian_field(self.grid()?, self.data.amplitude, self.data.width))
    }

    /// Solver parameters for `u0` at `j` generations.
    pub fn solver_params(&self, u0: &Field, j: usize) -> Result<SolverParams> {
        let c = &self.solver;
        let r = match c.r {
            Some(r) => r,
            None => modulation_norm(&forward(u0), c.s, c.q, &SharpIndicator)?.max(1.0),
        };
        let mut p = choose_parameters(r, c.q, c.constant, c.eps)?;
        if let Some(n) = c.n {
            p.n_threshold = n;
        }
        if let Some(t) = c.t {
            p.t_final = t;
        }
        p.j = j;
        p.s = c.s;
        p.intervals = c.k;
        p.picard_tol = c.picard_tol;
        p.picard_max_iter = c.picard_max_iter;
        p.sigma = c.sign;
        p.phase_form = c.phase_form;
        p.prune_rel = c.prune_rel;
        p.validate()?;
        Ok(p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema: String,
    pub kind: String,
    pub seed: u64,
    pub config: ExperimentConfig,
    pub checks: Vec<CheckRecord>,
    pub constants: BTreeMap<String, f64>,
    pub table_files: Vec<String>,
    pub all_passed: bool,
    pub timing_seconds: f64,
    #[serde(skip)]
    pub tables: Vec<Table>,
}

impl RunReport {
    /// JSON with the timing field zeroed; identical for identical runs.
    pub fn canonical_json(&self) -> Result<String> {
        let mut copy = self.clone();
        copy.timing_seconds = 0.0;
        serde_json::to_string_pretty(&copy).map_err(|e| Error::Numerical(e.to_string()))
    }

    /// Writes `report.json` and one CSV per table into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let json = serde_json::to_string_pretty(self).map_err(|e| Error::Numerical(e.to_string()))?;
        std::fs::write(dir.join("report.json"), json + "\n")?;
        for t in &self.tables {
            let mut w = csv::Writer::from_path(dir.join(format!("{}.csv", t.name))).map_err(csv_error)?;
            w.write_record(&t.header).map_err(csv_error)?;
            for row in &t.rows {
                w.write_record(row).map_err(csv_error)?;
            }
            w.flush()?;
        }
        Ok(())
    }
}

fn csv_error(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

/// Collects the outcome of the suites of one run.
#[derive(Default)]
pub struct Recorder {
    outcome: Outcome,
}

impl Recorder {
    /// Runs a suite; an error becomes a failed check and the run continues.
    pub fn suite(&mut self, name: &str, anchor: &str, f: impl FnOnce() -> Result<Outcome>) {
        match f() {
            Ok(o) => self.outcome.merge(o),
            Err(e) => self.outcome.checks.push(CheckRecord::failed(name, anchor, &e)),
        }
    }

    pub fn constant(&mut self, name: &str, value: f64) {
        self.outcome.constants.insert(name.into(), value);
    }
}

pub trait Experiment: Send + Sync {
    fn name(&self) -> &'static str;
    fn describe(&self) -> &'static str;
    /// Errors abort the run (configuration problems); failing checks do not.
    fn run(&self, cfg: &ExperimentConfig, rec: &mut Recorder) -> Result<()>;
}

pub struct ExperimentRegistry {
    entries: BTreeMap<&'static str, Arc<dyn Experiment>>,
}

impl ExperimentRegistry {
    pub fn empty() -> ExperimentRegistry {
        ExperimentRegistry { entries: BTreeMap::new() }
    }

    pub fn standard() -> ExperimentRegistry {
        let mut r = ExperimentRegistry::empty();
        r.register(Arc::new(VerifyLemmas));
        r.register(Arc::new(Converge));
        r.register(Arc::new(Solve));
        r.register(Arc::new(Compare));
        r.register(Arc::new(Trees));
        r.register(Arc::new(Norms));
        r
    }

    pub fn register(&mut self, e: Arc<dyn Experiment>) {
        self.entries.insert(e.name(), e);
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn Experiment>> {
        self.entries
            .get(name)
            .cloned()
            .ok_or_else(|| Error::Config(format!("unknown experiment '{name}' (known: {})", self.names().join(", "))))
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.keys().copied().collect()
    }
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunReport> {
    run_with(&ExperimentRegistry::standard(), cfg)
}

pub fn run_with(registry: &ExperimentRegistry, cfg: &ExperimentConfig) -> Result<RunReport> {
    let exp = registry.get(&cfg.kind)?;
    cfg.grid()?;
    let mut rec = Recorder::default();
    let (res, seconds) = checks::timed(|| exp.run(cfg, &mut rec));
    res?;
    let o = rec.outcome;
    Ok(RunReport {
        schema: REPORT_SCHEMA.into(),
        kind: cfg.kind.clone(),
        seed: cfg.seed,
        config: cfg.clone(),
        all_passed: o.passed(),
        table_files: o.tables.iter().map(|t| format!("{}.csv", t.name)).collect(),
        checks: o.checks,
        constants: o.constants,
        timing_seconds: seconds,
        tables: o.tables,
    })
}

/// Runs a cheap configuration twice and compares the canonical reports.
pub fn determinism_check(seed: u64) -> Result<Outcome> {
    let mut worst = 0.0;
    for kind in ["trees", "norms"] {
        let cfg = ExperimentConfig { kind: kind.into(), seed, solver: SolverConfig { j: 3, ..Default::default() }, ..Default::default() };
        let a = run_experiment(&cfg)?.canonical_json()?;
        let b = run_experiment(&cfg)?.canonical_json()?;
        if a != b {
            worst = 1.0;
        }
    }
    Ok(Outcome::one(CheckRecord::equal("determinism", "identical config and seed give identical reports", worst, 0.0)))
}

struct Trees;

impl Experiment for Trees {
    fn name(&self) -> &'static str {
        "trees"
    }
    fn describe(&self) -> &'static str {
        "enumerate ordered trees with solver.j generations"
    }
    fn run(&self, cfg: &ExperimentConfig, rec: &mut Recorder) -> Result<()> {
        let j = cfg.solver.j;
        if j == 0 {
            return Err(Error::Config("solver.j must be at least 1".into()));
        }
        rec.suite("tree_count", "ordered trees with J generations number (2J-1)!!", || {
            let trees = enumerate_trees(j)?;
            let mut t = Table::new("trees", &["index", "chronicle"]);
            for (i, tree) in trees.iter().enumerate() {
                t.push(vec![i.to_string(), tree.dump()]);
            }
            let mut o = Outcome::one(CheckRecord::equal(
                "tree_count",
                "ordered trees with J generations number (2J-1)!!",
                trees.len() as f64,
                double_factorial(2 * j - 1) as f64,
            ));
            o.tables.push(t);
            Ok(o)
        });
        Ok(())
    }
}

struct Norms;

impl Experiment for Norms {
    fn name(&self) -> &'static str {
        "norms"
    }
    fn describe(&self) -> &'static str {
        "free-flow invariance of norms and the l^q embedding"
    }
    fn run(&self, cfg: &ExperimentConfig, rec: &mut Recorder) -> Result<()> {
        rec.suite("propagator_invariance", "free flow preserves L2 and modulation norms", || {
            checks::propagator_invariance(20, &[0.1, 1.0, 10.0], 1e-10, cfg.seed)
        });
        rec.suite("embedding", "sup over boxes bounded by the l^q sum", || checks::embedding(20, &[1.0, 1.5, 2.0], cfg.seed + 1));
        Ok(())
    }
}

struct VerifyLemmas;

impl Experiment for VerifyLemmas {
    fn name(&self) -> &'static str {
        "verify_lemmas"
    }
    fn describe(&self) -> &'static str {
        "certification suites for the operator estimates and identities"
    }
    fn run(&self, cfg: &ExperimentConfig, rec: &mut Recorder) -> Result<()> {
        let s = cfg.seed;
        rec.suite("tree_counts", "tree counts", || checks::tree_counts(6));
        rec.suite("phase_identity", "phase identity", || checks::phase_identity(10_000, 1e-13, s));
        rec.suite("propagator_invariance", "norm invariance", || checks::propagator_invariance(100, &[0.1, 1.0, 10.0], 1e-10, s));
        let mut c_first = None;
        rec.suite("first_generation_refinement", "first-generation constant", || {
            let o = checks::first_generation_stability(4, &[2, 3, 5, 10, 25, 50], 2.0, s)?;
            c_first = o.constants.get("c_first_generation_b4").copied();
            Ok(o)
        });
        if let Some(c) = c_first {
            rec.suite("tree_bound", "tree operator bound", || checks::tree_bound(&[2, 3], 4, 50, c, 4.0, s));
        }
        rec.suite("decomposition", "cubic decomposition", || checks::decomposition(20, 1e-8, s));
        rec.suite("threshold_scaling", "threshold scaling", || checks::threshold_scaling(&[4.0, 16.0, 64.0], &[1.5, 2.0], 0.2, 32, s));
        rec.suite("remainder_decay", "remainder decay", || checks::remainder_decay(0.5, s));
        rec.suite("gamma_bound", "partial-sum map bound", || checks::gamma_bound(20, s));
        rec.suite("embedding", "embedding", || checks::embedding(20, &[1.0, 1.5, 2.0], s));
        rec.suite("strang_order", "reference solver order", || checks::strang_order(1.5));
        rec.suite("determinism", "determinism", || determinism_check(s));
        rec.constant("empirical_c", EMPIRICAL_C);
        Ok(())
    }
}

struct Solve;

impl Experiment for Solve {
    fn name(&self) -> &'static str {
        "solve"
    }
    fn describe(&self) -> &'static str {
        "Picard solve of the partial-sum map for Gaussian data"
    }
    fn run(&self, cfg: &ExperimentConfig, rec: &mut Recorder) -> Result<()> {
        let u0 = cfg.initial_data()?;
        let p = cfg.solver_params(&u0, cfg.solver.j)?;
        rec.constant("n_threshold", p.n_threshold);
        rec.constant("t_final", p.t_final);
        rec.constant("empirical_c", p.constant);
        rec.suite("picard", "Picard iteration converges with ratio at most 1/2", || {
            let sol = solve(&u0, &p)?;
            let mut picard = Table::new("picard", &["iteration", "difference", "ratio"]);
            for (i, d) in sol.differences.iter().enumerate() {
                let r = if i == 0 { String::new() } else { format!("{:.6e}", sol.ratios[i - 1]) };
                picard.push(vec![(i + 1).to_string(), format!("{d:.6e}"), r]);
            }
            let mut traj = Table::new("trajectory", &["t", "v_norm", "u_l2"]);
            for s in &sol.states {
                traj.push(vec![format!("{:.9e}", s.t), format!("{:.12e}", s.norm(p.s, p.q)?), format!("{:.12e}", s.physical_spectrum().l2_norm())]);
            }
            let worst = sol.ratios.iter().copied().fold(0.0, f64::max);
            let mut o = Outcome::one(CheckRecord::at_most("picard_contraction", "Picard ratio after the first iterate", worst, 0.5));
            o.tables.extend([picard, traj]);
            o.constants.insert("iterations".into(), sol.iterations as f64);
            Ok(o)
        });
        Ok(())
    }
}

struct Compare;

impl Experiment for Compare {
    fn name(&self) -> &'static str {
        "compare"
    }
    fn describe(&self) -> &'static str {
        "normal-form solutions for J = 1, 2, 3 against the split-step oracle"
    }
    fn run(&self, cfg: &ExperimentConfig, rec: &mut Recorder) -> Result<()> {
        let u0 = cfg.initial_data()?;
        cfg.solver_params(&u0, 1)?;
        rec.suite("solver_agreement", "agreement with the split-step oracle", || {
            checks::solver_agreement(&u0, &|j| cfg.solver_params(&u0, j), &[1, 2, 3], 2, 1e-3, 1e-12, 0.5)
        });
        Ok(())
    }
}

struct Converge;

impl Experiment for Converge {
    fn name(&self) -> &'static str {
        "converge"
    }
    fn describe(&self) -> &'static str {
        "reference solver order and conservation, quadrature refinement of the solver"
    }
    fn run(&self, cfg: &ExperimentConfig, rec: &mut Recorder) -> Result<()> {
        let u0 = cfg.initial_data()?;
        let p = cfg.solver_params(&u0, cfg.solver.j)?;
        rec.suite("strang_order", "halving dt divides the error by about 4", || checks::strang_order(1.5));
        rec.suite("conservation", "split-step L2 conservation", || {
            let run = reference::split_step_solve(&u0, p.t_final.max(1e-3) / 100.0, 100, p.sigma)?;
            let mut o = Outcome::one(CheckRecord::at_most("conservation", "split-step L2 drift", run.max_norm_drift, 1e-8));
            let mut t = Table::new("conservation", &["t", "l2"]);
            for (time, f) in run.times.iter().zip(&run.fields) {
                t.push(vec![format!("{time:.6e}"), format!("{:.15e}", f.l2_norm())]);
            }
            o.tables.push(t);
            Ok(o)
        });
        rec.suite("quadrature_refinement", "doubling the quadrature nodes changes the solution by less than 1e-6", || {
            let coarse = solve(&u0, &p)?;
            let mut fine_p = p.clone();
            fine_p.intervals *= 2;
            let fine = solve(&u0, &fine_p)?;
            let a = coarse.last();
            let d = a.sub(fine.last()).norm(p.s, p.q)? / a.norm(p.s, p.q)?.max(f64::MIN_POSITIVE);
            Ok(Outcome::one(CheckRecord::at_most("quadrature_refinement", "relative change under K -> 2K", d, 1e-6)))
        });
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_dotted_keys_and_rejects_unknown() {
        let cfg = ExperimentConfig::from_toml("kind = \"trees\"\nseed = 3\ngrid.n_max = 4\nsolver.j = 4\nsolver.phase_form = \"factored\"\n").unwrap();
        assert_eq!(cfg.grid.n_max, 4);
        assert_eq!(cfg.grid.bins_per_box, 8);
        assert_eq!(cfg.solver.phase_form, PhaseForm::Factored);
        assert!(ExperimentConfig::from_toml("solver.jj = 4").is_err());
    }

    #[test]
    fn trees_kind_reports_105_for_four_generations() {
        let cfg = ExperimentConfig { kind: "trees".into(), solver: SolverConfig { j: 4, ..Default::default() }, ..Default::default() };
        let r = run_experiment(&cfg).unwrap();
        assert!(r.all_passed);
        assert_eq!(r.checks[0].measured, 105.0);
        assert_eq!(r.tables[0].rows.len(), 105);
        assert_eq!(r.schema, REPORT_SCHEMA);
    }

    #[test]
    fn unknown_kind_is_a_config_error() {
        let cfg = ExperimentConfig { kind: "nope".into(), ..Default::default() };
        assert!(matches!(run_experiment(&cfg), Err(Error::Config(_))));
        assert_eq!(ExperimentRegistry::standard().names(), ["compare", "converge", "norms", "solve", "trees", "verify_lemmas"]);
    }

    #[test]
    fn failing_suite_is_recorded_not_raised() {
        let mut rec = Recorder::default();
        rec.suite("boom", "always fails", || Err(Error::Numerical("x".into())));
        assert!(!rec.outcome.passed());
        assert_eq!(rec.outcome.checks[0].name, "boom");
    }

    #[test]
    fn reports_are_deterministic() {
        assert!(determinism_check(11).unwrap().passed());
    }

    #[test]
    fn solver_params_follow_overrides() {
        let cfg = ExperimentConfig::from_toml("solver.n = 50\nsolver.t = 0.001\nsolver.k = 4").unwrap();
        let u0 = cfg.initial_data().unwrap();
        let p = cfg.solver_params(&u0, 3).unwrap();
        assert_eq!((p.n_threshold, p.t_final, p.intervals, p.j), (50.0, 0.001, 4, 3));
        let q = ExperimentConfig::default().solver_params(&u0, 2).unwrap();
        assert_eq!(q.n_threshold, 1099.0);
    }
}
