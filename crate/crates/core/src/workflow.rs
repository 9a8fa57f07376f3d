//! End-to-end runs: ground-state search, ramps, sweeps, measurement passes
//! and entropy paths, with JSONL logs, CSV tables and checkpoints.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use num_complex::Complex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ansatz::{MeanFieldMode, Nqs, VariationalState};
use crate::config::{lattice_hash, Checkpoint, ConfigError, RunConfig, Seeding, SweepAxis};
use crate::entropy::{kitaev_preskill, path_times, ratio_path, swap_estimator, EntropyError, Summation};
use crate::hamiltonian::{stabilizer_values, HamiltonianError, RampProtocol, RydbergHamiltonian};
use crate::lattice::{LatticeError, RubyLattice};
use crate::oracle::{
    build_matrix, evolve_exact, ground_state, infidelity, lowest_eigenpairs, renyi2, Basis, DenseState, OracleError, RydbergMatrices,
};
use crate::observables::{
    bffm, center_hexagon, concentric_x_loops, concentric_z_loops, fit_lambda, fit_xi, hexagon_vertices, measure_loop,
    order_parameters, seed_fields, solid_pattern, straight_x_string, straight_z_string, string_gap, defect_density,
    BffmGeometry, LengthScaleFit, ObservableError, SolidPattern,
};
use crate::sampler::{purpose, run_chains, stream_rng, SampleSet};
use crate::stats::EstimateRecord;
use crate::tdvp::{optimize_ground_state, Driver, Mode, Ramped, StepLog, TdvpError};

#[derive(Debug, Error)]
pub enum WorkflowError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error(transparent)]
    Hamiltonian(#[from] HamiltonianError),
    #[error(transparent)]
    Tdvp(#[from] TdvpError),
    #[error(transparent)]
    Observable(#[from] ObservableError),
    #[error(transparent)]
    Entropy(#[from] EntropyError),
    #[error("io on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("{0}")]
    Invalid(String),
}

type Result<T> = std::result::Result<T, WorkflowError>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> WorkflowError + '_ {
    move |source| WorkflowError::Io { path: path.to_path_buf(), source }
}

/// Built lattice and Hamiltonian for a configuration.
pub struct Context {
    pub cfg: RunConfig,
    pub lattice: Arc<RubyLattice>,
    pub hamiltonian: RydbergHamiltonian,
    pub hash: String,
}

impl Context {
    pub fn new(cfg: RunConfig) -> Result<Self> {
        cfg.sampler.validate().map_err(|e| WorkflowError::Invalid(e.to_string()))?;
        let lattice = Arc::new(cfg.lattice.build()?);
        let hamiltonian = cfg.hamiltonian.build(lattice.clone())?;
        let hash = cfg.hash();
        Ok(Self { cfg, lattice, hamiltonian, hash })
    }

    pub fn out_dir(&self) -> Result<PathBuf> {
        let d = self.cfg.output.clone();
        fs::create_dir_all(&d).map_err(io_err(&d))?;
        Ok(d)
    }

    fn summation(&self) -> Summation {
        let mut sampler = self.cfg.partitions.sampler.clone().unwrap_or_else(|| self.cfg.sampler.clone());
        sampler.seed = sampler.seed.wrapping_add(self.cfg.seed);
        let p_plaquette = sampler.p_plaquette;
        Summation::Sampled { sampler, p_plaquette }
    }

    /// Initial ansatz with the configured hyperparameters; `index` selects
    /// the init stream.
    pub fn initial_state(&self, a0: f64, index: u64) -> Nqs<f64> {
        let mut rng = stream_rng(self.cfg.seed, 0, index, purpose::INIT);
        Nqs::random(self.lattice.clone(), self.cfg.ansatz.clone(), Complex::new(a0, 0.0), &mut rng)
    }

    pub fn driver(&self, psi: Nqs<f64>) -> Driver<f64, Nqs<f64>> {
        let mut sampler = self.cfg.sampler.clone();
        sampler.seed = sampler.seed.wrapping_add(self.cfg.seed);
        Driver::new(psi, self.lattice.clone(), sampler, self.cfg.tdvp.clone())
    }

    pub fn checkpoint(&self, d: &Driver<f64, Nqs<f64>>, t: f64) -> Checkpoint {
        Checkpoint {
            lattice_hash: lattice_hash(&self.cfg.lattice),
            config_hash: self.hash.clone(),
            hyper: d.psi.hyper().clone(),
            t,
            step: d.step,
            params: d.psi.params().to_vec(),
            chains: d.chains.clone(),
        }
    }

    /// Ansatz restored from a checkpoint of this lattice.
    pub fn restore(&self, ck: &Checkpoint) -> Result<Nqs<f64>> {
        ck.check_lattice(&self.cfg.lattice)?;
        let mut psi = Nqs::new(self.lattice.clone(), ck.hyper.clone());
        if psi.n_params() != ck.params.len() {
            return Err(WorkflowError::Invalid(format!("checkpoint has {} parameters, ansatz {}", ck.params.len(), psi.n_params())));
        }
        psi.set_params(&ck.params);
        Ok(psi)
    }
}

/// Line-oriented JSON log with a header carrying the configuration hash.
pub struct JsonLog {
    out: BufWriter<fs::File>,
    path: PathBuf,
}

impl JsonLog {
    pub fn create(path: &Path, hash: &str, kind: &str, append: bool) -> Result<Self> {
        let f = fs::OpenOptions::new().create(true).append(append).write(true).truncate(!append).open(path).map_err(io_err(path))?;
        let mut log = Self { out: BufWriter::new(f), path: path.to_path_buf() };
        if !append {
            log.write(&serde_json::json!({ "config_hash": hash, "kind": kind }))?;
        }
        Ok(log)
    }

    pub fn write<S: Serialize>(&mut self, rec: &S) -> Result<()> {
        let line = serde_json::to_string(rec).map_err(|e| WorkflowError::Invalid(e.to_string()))?;
        writeln!(self.out, "{line}").map_err(io_err(&self.path))?;
        self.out.flush().map_err(io_err(&self.path))
    }
}

/// CSV writer preceded by a `# config_hash=...` comment line.
pub fn write_csv<S: Serialize>(path: &Path, hash: &str, rows: &[S]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(io_err(path))?;
    writeln!(f, "# config_hash={hash}").map_err(io_err(path))?;
    let mut w = csv::Writer::from_writer(f);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(io_err(path))?;
    Ok(())
}

pub fn read_csv<S: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<S>> {
    let r = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path)?;
    let mut rd = r;
    let rows = rd.deserialize().collect::<std::result::Result<Vec<S>, _>>()?;
    Ok(rows)
}

/// One measured quantity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementRow {
    pub name: String,
    /// Area, perimeter or length as applicable.
    pub size: usize,
    pub mean: f64,
    pub mean_im: f64,
    pub stderr: f64,
    pub r_hat: f64,
    pub flagged: bool,
}

impl MeasurementRow {
    fn from_record(name: &str, size: usize, r: &EstimateRecord) -> Self {
        Self { name: name.into(), size, mean: r.mean.re, mean_im: r.mean.im, stderr: r.stderr, r_hat: r.r_hat, flagged: r.flagged() }
    }

    fn scalar(name: &str, size: usize, v: f64, err: f64, flagged: bool) -> Self {
        Self { name: name.into(), size, mean: v, mean_im: 0.0, stderr: err, r_hat: f64::NAN, flagged }
    }
}

fn find<'a>(rows: &'a [MeasurementRow], name: &str, size: usize) -> Option<&'a MeasurementRow> {
    rows.iter().find(|r| r.name == name && r.size == size)
}

/// Samples for a measurement pass at the end of a run.
pub fn measurement_samples<V: VariationalState<f64>>(ctx: &Context, h: &RydbergHamiltonian, psi: &V, inits: &[crate::lattice::Configuration], stream: u64) -> SampleSet {
    if ctx.cfg.tdvp.exact {
        return SampleSet::exact(psi, |c| crate::hamiltonian::Hamiltonian::admissible(h, c));
    }
    let vacuum = [ctx.lattice.vacuum()];
    let inits = if inits.is_empty() { &vacuum[..] } else { inits };
    let mut sampler = ctx.cfg.sampler.clone();
    sampler.seed = sampler.seed.wrapping_add(ctx.cfg.seed);
    run_chains(&sampler, psi, &ctx.lattice, inits, sampler.p_plaquette_late, stream)
}

/// Full observable manifest on a sample set.
pub fn measure_state<V: VariationalState<f64>>(ctx: &Context, h: &RydbergHamiltonian, psi: &V, samples: &SampleSet) -> Result<Vec<MeasurementRow>> {
    let lat = &*ctx.lattice;
    let man = &ctx.cfg.observables;
    let mut rows = Vec::new();

    let mut av = Vec::with_capacity(samples.len());
    let mut bp = Vec::with_capacity(samples.len());
    for (c, lc, _) in samples.iter() {
        let (a, b) = stabilizer_values(lat, c, lc, |d| psi.log_psi(d));
        av.push(Complex::new(a, 0.0));
        bp.push(b);
    }
    let a_rec = samples.estimate(&av);
    rows.push(MeasurementRow::from_record("a_v", 0, &a_rec));
    rows.push(MeasurementRow::from_record("b_p", 0, &samples.estimate(&bp)));
    let n_e = defect_density(a_rec.mean.re);
    rows.push(MeasurementRow::scalar("n_e", 0, n_e, a_rec.stderr / 2.0, a_rec.flagged()));

    let hex = center_hexagon(lat)?;
    for (n, spec) in man.loop_sizes.iter().zip(concentric_z_loops(lat, hex, &man.loop_sizes)) {
        let _ = n;
        rows.push(MeasurementRow::from_record("z_loop", spec.area, &measure_loop(&spec, samples, psi)));
    }
    for spec in concentric_x_loops(lat, hex, &man.loop_sizes) {
        rows.push(MeasurementRow::from_record("x_loop", spec.perimeter, &measure_loop(&spec, samples, psi)));
    }
    let vertex = hexagon_vertices(lat, &[hex])[0];
    for &l in &man.z_string_lengths {
        match straight_z_string(lat, hex, man.direction, l) {
            Ok(s) => rows.push(MeasurementRow::from_record("z_string", l, &measure_loop(&s, samples, psi))),
            Err(e) => log::warn!("z string of length {l}: {e}"),
        }
    }
    for &l in &man.x_string_lengths {
        match straight_x_string(lat, vertex, man.direction, l) {
            Ok(s) => rows.push(MeasurementRow::from_record("x_string", l, &measure_loop(&s, samples, psi))),
            Err(e) => log::warn!("x string of length {l}: {e}"),
        }
    }
    if man.bffm {
        let b = bffm(&BffmGeometry::around(lat, hex), samples, psi);
        rows.push(MeasurementRow::scalar("bffm_z", 0, b.z, b.z_error, b.z_flagged));
        rows.push(MeasurementRow::scalar("bffm_x", 0, b.x, b.x_error, b.x_flagged));
    }
    match order_parameters(lat, samples) {
        Ok((vbs, ss)) => {
            rows.push(MeasurementRow::from_record("m_vbs", 0, &vbs));
            rows.push(MeasurementRow::from_record("m_ss", 0, &ss));
        }
        Err(e) => log::info!("order parameters skipped: {e}"),
    }

    let mut gap_e = f64::NAN;
    let mut gap_m = f64::NAN;
    let mut energy_done = false;
    if let Ok(s) = straight_x_string(lat, vertex, man.direction, man.gap_x_length) {
        let g = string_gap(&s, h, samples, psi);
        rows.push(MeasurementRow::from_record("energy", 0, &g.energy));
        energy_done = true;
        gap_e = g.gap.mean.re;
        rows.push(MeasurementRow::from_record("gap_e", man.gap_x_length, &g.gap));
    }
    if let Ok(s) = straight_z_string(lat, hex, man.direction, man.gap_z_length) {
        let g = string_gap(&s, h, samples, psi);
        if !energy_done {
            rows.push(MeasurementRow::from_record("energy", 0, &g.energy));
        }
        gap_m = g.gap.mean.re;
        rows.push(MeasurementRow::from_record("gap_m", man.gap_z_length, &g.gap));
    }

    if let Some(path) = &man.reference {
        let reference: Vec<MeasurementRow> = read_csv(path)?;
        let mut areas = Vec::new();
        let mut w = Vec::new();
        let mut w_gs = Vec::new();
        for r in rows.iter().filter(|r| r.name == "z_loop") {
            if let Some(g) = find(&reference, "z_loop", r.size) {
                areas.push(r.size);
                w.push(r.mean);
                w_gs.push(g.mean);
            }
        }
        let (ls, vs): (Vec<usize>, Vec<f64>) = rows.iter().filter(|r| r.name == "z_string").map(|r| (r.size, r.mean)).unzip();
        let n_e_gs = find(&reference, "n_e", 0).map(|r| r.mean).unwrap_or(f64::NAN);
        if areas.len() >= 2 && ls.len() >= 3 {
            let fit = LengthScaleFit::assemble(
                fit_lambda(&areas, &w, &w_gs),
                fit_xi(&ls, &vs),
                n_e,
                n_e_gs,
                areas.iter().copied().max().unwrap_or(0),
                gap_e,
                gap_m,
            );
            rows.push(MeasurementRow::scalar("lambda", 0, fit.lambda.lambda, fit.lambda.residual, !fit.lambda.ok));
            rows.push(MeasurementRow::scalar("xi", 0, fit.xi.xi, fit.xi.residual, fit.xi.degenerate));
            rows.push(MeasurementRow::scalar("l_crossover", 0, fit.l_crossover, f64::NAN, !fit.window_consistent));
            rows.push(MeasurementRow::scalar("inv_lambda2_density", 0, fit.inv_lambda2_from_density, f64::NAN, false));
        }
    }
    Ok(rows)
}

/// Outcome of one ground-state seeding.
#[derive(Debug, Clone, Serialize)]
pub struct SeedingRow {
    pub seeding: String,
    pub energy: f64,
    pub stderr: f64,
    pub m_vbs: f64,
    pub m_ss: f64,
    pub winner: bool,
}

pub struct GroundStateReport {
    pub rows: Vec<SeedingRow>,
    pub states: Vec<Nqs<f64>>,
    pub logs: Vec<Vec<StepLog>>,
    pub winner: usize,
}

fn seeding_name(s: Seeding) -> &'static str {
    match s {
        Seeding::Random => "random",
        Seeding::Vbs => "vbs",
        Seeding::Stripe => "stripe",
    }
}

/// Imaginary-time optimization from each configured seeding; the lowest
/// final energy wins. Writes per-seeding logs and checkpoints when `write`.
pub fn run_ground_state(ctx: &Context, write: bool) -> Result<GroundStateReport> {
    let gs = &ctx.cfg.ground_state;
    let h = &ctx.hamiltonian;
    let out = if write { Some(ctx.out_dir()?) } else { None };
    let mut rows = Vec::new();
    let mut states = Vec::new();
    let mut all_logs = Vec::new();
    for (k, &seeding) in gs.seedings.iter().enumerate() {
        let name = seeding_name(seeding);
        let pattern = match seeding {
            Seeding::Random => None,
            Seeding::Vbs => Some(solid_pattern(h, SolidPattern::Vbs)?),
            Seeding::Stripe => Some(solid_pattern(h, SolidPattern::Stripe)?),
        };
        let mut cfg_hyper = ctx.cfg.ansatz.clone();
        if pattern.is_some() {
            cfg_hyper.mean_field = MeanFieldMode::Site;
        }
        let mut rng = stream_rng(ctx.cfg.seed, 0, k as u64, purpose::INIT);
        let mut psi = Nqs::random(ctx.lattice.clone(), cfg_hyper, Complex::new(gs.initial_a, 0.0), &mut rng);
        if let Some(p) = &pattern {
            let fields: Vec<Complex<f64>> = seed_fields(p, gs.seed_magnitude).into_iter().map(|a| Complex::new(a, 0.0)).collect();
            psi.set_site_fields(&fields);
        }
        let mask = psi.mean_field_mask();
        let mut driver = ctx.driver(psi);
        if let Some(p) = &pattern {
            driver.chains = vec![p.clone(); driver.sampler.n_chains];
        }
        let logs = optimize_ground_state(&mut driver, Arc::new(h.clone()), &gs.schedule, Some(mask))?;
        let samples = measurement_samples(ctx, h, &driver.psi, &driver.chains, u64::MAX - k as u64);
        let energy = crate::tdvp::evaluate(&driver.psi, h, &samples)?.energy;
        let (m_vbs, m_ss) = match order_parameters(&ctx.lattice, &samples) {
            Ok((a, b)) => (a.mean.re, b.mean.re),
            Err(_) => (f64::NAN, f64::NAN),
        };
        log::info!("seeding {name}: E = {:.6} +- {:.2e}", energy.mean.re, energy.stderr);
        if let Some(dir) = &out {
            let mut jl = JsonLog::create(&dir.join(format!("ground_{name}.jsonl")), &ctx.hash, "ground_state", false)?;
            for l in &logs {
                jl.write(l)?;
            }
            ctx.checkpoint(&driver, 0.0).write(&dir.join(format!("ground_{name}.ckpt")))?;
        }
        rows.push(SeedingRow { seeding: name.into(), energy: energy.mean.re, stderr: energy.stderr, m_vbs, m_ss, winner: false });
        states.push(driver.psi);
        all_logs.push(logs);
    }
    let winner = (0..rows.len()).min_by(|&a, &b| rows[a].energy.total_cmp(&rows[b].energy)).ok_or_else(|| WorkflowError::Invalid("no seedings".into()))?;
    rows[winner].winner = true;
    if let Some(dir) = &out {
        write_csv(&dir.join("ground_state.csv"), &ctx.hash, &rows)?;
    }
    Ok(GroundStateReport { rows, states, logs: all_logs, winner })
}

/// Outcome of a ramp.
pub struct RampOutcome {
    pub psi: Nqs<f64>,
    pub t: f64,
    pub steps: u64,
    pub logs: Vec<StepLog>,
    pub measurements: Vec<MeasurementRow>,
    pub path_checkpoints: Vec<PathBuf>,
    /// Final chain states, for further sampling.
    pub chains: Vec<crate::lattice::Configuration>,
}

/// Number of Heun steps and step size covering the ramp.
pub fn ramp_steps(ramp: &RampProtocol, dt: f64) -> (u64, f64) {
    let total = ramp.total_time();
    let n = (total / dt).ceil().max(1.0) as u64;
    (n, total / n as f64)
}

/// Real-time TDVP along the configured ramp. With `resume`, continues from
/// the checkpoint (same configuration hash) and appends to the log.
pub fn run_ramp(ctx: &Context, resume: Option<&Path>) -> Result<RampOutcome> {
    let rc = ctx.cfg.ramp.clone().ok_or_else(|| WorkflowError::Invalid("configuration has no [ramp] block".into()))?;
    rc.protocol.validate()?;
    let out = ctx.out_dir()?;
    let (n_steps, dt) = ramp_steps(&rc.protocol, ctx.cfg.tdvp.dt);
    let t0 = rc.protocol.start_time();
    let t1 = rc.protocol.end_time();

    let mut driver = ctx.driver(ctx.initial_state(rc.initial_a, 0));
    driver.t_ramp = rc.protocol.total_time();
    if let Some(path) = resume {
        let ck = Checkpoint::read(path)?;
        if ck.config_hash != ctx.hash {
            return Err(WorkflowError::Invalid("checkpoint was written under a different configuration".into()));
        }
        driver.psi = ctx.restore(&ck)?;
        driver.step = ck.step;
        driver.chains = ck.chains;
    }
    let path_steps: Vec<u64> = path_times(t0, t1, rc.path_fraction, rc.path_points)
        .iter()
        .map(|&t| ((t - t0) / dt).round() as u64)
        .collect();
    let path_name = |k: usize| out.join(format!("path_{k:04}.ckpt"));

    let schedule = Ramped { base: ctx.hamiltonian.clone(), ramp: rc.protocol.clone() };
    let mut log = JsonLog::create(&out.join("ramp.jsonl"), &ctx.hash, "ramp", resume.is_some())?;
    let mut logs = Vec::new();
    let write_path = |driver: &Driver<f64, Nqs<f64>>| -> Result<()> {
        for (k, _) in path_steps.iter().enumerate().filter(|(_, &s)| s == driver.step) {
            ctx.checkpoint(driver, t0 + driver.step as f64 * dt).write(&path_name(k))?;
        }
        Ok(())
    };
    write_path(&driver)?;
    while driver.step < n_steps {
        let t = t0 + driver.step as f64 * dt;
        let rec = match driver.heun_step(&schedule, t, dt, Mode::RealTime) {
            Ok(r) => r,
            Err(e) => {
                ctx.checkpoint(&driver, t).write(&out.join("latest.ckpt"))?;
                return Err(e.into());
            }
        };
        log.write(&rec)?;
        logs.push(rec);
        write_path(&driver)?;
        if rc.checkpoint_every > 0 && driver.step % rc.checkpoint_every as u64 == 0 {
            ctx.checkpoint(&driver, t0 + driver.step as f64 * dt).write(&out.join("latest.ckpt"))?;
        }
    }
    let t = t0 + driver.step as f64 * dt;
    ctx.checkpoint(&driver, t).write(&out.join("final.ckpt"))?;
    let (omega, delta) = rc.protocol.at(t);
    let h = ctx.hamiltonian.with_drive(omega, delta);
    let samples = measurement_samples(ctx, &h, &driver.psi, &driver.chains, u64::MAX);
    let measurements = measure_state(ctx, &h, &driver.psi, &samples)?;
    write_csv(&out.join("measurements.csv"), &ctx.hash, &measurements)?;
    let path_checkpoints = (0..path_steps.len()).map(path_name).filter(|p| p.exists()).collect();
    Ok(RampOutcome { t, steps: driver.step, logs, measurements, path_checkpoints, chains: driver.chains.clone(), psi: driver.psi })
}

/// Topological entanglement entropy of a state at each configured
/// Kitaev-Preskill radius, by direct SWAP estimation of the seven regions.
pub fn kp_gamma<V: VariationalState<f64>>(ctx: &Context, psi: &V, stream: u64) -> Result<Vec<(f64, f64, f64)>> {
    let lat = &*ctx.lattice;
    let center = lat.hexagons[center_hexagon(lat)?].center;
    let summation = ctx.summation();
    let mut out = Vec::new();
    for (r_idx, &radius) in ctx.cfg.partitions.kp_radii.iter().enumerate() {
        let regions = ctx.cfg.partitions.kp(lat, center, radius).regions();
        let mut s = [0.0; 7];
        let mut e = [0.0; 7];
        for (k, a) in regions.iter().enumerate() {
            let est = swap_estimator(lat, psi, a, &summation, stream.wrapping_add((r_idx * 7 + k) as u64))?;
            s[k] = est.s;
            e[k] = est.stderr;
        }
        let (g, ge) = kitaev_preskill(&s, &e);
        out.push((radius, g, ge));
    }
    Ok(out)
}

/// Ramp protocol with one axis replaced.
pub fn with_axis(ramp: &RampProtocol, axis: SweepAxis, value: f64) -> Result<RampProtocol> {
    Ok(match (ramp.clone(), axis) {
        (RampProtocol::LinearRate { omega, delta_start, delta_final, .. }, SweepAxis::Rate) => {
            RampProtocol::LinearRate { omega, delta_start, delta_final, rate: value }
        }
        (RampProtocol::LinearRate { omega, delta_start, rate, .. }, SweepAxis::DeltaFinal) => {
            RampProtocol::LinearRate { omega, delta_start, delta_final: value, rate }
        }
        (RampProtocol::PiecewiseLinear { mut knots }, SweepAxis::DeltaFinal) => {
            knots.last_mut().expect("validated ramp").delta = value;
            RampProtocol::PiecewiseLinear { knots }
        }
        (RampProtocol::PiecewiseLinear { .. }, SweepAxis::Rate) => {
            return Err(WorkflowError::Invalid("rate sweeps need a linear_rate ramp".into()))
        }
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub value: f64,
    pub energy: f64,
    pub a_v: f64,
    pub b_p: f64,
    pub gap_e: f64,
    pub gap_m: f64,
    pub lambda: f64,
    pub xi: f64,
    pub radius: f64,
    pub gamma: f64,
    pub gamma_err: f64,
}

impl SweepRow {
    fn from_getter(value: f64, get: &dyn Fn(&str) -> f64) -> Self {
        Self {
            value,
            energy: get("energy"),
            a_v: get("a_v"),
            b_p: get("b_p"),
            gap_e: get("gap_e"),
            gap_m: get("gap_m"),
            lambda: get("lambda"),
            xi: get("xi"),
            radius: f64::NAN,
            gamma: f64::NAN,
            gamma_err: f64::NAN,
        }
    }

    fn failed(value: f64) -> Self {
        Self::from_getter(value, &|_| f64::NAN)
    }
}

/// One ramp per grid value, each in its own subdirectory, plus a summary
/// with one row per (value, KP radius). Failed points keep a NaN row.
pub fn run_sweep(ctx: &Context) -> Result<Vec<SweepRow>> {
    let sweep = ctx.cfg.sweep.clone().ok_or_else(|| WorkflowError::Invalid("configuration has no [sweep] block".into()))?;
    let base = ctx.cfg.ramp.clone().ok_or_else(|| WorkflowError::Invalid("sweeps need a [ramp] block".into()))?;
    let out = ctx.out_dir()?;
    let mut rows = Vec::new();
    for (i, &v) in sweep.grid.iter().enumerate() {
        let mut cfg = ctx.cfg.clone();
        let mut rc = base.clone();
        rc.protocol = with_axis(&base.protocol, sweep.axis, v)?;
        cfg.ramp = Some(rc);
        cfg.sweep = None;
        cfg.output = out.join(format!("point_{i:03}"));
        // point 0 keeps the master seed so a one-point sweep equals a ramp
        cfg.seed = ctx.cfg.seed.wrapping_add(i as u64);
        let point = Context::new(cfg).and_then(|sub| {
            let res = run_ramp(&sub, None)?;
            let gammas = kp_gamma(&sub, &res.psi, 1 << 40)?;
            Ok((res, gammas))
        });
        let (res, gammas) = match point {
            Ok(p) => p,
            Err(e) => {
                log::error!("sweep point {i} ({v}) failed: {e}");
                rows.push(SweepRow::failed(v));
                continue;
            }
        };
        let get = |n: &str| res.measurements.iter().find(|r| r.name == n).map(|r| r.mean).unwrap_or(f64::NAN);
        if gammas.is_empty() {
            rows.push(SweepRow { radius: f64::NAN, gamma: f64::NAN, gamma_err: f64::NAN, ..SweepRow::from_getter(v, &get) });
        }
        for (radius, gamma, gamma_err) in gammas {
            rows.push(SweepRow { radius, gamma, gamma_err, ..SweepRow::from_getter(v, &get) });
        }
    }
    write_csv(&out.join("sweep.csv"), &ctx.hash, &rows)?;
    Ok(rows)
}

/// Measurement pass on a checkpointed state.
pub fn run_measure(ctx: &Context, checkpoint: &Path) -> Result<Vec<MeasurementRow>> {
    let ck = Checkpoint::read(checkpoint)?;
    let psi = ctx.restore(&ck)?;
    let h = match &ctx.cfg.ramp {
        Some(rc) => {
            let (o, d) = rc.protocol.at(ck.t);
            ctx.hamiltonian.with_drive(o, d)
        }
        None => ctx.hamiltonian.clone(),
    };
    let samples = measurement_samples(ctx, &h, &psi, &ck.chains, u64::MAX - 1);
    let rows = measure_state(ctx, &h, &psi, &samples)?;
    write_csv(&ctx.out_dir()?.join("measurements.csv"), &ctx.hash, &rows)?;
    Ok(rows)
}

#[derive(Debug, Clone, Serialize)]
pub struct EntropyRow {
    pub t: f64,
    pub region: String,
    pub s: f64,
    pub stderr: f64,
    pub failed: bool,
}

/// Ratio-path entropies over the `path_*.ckpt` files in `dir`, for the
/// Kitaev-Preskill regions of every radius and the extra regions, plus
/// `gamma` per radius and time.
pub fn run_entropy(ctx: &Context, dir: &Path) -> Result<(Vec<EntropyRow>, Vec<EntropyRow>)> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.starts_with("path_") && n.ends_with(".ckpt")))
        .collect();
    files.sort();
    let mut states = Vec::new();
    let mut times = Vec::new();
    for f in &files {
        let ck = Checkpoint::read(f)?;
        times.push(ck.t);
        states.push(ctx.restore(&ck)?);
    }
    let lat = &*ctx.lattice;
    let center = lat.hexagons[center_hexagon(lat)?].center;
    let mut names = Vec::new();
    let mut parts = Vec::new();
    for &r in &ctx.cfg.partitions.kp_radii {
        let regions = ctx.cfg.partitions.kp(lat, center, r).regions();
        for (k, a) in regions.into_iter().enumerate() {
            names.push(format!("kp{r}_{k}"));
            parts.push(a);
        }
    }
    for (k, a) in ctx.cfg.partitions.regions.iter().enumerate() {
        names.push(format!("region_{k}"));
        parts.push(a.clone());
    }
    let series = ratio_path(lat, &states, &times, &parts, &ctx.summation(), 1 << 48)?;
    let mut rows = Vec::new();
    let mut gammas = Vec::new();
    for p in &series.points {
        for (k, name) in names.iter().enumerate() {
            rows.push(EntropyRow { t: p.t, region: name.clone(), s: p.s[k], stderr: p.stderr[k], failed: p.failed[k] });
        }
        for (ri, &r) in ctx.cfg.partitions.kp_radii.iter().enumerate() {
            let s: [f64; 7] = std::array::from_fn(|k| p.s[ri * 7 + k]);
            let e: [f64; 7] = std::array::from_fn(|k| p.stderr[ri * 7 + k]);
            let (g, ge) = kitaev_preskill(&s, &e);
            let failed = (0..7).any(|k| p.failed[ri * 7 + k]);
            gammas.push(EntropyRow { t: p.t, region: format!("gamma_kp{r}"), s: g, stderr: ge, failed });
        }
    }
    let out = ctx.out_dir()?;
    write_csv(&out.join("entropy.csv"), &ctx.hash, &rows)?;
    write_csv(&out.join("gamma.csv"), &ctx.hash, &gammas)?;
    Ok((rows, gammas))
}

/// Lowest `k` levels of the configured Hamiltonian.
pub fn oracle_spectrum(ctx: &Context, k: usize) -> Result<Vec<f64>> {
    let basis = Basis::for_hamiltonian(&ctx.hamiltonian).map_err(oracle_err)?;
    let m = build_matrix(&ctx.hamiltonian, &basis);
    Ok(lowest_eigenpairs(&m, k).values)
}

fn oracle_err(e: OracleError) -> WorkflowError {
    WorkflowError::Invalid(format!("oracle: {e}"))
}

#[derive(Debug, Clone, Serialize)]
pub struct EvolveRow {
    pub t: f64,
    pub omega: f64,
    pub delta: f64,
    pub energy: f64,
    pub density: f64,
}

/// Exact evolution of the all-ground state along the ramp up to `t1`
/// (default: the end of the ramp), with snapshots at `times`.
pub fn oracle_evolve(ctx: &Context, t1: Option<f64>, times: &[f64]) -> Result<(Vec<EvolveRow>, DenseState)> {
    let rc = ctx.cfg.ramp.as_ref().ok_or_else(|| WorkflowError::Invalid("configuration has no [ramp] block".into()))?;
    let mats = RydbergMatrices::new(&ctx.hamiltonian).map_err(oracle_err)?;
    let psi0 = DenseState::basis_state(mats.basis.clone(), &ctx.lattice.vacuum());
    let t0 = rc.protocol.start_time();
    let t1 = t1.unwrap_or_else(|| rc.protocol.end_time());
    let ev = evolve_exact(&mats, &rc.protocol, &psi0, t0, t1, ctx.cfg.tdvp.dt, times).map_err(oracle_err)?;
    let n_atoms = ctx.lattice.n_atoms() as f64;
    let rows = ev
        .snapshots
        .iter()
        .map(|(t, psi)| {
            let (omega, delta) = rc.protocol.at(*t);
            EvolveRow {
                t: *t,
                omega,
                delta,
                energy: psi.expectation(&mats.at(omega, delta)),
                density: psi.expectation(&mats.terms.parts[2]) / n_atoms,
            }
        })
        .collect();
    let last = ev.snapshots.last().expect("evolution returns the final state").1.clone();
    Ok((rows, last))
}

/// `1 - |<exact|psi>|^2` for a checkpoint against exact evolution to its time.
pub fn oracle_infidelity(ctx: &Context, checkpoint: &Path) -> Result<f64> {
    let ck = Checkpoint::read(checkpoint)?;
    let psi = ctx.restore(&ck)?;
    let (_, exact) = oracle_evolve(ctx, Some(ck.t), &[])?;
    Ok(infidelity(&exact, &psi))
}

/// Exact Renyi-2 entropy of `atoms`: in the checkpoint's variational state
/// when given, else in the ground state of the configured Hamiltonian.
pub fn oracle_rdm_entropy(ctx: &Context, atoms: &[usize], checkpoint: Option<&Path>) -> Result<f64> {
    let state = match checkpoint {
        Some(p) => {
            let ck = Checkpoint::read(p)?;
            let psi = ctx.restore(&ck)?;
            let basis = Arc::new(Basis::for_hamiltonian(&ctx.hamiltonian).map_err(oracle_err)?);
            let mut d = DenseState::from_variational(basis, &psi);
            d.normalize();
            d
        }
        None => ground_state(&ctx.hamiltonian).map_err(oracle_err)?.1,
    };
    renyi2(&state, atoms).map_err(oracle_err)
}

/// Map of measurement rows by `(name, size)`.
pub fn index_rows(rows: &[MeasurementRow]) -> BTreeMap<(String, usize), MeasurementRow> {
    rows.iter().map(|r| ((r.name.clone(), r.size), r.clone())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::Knot;

    fn tiny(out: &Path) -> RunConfig {
        let mut cfg = RunConfig::from_toml(
            r#"
seed = 3
[lattice]
l1 = 2
l2 = 2
boundary = "periodic"
[hamiltonian]
delta = 1.0
[ansatz]
layers = 1
features = 2
[sampler]
n_chains = 2
n_samples = 16
burn_in = 8
thin = 2
[tdvp]
dt = 0.05
[ramp]
initial_a = 2.0
checkpoint_every = 2
path_points = 3
path_fraction = 0.5
protocol = { kind = "piecewise_linear", knots = [{ t = 0.0, omega = 1.0, delta = -1.0 }, { t = 0.3, omega = 1.0, delta = 1.0 }] }
[observables]
loop_sizes = [1]
z_string_lengths = [1, 2]
x_string_lengths = [1]
"#,
        )
        .unwrap();
        cfg.output = out.to_path_buf();
        cfg
    }

    fn tmp(name: &str) -> PathBuf {
        let d = std::env::temp_dir().join(format!("spinlake-wf-{name}-{}", std::process::id()));
        let _ = fs::remove_dir_all(&d);
        d
    }

    #[test]
    fn ramp_resume_is_bitwise() {
        let d1 = tmp("full");
        let ctx = Context::new(tiny(&d1)).unwrap();
        let full = run_ramp(&ctx, None).unwrap();
        assert_eq!(full.steps, 6);
        assert_eq!(full.path_checkpoints.len(), 3);
        assert!(full.measurements.iter().any(|r| r.name == "energy"));

        // interrupted run: four steps by hand, checkpoint, then resume
        let d2 = tmp("resume");
        let ctx2 = Context::new(tiny(&d2)).unwrap();
        assert_eq!(ctx.hash, ctx2.hash);
        let mut driver = ctx2.driver(ctx2.initial_state(2.0, 0));
        driver.t_ramp = 0.3;
        let rc = ctx2.cfg.ramp.clone().unwrap();
        let sched = Ramped { base: ctx2.hamiltonian.clone(), ramp: rc.protocol.clone() };
        let (_, dt) = ramp_steps(&rc.protocol, 0.05);
        for _ in 0..4 {
            let t = driver.step as f64 * dt;
            driver.heun_step(&sched, t, dt, Mode::RealTime).unwrap();
        }
        fs::create_dir_all(&d2).unwrap();
        let mid = d2.join("mid.ckpt");
        ctx2.checkpoint(&driver, 4.0 * dt).write(&mid).unwrap();
        let resumed = run_ramp(&ctx2, Some(&mid)).unwrap();
        assert_eq!(resumed.steps, 6);
        assert_eq!(resumed.psi.params(), full.psi.params());
        let _ = fs::remove_dir_all(&d1);
        let _ = fs::remove_dir_all(&d2);
    }

    #[test]
    fn axis_substitution() {
        let r = RampProtocol::LinearRate { omega: 1.0, delta_start: -1.0, delta_final: 4.0, rate: 1.0 };
        assert_eq!(with_axis(&r, SweepAxis::Rate, 2.0).unwrap().total_time(), 2.5);
        let p = RampProtocol::PiecewiseLinear { knots: vec![Knot { t: 0.0, omega: 1.0, delta: 0.0 }, Knot { t: 1.0, omega: 1.0, delta: 3.0 }] };
        assert_eq!(with_axis(&p, SweepAxis::DeltaFinal, 5.0).unwrap().at(1.0).1, 5.0);
        assert!(with_axis(&p, SweepAxis::Rate, 1.0).is_err());
    }

    #[test]
    fn measurement_csv_roundtrip() {
        let d = tmp("csv");
        fs::create_dir_all(&d).unwrap();
        let rows = vec![MeasurementRow::scalar("n_e", 0, 0.25, 0.01, false)];
        let p = d.join("m.csv");
        write_csv(&p, "h", &rows).unwrap();
        let back: Vec<MeasurementRow> = read_csv(&p).unwrap();
        assert_eq!(back[0].name, "n_e");
        assert_eq!(back[0].mean, 0.25);
        let _ = fs::remove_dir_all(&d);
    }
}
