//! Pipeline execution.

use rayon::prelude::*;
use serde::Serialize;

use covdbm::dbm::{matrix_flow_sample, spectrum, write_trajectory, EigenIntegrator, SdeConfig, SpectrumState};
use covdbm::diagnostics::{
    bulk_window, local_law_rows, nontrivial_sorted, rigidity_scaled, DiagnosticThresholds, LocalLawRow,
    SpectralDomain,
};
use covdbm::ensembles::io::{read_binary, read_csv};
use covdbm::ensembles::{linearize, sample_rect_gaussian, svd_initial_data, DataBlock, InitialData, LinearizedMatrix};
use covdbm::freeconv::{
    classical_locations, density_fc, semicircle_density, tol_for, FreeConvolutionField, Semicircle,
};
use covdbm::gapstats::{
    coupling_from_setup, gap_comparison_report, gap_universality_report, goe_window_spectra, run_coupled_goe,
    write_gap_csv, write_reports_ndjson, Bump, CorrelationInput, CorrelationWindow, GapEnsemble, GapObservable,
    MIN_GAP_SAMPLES,
};
use covdbm::shortrange::{
    make_schedule_unchecked, nearest_location, fc_locations, shortrange_error, wigner_coupling_distance,
    CoupledConfig, CoupledSystem, ShortRangeParams, ShortRangeSetup,
};
use covdbm::Seed;

use crate::config::{BumpConfig, ExperimentConfig, InitialSource, Pipeline};
use crate::manifest::{now_secs, sha256_hex, ArtifactRecord, CheckRecord, CheckStatus, RunManifest, RunStatus, SeedRecord};
use crate::HarnessError;

pub const STREAM_INITIAL: u64 = 0;
pub const STREAM_DBM: u64 = 1;
pub const STREAM_LOCALLAW: u64 = 2;
pub const STREAM_SHORTRANGE_START: u64 = 3;
pub const STREAM_SHORTRANGE_NOISE: u64 = 4;
pub const STREAM_COUPLED_GOE: u64 = 5;
pub const STREAM_GAPS_COVARIANCE: u64 = 6;
pub const STREAM_GAPS_GOE: u64 = 7;
pub const STREAM_CORRELATION_COVARIANCE: u64 = 8;
pub const STREAM_CORRELATION_GOE: u64 = 9;

/// Dense green-function statistics are computed only up to this matrix size.
const GREEN_STATS_MAX_SIZE: usize = 200;

fn stream(cfg: &ExperimentConfig, id: u64) -> Seed {
    Seed::with_stream(cfg.seed, id)
}

fn seed_records(cfg: &ExperimentConfig) -> Vec<SeedRecord> {
    let mut names = vec![("initial", STREAM_INITIAL)];
    for stage in cfg.pipeline.stages() {
        names.extend_from_slice(match stage {
            Pipeline::Freeconv => &[],
            Pipeline::Dbm => &[("dbm", STREAM_DBM)],
            Pipeline::Locallaw => &[("locallaw", STREAM_LOCALLAW)],
            Pipeline::Shortrange => &[("shortrange_start", STREAM_SHORTRANGE_START), ("shortrange_noise", STREAM_SHORTRANGE_NOISE)],
            Pipeline::Gaps => &[
                ("shortrange_start", STREAM_SHORTRANGE_START),
                ("shortrange_noise", STREAM_SHORTRANGE_NOISE),
                ("coupled_goe", STREAM_COUPLED_GOE),
                ("gaps_covariance", STREAM_GAPS_COVARIANCE),
                ("gaps_goe", STREAM_GAPS_GOE),
            ],
            Pipeline::Correlation => {
                &[("correlation_covariance", STREAM_CORRELATION_COVARIANCE), ("correlation_goe", STREAM_CORRELATION_GOE)]
            }
            Pipeline::Full => &[],
        });
    }
    names.sort_by_key(|&(_, id)| id);
    names.dedup();
    names.into_iter().map(|(name, id)| SeedRecord { name: name.into(), master: cfg.seed, stream: id }).collect()
}

/// Singular values `V` named by the config.
pub fn load_initial_data(cfg: &ExperimentConfig) -> Result<InitialData<f64>, HarnessError> {
    let dims = cfg.ensemble_dims()?;
    let bad = |message: String| HarnessError::Validation { field: "initial".into(), message };
    match &cfg.initial {
        InitialSource::Gaussian { seed } => {
            let seed = Seed::with_stream(seed.unwrap_or(cfg.seed), STREAM_INITIAL);
            let block = sample_rect_gaussian::<f64>(dims, seed).map_err(|e| bad(e.to_string()))?;
            Ok(svd_initial_data(&block))
        }
        InitialSource::Explicit { values } => Ok(InitialData::new(values.clone())),
        InitialSource::File { path } => {
            let p = cfg.resolve(path);
            let file = std::fs::File::open(&p).map_err(|e| HarnessError::Io(format!("{}: {e}", p.display())))?;
            let m = if p.extension().is_some_and(|e| e == "bin") { read_binary(file) } else { read_csv(file) }
                .map_err(|e| bad(format!("{}: {e}", p.display())))?;
            if m.nrows() == 1 || m.ncols() == 1 {
                let values: Vec<f64> = m.iter().copied().collect();
                if values.len() != dims.n() {
                    return Err(bad(format!("{} values for N = {}", values.len(), dims.n())));
                }
                Ok(InitialData::new(values))
            } else if (m.nrows(), m.ncols()) == (dims.m(), dims.n()) {
                let block = DataBlock::from_matrix(m).map_err(|e| bad(e.to_string()))?;
                Ok(svd_initial_data(&block))
            } else {
                Err(bad(format!("{}×{} matrix for dims {}×{}", m.nrows(), m.ncols(), dims.m(), dims.n())))
            }
        }
    }
}

struct Artifact {
    name: String,
    bytes: Vec<u8>,
    rows: usize,
}

#[derive(Default)]
struct StageOutput {
    artifacts: Vec<Artifact>,
    checks: Vec<CheckRecord>,
}

impl StageOutput {
    fn ndjson<S: Serialize>(&mut self, name: &str, lines: &[S]) -> covdbm::Result<()> {
        let mut bytes = Vec::new();
        for l in lines {
            serde_json::to_writer(&mut bytes, l)?;
            bytes.push(b'\n');
        }
        self.artifacts.push(Artifact { name: name.into(), bytes, rows: lines.len() });
        Ok(())
    }

    fn raw(&mut self, name: &str, bytes: Vec<u8>, rows: usize) {
        self.artifacts.push(Artifact { name: name.into(), bytes, rows });
    }
}

/// Hash of the config with the output location blanked out.
pub fn config_hash(cfg: &ExperimentConfig) -> Result<String, HarnessError> {
    let c = ExperimentConfig { output: Default::default(), ..cfg.clone() };
    Ok(sha256_hex(c.to_toml_string()?.as_bytes()))
}

/// Run every stage of the configured pipeline, writing artifacts and the
/// manifest into the output directory. The manifest is written before any
/// compute and finalized once; a failing stage leaves it in the failed
/// state with the artifacts of the completed stages.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunManifest, HarnessError> {
    cfg.validate()?;
    let init = load_initial_data(cfg)?;
    let out = cfg.output_dir();
    std::fs::create_dir_all(&out)?;
    let stages = cfg.pipeline.stages();
    let mut manifest = RunManifest {
        config_hash: config_hash(cfg)?,
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        pipeline: cfg.pipeline.name().to_string(),
        stages: stages.iter().map(|s| s.name().to_string()).collect(),
        seeds: seed_records(cfg),
        started_at: now_secs(),
        finished_at: None,
        status: RunStatus::Running,
        artifacts: Vec::new(),
        checks: Vec::new(),
    };
    manifest.write(&out)?;
    for stage in stages {
        match run_stage(stage, cfg, &init) {
            Ok(output) => {
                for a in output.artifacts {
                    std::fs::write(out.join(&a.name), &a.bytes)?;
                    manifest.artifacts.push(ArtifactRecord { path: a.name, sha256: sha256_hex(&a.bytes), rows: a.rows });
                }
                manifest.checks.extend(output.checks);
            }
            Err(source) => {
                manifest.status = RunStatus::Failed { stage: stage.name().into(), message: source.to_string() };
                manifest.finished_at = Some(now_secs());
                manifest.write(&out)?;
                return Err(HarnessError::Stage { stage: stage.name().into(), source });
            }
        }
    }
    manifest.status = RunStatus::Complete;
    manifest.finished_at = Some(now_secs());
    manifest.write(&out)?;
    Ok(manifest)
}

fn run_stage(stage: Pipeline, cfg: &ExperimentConfig, init: &InitialData<f64>) -> covdbm::Result<StageOutput> {
    match stage {
        Pipeline::Freeconv => freeconv_stage(cfg, init),
        Pipeline::Dbm => dbm_stage(cfg, init),
        Pipeline::Locallaw => locallaw_stage(cfg, init),
        Pipeline::Shortrange => shortrange_stage(cfg, init),
        Pipeline::Gaps => gaps_stage(cfg, init),
        Pipeline::Correlation => correlation_stage(cfg, init),
        Pipeline::Full => unreachable!("full expands to its stages"),
    }
}

fn initial_matrix(cfg: &ExperimentConfig, init: &InitialData<f64>) -> covdbm::Result<LinearizedMatrix<f64>> {
    let dims = covdbm::ensembles::EnsembleDims::new(cfg.dims.m, cfg.dims.n)?;
    Ok(linearize(init.to_block(dims)?))
}

fn freeconv_stage(cfg: &ExperimentConfig, init: &InitialData<f64>) -> covdbm::Result<StageOutput> {
    let t = cfg.time.t;
    let half = init.norm_inf() + 2.0 * t.sqrt() + 0.5;
    let points = 201;
    let energies: Vec<f64> = (0..points).map(|k| -half + 2.0 * half * k as f64 / (points - 1) as f64).collect();
    let field =
        FreeConvolutionField::build(init.clone(), t, &energies, cfg.regularity.eta_floor, tol_for::<f64>(), 2 * cfg.dims.n)?;
    let mut out = StageOutput::default();
    let mut csv = Vec::new();
    field.write_csv(&mut csv)?;
    out.raw("freeconv_field.csv", csv, points);
    let mut loc = b"index,gamma\n".to_vec();
    for (i, g) in field.classical_locations.iter().enumerate() {
        loc.extend_from_slice(format!("{},{}\n", i + 1, covdbm::ensembles::io::fmt17(*g)).as_bytes());
    }
    out.raw("freeconv_locations.csv", loc, field.classical_locations.len());
    out.ndjson("freeconv_meta.ndjson", &[field.metadata()])?;
    out.checks.push(CheckRecord::at_most("freeconv", "max fixed-point residual", field.max_residual, 1e-8));
    out.checks.push(CheckRecord::at_most("freeconv", "|mass - 1|", (field.mass - 1.0).abs(), 1e-3));
    Ok(out)
}

fn dbm_stage(cfg: &ExperimentConfig, init: &InitialData<f64>) -> covdbm::Result<StageOutput> {
    let dims = covdbm::ensembles::EnsembleDims::new(cfg.dims.m, cfg.dims.n)?;
    let state0 = SpectrumState::from_initial(init, dims)?;
    let sde = SdeConfig::new(cfg.time.dt, cfg.time.mode).with_reorder_on_exhaustion(true);
    let (t, dt, every) = (cfg.time.t, cfg.time.dt, cfg.time.record_every);
    let paths = (0..cfg.ensemble_size)
        .into_par_iter()
        .map(|k| {
            let mut it = EigenIntegrator::new(state0.clone(), sde.clone(), stream(cfg, STREAM_DBM).substream(k as u64))?;
            let mut records = vec![it.record()];
            if every == 0 {
                it.advance_to(t)?;
            } else {
                while it.time() < t * (1.0 - 1e-12) {
                    it.advance_to((it.time() + every as f64 * dt).min(t))?;
                    records.push(it.record());
                }
            }
            if records.len() == 1 {
                records.push(it.record());
            }
            Ok(records)
        })
        .collect::<covdbm::Result<Vec<_>>>()?;
    let mut out = StageOutput::default();
    let mut unordered = 0usize;
    for (k, records) in paths.iter().enumerate() {
        let last = &records.last().expect("at least two records").eigenvalues;
        unordered += last.windows(2).any(|w| w[1] < w[0]) as usize;
        let mut bytes = Vec::new();
        write_trajectory(records, &mut bytes)?;
        out.raw(&format!("dbm_path_{k:04}.ndjson"), bytes, records.len());
    }
    out.checks.push(CheckRecord::at_most("dbm", "paths ending unordered", unordered as f64, 0.0));
    Ok(out)
}

#[derive(Serialize)]
struct LocalLawLine<'a> {
    run: usize,
    #[serde(flatten)]
    row: &'a LocalLawRow,
}

#[derive(Serialize)]
struct RigidityLine {
    run: usize,
    sup_scaled_gap: f64,
    max_rigidity: f64,
    polylog: f64,
}

fn locallaw_stage(cfg: &ExperimentConfig, init: &InitialData<f64>) -> covdbm::Result<StageOutput> {
    let n = cfg.dims.n;
    let t = cfg.time.t;
    let reg = &cfg.regularity;
    let x0 = initial_matrix(cfg, init)?;
    let locations = fc_locations(init, t, reg.eta_floor)?;
    let half = reg.q * reg.big_g;
    let window = bulk_window(&locations, reg.energy - half, reg.energy + half);
    let domain = SpectralDomain {
        e0: reg.energy,
        q: reg.q,
        big_g: reg.big_g,
        eta_min: (n as f64).powf(-cfg.thresholds.eta_exponent).max(1.0 / n as f64),
        eta_max: 1.0,
        l_exp: cfg.thresholds.eta_exponent,
        b_v: init.spectral_bound,
    };
    domain.validate(n)?;
    let points = domain.points(5, 4);
    let th = DiagnosticThresholds { xi: cfg.thresholds.xi, nu: cfg.thresholds.nu, phi_exponent: cfg.thresholds.phi_exponent };
    th.validate()?;
    let polylog = th.polylog(n);
    let green = x0.dims().size() <= GREEN_STATS_MAX_SIZE;
    let runs = (0..cfg.ensemble_size)
        .into_par_iter()
        .map(|k| {
            let x = matrix_flow_sample(&x0, t, stream(cfg, STREAM_LOCALLAW).substream(k as u64))?;
            let state = spectrum(&x)?;
            let rows = local_law_rows(state.positive(), init, t, &points, green.then_some(&x))?;
            let rig = rigidity_scaled(&nontrivial_sorted(&state), &locations, n, window.clone())?;
            Ok((rows, rig.into_iter().fold(0.0, f64::max)))
        })
        .collect::<covdbm::Result<Vec<_>>>()?;
    let mut lines = Vec::new();
    let mut summary = Vec::new();
    for (k, (rows, rig)) in runs.iter().enumerate() {
        lines.extend(rows.iter().map(|row| LocalLawLine { run: k, row }));
        let sup = rows.iter().map(|r| r.lambda_gap * n as f64 * r.eta).fold(0.0, f64::max);
        summary.push(RigidityLine { run: k, sup_scaled_gap: sup, max_rigidity: *rig, polylog });
    }
    let frac = |f: &dyn Fn(&RigidityLine) -> bool| summary.iter().filter(|l| f(l)).count() as f64 / summary.len() as f64;
    let law = frac(&|l| l.sup_scaled_gap <= polylog);
    let rigid = frac(&|l| l.max_rigidity <= polylog);
    let mut out = StageOutput::default();
    out.ndjson("locallaw_rows.ndjson", &lines)?;
    out.ndjson("locallaw_runs.ndjson", &summary)?;
    out.checks.push(CheckRecord::at_least("locallaw", "fraction with Λ·Nη ≤ (log N)^φ", law, 0.95));
    out.checks.push(CheckRecord::at_least("locallaw", "fraction with N|λ−γ| ≤ (log N)^φ", rigid, 0.95));
    Ok(out)
}

fn schedule(cfg: &ExperimentConfig) -> covdbm::Result<ShortRangeParams> {
    let s = &cfg.schedule;
    Ok(make_schedule_unchecked(cfg.dims.n, s.omega0, s.omega1, s.omega_a, s.omega_l)?.with_regularity(cfg.regularity.big_g))
}

fn coupled_system(
    cfg: &ExperimentConfig,
    setup: &ShortRangeSetup,
    x0: &LinearizedMatrix<f64>,
    k: usize,
) -> covdbm::Result<CoupledSystem> {
    let p = &setup.params;
    let x = matrix_flow_sample(x0, p.t0, stream(cfg, STREAM_SHORTRANGE_START).substream(k as u64))?;
    let lam = spectrum(&x)?.positive().to_vec();
    CoupledSystem::new(
        x0.dims(),
        &lam,
        setup.sets.clone(),
        setup.shift.clone(),
        CoupledConfig::new(p.t1 / cfg.schedule.steps as f64),
        stream(cfg, STREAM_SHORTRANGE_NOISE).substream(k as u64),
    )
}

#[derive(Serialize)]
struct ShortRangeLine {
    run: usize,
    measured: f64,
    bound: f64,
    within: bool,
    wigner_distance: f64,
    wigner_scaled: f64,
    wigner_within: bool,
    halvings: u64,
    reorders: u64,
    noise_digest: String,
}

fn shortrange_stage(cfg: &ExperimentConfig, init: &InitialData<f64>) -> covdbm::Result<StageOutput> {
    let p = schedule(cfg)?;
    let reg = &cfg.regularity;
    let setup = ShortRangeSetup::build(init, p.clone(), reg.energy, reg.q, reg.eta_floor)?;
    let x0 = initial_matrix(cfg, init)?;
    let lines = (0..cfg.ensemble_size)
        .into_par_iter()
        .map(|k| {
            let mut sys = coupled_system(cfg, &setup, &x0, k)?;
            sys.run_to_end()?;
            let e = shortrange_error(&sys, &p, cfg.thresholds.epsilon);
            let w = wigner_coupling_distance(&sys, &p, cfg.thresholds.delta)?;
            Ok(ShortRangeLine {
                run: k,
                measured: e.measured,
                bound: e.bound,
                within: e.within,
                wigner_distance: w.distance,
                wigner_scaled: w.scaled,
                wigner_within: w.within,
                halvings: sys.halvings(),
                reorders: sys.reorders(),
                noise_digest: format!("{:016x}", sys.noise_digest()),
            })
        })
        .collect::<covdbm::Result<Vec<_>>>()?;
    let m = lines.len() as f64;
    let within = lines.iter().filter(|l| l.within).count() as f64 / m;
    let wigner = lines.iter().filter(|l| l.wigner_within).count() as f64 / m;
    let mut out = StageOutput::default();
    out.ndjson("shortrange_setup.ndjson", &[&setup])?;
    out.ndjson("shortrange.ndjson", &lines)?;
    out.checks.push(CheckRecord::at_least("shortrange", "fraction within the short-range bound", within, 0.9));
    out.checks.push(CheckRecord::at_least("shortrange", "fraction within the Wigner coupling reference", wigner, 0.9));
    Ok(out)
}

fn observable(bumps: &[BumpConfig], offsets: Vec<usize>) -> covdbm::Result<GapObservable> {
    let bumps = bumps
        .iter()
        .map(|b| match b.height {
            Some(h) => Bump::new(b.center, b.width, h),
            None => Bump::normalized(b.center, b.width),
        })
        .collect::<covdbm::Result<Vec<_>>>()?;
    GapObservable::product_bump(bumps, offsets)
}

#[derive(Serialize)]
struct CoupledGapLine {
    run: usize,
    statistic: f64,
    scaled: f64,
    reference: f64,
    within: bool,
    worst_time: f64,
    worst_offset: usize,
    a0: f64,
    a_fit_drift: f64,
    a_analytic_end: f64,
}

fn gaps_stage(cfg: &ExperimentConfig, init: &InitialData<f64>) -> covdbm::Result<StageOutput> {
    let n = cfg.dims.n;
    let p = schedule(cfg)?;
    let reg = &cfg.regularity;
    let setup = ShortRangeSetup::build(init, p.clone(), reg.energy, reg.q, reg.eta_floor)?;
    let x0 = initial_matrix(cfg, init)?;
    let log_every = (cfg.schedule.steps / 20).max(1);
    let lines = (0..cfg.ensemble_size)
        .into_par_iter()
        .map(|k| {
            let mut sys = coupled_system(cfg, &setup, &x0, k)?;
            let (coupling, nu0) = coupling_from_setup(&setup, stream(cfg, STREAM_COUPLED_GOE).substream(k as u64))?;
            sys.attach_goe(nu0)?;
            let run = run_coupled_goe(&mut sys, &coupling, cfg.gaps.kmax, log_every)?;
            let r = gap_comparison_report(&run.covariance, &run.goe, n, cfg.thresholds.gap_epsilon)?;
            let drift = run.a_fit.iter().map(|a| (a - run.a_fit[0]).abs()).fold(0.0, f64::max);
            Ok(CoupledGapLine {
                run: k,
                statistic: r.statistic,
                scaled: r.scaled,
                reference: r.reference,
                within: r.within,
                worst_time: r.worst_time,
                worst_offset: r.worst_offset,
                a0: coupling.a0,
                a_fit_drift: drift,
                a_analytic_end: *run.a_analytic.last().expect("logged"),
            })
        })
        .collect::<covdbm::Result<Vec<_>>>()?;
    let mut out = StageOutput::default();
    let within = lines.iter().filter(|l| l.within).count() as f64 / lines.len() as f64;
    out.ndjson("gaps_coupled.ndjson", &lines)?;
    out.checks.push(CheckRecord::at_least("gaps", "fraction of coupled gap statistics within N^(-1-ε)", within, 0.9));

    if cfg.ensemble_size < MIN_GAP_SAMPLES {
        out.checks.push(CheckRecord::skipped("gaps", "gap universality (needs 100 samples)"));
        return Ok(out);
    }
    let size = 2 * n;
    let t = p.t0;
    let locations = fc_locations(init, t, reg.eta_floor)?;
    let i = nearest_location(reg.energy, &locations)?;
    let obs = observable(&cfg.gaps.bumps, cfg.gaps.offsets.clone())?;
    if i + obs.max_offset() >= size {
        return Err(covdbm::Error::OutsideBulk(reg.energy));
    }
    let rho_fc = density_fc(init, t, locations[i], reg.eta_floor)?;
    let mu = classical_locations(&Semicircle, size)?;
    let cov = GapEnsemble::covariance(&x0, t, cfg.ensemble_size, stream(cfg, STREAM_GAPS_COVARIANCE))?;
    let goe = GapEnsemble::goe(size, i..i + obs.max_offset() + 1, cfg.ensemble_size, stream(cfg, STREAM_GAPS_GOE), (1.0, 0.0))?;
    let report = gap_universality_report(&cov, rho_fc, &goe, semicircle_density(mu[i]), &obs, i, i)?;
    let mut bytes = Vec::new();
    write_reports_ndjson(std::slice::from_ref(&report), &mut bytes)?;
    out.raw("gaps_universality.ndjson", bytes, 1);
    let mut csv = Vec::new();
    write_gap_csv(&cov, &obs.offsets, i, rho_fc, &mut csv)?;
    out.raw("gaps_covariance_samples.csv", csv, cfg.ensemble_size * obs.arity());
    let excess = report.difference.mean.abs() - 3.0 * report.difference.stderr;
    let tolerance = (n as f64).powf(-cfg.thresholds.gap_epsilon);
    out.checks.push(CheckRecord::at_most("gaps", "|E cov − E goe| − 3σ", excess, tolerance));
    Ok(out)
}

fn correlation_stage(cfg: &ExperimentConfig, init: &InitialData<f64>) -> covdbm::Result<StageOutput> {
    let n = cfg.dims.n;
    let size = 2 * n;
    let p = schedule(cfg)?;
    let t = p.t0;
    let c = &cfg.correlation;
    let e0 = cfg.regularity.energy;
    let x0 = initial_matrix(cfg, init)?;
    let obs = observable(&c.bumps, (1..=c.bumps.len()).collect())?;
    let window = CorrelationWindow::new(n, e0, c.c).with_reference(c.e_ref);
    let rho_fc = density_fc(init, t, e0, cfg.regularity.eta_floor)?;
    let rho_sc = semicircle_density(c.e_ref);
    let reach = c.bumps.iter().map(|b| b.center.abs() + b.width).fold(0.0, f64::max);
    let cov = GapEnsemble::covariance(&x0, t, cfg.ensemble_size, stream(cfg, STREAM_CORRELATION_COVARIANCE))?.values;
    let margin = reach / (size as f64 * rho_sc) + 1e-9;
    let goe = goe_window_spectra(
        size,
        c.e_ref - window.b - margin,
        c.e_ref + window.b + margin,
        cfg.ensemble_size,
        stream(cfg, STREAM_CORRELATION_GOE),
    )?;
    let report = covdbm::gapstats::correlation_estimate(
        &CorrelationInput { spectra: &cov, size, energy: e0, rho: rho_fc },
        &CorrelationInput { spectra: &goe, size, energy: c.e_ref, rho: rho_sc },
        window,
        &obs,
        c.min_count,
    )?;
    let mut out = StageOutput::default();
    let mut bytes = Vec::new();
    write_reports_ndjson(std::slice::from_ref(&report), &mut bytes)?;
    out.raw("correlation.ndjson", bytes, 1);
    let excess = report.difference.mean.abs() - 3.0 * report.difference.stderr;
    out.checks.push(CheckRecord::at_most("correlation", "|E cov − E goe| − 3σ", excess, 0.05));
    Ok(out)
}

/// Whether every check of a manifest passed or was skipped.
pub fn all_passed(manifest: &RunManifest) -> bool {
    manifest.checks.iter().all(|c| c.status != CheckStatus::Fail)
}
