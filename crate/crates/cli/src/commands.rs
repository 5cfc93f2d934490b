use std::fs::File;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;
use swapsim_core::heralding::heralding_report;
use swapsim_core::metrics::{concurrence, nearest_max_entangled, nearest_werner, phase_scan_visibility, pure_fidelity, MaxEntFit, WernerFit};
use swapsim_core::photonics::hom::hom_curve;
use swapsim_core::photonics::swap::ClickEvent;
use swapsim_core::photonics::{
    run_hom, scan_settings, tomography_settings, AnalyzerBasis, ExperimentConfig, Optics, Readout, RunOptions, SwapSimulator,
};
use swapsim_core::qstate::{bell_state, BellKind, MatrixJson};
use swapsim_core::seed::derive_seed;
use swapsim_core::tomography::{
    bootstrap, fit_visibility, from_records, reconstruct, write_csv, BootstrapSummary, MleOptions, MleResult, Statistic,
    TomographySetting, VisibilityFit,
};

use crate::manifest::{write_json, RunManifest};
use crate::{Cli, Command, SwapArgs, SweepParam};

/// Pulse-by-pulse traces beyond this many pulses are refused.
const MAX_TRACE_PULSES: u64 = 10_000_000;

/// Stream tag for bootstrap resampling, kept apart from the run streams.
const BOOTSTRAP_STREAM: u64 = 0xb007;

struct Bench {
    cfg: ExperimentConfig,
    config_path: PathBuf,
    seed: u64,
    pulses: u64,
    workers: usize,
    out: PathBuf,
}

impl Bench {
    fn run_options(&self, qnd: bool) -> RunOptions {
        RunOptions {
            pulses: self.pulses,
            seed: self.seed,
            engine: self.cfg.run.engine,
            workers: self.workers,
            qnd,
        }
    }

    fn manifest(&self, command: String, qnd: bool, outputs: &[&str]) -> Result<RunManifest> {
        let mut m = RunManifest::new(command, &self.config_path, self.seed, self.pulses, self.workers, self.cfg.run.engine, qnd)?;
        m.outputs = outputs.iter().map(|s| s.to_string()).collect();
        Ok(m)
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    let cfg = ExperimentConfig::from_file(&cli.config).with_context(|| format!("loading {}", cli.config.display()))?;
    let bench = Bench {
        seed: cli.seed.unwrap_or(cfg.run.seed),
        pulses: cli.pulses.unwrap_or(cfg.run.pulses),
        workers: cli.workers.map_or(cfg.run.workers, |w| w as usize),
        config_path: cli.config.clone(),
        out: cli.out.clone(),
        cfg,
    };
    std::fs::create_dir_all(&bench.out).with_context(|| format!("creating {}", bench.out.display()))?;
    match &cli.command {
        Command::Hom { conditioned } => cmd_hom(&bench, *conditioned),
        Command::Swap(args) if args.scan => cmd_scan(&bench, args),
        Command::Swap(args) => cmd_tomo(&bench, args),
        Command::Herald => cmd_herald(&bench),
        Command::Sweep { param, values, qnd } => cmd_sweep(&bench, *param, values, *qnd),
    }
}

fn csv_writer(path: &Path) -> Result<csv::Writer<File>> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(csv::Writer::from_writer(f))
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv_writer(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct HomReport {
    #[serde(rename = "V")]
    visibility: f64,
    sigma: f64,
    #[serde(rename = "N_max")]
    n_max: u64,
    #[serde(rename = "N_min")]
    n_min: u64,
    p_max: f64,
    p_min: f64,
    overlap: f64,
    conditioned: bool,
    mu: f64,
    truncation: usize,
    /// Single-photon visibility limit set by the pump duration.
    spectral_bound: Option<f64>,
}

#[derive(Serialize)]
struct HomCurveRow {
    overlap: f64,
    distinguishability: f64,
    coincidence_probability: f64,
    expected_counts: f64,
}

fn cmd_hom(b: &Bench, conditioned: bool) -> Result<()> {
    let optics = b.cfg.hom_optics()?;
    let points = b.cfg.hom.map_or(11, |h| h.overlap_points);
    let r = run_hom(&optics, optics.bsm.overlap, b.pulses, b.seed, conditioned)?;
    let curve: Vec<HomCurveRow> = hom_curve(&optics, 1.0, points, conditioned)?
        .into_iter()
        .map(|(x, p)| HomCurveRow {
            overlap: x,
            distinguishability: 1.0 - x * x,
            coincidence_probability: p,
            expected_counts: p * b.pulses as f64,
        })
        .collect();
    let spectral_bound = match b.cfg.hom {
        Some(h) => Some(swapsim_core::photonics::hom_visibility_bound(h.pump_duration, h.coherence_time)?),
        None => None,
    };
    write_rows(&b.path("hom_curve.csv"), &curve)?;
    let report = HomReport {
        visibility: r.visibility,
        sigma: r.sigma,
        n_max: r.n_max,
        n_min: r.n_min,
        p_max: r.p_max,
        p_min: r.p_min,
        overlap: r.overlap,
        conditioned,
        mu: optics.source_ab.mu,
        truncation: optics.truncation,
        spectral_bound,
    };
    let command = if conditioned { "hom --conditioned" } else { "hom" };
    let m = b.manifest(command.into(), false, &["hom.json", "hom_curve.csv"])?;
    write_json(&b.path("hom.json"), &m, &report)?;
    println!("V = {:.4} ± {:.4}  (N_max = {}, N_min = {})", r.visibility, r.sigma, r.n_max, r.n_min);
    Ok(())
}

fn phase_of(a: &AnalyzerBasis) -> f64 {
    match *a {
        AnalyzerBasis::Phase(p) => p,
        AnalyzerBasis::Z => 0.0,
    }
}

#[derive(Serialize)]
struct ScanRow {
    alpha: f64,
    beta: f64,
    delta: f64,
    /// Heralded fourfolds for each pair of analyzer outputs (+ = Phase(φ)).
    n_pp: u64,
    n_pm: u64,
    n_mp: u64,
    n_mm: u64,
    pulses: u64,
}

#[derive(Serialize)]
struct ScanReport {
    points: usize,
    total_fourfolds: u64,
    /// Fit of `n_pp` with the period fixed to 2π.
    fixed_period: VisibilityFit,
    /// Same data with the period free.
    free_period: VisibilityFit,
}

fn write_trace(b: &Bench, sim: &SwapSimulator, opts: &RunOptions, setting: &swapsim_core::photonics::AnalyzerSetting, path: &Path) -> Result<()> {
    if b.pulses > MAX_TRACE_PULSES {
        bail!("--trace runs pulse by pulse; use --pulses {MAX_TRACE_PULSES} or fewer");
    }
    let mut w = csv_writer(path)?;
    sim.run_traced(0, setting, opts, |e: ClickEvent| {
        w.serialize(e).map_err(swapsim_core::Error::from)
    })?;
    w.flush()?;
    Ok(())
}

fn cmd_scan(b: &Bench, args: &SwapArgs) -> Result<()> {
    let optics = b.cfg.optics()?;
    let accept = optics.bsm.accept_psi_plus;
    let sim = SwapSimulator::new(&optics)?;
    let opts = b.run_options(args.qnd);
    let settings = scan_settings(b.cfg.scan.points);
    let records = sim.run(&settings, &opts)?;
    let rows: Vec<ScanRow> = records
        .iter()
        .map(|r| {
            let (alpha, beta) = (phase_of(&r.setting.a), phase_of(&r.setting.d));
            let n = |a, d| r.heralded(a, d, accept);
            ScanRow {
                alpha,
                beta,
                delta: alpha - beta,
                n_pp: n(Readout::Zero, Readout::Zero),
                n_pm: n(Readout::Zero, Readout::One),
                n_mp: n(Readout::One, Readout::Zero),
                n_mm: n(Readout::One, Readout::One),
                pulses: r.pulses,
            }
        })
        .collect();
    let pts: Vec<(f64, f64)> = rows.iter().map(|r| (r.delta, r.n_pp as f64)).collect();
    let report = ScanReport {
        points: rows.len(),
        total_fourfolds: rows.iter().map(|r| r.n_pp + r.n_pm + r.n_mp + r.n_mm).sum(),
        fixed_period: fit_visibility(&pts, true).context("fitting the fringe")?,
        free_period: fit_visibility(&pts, false).context("fitting the fringe with free period")?,
    };
    write_rows(&b.path("scan.csv"), &rows)?;
    let mut outputs = vec!["scan.json", "scan.csv"];
    if let Some(t) = &args.trace {
        write_trace(b, &sim, &opts, &settings[0], t)?;
        outputs.push("trace");
    }
    let cmd = if args.qnd { "swap --scan --qnd" } else { "swap --scan" };
    write_json(&b.path("scan.json"), &b.manifest(cmd.into(), args.qnd, &outputs)?, &report)?;
    let f = &report.fixed_period;
    println!(
        "V = {:.4} ± {:.4}  (free period: {:.4} ± {:.4} × 2π, V = {:.4})",
        f.visibility, f.visibility_err, report.free_period.period, report.free_period.period_err, report.free_period.visibility
    );
    Ok(())
}

/// State estimate and the derived figures of merit.
#[derive(Serialize)]
struct TomoAnalysis {
    heralded_fourfolds: u64,
    mle: MleResult,
    rho: MatrixJson,
    eigenvalues: Vec<f64>,
    concurrence: f64,
    fidelity_psi_plus: f64,
    phase_scan_visibility: f64,
    nearest_max_entangled: MaxEntFit,
    werner: WernerFit,
}

fn swap_tomography(optics: &Optics, opts: &RunOptions) -> Result<(Vec<TomographySetting>, TomoAnalysis)> {
    let sim = SwapSimulator::new(optics)?;
    let records = sim.run(&tomography_settings(), opts)?;
    let rows = from_records(&records, optics.bsm.accept_psi_plus);
    let mle = reconstruct(&rows, &MleOptions::default()).context("reconstructing the A–D state")?;
    let rho = &mle.rho;
    let analysis = TomoAnalysis {
        heralded_fourfolds: rows.iter().map(|r| r.counts).sum(),
        rho: rho.to_json(),
        eigenvalues: rho.eigenvalues(),
        concurrence: concurrence(rho)?,
        fidelity_psi_plus: pure_fidelity(rho, &bell_state(BellKind::PsiPlus))?,
        phase_scan_visibility: phase_scan_visibility(rho)?,
        nearest_max_entangled: nearest_max_entangled(rho)?,
        werner: nearest_werner(rho)?,
        mle,
    };
    Ok((rows, analysis))
}

#[derive(Serialize)]
struct TomoReport {
    #[serde(flatten)]
    analysis: TomoAnalysis,
    bootstrap: Vec<BootstrapSummary>,
}

fn cmd_tomo(b: &Bench, args: &SwapArgs) -> Result<()> {
    let optics = b.cfg.optics()?;
    let opts = b.run_options(args.qnd);
    let (rows, analysis) = swap_tomography(&optics, &opts)?;
    let f = File::create(b.path("tomography.csv"))?;
    write_csv(f, &rows)?;
    let stats = [
        Statistic::Concurrence,
        Statistic::FidelityTo(bell_state(BellKind::PsiPlus)),
        Statistic::WernerVisibility,
        Statistic::WernerFidelity,
    ];
    let boot = bootstrap(
        &rows,
        &stats,
        b.cfg.tomography.resamples,
        derive_seed(b.seed, &[BOOTSTRAP_STREAM]),
        &MleOptions::default(),
    )
    .context("bootstrapping the reconstruction")?;
    let mut outputs = vec!["tomo.json", "tomography.csv"];
    if let Some(t) = &args.trace {
        let sim = SwapSimulator::new(&optics)?;
        write_trace(b, &sim, &opts, &tomography_settings()[0], t)?;
        outputs.push("trace");
    }
    let report = TomoReport { analysis, bootstrap: boot };
    let cmd = if args.qnd { "swap --tomo --qnd" } else { "swap --tomo" };
    write_json(&b.path("tomo.json"), &b.manifest(cmd.into(), args.qnd, &outputs)?, &report)?;
    let a = &report.analysis;
    let err = |name: &str| report.bootstrap.iter().find(|s| s.statistic == name).map_or(f64::NAN, |s| s.std);
    println!("fourfolds  {}", a.heralded_fourfolds);
    println!("C          {:.4} ± {:.4}", a.concurrence, err("concurrence"));
    println!("F(Ψ+)      {:.4} ± {:.4}", a.fidelity_psi_plus, err("fidelity"));
    println!("Werner v   {:.4} ± {:.4}  (fit fidelity {:.4})", a.werner.v, err("werner_v"), a.werner.fidelity);
    Ok(())
}

fn cmd_herald(b: &Bench) -> Result<()> {
    let report = heralding_report(b.cfg.heralding_config()?)?;
    let pct = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{:.2}%", 100.0 * v));
    println!("{:<8} {:>9} {:>9} {:>9} {:>9}", "photon", "bound", "expected", "measured", "coupling");
    for r in &report.rows {
        println!(
            "{:<8} {:>9} {:>9} {:>9} {:>9}",
            r.photon,
            pct(Some(r.bound)),
            pct(Some(r.expected)),
            pct(r.measured),
            pct(r.coupling.as_ref().map(|c| c.value))
        );
    }
    if let Some(c) = &report.conjugate {
        println!(
            "idler {:.1} nm, width {:.2} nm; pump bandwidth {:.1} GHz",
            c.lambda_i_nm, c.dlambda_i_nm, c.dnu_p_ghz
        );
    }
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    write_json(&b.path("herald.json"), &b.manifest("herald".into(), false, &["herald.json"])?, &report)?;
    Ok(())
}

#[derive(Serialize)]
struct SweepRow {
    param: f64,
    concurrence: f64,
    fidelity: f64,
    /// Visibility of the nearest Werner state.
    visibility: f64,
}

#[derive(Serialize)]
struct SweepPoint {
    value: f64,
    #[serde(flatten)]
    analysis: TomoAnalysis,
}

#[derive(Serialize)]
struct SweepReport {
    param: &'static str,
    points: Vec<SweepPoint>,
}

fn with_param(cfg: &ExperimentConfig, param: SweepParam, value: f64) -> Result<Optics> {
    let mut c = cfg.clone();
    let src = c.source.as_mut();
    match param {
        SweepParam::Mu => src.context("sweep over mu needs a [source] section")?.mu = value,
        SweepParam::StateFidelity => src.context("sweep over state_fidelity needs a [source] section")?.state_fidelity = value,
        SweepParam::Overlap => c.bsm.as_mut().context("sweep over overlap needs a [bsm] section")?.overlap = value,
    }
    c.optics().with_context(|| format!("{} = {value}", param.name()))
}

fn cmd_sweep(b: &Bench, param: SweepParam, values: &[f64], qnd: bool) -> Result<()> {
    let opts = b.run_options(qnd);
    let mut points = Vec::with_capacity(values.len());
    let mut rows = Vec::with_capacity(values.len());
    for &v in values {
        let optics = with_param(&b.cfg, param, v)?;
        let (_, a) = swap_tomography(&optics, &opts)?;
        println!("{} = {v}: C = {:.4}, F = {:.4}, v = {:.4}", param.name(), a.concurrence, a.fidelity_psi_plus, a.werner.v);
        rows.push(SweepRow {
            param: v,
            concurrence: a.concurrence,
            fidelity: a.fidelity_psi_plus,
            visibility: a.werner.v,
        });
        points.push(SweepPoint { value: v, analysis: a });
    }
    write_rows(&b.path("sweep.csv"), &rows)?;
    let list: Vec<String> = values.iter().map(|v| v.to_string()).collect();
    let mut cmd = format!("sweep --param {} --values {}", param.name(), list.join(","));
    if qnd {
        cmd.push_str(" --qnd");
    }
    let report = SweepReport {
        param: param.name(),
        points,
    };
    write_json(&b.path("sweep.json"), &b.manifest(cmd, qnd, &["sweep.json", "sweep.csv"])?, &report)?;
    Ok(())
}
