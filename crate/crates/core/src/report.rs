//! CSV and manifest output, and the drivers behind each command-line command.
//!
//! Every CSV written here starts with a `# config_digest=<hex>` comment line
//! naming the scenario it came from; readers skip it with `csv`'s comment
//! support. Floating-point fields carry 12 significant digits, so reruns with
//! the same inputs produce byte-identical files.

use std::fmt;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::analytic::{nrf_expected, DetectedExpectations};
use crate::config::{ConditionWindow, ValidatedConfig};
use crate::estimators::{ensemble_statistics, gain_fit, linear_fit, Bootstrap, EnsembleStatistics, FitError, FitResult, GainFit, Stat};
use crate::montecarlo::{apply_condition, run_ensemble_with, tap_statistics, Conditioned, Ensemble, RunOptions, SimError, TapSummary};
use crate::oracle::{exact_conditional_stats, exact_pipeline, exact_statistics, ExactStatistics, OracleError, OracleOptions};
use crate::scenario::{Scenario, ScenarioError};

/// Prefix of the first line of every CSV file.
pub const DIGEST_PREFIX: &str = "# config_digest=";

/// Formats a value with 12 significant digits; NaN becomes `NaN`.
pub fn format_value(x: f64) -> String {
    if x.is_nan() {
        "NaN".to_string()
    } else {
        format!("{x:.11e}")
    }
}

/// Offset added to the scenario seed for bootstrap resampling, so that
/// resample streams never coincide with pulse-generation streams.
const BOOTSTRAP_SEED_OFFSET: u64 = 0x9e37_79b9_7f4a_7c15;

#[derive(Debug, thiserror::Error)]
pub enum CommandError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
    #[error("malformed input: {0}")]
    Data(String),
    #[error("simulation failed: {0}")]
    Sim(#[from] SimError),
    #[error("guard violated: {0}")]
    Guard(String),
    #[error("exact enumeration failed: {0}")]
    Oracle(#[from] OracleError),
    #[error("fit failed: {0}")]
    Fit(#[from] FitError),
}

impl CommandError {
    /// Process exit status: 2 configuration or input, 3 I/O, 4 guard violation, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CommandError::Scenario(ScenarioError::Read { .. }) | CommandError::Io(_) => 3,
            CommandError::Csv(e) if matches!(e.kind(), csv::ErrorKind::Io(_)) => 3,
            CommandError::Scenario(_) | CommandError::Csv(_) | CommandError::Data(_) => 2,
            CommandError::Guard(_) | CommandError::Oracle(OracleError::TruncationBudget { .. }) => 4,
            CommandError::Sim(_) | CommandError::Oracle(_) | CommandError::Fit(_) => 1,
        }
    }
}

/// Exit status of an oracle check whose comparisons did not all pass.
pub const EXIT_ORACLE_FAILED: i32 = 5;

/// One line of a statistics CSV.
#[derive(Clone, Debug, PartialEq)]
pub struct StatRow {
    pub n_mean: f64,
    pub stat: String,
    pub value: f64,
    pub stderr: f64,
    /// `None` for the unconditioned ensemble.
    pub window: Option<ConditionWindow>,
    pub seed: u64,
}

fn digest_line<W: Write>(out: &mut W, digest: &str) -> io::Result<()> {
    writeln!(out, "{DIGEST_PREFIX}{digest}")
}

fn window_fields(w: Option<ConditionWindow>) -> [String; 3] {
    match w {
        Some(w) => ["true".into(), format_value(w.center_scale), format_value(w.width_sigma)],
        None => ["false".into(), String::new(), String::new()],
    }
}

/// Writes `N_m,stat,value,stderr,conditioned,window_c,window_w,seed`.
pub fn write_stats_csv<W: Write>(mut out: W, digest: &str, rows: &[StatRow]) -> io::Result<()> {
    digest_line(&mut out, digest)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["N_m", "stat", "value", "stderr", "conditioned", "window_c", "window_w", "seed"])?;
    for r in rows {
        let [cond, c, width] = window_fields(r.window);
        w.write_record([
            format_value(r.n_mean),
            r.stat.clone(),
            format_value(r.value),
            format_value(r.stderr),
            cond,
            c,
            width,
            r.seed.to_string(),
        ])?;
    }
    w.flush()
}

fn parse_f64(field: &str) -> Result<f64, CommandError> {
    field.trim().parse().map_err(|_| CommandError::Data(format!("not a number: `{field}`")))
}

/// Reads a file written by [`write_stats_csv`]; returns the digest and rows.
pub fn read_stats_csv(text: &str) -> Result<(String, Vec<StatRow>), CommandError> {
    let digest = text
        .lines()
        .next()
        .and_then(|l| l.strip_prefix(DIGEST_PREFIX))
        .ok_or_else(|| CommandError::Data("missing digest line".into()))?
        .to_string();
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        if rec.len() != 8 {
            return Err(CommandError::Data(format!("expected 8 fields, found {}", rec.len())));
        }
        let window = match &rec[4] {
            "true" => Some(ConditionWindow::new(parse_f64(&rec[5])?, parse_f64(&rec[6])?)),
            "false" => None,
            other => return Err(CommandError::Data(format!("bad conditioned flag `{other}`"))),
        };
        rows.push(StatRow {
            n_mean: parse_f64(&rec[0])?,
            stat: rec[1].to_string(),
            value: parse_f64(&rec[2])?,
            stderr: parse_f64(&rec[3])?,
            window,
            seed: rec[7].parse().map_err(|_| CommandError::Data(format!("bad seed `{}`", &rec[7])))?,
        });
    }
    Ok((digest, rows))
}

/// Outcome of one conditioning window on one ensemble.
#[derive(Clone, Debug)]
pub struct WindowAnalysis {
    pub window: ConditionWindow,
    /// `None` when the tap spread is zero and no window can be placed.
    pub conditioned: Option<Conditioned>,
    pub stats: EnsembleStatistics,
}

impl WindowAnalysis {
    pub fn accepted(&self) -> usize {
        self.conditioned.as_ref().map_or(0, Conditioned::accepted)
    }

    pub fn acceptance_ratio(&self) -> f64 {
        self.conditioned.as_ref().map_or(0.0, Conditioned::acceptance_ratio)
    }

    /// Set when the window retained no pulse.
    pub fn is_empty(&self) -> bool {
        self.accepted() == 0
    }
}

/// Simulation and statistics of one configuration.
#[derive(Clone, Debug)]
pub struct PointAnalysis {
    pub n_mean: f64,
    pub seed: u64,
    pub ensemble: Ensemble,
    pub tap: Option<TapSummary>,
    pub unconditioned: EnsembleStatistics,
    pub windows: Vec<WindowAnalysis>,
}

/// Runs the ensemble and evaluates every statistic before and after each window.
pub fn analyze_point(
    cfg: &ValidatedConfig,
    seed: u64,
    pulses: usize,
    windows: &[ConditionWindow],
    run: RunOptions,
    boot: &Bootstrap,
) -> Result<PointAnalysis, SimError> {
    let ensemble = run_ensemble_with(cfg, seed, pulses, run)?;
    let unconditioned = ensemble_statistics(&ensemble, boot);
    let tap = tap_statistics(&ensemble).ok();
    let windows = windows
        .iter()
        .map(|w| {
            let conditioned = tap.as_ref().and_then(|t| apply_condition(&ensemble, w, t).ok());
            let empty = Ensemble::from_records(Vec::new(), ensemble.config_digest(), seed);
            let stats = ensemble_statistics(conditioned.as_ref().map_or(&empty, |c| &c.ensemble), boot);
            WindowAnalysis { window: *w, conditioned, stats }
        })
        .collect();
    Ok(PointAnalysis { n_mean: cfg.source().n_mean_per_mode, seed, ensemble, tap, unconditioned, windows })
}

impl PointAnalysis {
    /// Statistics rows: every [`Stat`] plus pulse counts, before and after each window.
    pub fn rows(&self) -> Vec<StatRow> {
        let row = |stat: &str, value: f64, stderr: f64, window: Option<ConditionWindow>| StatRow {
            n_mean: self.n_mean,
            stat: stat.to_string(),
            value,
            stderr,
            window,
            seed: self.seed,
        };
        let stat_rows = |s: &EnsembleStatistics, w: Option<ConditionWindow>| {
            Stat::ALL.iter().map(move |&k| row(k.name(), s.value(k), s.stderr(k), w)).collect::<Vec<_>>()
        };
        let mut rows = vec![row("pulses", self.ensemble.pulse_count() as f64, 0.0, None)];
        if let Some(t) = &self.tap {
            rows.push(row("tap_mean", t.mean_tap, t.sd_tap / (self.ensemble.pulse_count() as f64).sqrt(), None));
            rows.push(row("tap_sd", t.sd_tap, f64::NAN, None));
        }
        rows.extend(stat_rows(&self.unconditioned, None));
        for w in &self.windows {
            let total = self.ensemble.pulse_count() as f64;
            let p = w.acceptance_ratio();
            rows.push(row("pulses", w.accepted() as f64, 0.0, Some(w.window)));
            rows.push(row("acceptance", p, (p * (1.0 - p) / total).sqrt(), Some(w.window)));
            rows.extend(stat_rows(&w.stats, Some(w.window)));
        }
        rows
    }
}

/// Contents of `manifest.json`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Manifest {
    pub command: String,
    pub scenario: String,
    pub config_digest: String,
    pub seed: u64,
    pub pulses: usize,
    pub version: String,
    pub files: Vec<String>,
    pub scenario_toml: String,
}

impl Manifest {
    fn new(command: &str, s: &Scenario, files: Vec<String>) -> Self {
        Self {
            command: command.to_string(),
            scenario: s.name.clone(),
            config_digest: s.digest(),
            seed: s.seed,
            pulses: s.pulses,
            version: env!("CARGO_PKG_VERSION").to_string(),
            files,
            scenario_toml: s.to_toml_string(),
        }
    }

    fn write(&self, dir: &Path) -> io::Result<()> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        fs::write(dir.join("manifest.json"), text + "\n")
    }
}

fn create_file(dir: &Path, name: &str) -> io::Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn run_options(s: &Scenario) -> RunOptions {
    RunOptions { binomial: s.binomial, serial: false }
}

fn bootstrap(s: &Scenario) -> Bootstrap {
    Bootstrap::new(s.resamples, s.seed.wrapping_add(BOOTSTRAP_SEED_OFFSET))
}

fn window_label(w: &ConditionWindow) -> String {
    format!("c={} w={:.4}", w.center_scale, w.width_sigma)
}

/// Result of [`cmd_simulate`].
#[derive(Clone, Debug)]
pub struct SimulateReport {
    pub point: PointAnalysis,
    pub files: Vec<PathBuf>,
}

impl fmt::Display for SimulateReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let p = &self.point;
        writeln!(f, "N_m = {}  pulses = {}  seed = {}", p.n_mean, p.ensemble.pulse_count(), p.seed)?;
        let show = |f: &mut fmt::Formatter<'_>, label: &str, s: &EnsembleStatistics| {
            writeln!(
                f,
                "  {label:<18} mdr_s {:>10.4} mdr_i {:>10.4} nrf {:>8.4} fano {:>9.4}",
                s.value(Stat::MdrSignal),
                s.value(Stat::MdrIdler),
                s.value(Stat::Nrf),
                s.value(Stat::Fano)
            )
        };
        show(f, "unconditioned", &p.unconditioned)?;
        for w in &p.windows {
            if w.is_empty() {
                writeln!(f, "  {:<18} empty window, no pulse accepted", window_label(&w.window))?;
            } else {
                show(f, &window_label(&w.window), &w.stats)?;
            }
        }
        for file in &self.files {
            writeln!(f, "wrote {}", file.display())?;
        }
        Ok(())
    }
}

/// Simulates the scenario's base point; writes the pulse samples, the
/// conditioned samples per window, the statistics table and a manifest.
pub fn cmd_simulate(s: &Scenario, out: &Path) -> Result<SimulateReport, CommandError> {
    s.check()?;
    let cfg = s.config().map_err(ScenarioError::from)?;
    fs::create_dir_all(out)?;
    let point = analyze_point(&cfg, s.seed, s.pulses, &s.windows, run_options(s), &bootstrap(s))?;
    let digest = s.digest();

    let mut names = vec!["samples.csv".to_string()];
    let mut f = create_file(out, "samples.csv")?;
    digest_line(&mut f, &digest)?;
    point.ensemble.write_csv(&mut f)?;
    f.flush()?;
    for (k, w) in point.windows.iter().enumerate() {
        let name = format!("samples_window{k}.csv");
        let mut f = create_file(out, &name)?;
        digest_line(&mut f, &digest)?;
        match &w.conditioned {
            Some(c) => c.ensemble.write_csv(&mut f)?,
            None => Ensemble::from_records(Vec::new(), cfg.digest(), s.seed).write_csv(&mut f)?,
        }
        f.flush()?;
        names.push(name);
    }
    let mut f = create_file(out, "stats.csv")?;
    write_stats_csv(&mut f, &digest, &point.rows())?;
    f.flush()?;
    names.push("stats.csv".into());
    Manifest::new("simulate", s, names.clone()).write(out)?;
    names.push("manifest.json".into());

    Ok(SimulateReport { point, files: names.iter().map(|n| out.join(n)).collect() })
}

/// Straight-line fit of one statistic against `N_m`.
#[derive(Clone, Debug, PartialEq)]
pub struct SlopeFit {
    pub stat: Stat,
    pub window: Option<ConditionWindow>,
    /// `None` when fewer than two sweep points have a defined value.
    pub fit: Option<FitResult<f64>>,
    /// Slope predicted for the unconditioned twin beams; NaN when the modes vary along the sweep.
    pub expected_slope: f64,
}

/// Result of [`cmd_sweep`].
#[derive(Clone, Debug)]
pub struct SweepReport {
    pub rows: Vec<StatRow>,
    pub fits: Vec<SlopeFit>,
    /// `(N_m, window)` pairs that accepted no pulse.
    pub empty_windows: Vec<(f64, ConditionWindow)>,
    pub files: Vec<PathBuf>,
}

impl fmt::Display for SweepReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in &self.fits {
            let label = s.window.as_ref().map_or("unconditioned".to_string(), window_label);
            match &s.fit {
                Some(fit) => writeln!(
                    f,
                    "{:<5} {label:<18} slope {:.5} +- {:.5}  intercept {:.4}  expected {:.5}",
                    s.stat.name(),
                    fit.slope,
                    fit.slope_stderr,
                    fit.intercept,
                    s.expected_slope
                )?,
                None => writeln!(f, "{:<5} {label:<18} not enough defined points", s.stat.name())?,
            }
        }
        for (n, w) in &self.empty_windows {
            writeln!(f, "warning: window {} accepted no pulse at N_m = {n}", window_label(w))?;
        }
        for file in &self.files {
            writeln!(f, "wrote {}", file.display())?;
        }
        Ok(())
    }
}

fn slope_fit(rows: &[StatRow], stat: Stat, window: Option<ConditionWindow>, expected_slope: f64) -> SlopeFit {
    let (xs, ys): (Vec<f64>, Vec<f64>) = rows
        .iter()
        .filter(|r| r.stat == stat.name() && r.window == window && r.value.is_finite())
        .map(|r| (r.n_mean, r.value))
        .unzip();
    SlopeFit { stat, window, fit: linear_fit(&xs, &ys).ok(), expected_slope }
}

/// Runs every sweep point, one seed per point, and fits Fano and NRF
/// against `N_m` for the unconditioned ensemble and for each window.
pub fn cmd_sweep(s: &Scenario, out: &Path) -> Result<SweepReport, CommandError> {
    s.check()?;
    let sweep = s.sweep.as_ref().ok_or_else(|| ScenarioError::Invalid("scenario has no sweep".into()))?;
    fs::create_dir_all(out)?;
    let boot = bootstrap(s);
    let mut rows = Vec::new();
    let mut empty_windows = Vec::new();
    for k in 0..sweep.len() {
        let cfg = s.sweep_config(k).map_err(ScenarioError::from)?;
        let point = analyze_point(&cfg, s.seed.wrapping_add(k as u64), s.pulses, &s.windows, run_options(s), &boot)?;
        for w in point.windows.iter().filter(|w| w.is_empty()) {
            empty_windows.push((point.n_mean, w.window));
        }
        rows.extend(point.rows());
    }

    let (fano_slope, nrf_slope) = if s.sweep_modes.is_some() {
        (f64::NAN, f64::NAN)
    } else {
        // Fano from the exact detected moments (affine in N_m, 2 eta when K = 0);
        // NRF from the closed form, whose slope is eta K / (M + K)
        let cfg = s.config().map_err(ScenarioError::from)?;
        let fano_at = |n: f64| cfg.with_n_mean(n).map(|c| DetectedExpectations::of(&c).fano());
        let ch = &s.channel;
        let eta_eff = 0.5 * (ch.signal_efficiency() + ch.idler_efficiency());
        let (m, k) = (s.source.matched_modes, s.source.unmatched_modes);
        (
            fano_at(2.0).map_err(ScenarioError::from)? - fano_at(1.0).map_err(ScenarioError::from)?,
            nrf_expected(m, k, eta_eff, 1.0) - nrf_expected(m, k, eta_eff, 0.0),
        )
    };
    let mut fits = Vec::new();
    for window in std::iter::once(None).chain(s.windows.iter().copied().map(Some)) {
        fits.push(slope_fit(&rows, Stat::Fano, window, fano_slope));
        fits.push(slope_fit(&rows, Stat::Nrf, window, nrf_slope));
    }

    let digest = s.digest();
    let mut f = create_file(out, "stats.csv")?;
    write_stats_csv(&mut f, &digest, &rows)?;
    f.flush()?;
    let mut f = create_file(out, "fits.csv")?;
    write_fits_csv(&mut f, &digest, &fits)?;
    f.flush()?;
    let names = vec!["stats.csv".to_string(), "fits.csv".to_string()];
    Manifest::new("sweep", s, names.clone()).write(out)?;
    let files = names.iter().chain(std::iter::once(&"manifest.json".to_string())).map(|n| out.join(n)).collect();
    Ok(SweepReport { rows, fits, empty_windows, files })
}

/// Writes `stat,conditioned,window_c,window_w,slope,slope_stderr,intercept,intercept_stderr,expected_slope`.
pub fn write_fits_csv<W: Write>(mut out: W, digest: &str, fits: &[SlopeFit]) -> io::Result<()> {
    digest_line(&mut out, digest)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["stat", "conditioned", "window_c", "window_w", "slope", "slope_stderr", "intercept", "intercept_stderr", "expected_slope"])?;
    for s in fits {
        let [cond, c, width] = window_fields(s.window);
        let nan = f64::NAN;
        let (a, b, c2, d) = s.fit.as_ref().map_or((nan, nan, nan, nan), |f| (f.slope, f.slope_stderr, f.intercept, f.intercept_stderr));
        w.write_record([
            s.stat.name().to_string(),
            cond,
            c,
            width,
            format_value(a),
            format_value(b),
            format_value(c2),
            format_value(d),
            format_value(s.expected_slope),
        ])?;
    }
    w.flush()
}

/// Result of [`cmd_fit_gain`].
#[derive(Clone, Debug)]
pub struct GainReport {
    pub fit: GainFit<f64>,
    pub powers: Vec<f64>,
    pub signals: Vec<f64>,
    pub file: PathBuf,
}

impl fmt::Display for GainReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (g_lo, g_hi) = self.fit.gain_range(&self.powers);
        writeln!(f, "A = {}", format_value(self.fit.amplitude_a))?;
        writeln!(f, "B = {}", format_value(self.fit.rate_b))?;
        writeln!(f, "residual rms = {}", format_value(self.fit.residual_rms))?;
        writeln!(f, "gain range G = [{g_lo:.3}, {g_hi:.3}]")?;
        writeln!(f, "wrote {}", self.file.display())
    }
}

/// Reads `P,S` columns (header required, `#` lines ignored).
pub fn read_power_signal_csv(text: &str) -> Result<(Vec<f64>, Vec<f64>), CommandError> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CommandError::Data(format!("missing column `{name}`")))
    };
    let (ip, is) = (col("P")?, col("S")?);
    let (mut powers, mut signals) = (Vec::new(), Vec::new());
    for rec in rdr.records() {
        let rec = rec?;
        powers.push(parse_f64(rec.get(ip).unwrap_or(""))?);
        signals.push(parse_f64(rec.get(is).unwrap_or(""))?);
    }
    Ok((powers, signals))
}

/// Fits `S = A sinh^2(sqrt(B P))` to a `P,S` CSV and writes `P,S,S_fit,G`.
pub fn cmd_fit_gain(data: &Path, out: &Path) -> Result<GainReport, CommandError> {
    let text = fs::read_to_string(data)?;
    let (powers, signals) = read_power_signal_csv(&text)?;
    let fit = gain_fit(&powers, &signals)?;
    fs::create_dir_all(out)?;
    let file = out.join("gain.csv");
    let mut f = BufWriter::new(File::create(&file)?);
    digest_line(&mut f, &hex::encode(&Sha256::digest(text.as_bytes())[..8]))?;
    let mut w = csv::Writer::from_writer(&mut f);
    w.write_record(["P", "S", "S_fit", "G"])?;
    for (&p, &s) in powers.iter().zip(&signals) {
        w.write_record([format_value(p), format_value(s), format_value(fit.predict(p)), format_value(fit.gain(p))])?;
    }
    w.flush()?;
    drop(w);
    f.flush()?;
    Ok(GainReport { fit, powers, signals, file })
}

/// One exact-versus-simulated comparison.
#[derive(Clone, Debug, PartialEq)]
pub struct CheckRow {
    pub window: Option<ConditionWindow>,
    pub stat: String,
    pub exact: f64,
    pub simulated: f64,
    pub stderr: f64,
    pub pass: bool,
}

/// Result of [`oracle_check`].
#[derive(Clone, Debug)]
pub struct OracleCheckReport {
    pub rows: Vec<CheckRow>,
    /// Windows that hold no mass exactly, with whether the simulation agreed.
    pub empty_windows: Vec<(ConditionWindow, bool)>,
    pub files: Vec<PathBuf>,
}

impl OracleCheckReport {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.pass) && self.empty_windows.iter().all(|(_, ok)| *ok)
    }
}

impl fmt::Display for OracleCheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in &self.rows {
            let label = r.window.as_ref().map_or("unconditioned".to_string(), window_label);
            writeln!(
                f,
                "{} {label:<18} {:<10} exact {:>12.6} mc {:>12.6} sd {:>10.6}",
                if r.pass { "PASS" } else { "FAIL" },
                r.stat,
                r.exact,
                r.simulated,
                r.stderr
            )?;
        }
        for (w, ok) in &self.empty_windows {
            let verdict = if *ok { "PASS" } else { "FAIL" };
            writeln!(f, "{verdict} {:<18} window holds no mass exactly", window_label(w))?;
        }
        for file in &self.files {
            writeln!(f, "wrote {}", file.display())?;
        }
        writeln!(f, "{}", if self.passed() { "oracle check passed" } else { "oracle check FAILED" })
    }
}

fn exact_value(e: &ExactStatistics<f64>, stat: Stat) -> f64 {
    let g2 = |m: f64, v: f64| (v + m * m - m) / (m * m);
    match stat {
        Stat::MeanSignal => e.signal.mean,
        Stat::MeanIdler => e.idler.mean,
        Stat::VarSignal => e.signal.variance,
        Stat::VarIdler => e.idler.variance,
        Stat::MdrSignal => e.mdr_signal,
        Stat::MdrIdler => e.mdr_idler,
        Stat::Nrf => e.nrf,
        Stat::Fano => e.fano,
        Stat::G2Signal => g2(e.signal.mean, e.signal.variance),
        Stat::G2Idler => g2(e.idler.mean, e.idler.variance),
    }
}

/// Within `sigmas` standard errors, with a relative slack of 1e-9 so that
/// exactly reproduced values (zero spread) still compare equal.
fn within(exact: f64, simulated: f64, stderr: f64, sigmas: f64) -> bool {
    (exact - simulated).abs() <= sigmas * stderr + 1e-9 * exact.abs().max(1.0)
}

fn compare(window: Option<ConditionWindow>, exact: &ExactStatistics<f64>, mc: &EnsembleStatistics, rows: &mut Vec<CheckRow>) {
    for stat in Stat::ALL {
        let (x, m, sd) = (exact_value(exact, stat), mc.value(stat), mc.stderr(stat));
        let pass = if x.is_finite() { within(x, m, sd, 4.0) } else { !m.is_finite() };
        rows.push(CheckRow { window, stat: stat.name().to_string(), exact: x, simulated: m, stderr: sd, pass });
    }
}

/// Compares a simulation of `mc_cfg` with the exact enumeration of
/// `exact_cfg`, statistic by statistic at four bootstrap standard errors.
/// Passing different configurations gives a negative control.
pub fn oracle_check(
    mc_cfg: &ValidatedConfig,
    exact_cfg: &ValidatedConfig,
    windows: &[ConditionWindow],
    pulses: usize,
    seed: u64,
    run: RunOptions,
    boot: &Bootstrap,
) -> Result<OracleCheckReport, CommandError> {
    let pmf = exact_pipeline::<f64>(exact_cfg, &OracleOptions::default())?;
    let point = analyze_point(mc_cfg, seed, pulses, windows, run, boot)?;
    let mut rows = Vec::new();
    let mut empty_windows = Vec::new();

    let all = exact_statistics(&pmf);
    compare(None, &all, &point.unconditioned, &mut rows);
    if let Some(t) = &point.tap {
        let n = point.ensemble.pulse_count() as f64;
        let se = t.sd_tap / n.sqrt();
        rows.push(CheckRow { window: None, stat: "tap_mean".into(), exact: all.tap_mean, simulated: t.mean_tap, stderr: se, pass: within(all.tap_mean, t.mean_tap, se, 4.0) });
    }
    for w in &point.windows {
        match exact_conditional_stats(&pmf, &w.window) {
            Ok(exact) => {
                let n = point.ensemble.pulse_count() as f64;
                let se = (exact.mass * (1.0 - exact.mass) / n).sqrt();
                let p = w.acceptance_ratio();
                rows.push(CheckRow { window: Some(w.window), stat: "acceptance".into(), exact: exact.mass, simulated: p, stderr: se, pass: within(exact.mass, p, se, 4.0) });
                compare(Some(w.window), &exact, &w.stats, &mut rows);
            }
            Err(OracleError::ZeroMassWindow { .. }) => empty_windows.push((w.window, w.is_empty())),
            Err(e) => return Err(e.into()),
        }
    }
    Ok(OracleCheckReport { rows, empty_windows, files: Vec::new() })
}

/// Writes `window_c,window_w,stat,exact,mc,stderr,pass`.
pub fn write_check_csv<W: Write>(mut out: W, digest: &str, report: &OracleCheckReport) -> io::Result<()> {
    digest_line(&mut out, digest)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["conditioned", "window_c", "window_w", "stat", "exact", "mc", "stderr", "pass"])?;
    for r in &report.rows {
        let [cond, c, width] = window_fields(r.window);
        w.write_record([cond, c, width, r.stat.clone(), format_value(r.exact), format_value(r.simulated), format_value(r.stderr), r.pass.to_string()])?;
    }
    for (win, ok) in &report.empty_windows {
        let [cond, c, width] = window_fields(Some(*win));
        let nan = format_value(f64::NAN);
        w.write_record([cond, c, width, "empty_window".into(), "0".into(), nan.clone(), nan, ok.to_string()])?;
    }
    w.flush()
}

/// Oracle check of a scenario against itself, guarded to small instances.
pub fn cmd_oracle_check(s: &Scenario, out: &Path) -> Result<OracleCheckReport, CommandError> {
    s.check()?;
    s.check_oracle_guard().map_err(|e| CommandError::Guard(e.to_string()))?;
    let cfg = s.config().map_err(ScenarioError::from)?;
    let mut report = oracle_check(&cfg, &cfg, &s.windows, s.pulses, s.seed, run_options(s), &bootstrap(s))?;
    fs::create_dir_all(out)?;
    let mut f = create_file(out, "oracle_check.csv")?;
    write_check_csv(&mut f, &s.digest(), &report)?;
    f.flush()?;
    Manifest::new("oracle-check", s, vec!["oracle_check.csv".into()]).write(out)?;
    report.files = vec![out.join("oracle_check.csv"), out.join("manifest.json")];
    Ok(report)
}
