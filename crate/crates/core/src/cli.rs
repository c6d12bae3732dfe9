//! `buzzld` command-line front end.
//!
//! Every file written starts with `#` comment lines naming the tool
//! version, the command line and the seed (`-` when none applies).
//! Exit codes: 0 ok, 2 configuration or input error, 3 insufficient
//! data, 4 numerical failure, 5 infeasible query.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use crate::model::{self, build_generator, ChainState, ModelParams};
use crate::provision::{self, CapacityQuery, ProvisionAnswer, TimescaleQuery};
use crate::simulate::{self, SampledSeries};
use crate::spectrum_empirical::{self, block_sums, estimate_spectrum};
use crate::spectrum_theory::{self, legendre, q_grid, Spectrum, SpectrumKind};

#[derive(Debug, Parser)]
#[command(
    name = "buzzld",
    version,
    about = "Flash-crowd workload modelling with large deviations"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate the model; writes events.csv and series.csv.
    Simulate(SimulateArgs),
    /// Stationary distribution; writes the workload marginal.
    SteadyState(SteadyStateArgs),
    /// Theoretical spectrum from the tilted generator.
    SpectrumTheory(SpectrumTheoryArgs),
    /// Empirical spectra of a sampled series at one or more scales.
    SpectrumEmpirical(SpectrumEmpiricalArgs),
    /// Longest reconfiguration period for a deviation threshold.
    ProvisionTimescale(TimescaleArgs),
    /// Capacity safety margin for a loss target.
    ProvisionCapacity(CapacityArgs),
    /// Number of servers a link can host.
    ProvisionServers(ServersArgs),
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Model parameter file (`key = value` lines).
    #[arg(long, conflicts_with = "preset")]
    pub params: Option<PathBuf>,
    /// Built-in parameter set: `buzz` or `buzz-free`.
    #[arg(long)]
    pub preset: Option<String>,
}

impl ModelArgs {
    fn load(&self) -> Result<ModelParams> {
        match (&self.params, self.preset.as_deref()) {
            (Some(path), _) => ModelParams::from_file(path),
            (None, Some("buzz")) => Ok(ModelParams::buzz()),
            (None, Some("buzz-free")) => Ok(ModelParams::buzz_free()),
            (None, Some(other)) => Err(Error::InvalidInput(format!(
                "unknown preset `{other}` (expected buzz or buzz-free)"
            ))),
            (None, None) => Err(Error::InvalidInput(
                "one of --params or --preset is required".into(),
            )),
        }
    }
}

#[derive(Debug, Args)]
pub struct QGridArgs {
    #[arg(long, default_value_t = spectrum_theory::DEFAULT_Q_MIN, allow_hyphen_values = true)]
    pub q_min: f64,
    #[arg(long, default_value_t = spectrum_theory::DEFAULT_Q_MAX, allow_hyphen_values = true)]
    pub q_max: f64,
    #[arg(long, default_value_t = spectrum_theory::DEFAULT_Q_POINTS)]
    pub q_points: usize,
}

impl QGridArgs {
    fn grid(&self) -> Result<Vec<f64>> {
        q_grid(self.q_min, self.q_max, self.q_points)
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub horizon: f64,
    #[arg(long)]
    pub seed: u64,
    /// Sampling step of series.csv.
    #[arg(long, default_value_t = 1.0)]
    pub dt: f64,
    /// Output directory (created if missing).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SteadyStateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Marginal CSV `i,probability`.
    #[arg(long)]
    pub out: PathBuf,
    /// Also export the generator as `row_index,col_index,rate`.
    #[arg(long)]
    pub triplets: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SpectrumTheoryArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub q: QGridArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SpectrumEmpiricalArgs {
    /// Sampled series CSV `t,value`.
    #[arg(long)]
    pub series: PathBuf,
    /// Block length; repeat for several scales.
    #[arg(long, required = true)]
    pub tau: Vec<f64>,
    /// Leading time to discard.
    #[arg(long, default_value_t = 0.0)]
    pub skip: f64,
    #[command(flatten)]
    pub q: QGridArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SpectrumInput {
    /// Spectrum CSV: theoretical `q,lambda,alpha,f` or empirical
    /// `tau,q,alpha,epsilon,f`.
    #[arg(long)]
    pub spectrum: PathBuf,
    /// Almost-sure workload; defaults to the spectrum's apex.
    #[arg(long)]
    pub alpha_as: Option<f64>,
    /// Record file for the answer (header plus one CSV row).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TimescaleArgs {
    #[command(flatten)]
    pub input: SpectrumInput,
    #[arg(long)]
    pub alpha_star: f64,
    #[arg(long)]
    pub sigma_star: f64,
    /// Scales at which to evaluate a theoretical spectrum; empirical
    /// files supply their own.
    #[arg(long)]
    pub tau: Vec<f64>,
    #[arg(long)]
    pub tau_lo: Option<f64>,
    #[arg(long)]
    pub tau_hi: Option<f64>,
}

#[derive(Debug, Args)]
pub struct CapacityQueryArgs {
    #[arg(long)]
    pub p_loss: f64,
    #[arg(long, default_value_t = 0.0)]
    pub buffer: f64,
    /// Longest reservation period; unbounded when omitted.
    #[arg(long)]
    pub tau_max: Option<f64>,
    /// Scale to use from an empirical file holding several.
    #[arg(long)]
    pub tau: Option<f64>,
}

impl CapacityQueryArgs {
    fn query(&self) -> CapacityQuery {
        CapacityQuery {
            p_loss: self.p_loss,
            buffer_q: self.buffer,
            tau_max: self.tau_max.unwrap_or(f64::INFINITY),
        }
    }
}

#[derive(Debug, Args)]
pub struct CapacityArgs {
    #[command(flatten)]
    pub input: SpectrumInput,
    #[command(flatten)]
    pub query: CapacityQueryArgs,
}

#[derive(Debug, Args)]
pub struct ServersArgs {
    #[command(flatten)]
    pub input: SpectrumInput,
    #[command(flatten)]
    pub query: CapacityQueryArgs,
    #[arg(long)]
    pub link_capacity: f64,
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code. Reports go to `stdout`, errors to `stderr`.
pub fn run(args: &[String], stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = if e.use_stderr() {
                write!(stderr, "{}", e.render())
            } else {
                write!(stdout, "{}", e.render())
            };
            return code;
        }
    };
    let command_line = std::iter::once("buzzld")
        .chain(args.iter().skip(1).map(String::as_str))
        .collect::<Vec<_>>()
        .join(" ");
    match execute(&cli.command, &command_line, stdout) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}

/// Comment block opening every output file.
pub fn file_header(command_line: &str, seed: Option<u64>) -> String {
    let seed = seed.map_or_else(|| "-".to_string(), |s| s.to_string());
    format!(
        "# buzzld {}\n# command: {}\n# seed: {}\n",
        env!("CARGO_PKG_VERSION"),
        command_line.replace('\n', " "),
        seed
    )
}

pub fn execute(command: &Command, command_line: &str, stdout: &mut dyn Write) -> Result<()> {
    let mut report = String::new();
    match command {
        Command::Simulate(a) => cmd_simulate(a, command_line, &mut report)?,
        Command::SteadyState(a) => cmd_steady_state(a, command_line, &mut report)?,
        Command::SpectrumTheory(a) => cmd_spectrum_theory(a, command_line, &mut report)?,
        Command::SpectrumEmpirical(a) => cmd_spectrum_empirical(a, command_line, &mut report)?,
        Command::ProvisionTimescale(a) => {
            let ans = cmd_provision_timescale(a)?;
            finish_answer(&ans, a.input.out.as_deref(), command_line, &mut report)?
        }
        Command::ProvisionCapacity(a) => {
            let ans = cmd_provision_capacity(a)?;
            finish_answer(&ans, a.input.out.as_deref(), command_line, &mut report)?
        }
        Command::ProvisionServers(a) => {
            let ans = cmd_provision_servers(a)?;
            finish_answer(&ans, a.input.out.as_deref(), command_line, &mut report)?
        }
    }
    stdout
        .write_all(report.as_bytes())
        .map_err(|e| Error::io("<stdout>", e))
}

fn cmd_simulate(a: &SimulateArgs, command_line: &str, report: &mut String) -> Result<()> {
    let params = a.model.load()?;
    let gen = build_generator(&params)?;
    let trace = simulate::simulate(&gen, a.horizon, a.seed, ChainState::default())?;
    let series = simulate::sample(&trace, a.dt)?;
    fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    let header = file_header(command_line, Some(a.seed));
    trace.write_csv(&a.out.join("events.csv"), &header)?;
    series.write_csv(&a.out.join("series.csv"), &header)?;
    report.push_str(&format!(
        "duration={}\nevents={}\nmean_i={}\nbuzz_fraction={}\n",
        trace.horizon,
        trace.events.len(),
        trace.time_average(),
        trace.buzz_fraction()
    ));
    Ok(())
}

fn cmd_steady_state(a: &SteadyStateArgs, command_line: &str, report: &mut String) -> Result<()> {
    let params = a.model.load()?;
    let gen = build_generator(&params)?;
    let header = file_header(command_line, None);
    if let Some(path) = &a.triplets {
        gen.write_triplets(path, &header)?;
    }
    let ss = model::steady_state(&gen)?;
    model::write_marginal_csv(&a.out, &header, &model::marginal_i(&ss))?;
    report.push_str(&format!(
        "states={}\nmean_i={}\nbuzz_fraction={}\nresidual={:e}\niterations={}\n",
        gen.len(),
        ss.mean_i,
        ss.buzz_fraction(),
        ss.residual,
        ss.iterations
    ));
    Ok(())
}

fn cmd_spectrum_theory(
    a: &SpectrumTheoryArgs,
    command_line: &str,
    report: &mut String,
) -> Result<()> {
    let params = a.model.load()?;
    let gen = build_generator(&params)?;
    let curve = spectrum_theory::scgf(&gen, &a.q.grid()?)?;
    let spec = legendre(&curve)?;
    spectrum_theory::write_theory_csv(&a.out, &file_header(command_line, None), &curve)?;
    let (lo, hi) = spec.support();
    report.push_str(&format!(
        "alpha_as={}\nsupport_lo={lo}\nsupport_hi={hi}\n",
        spec.alpha_as
    ));
    Ok(())
}

fn cmd_spectrum_empirical(
    a: &SpectrumEmpiricalArgs,
    command_line: &str,
    report: &mut String,
) -> Result<()> {
    let series: SampledSeries = simulate::ingest_csv(&a.series)?.skip(a.skip);
    let grid = a.q.grid()?;
    let mut spectra = Vec::with_capacity(a.tau.len());
    for &tau in &a.tau {
        let est = estimate_spectrum(&block_sums(&series, tau)?, &grid)?;
        let spec = est.to_spectrum()?;
        let (lo, hi) = spec.support();
        report.push_str(&format!(
            "tau={tau} alpha_as={} support_lo={lo} support_hi={hi}\n",
            spec.alpha_as
        ));
        spectra.push(est);
    }
    spectrum_empirical::write_csv(&a.out, &file_header(command_line, None), &spectra)
}

/// A spectrum file, theoretical or per-scale empirical.
pub enum LoadedSpectrum {
    Theoretical(Spectrum),
    Empirical(Vec<(f64, Spectrum)>),
}

pub fn load_spectrum(path: &Path) -> Result<LoadedSpectrum> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let first = text
        .lines()
        .map(str::trim)
        .find(|l| !l.is_empty() && !l.starts_with('#'))
        .unwrap_or("");
    if first == spectrum_empirical::CSV_HEADER {
        spectrum_empirical::read_csv(path)?
            .iter()
            .map(|s| Ok((s.tau, s.to_spectrum()?)))
            .collect::<Result<Vec<_>>>()
            .map(LoadedSpectrum::Empirical)
    } else {
        let curve = spectrum_theory::read_theory_csv(path)?;
        Ok(LoadedSpectrum::Theoretical(legendre(&curve)?))
    }
}

fn single_spectrum(path: &Path, tau: Option<f64>) -> Result<Spectrum> {
    match (load_spectrum(path)?, tau) {
        (LoadedSpectrum::Theoretical(s), _) => Ok(s),
        (LoadedSpectrum::Empirical(mut v), None) if v.len() == 1 => Ok(v.remove(0).1),
        (LoadedSpectrum::Empirical(_), None) => Err(Error::InvalidInput(
            "file holds several scales; choose one with --tau".into(),
        )),
        (LoadedSpectrum::Empirical(v), Some(t)) => v
            .into_iter()
            .find(|(s, _)| *s == t)
            .map(|(_, s)| s)
            .ok_or_else(|| Error::InvalidInput(format!("no scale {t} in {}", path.display()))),
    }
}

fn spectrum_identity(path: &Path, spec: &Spectrum) -> Vec<(String, String)> {
    let kind = match spec.kind {
        SpectrumKind::Theoretical => "theoretical".to_string(),
        SpectrumKind::Empirical { tau } => format!("empirical:{tau}"),
    };
    vec![
        ("spectrum".into(), path.display().to_string()),
        ("spectrum_kind".into(), kind),
    ]
}

fn cmd_provision_timescale(a: &TimescaleArgs) -> Result<ProvisionAnswer> {
    let (scales, kind) = match load_spectrum(&a.input.spectrum)? {
        LoadedSpectrum::Empirical(v) => (v, "empirical"),
        LoadedSpectrum::Theoretical(s) => {
            if a.tau.is_empty() {
                return Err(Error::InvalidInput(
                    "a theoretical spectrum needs --tau scales".into(),
                ));
            }
            (
                a.tau.iter().map(|&t| (t, s.clone())).collect(),
                "theoretical",
            )
        }
    };
    let mut scales = scales;
    if let Some(alpha_as) = a.input.alpha_as {
        scales.iter_mut().for_each(|(_, s)| s.alpha_as = alpha_as);
    }
    let taus = scales.iter().map(|(t, _)| *t);
    let lo = a
        .tau_lo
        .unwrap_or_else(|| taus.clone().fold(f64::INFINITY, f64::min));
    let hi = a
        .tau_hi
        .unwrap_or_else(|| taus.fold(f64::NEG_INFINITY, f64::max));
    let query = TimescaleQuery {
        alpha_star: a.alpha_star,
        sigma_star: a.sigma_star,
        tau_range: (lo, hi),
    };
    let mut ans = provision::reactive_timescale(&scales, &query)?;
    ans.inputs
        .push(("spectrum".into(), a.input.spectrum.display().to_string()));
    ans.inputs.push(("spectrum_kind".into(), kind.into()));
    Ok(ans)
}

fn cmd_provision_capacity(a: &CapacityArgs) -> Result<ProvisionAnswer> {
    let spec = single_spectrum(&a.input.spectrum, a.query.tau)?;
    let alpha_as = a.input.alpha_as.unwrap_or(spec.alpha_as);
    let mut ans = provision::capacity_margin(&spec, alpha_as, &a.query.query())?;
    ans.inputs
        .extend(spectrum_identity(&a.input.spectrum, &spec));
    Ok(ans)
}

fn cmd_provision_servers(a: &ServersArgs) -> Result<ProvisionAnswer> {
    let spec = single_spectrum(&a.input.spectrum, a.query.tau)?;
    let alpha_as = a.input.alpha_as.unwrap_or(spec.alpha_as);
    let mut ans = provision::max_servers(&spec, alpha_as, a.link_capacity, &a.query.query())?;
    ans.inputs
        .extend(spectrum_identity(&a.input.spectrum, &spec));
    Ok(ans)
}

fn finish_answer(
    ans: &ProvisionAnswer,
    out: Option<&Path>,
    command_line: &str,
    report: &mut String,
) -> Result<()> {
    report.push_str(&ans.to_string());
    if let Some(path) = out {
        let mut text = file_header(command_line, None);
        text.push_str(&ans.csv_header());
        text.push('\n');
        text.push_str(&ans.csv_row());
        text.push('\n');
        simulate::write_file(path, &text)?;
    }
    Ok(())
}
