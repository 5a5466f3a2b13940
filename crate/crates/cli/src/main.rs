//! Command-line harness: fit a target unitary, run the layer sweep, probe
//! the bracket closure, drive the logic gate, or emit Haar samples. Every
//! artifact embeds the tool version, the resolved configuration and the
//! master seed; identical seeds give byte-identical outputs.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use interlace_core::factorization::ParameterTuple;
use interlace_core::gate::{
    chi_tilde_0, truth_table, GateMode, ThresholdBank, PHYSICAL_LENGTH_UM_PER_RAD,
};
use interlace_core::lattice::{LatticeKind, LatticeSpec};
use interlace_core::numerics::{matrix_from_json, matrix_to_json};
use interlace_core::optimizer::{layer_sweep, lm_fit, sweep_csv, FitConfig, FitReport, SweepResult};
use interlace_core::sampling::{haar_unitary, logic_gate_target, RngSeed};
use interlace_core::universality::lie_closure_dimension;

const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Parser)]
#[command(name = "interlace", version, about = "Interlaced unitary factorization toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the factorization to a target unitary from a matrix JSON file.
    Fit(FitCmd),
    /// Run the layer sweep over Haar targets and emit CSV plus a summary.
    Sweep(SweepCmd),
    /// Probe the bracket-closure dimension of a lattice.
    ProbeLie(ProbeLieCmd),
    /// Drive the three-port logic gate and print its truth table.
    Gate(GateCmd),
    /// Sample Haar-random unitaries into matrix JSON files.
    Haar(HaarCmd),
}

#[derive(Args, Clone)]
struct FitFlags {
    /// Error-norm acceptance threshold delta.
    #[arg(long)]
    tolerance: Option<f64>,
    /// Iteration budget per restart.
    #[arg(long)]
    max_iterations: Option<usize>,
    #[arg(long)]
    initial_damping: Option<f64>,
    #[arg(long)]
    damping_up: Option<f64>,
    #[arg(long)]
    damping_down: Option<f64>,
    /// Independent random initializations per fit.
    #[arg(long)]
    restarts: Option<usize>,
    /// Warn-and-continue when the target misses unitarity.
    #[arg(long)]
    allow_nonunitary: bool,
}

impl FitFlags {
    fn apply(&self, mut config: FitConfig) -> FitConfig {
        if let Some(v) = self.tolerance {
            config.tolerance = v;
        }
        if let Some(v) = self.max_iterations {
            config.max_iterations = v;
        }
        if let Some(v) = self.initial_damping {
            config.initial_damping = v;
        }
        if let Some(v) = self.damping_up {
            config.damping_up = v;
        }
        if let Some(v) = self.damping_down {
            config.damping_down = v;
        }
        if let Some(v) = self.restarts {
            config.restarts = v;
        }
        if self.allow_nonunitary {
            config.allow_nonunitary_target = true;
        }
        config
    }
}

#[derive(Args)]
struct FitCmd {
    /// Target unitary, matrix JSON file.
    #[arg(long)]
    target: PathBuf,
    /// Lattice: "jx", "homogeneous", or a lattice spec JSON file.
    #[arg(long, default_value = "jx")]
    lattice: String,
    /// Number of phase layers M.
    #[arg(long, short = 'm')]
    layers: usize,
    #[command(flatten)]
    fit: FitFlags,
    #[arg(long, env = "INTERLACE_SEED", default_value_t = 0)]
    seed: u64,
    /// Report file; stdout when omitted.
    #[arg(long, short = 'o')]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct SweepCmd {
    /// JSON config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Port counts, comma separated.
    #[arg(long, value_delimiter = ',')]
    ns: Option<Vec<usize>>,
    /// Layer offsets relative to N, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    m_offsets: Option<Vec<i64>>,
    /// Lattice kinds, comma separated.
    #[arg(long, value_delimiter = ',')]
    lattices: Option<Vec<String>>,
    /// Targets per configuration (N_T).
    #[arg(long)]
    trials: Option<usize>,
    #[command(flatten)]
    fit: FitFlags,
    #[arg(long, env = "INTERLACE_SEED")]
    seed: Option<u64>,
    /// Worker threads for the trial loop; 0 uses all cores.
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    #[arg(long, default_value = "sweep.csv")]
    csv: PathBuf,
    #[arg(long, default_value = "sweep_summary.json")]
    summary: PathBuf,
}

#[derive(Args)]
struct ProbeLieCmd {
    /// Lattice spec JSON file, or "jx:N" / "homogeneous:N".
    #[arg(long)]
    lattice: String,
    #[arg(long, default_value_t = 6)]
    max_depth: usize,
    /// Report file; stdout when omitted.
    #[arg(long, short = 'o')]
    output: Option<PathBuf>,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum UnitChoice {
    /// The exact orthonormal-basis target.
    Exact,
    /// A freshly fitted N=3, M=3 Jx factorization of that target.
    Fitted,
}

#[derive(Args)]
struct GateCmd {
    #[arg(long, value_enum)]
    mode: CliGateMode,
    /// Readout thresholds Th1,Th2,Th3.
    #[arg(long, value_delimiter = ',', default_values_t = [0.075, 0.075, 0.8])]
    thresholds: Vec<f64>,
    #[arg(long, value_enum, default_value_t = UnitChoice::Exact)]
    unit: UnitChoice,
    #[command(flatten)]
    fit: FitFlags,
    #[arg(long, env = "INTERLACE_SEED", default_value_t = 0)]
    seed: u64,
    /// Also write the table as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum CliGateMode {
    #[value(name = "control_off")]
    ControlOff,
    #[value(name = "control_on")]
    ControlOn,
}

#[derive(Args)]
struct HaarCmd {
    #[arg(long, short = 'n')]
    n: usize,
    #[arg(long, default_value_t = 1)]
    count: usize,
    #[arg(long, env = "INTERLACE_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = ".")]
    output_dir: PathBuf,
    #[arg(long, default_value = "haar")]
    prefix: String,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Fit(cmd) => run_fit(cmd),
        Command::Sweep(cmd) => run_sweep(cmd),
        Command::ProbeLie(cmd) => run_probe_lie(cmd),
        Command::Gate(cmd) => run_gate(cmd),
        Command::Haar(cmd) => run_haar(cmd),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn write_output(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => {
            fs::write(p, text).with_context(|| format!("cannot write {}", p.display()))?;
            eprintln!("wrote {}", p.display());
        }
        None => println!("{text}"),
    }
    Ok(())
}

/// Lattice from "jx"/"homogeneous" (size from the target) or a spec file.
fn lattice_for_fit(arg: &str, n: usize) -> Result<LatticeSpec> {
    match arg {
        "jx" => Ok(LatticeSpec::jx(n)),
        "homogeneous" => Ok(LatticeSpec::homogeneous(n)),
        path => {
            let spec: LatticeSpec = serde_json::from_str(&read_to_string(Path::new(path))?)
                .with_context(|| format!("invalid lattice spec {path}"))?;
            if spec.size() != n {
                bail!("lattice size {} does not match target size {n}", spec.size());
            }
            Ok(spec)
        }
    }
}

#[derive(Serialize)]
struct FitArtifact<'a> {
    version: &'static str,
    seed: u64,
    config: &'a FitConfig,
    layers: usize,
    report: &'a FitReport,
    canonical_params: ParameterTuple,
    /// L_j = (280/π)·ℓ_j on the canonical lengths; reporting metadata only.
    physical_lengths_um: Vec<f64>,
}

fn run_fit(cmd: FitCmd) -> Result<()> {
    let target = matrix_from_json(&read_to_string(&cmd.target)?)
        .with_context(|| format!("invalid target matrix {}", cmd.target.display()))?;
    let lattice = lattice_for_fit(&cmd.lattice, target.nrows())?;
    let config = cmd.fit.apply(FitConfig::default());
    let report = lm_fit(&target, &lattice, cmd.layers, &config, RngSeed(cmd.seed))?;

    let canonical_params = report.best_params.canonicalized(&lattice);
    let physical_lengths_um = canonical_params
        .lengths()
        .iter()
        .map(|l| l * PHYSICAL_LENGTH_UM_PER_RAD)
        .collect();
    let artifact = FitArtifact {
        version: VERSION,
        seed: cmd.seed,
        config: &config,
        layers: cmd.layers,
        report: &report,
        canonical_params,
        physical_lengths_um,
    };
    write_output(cmd.output.as_deref(), &serde_json::to_string_pretty(&artifact)?)?;
    eprintln!(
        "fit {}: final L = {:.3e} after {} iterations",
        if report.converged { "converged" } else { "did not converge" },
        report.final_l,
        report.iterations_used,
    );
    Ok(())
}

/// Sweep settings from file and flags, flags winning.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepSettings {
    #[serde(default = "default_ns")]
    ns: Vec<usize>,
    #[serde(default = "default_offsets")]
    m_offsets: Vec<i64>,
    #[serde(default = "default_lattices")]
    lattices: Vec<LatticeKind>,
    #[serde(default = "default_trials")]
    trials: usize,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    fit: Option<FitConfigPatch>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FitConfigPatch {
    tolerance: Option<f64>,
    max_iterations: Option<usize>,
    initial_damping: Option<f64>,
    damping_up: Option<f64>,
    damping_down: Option<f64>,
    restarts: Option<usize>,
}

fn default_ns() -> Vec<usize> {
    vec![4, 6, 8]
}
fn default_offsets() -> Vec<i64> {
    vec![-1, 0, 1]
}
fn default_lattices() -> Vec<LatticeKind> {
    vec![LatticeKind::Jx, LatticeKind::Homogeneous]
}
fn default_trials() -> usize {
    100
}

impl Default for SweepSettings {
    fn default() -> Self {
        SweepSettings {
            ns: default_ns(),
            m_offsets: default_offsets(),
            lattices: default_lattices(),
            trials: default_trials(),
            seed: 0,
            fit: None,
        }
    }
}

#[derive(Serialize)]
struct SweepSummary<'a> {
    version: &'static str,
    seed: u64,
    settings: &'a SweepSettings,
    fit_config: &'a FitConfig,
    results: Vec<SummaryRow>,
}

#[derive(Serialize)]
struct SummaryRow {
    lattice: &'static str,
    n: usize,
    m: usize,
    trials: usize,
    converged: usize,
    log10_l_q25: f64,
    log10_l_median: f64,
    log10_l_q75: f64,
}

fn summary_row(r: &SweepResult) -> SummaryRow {
    SummaryRow {
        lattice: r.lattice.name(),
        n: r.n,
        m: r.m,
        trials: r.trials.len(),
        converged: r.converged_count(),
        log10_l_q25: r.log10_l_q25,
        log10_l_median: r.log10_l_median,
        log10_l_q75: r.log10_l_q75,
    }
}

fn run_sweep(cmd: SweepCmd) -> Result<()> {
    let mut settings = match &cmd.config {
        Some(path) => serde_json::from_str(&read_to_string(path)?)
            .with_context(|| format!("invalid sweep config {}", path.display()))?,
        None => SweepSettings::default(),
    };
    if let Some(ns) = cmd.ns {
        settings.ns = ns;
    }
    if let Some(offsets) = cmd.m_offsets {
        settings.m_offsets = offsets;
    }
    if let Some(kinds) = cmd.lattices {
        settings.lattices = kinds
            .iter()
            .map(|k| k.parse::<LatticeKind>().map_err(|e| anyhow!("{e}")))
            .collect::<Result<_>>()?;
    }
    if let Some(trials) = cmd.trials {
        settings.trials = trials;
    }
    if let Some(seed) = cmd.seed {
        settings.seed = seed;
    }

    let mut config = FitConfig::default();
    if let Some(patch) = &settings.fit {
        if let Some(v) = patch.tolerance {
            config.tolerance = v;
        }
        if let Some(v) = patch.max_iterations {
            config.max_iterations = v;
        }
        if let Some(v) = patch.initial_damping {
            config.initial_damping = v;
        }
        if let Some(v) = patch.damping_up {
            config.damping_up = v;
        }
        if let Some(v) = patch.damping_down {
            config.damping_down = v;
        }
        if let Some(v) = patch.restarts {
            config.restarts = v;
        }
    }
    let config = cmd.fit.apply(config);
    config.validate()?;

    configure_jobs(cmd.jobs)?;

    let results = layer_sweep(
        &settings.ns,
        &settings.m_offsets,
        &settings.lattices,
        settings.trials,
        &config,
        RngSeed(settings.seed),
    )?;

    // Provenance rides as comment lines above the CSV header.
    let mut csv = String::new();
    csv.push_str(&format!("# interlace {VERSION}\n"));
    csv.push_str(&format!("# seed: {}\n", settings.seed));
    csv.push_str(&format!("# config: {}\n", serde_json::to_string(&settings)?));
    csv.push_str(&sweep_csv(&results));
    fs::write(&cmd.csv, &csv).with_context(|| format!("cannot write {}", cmd.csv.display()))?;

    let summary = SweepSummary {
        version: VERSION,
        seed: settings.seed,
        settings: &settings,
        fit_config: &config,
        results: results.iter().map(summary_row).collect(),
    };
    fs::write(&cmd.summary, serde_json::to_string_pretty(&summary)?)
        .with_context(|| format!("cannot write {}", cmd.summary.display()))?;

    eprintln!(
        "swept {} configurations x {} trials -> {} and {}",
        results.len(),
        settings.trials,
        cmd.csv.display(),
        cmd.summary.display(),
    );
    Ok(())
}

#[cfg(feature = "parallel")]
fn configure_jobs(jobs: usize) -> Result<()> {
    if jobs > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .context("cannot size the worker pool")?;
    }
    Ok(())
}

#[cfg(not(feature = "parallel"))]
fn configure_jobs(jobs: usize) -> Result<()> {
    if jobs > 1 {
        eprintln!("note: built without the 'parallel' feature; running single-threaded");
    }
    Ok(())
}

fn parse_probe_lattice(arg: &str) -> Result<LatticeSpec> {
    if let Some((kind, n)) = arg.split_once(':') {
        let n: usize = n.parse().with_context(|| format!("bad lattice size in {arg:?}"))?;
        let kind: LatticeKind = kind.parse().map_err(|e| anyhow!("{e}"))?;
        return LatticeSpec::named(kind, n).map_err(|e| anyhow!("{e}"));
    }
    serde_json::from_str(&read_to_string(Path::new(arg))?)
        .with_context(|| format!("invalid lattice spec {arg}"))
}

#[derive(Serialize)]
struct ProbeArtifact<'a> {
    version: &'static str,
    lattice: &'a LatticeSpec,
    max_depth: usize,
    report: interlace_core::universality::LieBasisReport,
}

fn run_probe_lie(cmd: ProbeLieCmd) -> Result<()> {
    let lattice = parse_probe_lattice(&cmd.lattice)?;
    let report = lie_closure_dimension(&lattice.hamiltonian(), cmd.max_depth)?;
    let artifact = ProbeArtifact {
        version: VERSION,
        lattice: &lattice,
        max_depth: cmd.max_depth,
        report,
    };
    write_output(cmd.output.as_deref(), &serde_json::to_string_pretty(&artifact)?)
}

#[derive(Serialize)]
struct GateArtifact<'a> {
    version: &'static str,
    seed: u64,
    unit: &'static str,
    thresholds: &'a ThresholdBank,
    /// χ̃₀ = 2·arctan(√2), the drive used in the one-hot rows.
    chi_tilde_0: f64,
    fit_final_l: Option<f64>,
    table: &'a interlace_core::gate::TruthTable,
}

fn run_gate(cmd: GateCmd) -> Result<()> {
    if cmd.thresholds.len() != 3 {
        bail!("--thresholds needs exactly three values, got {}", cmd.thresholds.len());
    }
    let bank = ThresholdBank::new(cmd.thresholds[0], cmd.thresholds[1], cmd.thresholds[2])?;
    let mode = match cmd.mode {
        CliGateMode::ControlOff => GateMode::ControlOff,
        CliGateMode::ControlOn => GateMode::ControlOn,
    };

    let mut fit_final_l = None;
    let unit = match cmd.unit {
        UnitChoice::Exact => logic_gate_target(),
        UnitChoice::Fitted => {
            let config = cmd.fit.apply(FitConfig::default());
            let report = lm_fit(
                &logic_gate_target(),
                &LatticeSpec::jx(3),
                3,
                &config,
                RngSeed(cmd.seed),
            )?;
            if !report.converged {
                bail!("gate fit did not converge (final L = {:.3e})", report.final_l);
            }
            fit_final_l = Some(report.final_l);
            interlace_core::factorization::FactorizationModel::new(
                report.lattice.clone(),
                report.best_params.clone(),
            )?
            .evaluate()
        }
    };

    let table = truth_table(mode, &bank, &unit)?;
    print!("{}", table.render_text());
    if let Some(path) = &cmd.json {
        let artifact = GateArtifact {
            version: VERSION,
            seed: cmd.seed,
            unit: match cmd.unit {
                UnitChoice::Exact => "exact",
                UnitChoice::Fitted => "fitted",
            },
            thresholds: &bank,
            chi_tilde_0: chi_tilde_0(),
            fit_final_l,
            table: &table,
        };
        fs::write(path, serde_json::to_string_pretty(&artifact)?)
            .with_context(|| format!("cannot write {}", path.display()))?;
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

#[derive(Serialize)]
struct HaarManifest<'a> {
    version: &'static str,
    seed: u64,
    n: usize,
    count: usize,
    files: &'a [String],
}

fn run_haar(cmd: HaarCmd) -> Result<()> {
    if cmd.n < 1 {
        bail!("--n must be at least 1");
    }
    fs::create_dir_all(&cmd.output_dir)
        .with_context(|| format!("cannot create {}", cmd.output_dir.display()))?;
    let mut files = Vec::with_capacity(cmd.count);
    for k in 0..cmd.count {
        let u = haar_unitary(cmd.n, RngSeed(cmd.seed).derive(k as u64));
        let name = format!("{}_{k:04}.json", cmd.prefix);
        fs::write(cmd.output_dir.join(&name), matrix_to_json(&u))
            .with_context(|| format!("cannot write {name}"))?;
        files.push(name);
    }
    let manifest = HaarManifest {
        version: VERSION,
        seed: cmd.seed,
        n: cmd.n,
        count: cmd.count,
        files: &files,
    };
    fs::write(
        cmd.output_dir.join(format!("{}_manifest.json", cmd.prefix)),
        serde_json::to_string_pretty(&manifest)?,
    )
    .context("cannot write manifest")?;
    eprintln!("wrote {} matrices to {}", cmd.count, cmd.output_dir.display());
    Ok(())
}
