use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use rmpc::controllers::{sig6, CertifiedParams, FeedbackGain, FeedbackMode};
use rmpc::sim::{run_closed_loop, SimLog, Strategy};

use crate::config::{parse_config, ConfigError, ExperimentConfig};
use crate::output::{write_csv, write_json, OutputError, RunSummary};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Read { path: PathBuf, source: io::Error },
    #[error("invalid configuration:\n{}", join_lines(.0))]
    Config(Vec<ConfigError>),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("certification failed for {strategy}: {failed}")]
    Certification { strategy: &'static str, failed: String },
    #[error(transparent)]
    Output(#[from] OutputError),
    #[error("{0}")]
    Runtime(rmpc::Error),
    #[error("{0}")]
    Io(#[from] io::Error),
}

fn join_lines(errs: &[ConfigError]) -> String {
    errs.iter().map(|e| format!("  {e}")).collect::<Vec<_>>().join("\n")
}

impl CliError {
    /// 1 certification failure, 2 bad input, 3 runtime abort.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Certification { .. } => 1,
            CliError::Read { .. } | CliError::Config(_) | CliError::Argument(_) => 2,
            CliError::Output(_) | CliError::Runtime(_) | CliError::Io(_) => 3,
        }
    }
}

impl From<rmpc::Error> for CliError {
    fn from(e: rmpc::Error) -> Self {
        CliError::Runtime(e)
    }
}

/// Command-line overrides applied on top of the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub force: bool,
    pub feedback: Option<FeedbackMode>,
    pub strategy: Option<Strategy>,
    pub no_timing: bool,
}

pub fn load_config(path: &Path, o: &Overrides) -> Result<ExperimentConfig, CliError> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Read { path: path.to_path_buf(), source })?;
    let mut cfg = parse_config(&text).map_err(CliError::Config)?;
    if let Some(seed) = o.seed {
        cfg.sim.disturbance.seed = seed;
    }
    if let Some(out) = &o.out {
        cfg.output_dir = out.clone();
    }
    if let Some(mode) = o.feedback {
        cfg.sim.feedback_mode = mode;
    }
    if let Some(s) = o.strategy {
        cfg.strategy = s;
    }
    cfg.sim.force = o.force;
    Ok(cfg)
}

fn print_certificate(w: &mut dyn Write, strategy: Strategy, c: &CertifiedParams) -> io::Result<()> {
    writeln!(w, "[{}]", strategy.name())?;
    writeln!(w, "lambda_r = {}", sig6(c.lambda_r))?;
    let optional = [
        ("lambda_tube", c.lambda_tube),
        ("diamond_level", c.diamond_level),
        ("tube_halfwidth_x", c.tube_halfwidth_x),
        ("tube_halfwidth_y", c.tube_halfwidth_y),
        ("r", c.r),
        ("epsilon", c.epsilon),
    ];
    for (name, v) in optional {
        if let Some(v) = v {
            writeln!(w, "{name} = {}", sig6(v))?;
        }
    }
    writeln!(w, "k_tilde = {}", sig6(c.k_tilde))?;
    for check in &c.checks {
        writeln!(w, "{check}")?;
    }
    Ok(())
}

fn certification_error(strategy: Strategy, c: &CertifiedParams) -> CliError {
    CliError::Certification {
        strategy: strategy.name(),
        failed: c.failures().map(|f| f.name.clone()).collect::<Vec<_>>().join(", "),
    }
}

/// Prints derived constants and checks. Both strategies are certified unless
/// one was selected explicitly.
pub fn certify(cfg: &ExperimentConfig, only: Option<Strategy>, w: &mut dyn Write) -> Result<(), CliError> {
    let strategies = match only {
        Some(s) => vec![s],
        None => vec![Strategy::Tube, Strategy::Nrmpc],
    };
    let mut first_failure = None;
    for (i, s) in strategies.into_iter().enumerate() {
        if i > 0 {
            writeln!(w)?;
        }
        let c = cfg.sim.certify(s);
        print_certificate(w, s, &c)?;
        if !c.all_passed() && first_failure.is_none() {
            first_failure = Some(certification_error(s, &c));
        }
    }
    first_failure.map_or(Ok(()), Err)
}

fn simulate(cfg: &ExperimentConfig, strategy: Strategy) -> Result<SimLog, CliError> {
    let c = cfg.sim.certify(strategy);
    if !c.all_passed() && !cfg.sim.force {
        return Err(certification_error(strategy, &c));
    }
    Ok(run_closed_loop(strategy, &cfg.sim)?)
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|source| OutputError::Io { path: dir.to_path_buf(), source }.into())
}

/// Runs the configured strategy and writes `<strategy>.csv` and
/// `<strategy>_summary.json`.
pub fn run(cfg: &ExperimentConfig, with_timing: bool, w: &mut dyn Write) -> Result<RunSummary, CliError> {
    let log = simulate(cfg, cfg.strategy)?;
    ensure_dir(&cfg.output_dir)?;
    let name = cfg.strategy.name();
    write_csv(&cfg.output_dir.join(format!("{name}.csv")), &log, with_timing)?;
    let summary = RunSummary::new(&log, cfg.terminal_window);
    write_json(&cfg.output_dir.join(format!("{name}_summary.json")), &summary)?;
    writeln!(
        w,
        "{name}: {} steps, max |p_fe| {}, terminal mean |p_rf| {}, feasible {:.1}%, fallbacks {}",
        summary.steps,
        sig6(summary.max_abs_pfe),
        sig6(summary.terminal_window_mean_prf),
        100.0 * summary.feasibility_rate,
        summary.fallback_count
    )?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StrategyComparison {
    pub cumulative_stage_cost: f64,
    pub cumulative_state_cost: f64,
    pub cumulative_input_cost: f64,
    pub early_window_state_cost: f64,
    pub terminal_window_state_cost: f64,
    pub terminal_window_mean_prf: f64,
    pub mean_solve_time_s: f64,
    pub feasibility_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub seed: u64,
    pub eta: f64,
    pub window_s: f64,
    pub tube: StrategyComparison,
    pub nrmpc: StrategyComparison,
}

fn compare_entry(log: &SimLog, window: f64) -> StrategyComparison {
    let s = log.summary(window);
    let t_end = log.rows.last().map_or(0.0, |r| r.t);
    StrategyComparison {
        cumulative_stage_cost: s.cumulative_stage_cost,
        cumulative_state_cost: s.cumulative_state_cost,
        cumulative_input_cost: s.cumulative_input_cost,
        early_window_state_cost: log.state_cost_between(0.0, window),
        terminal_window_state_cost: log.state_cost_between(t_end - window, t_end),
        terminal_window_mean_prf: s.terminal_window_mean_prf,
        mean_solve_time_s: s.mean_solve_time,
        feasibility_rate: s.feasibility_rate,
    }
}

/// Runs both strategies on the same seed and writes `tube.csv`,
/// `nrmpc.csv` and `compare.json`.
pub fn compare(cfg: &ExperimentConfig, with_timing: bool, w: &mut dyn Write) -> Result<Comparison, CliError> {
    let tube = simulate(cfg, Strategy::Tube)?;
    let nrmpc = simulate(cfg, Strategy::Nrmpc)?;
    ensure_dir(&cfg.output_dir)?;
    for log in [&tube, &nrmpc] {
        write_csv(&cfg.output_dir.join(format!("{}.csv", log.strategy.name())), log, with_timing)?;
    }
    let mut cmp = Comparison {
        seed: cfg.sim.disturbance.seed,
        eta: cfg.sim.disturbance.eta,
        window_s: cfg.terminal_window,
        tube: compare_entry(&tube, cfg.terminal_window),
        nrmpc: compare_entry(&nrmpc, cfg.terminal_window),
    };
    if !with_timing {
        cmp.tube.mean_solve_time_s = 0.0;
        cmp.nrmpc.mean_solve_time_s = 0.0;
    }
    write_json(&cfg.output_dir.join("compare.json"), &cmp)?;
    for (name, e) in [("tube", &cmp.tube), ("nrmpc", &cmp.nrmpc)] {
        writeln!(
            w,
            "{name}: state cost {} (early {}, terminal {}), input cost {}",
            sig6(e.cumulative_state_cost),
            sig6(e.early_window_state_cost),
            sig6(e.terminal_window_state_cost),
            sig6(e.cumulative_input_cost)
        )?;
    }
    Ok(cmp)
}

pub const DEFAULT_SWEEP_GAINS: [f64; 3] = [-1.0, -2.3, -4.0];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepEntry {
    pub gain: f64,
    pub csv: String,
    pub max_abs_pfe: f64,
    pub tube_halfwidth: f64,
    pub cumulative_input_cost: f64,
    pub terminal_window_mean_prf: f64,
}

/// File name for one sweep gain, for example `tube_k-2.3.csv`.
pub fn sweep_csv_name(gain: f64) -> String {
    format!("tube_k{gain}.csv")
}

/// Tube runs with `k_x = k_y = g` for each gain, one CSV each plus
/// `gain_sweep.json`.
pub fn gain_sweep(cfg: &ExperimentConfig, gains: &[f64], with_timing: bool, w: &mut dyn Write) -> Result<Vec<SweepEntry>, CliError> {
    if gains.is_empty() {
        return Err(CliError::Argument("gain list is empty".into()));
    }
    ensure_dir(&cfg.output_dir)?;
    let mut entries = Vec::with_capacity(gains.len());
    for &g in gains {
        let mut c = cfg.clone();
        c.sim.feedback = FeedbackGain::new(g, g).map_err(|e| CliError::Argument(e.to_string()))?;
        let log = simulate(&c, Strategy::Tube)?;
        let csv = sweep_csv_name(g);
        write_csv(&c.output_dir.join(&csv), &log, with_timing)?;
        let s = log.summary(c.terminal_window);
        let entry = SweepEntry {
            gain: g,
            csv,
            max_abs_pfe: s.max_abs_pfe_x.max(s.max_abs_pfe_y),
            tube_halfwidth: log.certified.tube_halfwidth_x.unwrap_or(f64::NAN),
            cumulative_input_cost: s.cumulative_input_cost,
            terminal_window_mean_prf: s.terminal_window_mean_prf,
        };
        writeln!(
            w,
            "k = {g}: max |p_fe| {} (bound {}), input cost {}",
            sig6(entry.max_abs_pfe),
            sig6(entry.tube_halfwidth),
            sig6(entry.cumulative_input_cost)
        )?;
        entries.push(entry);
    }
    write_json(&cfg.output_dir.join("gain_sweep.json"), &entries)?;
    Ok(entries)
}
