use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use rmpc::controllers::CertifiedParams;
use rmpc::sim::{LogRow, SimLog, SimSummary};

#[derive(Debug, thiserror::Error)]
pub enum OutputError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
}

pub const CSV_COLUMNS: [&str; 23] = [
    "t",
    "x_f",
    "y_f",
    "theta_f",
    "x_r",
    "y_r",
    "theta_r",
    "x_rf",
    "y_rf",
    "theta_rf",
    "v_f",
    "omega_f",
    "input_index",
    "pfe_x",
    "pfe_y",
    "J_opt",
    "stage_cost",
    "state_cost",
    "input_cost",
    "solver_iters",
    "solve_time_s",
    "feasible",
    "fallback",
];

/// One CSV record, field for field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub t: f64,
    pub x_f: f64,
    pub y_f: f64,
    pub theta_f: f64,
    pub x_r: f64,
    pub y_r: f64,
    pub theta_r: f64,
    pub x_rf: f64,
    pub y_rf: f64,
    pub theta_rf: f64,
    pub v_f: f64,
    pub omega_f: f64,
    pub input_index: f64,
    pub pfe_x: f64,
    pub pfe_y: f64,
    #[serde(rename = "J_opt")]
    pub j_opt: f64,
    pub stage_cost: f64,
    pub state_cost: f64,
    pub input_cost: f64,
    pub solver_iters: usize,
    pub solve_time_s: f64,
    pub feasible: bool,
    pub fallback: bool,
}

impl CsvRow {
    pub fn from_log(r: &LogRow, with_timing: bool) -> Self {
        CsvRow {
            t: r.t,
            x_f: r.follower.x,
            y_f: r.follower.y,
            theta_f: r.follower.theta,
            x_r: r.reference.x,
            y_r: r.reference.y,
            theta_r: r.reference.theta,
            x_rf: r.error.x_rf,
            y_rf: r.error.y_rf,
            theta_rf: r.error.theta_rf,
            v_f: r.input.v,
            omega_f: r.input.omega,
            input_index: r.input_index,
            pfe_x: r.pfe_x,
            pfe_y: r.pfe_y,
            j_opt: r.j_opt,
            stage_cost: r.stage_cost,
            state_cost: r.state_cost,
            input_cost: r.input_cost,
            solver_iters: r.solver_iters,
            solve_time_s: if with_timing { r.solve_time } else { 0.0 },
            feasible: r.feasible,
            fallback: r.fallback,
        }
    }

    fn fields(&self) -> Vec<String> {
        let floats = [
            self.t,
            self.x_f,
            self.y_f,
            self.theta_f,
            self.x_r,
            self.y_r,
            self.theta_r,
            self.x_rf,
            self.y_rf,
            self.theta_rf,
            self.v_f,
            self.omega_f,
            self.input_index,
            self.pfe_x,
            self.pfe_y,
            self.j_opt,
            self.stage_cost,
            self.state_cost,
            self.input_cost,
        ];
        // `{}` on f64 is the shortest string that parses back to the same value
        let mut out: Vec<String> = floats.iter().map(|v| format!("{v}")).collect();
        out.push(self.solver_iters.to_string());
        out.push(format!("{}", self.solve_time_s));
        out.push(self.feasible.to_string());
        out.push(self.fallback.to_string());
        out
    }
}

pub fn write_csv(path: &Path, log: &SimLog, with_timing: bool) -> Result<(), OutputError> {
    let csv_err = |source| OutputError::Csv { path: path.to_path_buf(), source };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(CSV_COLUMNS).map_err(csv_err)?;
    for r in &log.rows {
        w.write_record(CsvRow::from_log(r, with_timing).fields()).map_err(csv_err)?;
    }
    w.flush().map_err(|source| OutputError::Io { path: path.to_path_buf(), source })
}

pub fn read_csv(path: &Path) -> Result<Vec<CsvRow>, OutputError> {
    let csv_err = |source| OutputError::Csv { path: path.to_path_buf(), source };
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    r.deserialize().collect::<Result<_, _>>().map_err(csv_err)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), OutputError> {
    let io_err = |source| OutputError::Io { path: path.to_path_buf(), source };
    let mut f = File::create(path).map_err(io_err)?;
    serde_json::to_writer_pretty(&mut f, value).map_err(|source| OutputError::Json { path: path.to_path_buf(), source })?;
    writeln!(f).map_err(io_err)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CertificationJson {
    pub lambda_r: f64,
    pub lambda_tube: Option<f64>,
    pub diamond_level: Option<f64>,
    pub tube_halfwidth_x: Option<f64>,
    pub tube_halfwidth_y: Option<f64>,
    pub r: Option<f64>,
    pub epsilon: Option<f64>,
    pub k_tilde: f64,
    pub all_passed: bool,
    pub failed_checks: Vec<String>,
}

impl From<&CertifiedParams> for CertificationJson {
    fn from(c: &CertifiedParams) -> Self {
        CertificationJson {
            lambda_r: c.lambda_r,
            lambda_tube: c.lambda_tube,
            diamond_level: c.diamond_level,
            tube_halfwidth_x: c.tube_halfwidth_x,
            tube_halfwidth_y: c.tube_halfwidth_y,
            r: c.r,
            epsilon: c.epsilon,
            k_tilde: c.k_tilde,
            all_passed: c.all_passed(),
            failed_checks: c.failures().map(|f| f.name.clone()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub strategy: String,
    pub seed: u64,
    pub eta: f64,
    /// Set when the run went ahead despite failed certification.
    pub forced: bool,
    pub steps: usize,
    pub max_abs_pfe: f64,
    pub max_abs_pfe_x: f64,
    pub max_abs_pfe_y: f64,
    pub terminal_window_s: f64,
    pub terminal_window_mean_prf: f64,
    pub initial_prf: f64,
    pub min_input_index: f64,
    pub max_input_index: f64,
    pub feasibility_rate: f64,
    pub fallback_count: usize,
    pub max_warm_start_violation: f64,
    pub cumulative_stage_cost: f64,
    pub cumulative_state_cost: f64,
    pub cumulative_input_cost: f64,
    pub mean_solve_time_s: f64,
    pub max_prediction_deviation: f64,
    pub total_runtime_s: f64,
    pub certification: CertificationJson,
}

impl RunSummary {
    pub fn new(log: &SimLog, terminal_window: f64) -> Self {
        let s: SimSummary = log.summary(terminal_window);
        RunSummary {
            strategy: log.strategy.name().to_string(),
            seed: log.seed,
            eta: log.eta,
            forced: log.forced,
            steps: log.steps.len(),
            max_abs_pfe: s.max_abs_pfe_x.max(s.max_abs_pfe_y),
            max_abs_pfe_x: s.max_abs_pfe_x,
            max_abs_pfe_y: s.max_abs_pfe_y,
            terminal_window_s: terminal_window,
            terminal_window_mean_prf: s.terminal_window_mean_prf,
            initial_prf: s.initial_prf,
            min_input_index: s.min_input_index,
            max_input_index: s.max_input_index,
            feasibility_rate: s.feasibility_rate,
            fallback_count: s.fallback_count,
            max_warm_start_violation: s.max_warm_start_violation,
            cumulative_stage_cost: s.cumulative_stage_cost,
            cumulative_state_cost: s.cumulative_state_cost,
            cumulative_input_cost: s.cumulative_input_cost,
            mean_solve_time_s: s.mean_solve_time,
            max_prediction_deviation: s.max_prediction_deviation,
            total_runtime_s: s.runtime,
            certification: CertificationJson::from(&log.certified),
        }
    }
}
