//! Line-oriented experiment configuration: `[section]` headers followed by
//! `key = value` lines. `#` starts a comment. All quantities are SI.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use rmpc::controllers::{FeedbackGain, FeedbackMode};
use rmpc::kinematics::{Pose, RobotParams};
use rmpc::ocp::{HorizonConfig, SolverOptions, TerminalGains, Weights};
use rmpc::sim::{DisturbanceMode, DisturbanceModel, ReferenceSpec, SimConfig, Strategy};

/// Bundled configuration reproducing the E-puck experiment.
pub const EPUCK_CIRCLE: &str = include_str!("../configs/epuck_circle.cfg");

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    /// 1-based line number, `None` for keys that are missing altogether.
    pub line: Option<usize>,
    pub key: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}: {}", self.key, self.message),
            None => write!(f, "{}: {}", self.key, self.message),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Float,
    Angle,
    Int,
    Word,
}

impl Kind {
    fn describe(self) -> &'static str {
        match self {
            Kind::Float => "a number",
            Kind::Angle => "an angle in rad (number or expression like -pi/2)",
            Kind::Int => "a non-negative integer",
            Kind::Word => "a word",
        }
    }
}

struct KeyDef {
    section: &'static str,
    key: &'static str,
    kind: Kind,
    required: bool,
    help: &'static str,
}

const fn req(section: &'static str, key: &'static str, kind: Kind, help: &'static str) -> KeyDef {
    KeyDef { section, key, kind, required: true, help }
}

const fn opt(section: &'static str, key: &'static str, kind: Kind, help: &'static str) -> KeyDef {
    KeyDef { section, key, kind, required: false, help }
}

const KEYS: &[KeyDef] = &[
    req("robot", "a", Kind::Float, "maximum wheel speed, m/s"),
    req("robot", "rho", Kind::Float, "head-point offset, m"),
    req("weights", "q1", Kind::Float, "state weight on x_rf"),
    req("weights", "q2", Kind::Float, "state weight on y_rf"),
    req("weights", "p1", Kind::Float, "input weight on the linear channel"),
    req("weights", "p2", Kind::Float, "input weight on the angular channel"),
    req("weights", "k1_terminal", Kind::Float, "terminal controller gain, 1/s"),
    req("weights", "k2_terminal", Kind::Float, "terminal controller gain, 1/s"),
    req("horizon", "T", Kind::Float, "prediction horizon, s"),
    req("horizon", "delta", Kind::Float, "sampling period, s"),
    opt("horizon", "substeps", Kind::Int, "RK4 substeps per sampling period (default 5)"),
    opt("horizon", "max_outer", Kind::Int, "solver outer iteration cap (default 30)"),
    opt("horizon", "max_inner", Kind::Int, "solver inner iteration cap (default 200)"),
    opt("horizon", "kkt_tol", Kind::Float, "solver stationarity tolerance (default 1e-6)"),
    opt("horizon", "feas_tol", Kind::Float, "solver feasibility tolerance (default 1e-6)"),
    req("tube", "k_x", Kind::Float, "ancillary feedback gain, 1/s (negative)"),
    req("tube", "k_y", Kind::Float, "ancillary feedback gain, 1/s (negative)"),
    opt("tube", "feedback", Kind::Word, "continuous | zoh (default continuous)"),
    req("nrmpc", "epsilon", Kind::Float, "terminal ball radius, m"),
    req("reference", "v_r", Kind::Float, "reference linear velocity, m/s"),
    req("reference", "omega_r", Kind::Float, "reference angular velocity, rad/s"),
    req("reference", "x0", Kind::Float, "reference initial x, m"),
    req("reference", "y0", Kind::Float, "reference initial y, m"),
    req("reference", "theta0", Kind::Angle, "reference initial heading, rad"),
    req("sim", "follower_x", Kind::Float, "follower head initial x, m"),
    req("sim", "follower_y", Kind::Float, "follower head initial y, m"),
    req("sim", "follower_theta", Kind::Angle, "follower initial heading, rad"),
    req("sim", "eta", Kind::Float, "disturbance bound, m/s"),
    opt("sim", "disturbance", Kind::Word, "random | worst-case | zero (default random)"),
    opt("sim", "disturbance_direction", Kind::Angle, "worst-case direction, rad (default 0)"),
    req("sim", "duration", Kind::Float, "simulated time, s"),
    opt("sim", "seed", Kind::Int, "disturbance seed (default 0)"),
    opt("sim", "strategy", Kind::Word, "tube | nrmpc (default tube)"),
    opt("sim", "terminal_window", Kind::Float, "length of the summary tail window, s (default 10)"),
    opt("output", "dir", Kind::Word, "output directory (default out)"),
];

/// Fully validated experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub sim: SimConfig,
    pub strategy: Strategy,
    pub terminal_window: f64,
    pub output_dir: PathBuf,
}

#[derive(Debug, Clone)]
enum Value {
    Float(f64),
    Int(u64),
    Word(String),
}

struct Entry {
    line: usize,
    value: Value,
}

/// `[-][c*]pi[/d]` or a plain number.
fn parse_angle(text: &str) -> Option<f64> {
    if let Ok(v) = text.parse::<f64>() {
        return v.is_finite().then_some(v);
    }
    let compact: String = text.chars().filter(|c| !c.is_whitespace()).collect();
    let (sign, body) = match compact.strip_prefix('-') {
        Some(rest) => (-1.0, rest),
        None => (1.0, compact.as_str()),
    };
    let (num, den) = match body.split_once('/') {
        Some((n, d)) => (n, d.parse::<f64>().ok().filter(|d| *d != 0.0)?),
        None => (body, 1.0),
    };
    let coef = if num == "pi" {
        1.0
    } else {
        num.strip_suffix("*pi")?.parse::<f64>().ok()?
    };
    Some(sign * coef * std::f64::consts::PI / den)
}

fn parse_value(kind: Kind, text: &str) -> Option<Value> {
    match kind {
        Kind::Float => text.parse::<f64>().ok().filter(|v| v.is_finite()).map(Value::Float),
        Kind::Angle => parse_angle(text).map(Value::Float),
        Kind::Int => text.parse::<u64>().ok().map(Value::Int),
        Kind::Word => (!text.is_empty()).then(|| Value::Word(text.to_string())),
    }
}

struct Table {
    entries: BTreeMap<(&'static str, &'static str), Entry>,
}

impl Table {
    fn line(&self, section: &'static str, key: &'static str) -> Option<usize> {
        self.entries.get(&(section, key)).map(|e| e.line)
    }

    fn float(&self, section: &'static str, key: &'static str) -> Option<f64> {
        match self.entries.get(&(section, key))?.value {
            Value::Float(v) => Some(v),
            _ => None,
        }
    }

    fn int(&self, section: &'static str, key: &'static str) -> Option<u64> {
        match self.entries.get(&(section, key))?.value {
            Value::Int(v) => Some(v),
            _ => None,
        }
    }

    fn word(&self, section: &'static str, key: &'static str) -> Option<&str> {
        match &self.entries.get(&(section, key))?.value {
            Value::Word(v) => Some(v),
            _ => None,
        }
    }
}

fn tokenize(text: &str, errors: &mut Vec<ConfigError>) -> Table {
    let mut entries = BTreeMap::new();
    let mut section: Option<String> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(name) = content.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
            let name = name.trim();
            if KEYS.iter().any(|k| k.section == name) {
                section = Some(name.to_string());
            } else {
                errors.push(ConfigError {
                    line: Some(line),
                    key: format!("[{name}]"),
                    message: "unknown section".into(),
                });
                section = None;
            }
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            errors.push(ConfigError {
                line: Some(line),
                key: content.to_string(),
                message: "expected `key = value`".into(),
            });
            continue;
        };
        let (key, value) = (key.trim(), value.trim());
        let Some(sec) = section.as_deref() else {
            errors.push(ConfigError {
                line: Some(line),
                key: key.to_string(),
                message: "key outside a known section".into(),
            });
            continue;
        };
        let Some(def) = KEYS.iter().find(|d| d.section == sec && d.key == key) else {
            errors.push(ConfigError {
                line: Some(line),
                key: format!("{sec}.{key}"),
                message: "unknown key".into(),
            });
            continue;
        };
        match parse_value(def.kind, value) {
            Some(v) => {
                if entries
                    .insert((def.section, def.key), Entry { line, value: v })
                    .is_some()
                {
                    errors.push(ConfigError {
                        line: Some(line),
                        key: format!("{sec}.{key}"),
                        message: "duplicate key".into(),
                    });
                }
            }
            None => errors.push(ConfigError {
                line: Some(line),
                key: format!("{sec}.{key}"),
                message: format!("expected {} ({}), got `{value}`", def.kind.describe(), def.help),
            }),
        }
    }
    for def in KEYS.iter().filter(|d| d.required) {
        if !entries.contains_key(&(def.section, def.key)) && !errors.iter().any(|e| e.key == format!("{}.{}", def.section, def.key)) {
            errors.push(ConfigError {
                line: None,
                key: format!("{}.{}", def.section, def.key),
                message: format!("missing required key, expected {} ({})", def.kind.describe(), def.help),
            });
        }
    }
    Table { entries }
}

/// Parses and validates a configuration. Either every value is accepted or
/// all problems are returned together.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, Vec<ConfigError>> {
    let mut errors = Vec::new();
    let t = tokenize(text, &mut errors);
    if !errors.is_empty() {
        return Err(errors);
    }
    let f = |s, k| t.float(s, k).expect("required key checked");
    let mut err = |section: &'static str, key: &'static str, message: String| {
        errors.push(ConfigError {
            line: t.line(section, key),
            key: format!("{section}.{key}"),
            message,
        });
    };

    let params = RobotParams::new(f("robot", "a"), f("robot", "rho"))
        .map_err(|e| err("robot", "rho", e.to_string()))
        .ok();
    let weights = Weights::new(f("weights", "q1"), f("weights", "q2"), f("weights", "p1"), f("weights", "p2"))
        .map_err(|e| err("weights", "q1", e.to_string()))
        .ok();
    let gains = TerminalGains::new(f("weights", "k1_terminal"), f("weights", "k2_terminal"))
        .map_err(|e| err("weights", "k1_terminal", e.to_string()))
        .ok();
    let substeps = t.int("horizon", "substeps").unwrap_or(5) as usize;
    let horizon = match HorizonConfig::new(f("horizon", "T"), f("horizon", "delta"), substeps) {
        Ok(h) => Some(h),
        Err(rmpc::Error::InconsistentHorizon { .. }) => {
            err("horizon", "delta", "T must equal N·delta for integer N ≥ 2".into());
            None
        }
        Err(e) => {
            err("horizon", "substeps", e.to_string());
            None
        }
    };
    let defaults = SolverOptions::default();
    let solver = SolverOptions {
        max_outer: t.int("horizon", "max_outer").map_or(defaults.max_outer, |v| v as usize),
        max_inner: t.int("horizon", "max_inner").map_or(defaults.max_inner, |v| v as usize),
        kkt_tol: t.float("horizon", "kkt_tol").unwrap_or(defaults.kkt_tol),
        feas_tol: t.float("horizon", "feas_tol").unwrap_or(defaults.feas_tol),
        ..defaults
    };
    let feedback = FeedbackGain::new(f("tube", "k_x"), f("tube", "k_y"))
        .map_err(|e| err("tube", "k_x", e.to_string()))
        .ok();
    let feedback_mode = match t.word("tube", "feedback").unwrap_or("continuous") {
        "continuous" => FeedbackMode::Continuous,
        "zoh" => FeedbackMode::ZeroOrderHold,
        other => {
            err("tube", "feedback", format!("expected continuous or zoh, got `{other}`"));
            FeedbackMode::Continuous
        }
    };
    let epsilon = f("nrmpc", "epsilon");
    if !(epsilon > 0.0) {
        err("nrmpc", "epsilon", format!("must be positive (m), got {epsilon}"));
    }
    let reference = ReferenceSpec {
        v_r: f("reference", "v_r"),
        omega_r: f("reference", "omega_r"),
        initial: Pose::new(f("reference", "x0"), f("reference", "y0"), f("reference", "theta0")),
    };
    let initial_head = Pose::new(f("sim", "follower_x"), f("sim", "follower_y"), f("sim", "follower_theta"));
    let mode = match t.word("sim", "disturbance").unwrap_or("random") {
        "random" => DisturbanceMode::SeededRandom,
        "worst-case" => DisturbanceMode::WorstCase {
            direction: t.float("sim", "disturbance_direction").unwrap_or(0.0),
        },
        "zero" => DisturbanceMode::Zero,
        other => {
            err("sim", "disturbance", format!("expected random, worst-case or zero, got `{other}`"));
            DisturbanceMode::Zero
        }
    };
    let disturbance = DisturbanceModel::new(f("sim", "eta"), mode, t.int("sim", "seed").unwrap_or(0))
        .map_err(|e| err("sim", "eta", e.to_string()))
        .ok();
    let duration = f("sim", "duration");
    if !(duration > 0.0) {
        err("sim", "duration", format!("must be positive (s), got {duration}"));
    }
    let strategy = match t.word("sim", "strategy").unwrap_or("tube") {
        "tube" => Strategy::Tube,
        "nrmpc" => Strategy::Nrmpc,
        other => {
            err("sim", "strategy", format!("expected tube or nrmpc, got `{other}`"));
            Strategy::Tube
        }
    };
    let terminal_window = t.float("sim", "terminal_window").unwrap_or(10.0);
    if !(terminal_window >= 0.0) {
        err("sim", "terminal_window", format!("must be non-negative (s), got {terminal_window}"));
    }
    let output_dir = PathBuf::from(t.word("output", "dir").unwrap_or("out"));

    match (params, weights, gains, horizon, feedback, disturbance) {
        (Some(params), Some(weights), Some(gains), Some(horizon), Some(feedback), Some(disturbance))
            if errors.is_empty() =>
        {
            Ok(ExperimentConfig {
                sim: SimConfig {
                    params,
                    weights,
                    horizon,
                    gains,
                    feedback,
                    epsilon,
                    reference,
                    initial_head,
                    disturbance,
                    duration,
                    feedback_mode,
                    solver,
                    force: false,
                },
                strategy,
                terminal_window,
                output_dir,
            })
        }
        _ => Err(errors),
    }
}
