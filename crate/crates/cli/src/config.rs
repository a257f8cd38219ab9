//! `key = value` run configuration with `[section]` headers.
//!
//! ```text
//! command = benchmark
//! seed = 42
//!
//! [scenario]
//! dgp = example2
//! d = 10
//! s = 1
//! rho = 0.8
//!
//! [estimator.row_sa]
//! method = row-lasso
//! modifications = SA
//! tuning = bic
//! ```

use std::collections::BTreeMap;
use std::path::PathBuf;

use sparsevar::estimators::{EstimatorConfig, Method, Modifications};
use sparsevar::metrics::NormKind;
use sparsevar::simlab::{Dgp, EstimatorEntry, Example1Variant, Scenario};
use sparsevar::thresholding::ThresholdRule;
use sparsevar::tuning::TuningRule;

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Estimate,
    Benchmark,
    Verify,
}

impl Command {
    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "simulate" => Some(Command::Simulate),
            "estimate" => Some(Command::Estimate),
            "benchmark" => Some(Command::Benchmark),
            "verify" => Some(Command::Verify),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Estimate => "estimate",
            Command::Benchmark => "benchmark",
            Command::Verify => "verify",
        }
    }

    fn needs_seed(&self) -> bool {
        matches!(self, Command::Simulate | Command::Benchmark)
    }
}

const TOP_KEYS: &[&str] = &["command", "seed", "threads", "out"];
const SCENARIO_KEYS: &[&str] = &[
    "dgp",
    "variant",
    "d",
    "s",
    "rho",
    "n",
    "replications",
    "horizon",
    "norm",
    "n_freq",
    "redraw",
    "model_seed",
    "burn_in",
    "name",
];
const ESTIMATOR_KEYS: &[&str] = &[
    "method",
    "modifications",
    "tuning",
    "eric_nu",
    "lambda_grid",
    "lambda_min_ratio",
    "threshold_rule",
    "threshold_nu",
    "threshold_multiplier",
    "reuse_lambda",
    "covariance_rule",
    "tol",
    "max_sweeps",
];
const ESTIMATE_KEYS: &[&str] = &["series", "truth", "p"];
const VERIFY_KEYS: &[&str] = &["level"];

/// One `key = value` entry with its line number.
#[derive(Debug, Clone)]
struct Entry {
    value: String,
    line: usize,
}

#[derive(Debug, Default)]
struct Section {
    name: String,
    line: usize,
    entries: BTreeMap<String, Entry>,
}

fn suggest(key: &str, candidates: &[&str]) -> Option<String> {
    candidates
        .iter()
        .map(|c| (strsim::jaro_winkler(key, c), *c))
        .filter(|(score, _)| *score >= 0.7)
        .max_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(_, c)| c.to_string())
}

fn unknown_key(section: &str, key: &str, line: usize, candidates: &[&str]) -> CliError {
    let all: Vec<&str> = TOP_KEYS
        .iter()
        .chain(SCENARIO_KEYS)
        .chain(ESTIMATOR_KEYS)
        .chain(ESTIMATE_KEYS)
        .chain(VERIFY_KEYS)
        .copied()
        .collect();
    let hint = suggest(key, candidates)
        .or_else(|| suggest(key, &all))
        .map(|s| format!("; did you mean `{s}`?"))
        .unwrap_or_default();
    CliError::Config(format!("line {line}: unknown key `{key}` in {section}{hint}"))
}

fn split_sections(text: &str) -> Result<Vec<Section>, CliError> {
    let mut sections = vec![Section {
        name: String::new(),
        line: 0,
        entries: BTreeMap::new(),
    }];
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let l = raw.split('#').next().unwrap_or("").trim();
        if l.is_empty() {
            continue;
        }
        if let Some(inner) = l.strip_prefix('[') {
            let name = inner
                .strip_suffix(']')
                .ok_or_else(|| CliError::Config(format!("line {line}: unterminated section header")))?
                .trim()
                .to_string();
            if name.is_empty() {
                return Err(CliError::Config(format!("line {line}: empty section name")));
            }
            if sections.iter().any(|s| s.name == name) {
                return Err(CliError::Config(format!("line {line}: duplicate section [{name}]")));
            }
            sections.push(Section {
                name,
                line,
                entries: BTreeMap::new(),
            });
            continue;
        }
        let (k, v) = l
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("line {line}: expected `key = value`, found `{l}`")))?;
        let key = k.trim().to_string();
        if key.is_empty() {
            return Err(CliError::Config(format!("line {line}: missing key")));
        }
        let current = sections.last_mut().expect("at least the top section");
        if current.entries.contains_key(&key) {
            return Err(CliError::Config(format!("line {line}: duplicate key `{key}`")));
        }
        current.entries.insert(
            key,
            Entry {
                value: v.trim().trim_matches('"').to_string(),
                line,
            },
        );
    }
    Ok(sections)
}

/// Typed access to one section that tracks which keys were consumed.
struct Reader<'a> {
    label: String,
    section: &'a Section,
    allowed: &'static [&'static str],
}

impl<'a> Reader<'a> {
    fn new(section: &'a Section, allowed: &'static [&'static str]) -> Result<Self, CliError> {
        let label = if section.name.is_empty() {
            "the top level".to_string()
        } else {
            format!("[{}]", section.name)
        };
        for (k, e) in &section.entries {
            if !allowed.contains(&k.as_str()) {
                return Err(unknown_key(&label, k, e.line, allowed));
            }
        }
        Ok(Self {
            label,
            section,
            allowed,
        })
    }

    fn raw(&self, key: &str) -> Option<&Entry> {
        debug_assert!(self.allowed.contains(&key), "{key}");
        self.section.entries.get(key)
    }

    fn get<T: std::str::FromStr>(&self, key: &str, what: &str) -> Result<Option<T>, CliError> {
        match self.raw(key) {
            None => Ok(None),
            Some(e) => e.value.parse::<T>().map(Some).map_err(|_| {
                CliError::Config(format!(
                    "line {}: `{key}` in {} must be {what}, found `{}`",
                    e.line, self.label, e.value
                ))
            }),
        }
    }

    fn string(&self, key: &str) -> Option<(String, usize)> {
        self.raw(key).map(|e| (e.value.clone(), e.line))
    }

    fn required<T: std::str::FromStr>(&self, key: &str, what: &str) -> Result<T, CliError> {
        self.get(key, what)?.ok_or_else(|| {
            CliError::Config(format!(
                "missing required key `{key}` in {} (line {})",
                self.label, self.section.line
            ))
        })
    }

    fn with_line<T>(&self, key: &str, r: sparsevar::Result<T>) -> Result<T, CliError> {
        r.map_err(|e| {
            let line = self.raw(key).map(|e| e.line).unwrap_or(self.section.line);
            CliError::Config(format!("line {line}: `{key}` in {}: {e}", self.label))
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateInput {
    pub series: PathBuf,
    pub truth: Option<PathBuf>,
    pub p: usize,
}

/// Fully validated run configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub seed: Option<u64>,
    pub threads: usize,
    pub out: PathBuf,
    pub scenario: Option<Scenario>,
    /// Estimators by section name, in file order of their names.
    pub estimators: Vec<(String, EstimatorConfig)>,
    pub estimate: Option<EstimateInput>,
    /// `quick` or `full` verification sizes.
    pub verify_level: String,
}

/// Settings given on the command line; they take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub command: Option<Command>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub out: Option<PathBuf>,
}

pub const DEFAULT_N: usize = 100;
pub const DEFAULT_REPLICATIONS: usize = 100;

pub fn parse_config(text: &str) -> Result<RunConfig, CliError> {
    parse_config_with(text, &Overrides::default())
}

fn parse_method(s: &str) -> Option<Method> {
    match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
        "row-lasso" | "rowlasso" => Some(Method::RowLasso),
        "vec-lasso" | "veclasso" => Some(Method::VecLasso),
        "row-dantzig" | "rowdantzig" | "dantzig" => Some(Method::RowDantzig),
        _ => None,
    }
}

fn parse_rule(r: &Reader, key: &str, nu_key: Option<&str>) -> Result<Option<ThresholdRule>, CliError> {
    let Some((v, line)) = r.string(key) else {
        return Ok(None);
    };
    let rule = match v.to_ascii_lowercase().as_str() {
        "soft" => ThresholdRule::Soft,
        "hard" => ThresholdRule::Hard,
        "adaptive" => {
            let nu = match nu_key {
                Some(k) => r.get::<f64>(k, "a number")?.unwrap_or(sparsevar::thresholding::DEFAULT_NU),
                None => sparsevar::thresholding::DEFAULT_NU,
            };
            r.with_line(nu_key.unwrap_or(key), ThresholdRule::adaptive(nu))?
        }
        _ => {
            return Err(CliError::Config(format!(
                "line {line}: `{key}` must be soft, adaptive or hard, found `{v}`"
            )))
        }
    };
    Ok(Some(rule))
}

fn parse_estimator(section: &Section) -> Result<EstimatorConfig, CliError> {
    let r = Reader::new(section, ESTIMATOR_KEYS)?;
    let (m, line) = r
        .string("method")
        .ok_or_else(|| CliError::Config(format!("missing required key `method` in {} (line {})", r.label, section.line)))?;
    let method = parse_method(&m).ok_or_else(|| {
        CliError::Config(format!(
            "line {line}: `method` must be row-lasso, vec-lasso or row-dantzig, found `{m}`"
        ))
    })?;
    let mods = match r.string("modifications") {
        Some((v, _)) => r.with_line("modifications", Modifications::parse(&v))?,
        None => Modifications::NONE,
    };
    let tuning = match r.string("tuning") {
        None => TuningRule::Bic,
        Some((v, line)) => match v.to_ascii_lowercase().as_str() {
            "bic" => TuningRule::Bic,
            "eric" => {
                let nu = r.get::<f64>("eric_nu", "a number")?.unwrap_or(1.0);
                r.with_line("eric_nu", TuningRule::eric(nu))?
            }
            _ => {
                return Err(CliError::Config(format!(
                    "line {line}: `tuning` must be bic or eric, found `{v}`"
                )))
            }
        },
    };
    let mut cfg = EstimatorConfig::new(method, mods, tuning);
    if let Some(g) = r.get::<usize>("lambda_grid", "a positive integer")? {
        cfg.grid_size = g;
    }
    cfg.lambda_ratio = r.get::<f64>("lambda_min_ratio", "a number in (0, 1)")?;
    if let Some(rule) = parse_rule(&r, "threshold_rule", Some("threshold_nu"))? {
        cfg.threshold_rule = rule;
    }
    if let Some(m) = r.get::<f64>("threshold_multiplier", "a non-negative number")? {
        cfg.threshold_multiplier = m;
    }
    if let Some(b) = r.get::<bool>("reuse_lambda", "true or false")? {
        cfg.reuse_lambda = b;
    }
    if let Some(rule) = parse_rule(&r, "covariance_rule", None)? {
        cfg.covariance_rule = rule;
    }
    if let Some(t) = r.get::<f64>("tol", "a positive number")? {
        cfg.tol = t;
    }
    if let Some(s) = r.get::<usize>("max_sweeps", "a positive integer")? {
        cfg.max_sweeps = s;
    }
    cfg.validate()
        .map_err(|e| CliError::Config(format!("{}: {e}", r.label)))?;
    Ok(cfg)
}

fn parse_scenario(
    section: &Section,
    seed: u64,
    estimators: &[(String, EstimatorConfig)],
) -> Result<Scenario, CliError> {
    let r = Reader::new(section, SCENARIO_KEYS)?;
    let (dgp_name, line) = r.string("dgp").ok_or_else(|| {
        CliError::Config(format!("missing required key `dgp` in [scenario] (line {})", section.line))
    })?;
    let dgp = match dgp_name.to_ascii_lowercase().as_str() {
        "example1" => {
            let v = match r.string("variant") {
                Some((v, _)) => r.with_line("variant", Example1Variant::parse(&v))?,
                None => Example1Variant::Dm,
            };
            Dgp::Example1(v)
        }
        "example2" => Dgp::Example2 {
            d: r.required("d", "a positive integer")?,
            s: r.required("s", "a positive integer")?,
            rho: r.required("rho", "a number in (0, 1)")?,
        },
        _ => {
            return Err(CliError::Config(format!(
                "line {line}: `dgp` must be example1 or example2, found `{dgp_name}`"
            )))
        }
    };
    if matches!(dgp, Dgp::Example1(_)) {
        for k in ["d", "s", "rho"] {
            if let Some(e) = r.raw(k) {
                return Err(CliError::Config(format!(
                    "line {}: `{k}` is fixed for example1 and cannot be set",
                    e.line
                )));
            }
        }
    } else if let Some(e) = r.raw("variant") {
        return Err(CliError::Config(format!(
            "line {}: `variant` only applies to example1",
            e.line
        )));
    }
    let n = r.get("n", "a positive integer")?.unwrap_or(DEFAULT_N);
    let reps = r
        .get("replications", "a positive integer")?
        .unwrap_or(DEFAULT_REPLICATIONS);
    let entries = estimators
        .iter()
        .map(|(_, c)| EstimatorEntry::Fitted(c.clone()))
        .collect();
    let mut sc = Scenario::new(dgp, n, reps, seed, entries);
    if let Some((name, _)) = r.string("name") {
        sc.name = name;
    }
    if let Some(h) = r.get("horizon", "a positive integer")? {
        sc.horizon = h;
    }
    if let Some((v, _)) = r.string("norm") {
        sc.norm = r.with_line("norm", NormKind::parse(&v))?;
    }
    if let Some(f) = r.get("n_freq", "a positive integer")? {
        sc.n_freq = f;
    }
    if let Some(b) = r.get("redraw", "true or false")? {
        sc.redraw = b;
    }
    sc.model_seed = r.get("model_seed", "an unsigned integer")?;
    if let Some(b) = r.get("burn_in", "a non-negative integer")? {
        sc.burn_in = b;
    }
    if sc.n == 0 || sc.replications == 0 || sc.horizon == 0 || sc.n_freq == 0 {
        return Err(CliError::Config(
            "[scenario]: n, replications, horizon and n_freq must be positive".into(),
        ));
    }
    if let Dgp::Example2 { d, s, rho } = sc.dgp {
        if d == 0 || s == 0 || s > d {
            return Err(CliError::Config(format!("[scenario]: need 1 <= s <= d, got d={d}, s={s}")));
        }
        if !(rho > 0.0 && rho < 1.0) {
            return Err(CliError::Config(format!("[scenario]: rho = {rho} is outside (0, 1)")));
        }
    }
    Ok(sc)
}

pub fn parse_config_with(text: &str, overrides: &Overrides) -> Result<RunConfig, CliError> {
    let sections = split_sections(text)?;
    let top = Reader::new(&sections[0], TOP_KEYS)?;

    let file_command = match top.string("command") {
        Some((c, line)) => Some(Command::parse(&c).ok_or_else(|| {
            CliError::Config(format!(
                "line {line}: `command` must be simulate, estimate, benchmark or verify, found `{c}`"
            ))
        })?),
        None => None,
    };
    let command = match (overrides.command, file_command) {
        (Some(a), Some(b)) if a != b => {
            return Err(CliError::Config(format!(
                "command `{}` on the command line contradicts `command = {}` in the config",
                a.name(),
                b.name()
            )))
        }
        (Some(a), _) => a,
        (None, Some(b)) => b,
        (None, None) => return Err(CliError::Config("missing required key `command`".into())),
    };
    let seed = match overrides.seed {
        Some(s) => Some(s),
        None => top.get::<u64>("seed", "an unsigned integer")?,
    };
    if command.needs_seed() && seed.is_none() {
        return Err(CliError::Config(format!(
            "missing required key `seed` for `{}`",
            command.name()
        )));
    }
    let threads = match overrides.threads {
        Some(t) => t,
        None => top.get::<usize>("threads", "a positive integer")?.unwrap_or(1),
    };
    if threads == 0 {
        return Err(CliError::Config("`threads` must be positive".into()));
    }
    let out = overrides
        .out
        .clone()
        .or_else(|| top.string("out").map(|(v, _)| PathBuf::from(v)))
        .unwrap_or_else(|| PathBuf::from("."));

    let mut estimators = Vec::new();
    let mut scenario_section = None;
    let mut estimate_section = None;
    let mut verify_section = None;
    for s in &sections[1..] {
        if let Some(name) = s.name.strip_prefix("estimator.") {
            if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
                return Err(CliError::Config(format!(
                    "line {}: estimator names use letters, digits, `_` and `-`",
                    s.line
                )));
            }
            estimators.push((name.to_string(), parse_estimator(s)?));
        } else {
            match s.name.as_str() {
                "scenario" => scenario_section = Some(s),
                "estimate" => estimate_section = Some(s),
                "verify" => verify_section = Some(s),
                other => {
                    let known = ["scenario", "estimate", "verify", "estimator.NAME"];
                    let hint = suggest(other, &known).map(|k| format!("; did you mean [{k}]?")).unwrap_or_default();
                    return Err(CliError::Config(format!(
                        "line {}: unknown section [{other}]{hint}",
                        s.line
                    )));
                }
            }
        }
    }

    let scenario = match scenario_section {
        Some(s) => Some(parse_scenario(s, seed.unwrap_or(0), &estimators)?),
        None => None,
    };
    let estimate = match estimate_section {
        Some(s) => {
            let r = Reader::new(s, ESTIMATE_KEYS)?;
            let series: String = r.required("series", "a path")?;
            Some(EstimateInput {
                series: PathBuf::from(series),
                truth: r.string("truth").map(|(v, _)| PathBuf::from(v)),
                p: r.get("p", "a positive integer")?.unwrap_or(1),
            })
        }
        None => None,
    };
    let verify_level = match verify_section {
        Some(s) => {
            let r = Reader::new(s, VERIFY_KEYS)?;
            match r.string("level") {
                Some((v, line)) if v != "quick" && v != "full" => {
                    return Err(CliError::Config(format!(
                        "line {line}: `level` must be quick or full, found `{v}`"
                    )))
                }
                Some((v, _)) => v,
                None => "quick".into(),
            }
        }
        None => "quick".into(),
    };

    match command {
        Command::Simulate if scenario.is_none() => {
            return Err(CliError::Config("`simulate` needs a [scenario] section".into()))
        }
        Command::Benchmark => {
            if scenario.is_none() {
                return Err(CliError::Config("`benchmark` needs a [scenario] section".into()));
            }
            if estimators.is_empty() {
                return Err(CliError::Config(
                    "`benchmark` needs at least one [estimator.NAME] section".into(),
                ));
            }
        }
        Command::Estimate => {
            if estimate.is_none() {
                return Err(CliError::Config("`estimate` needs an [estimate] section".into()));
            }
            if estimators.is_empty() {
                return Err(CliError::Config(
                    "`estimate` needs at least one [estimator.NAME] section".into(),
                ));
            }
        }
        _ => {}
    }
    if let Some(e) = &estimate {
        if e.p == 0 {
            return Err(CliError::Config("`p` in [estimate] must be positive".into()));
        }
    }

    Ok(RunConfig {
        command,
        seed,
        threads,
        out,
        scenario,
        estimators,
        estimate,
        verify_level,
    })
}
