//! Configuration-driven verification runs and their line-delimited reports.
//!
//! A run reads a TOML config, builds the requested functionals, executes the
//! selected suites case by case and writes one JSON record per case. Every
//! case draws its randomness from `derive_seed(seed, case_id)`, so the report
//! does not depend on the order in which cases execute.
//!
//! ```toml
//! seed = 7
//!
//! [space]
//! size = 8          # points of the finite space
//! ladder = 10       # truncation ladder 2^1 .. 2^ladder
//!
//! [[functional]]
//! kind = "entropic"
//! reference = "uniform"   # uniform | geometric | random
//!
//! [suites]
//! select = ["duality", "escape"]
//!
//! [tolerances]
//! gap = 1e-6
//!
//! [escape]
//! profile = "capped"      # reciprocal | capped
//! cap = 3
//! ```
//!
//! Each case compares an observation with the answer known in advance for
//! its functional (for example, `sup` is expected to fail tightness). A case
//! passes when the two agree.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::duality::{
    probability_mass_check, verify_maxrep, weak_duality_check, AscentConfig, MaxRepOptions,
};
use crate::ext_real::ExtReal;
use crate::functional::Functional;
use crate::limits::{
    audit_implications, capped_profile, check_regular, generate_sequences,
    indicator_counterexample, ladder_regularity, lower_regularization, mass_escape_diagnostic,
    reciprocal_profile, step_inequality_check, step_approximation, step_family, tightness_check,
    ConditionId, ConditionOptions,
};
use crate::sampling::{
    derive_seed, random_func, random_measure, random_probability, rng_for, CaseRng,
};
use crate::space::{geometric_schedule, make_truncation_ladder, Measure, Space, SpaceRef};

pub const SCHEMA_VERSION: u32 = 1;
pub const REPORT_DIR_ENV: &str = "DUALREP_REPORT_DIR";
pub const DEFAULT_REPORT_NAME: &str = "dualrep-report.jsonl";

pub const SUITES: [&str; 6] = [
    "duality",
    "conditions",
    "escape",
    "tightness",
    "regularity",
    "approximation",
];

/// A config that failed to parse or validate; `line` points into the file when known.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub field: String,
    pub line: Option<usize>,
    pub message: String,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.line {
            Some(l) => write!(
                f,
                "config error at line {l}, field `{}`: {}",
                self.field, self.message
            ),
            None => write!(f, "config error, field `{}`: {}", self.field, self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reference {
    Uniform,
    Geometric,
    Random,
}

/// One functional of the config, tagged by `kind`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FunctionalSpec {
    Linear {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        weights: Option<Vec<f64>>,
    },
    Sup,
    Entropic {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        reference: Option<Reference>,
    },
    IndicatorP,
    WorstCase {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        scenarios: Option<usize>,
    },
    Mixture {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        weight: Option<f64>,
    },
}

impl FunctionalSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            FunctionalSpec::Linear { .. } => "linear",
            FunctionalSpec::Sup => "sup",
            FunctionalSpec::Entropic { .. } => "entropic",
            FunctionalSpec::IndicatorP => "indicator_p",
            FunctionalSpec::WorstCase { .. } => "worst_case",
            FunctionalSpec::Mixture { .. } => "mixture",
        }
    }

    /// The six catalog members with default parameters.
    pub fn catalog() -> Vec<FunctionalSpec> {
        vec![
            FunctionalSpec::Linear { weights: None },
            FunctionalSpec::Sup,
            FunctionalSpec::Entropic { reference: None },
            FunctionalSpec::IndicatorP,
            FunctionalSpec::WorstCase { scenarios: None },
            FunctionalSpec::Mixture { weight: None },
        ]
    }

    fn mixture_weight(&self) -> f64 {
        match self {
            FunctionalSpec::Mixture { weight } => weight.unwrap_or(0.5),
            _ => 0.5,
        }
    }

    /// Builds the functional on `space`; random parameters come from `rng`.
    pub fn build(&self, space: &SpaceRef, rng: &mut CaseRng) -> crate::Result<Functional> {
        Ok(match self {
            FunctionalSpec::Linear { weights: Some(w) } => {
                Functional::linear(&Measure::new(space, w.clone())?)
            }
            FunctionalSpec::Linear { weights: None } => {
                Functional::linear(&random_measure(space, rng, 0.5))
            }
            FunctionalSpec::Sup => Functional::sup(space),
            FunctionalSpec::Entropic { reference } => {
                let p = match reference.unwrap_or(Reference::Uniform) {
                    Reference::Uniform => Measure::uniform(space),
                    Reference::Geometric => Measure::geometric(space, 0.5)?,
                    Reference::Random => random_probability(space, rng),
                };
                Functional::entropic(&p)?
            }
            FunctionalSpec::IndicatorP => Functional::indicator_p(space),
            FunctionalSpec::WorstCase { scenarios } => {
                let k = scenarios.unwrap_or(3);
                let sc = (0..k)
                    .map(|_| {
                        let penalty = rand::Rng::random_range(rng, 0.0..0.5);
                        (random_probability(space, rng), penalty)
                    })
                    .collect();
                Functional::worst_case(sc)?
            }
            FunctionalSpec::Mixture { .. } => {
                let a = self.mixture_weight();
                Functional::mixture(vec![
                    (a, Functional::entropic(&Measure::uniform(space))?),
                    (1.0 - a, Functional::sup(space)),
                ])?
            }
        })
    }

    /// Variant with light-tailed (geometric) data on a large space, used for tightness.
    fn build_light_tailed(&self, space: &SpaceRef) -> crate::Result<Functional> {
        let geo = Measure::geometric(space, 0.5)?;
        Ok(match self {
            FunctionalSpec::Linear { .. } => Functional::linear(&geo),
            FunctionalSpec::Sup => Functional::sup(space),
            FunctionalSpec::Entropic { .. } => Functional::entropic(&geo)?,
            FunctionalSpec::IndicatorP => Functional::indicator_p(space),
            FunctionalSpec::WorstCase { scenarios } => {
                let k = scenarios.unwrap_or(3);
                let sc = (0..k)
                    .map(|j| Ok((Measure::geometric(space, 0.5 / (j + 1) as f64)?, 0.0)))
                    .collect::<crate::Result<Vec<_>>>()?;
                Functional::worst_case(sc)?
            }
            FunctionalSpec::Mixture { .. } => {
                let a = self.mixture_weight();
                Functional::mixture(vec![
                    (a, Functional::entropic(&geo)?),
                    (1.0 - a, Functional::sup(space)),
                ])?
            }
        })
    }

    /// Whether the tightness check should succeed on [`Self::build_light_tailed`].
    fn expect_tight(&self) -> bool {
        matches!(
            self,
            FunctionalSpec::Linear { .. }
                | FunctionalSpec::Entropic { .. }
                | FunctionalSpec::WorstCase { .. }
        )
    }

    /// Whether monotone continuity from above, (ii), is expected to hold.
    fn expect_ii(&self) -> bool {
        !matches!(self, FunctionalSpec::IndicatorP)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    /// Certification tolerance for `|φ(f) + φ*(μ̂) - ⟨f, μ̂⟩|`.
    #[serde(default = "default_gap")]
    pub gap: f64,
    /// Slack for Fenchel–Young and weak duality comparisons.
    #[serde(default = "default_identity")]
    pub identity: f64,
    /// Convergence and monotonicity slack along sequences.
    #[serde(default = "default_convergence")]
    pub convergence: f64,
    /// Allowed deviation of a witness's total mass from one.
    #[serde(default = "default_mass")]
    pub mass: f64,
    /// Regularity and tightness slack.
    #[serde(default = "default_regularity")]
    pub regularity: f64,
}

fn default_gap() -> f64 {
    1e-6
}
fn default_identity() -> f64 {
    1e-9
}
fn default_convergence() -> f64 {
    1e-8
}
fn default_mass() -> f64 {
    1e-8
}
fn default_regularity() -> f64 {
    1e-10
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            gap: default_gap(),
            identity: default_identity(),
            convergence: default_convergence(),
            mass: default_mass(),
            regularity: default_regularity(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    /// `f(m) = 1 - 1/m`: the supremum is never attained.
    Reciprocal,
    /// `1 - 1/min(m, cap)`: attained from `cap` on.
    Capped,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EscapeSpec {
    #[serde(default = "default_profile")]
    pub profile: Profile,
    #[serde(default = "default_cap")]
    pub cap: usize,
}

fn default_profile() -> Profile {
    Profile::Reciprocal
}
fn default_cap() -> usize {
    3
}

impl Default for EscapeSpec {
    fn default() -> Self {
        EscapeSpec {
            profile: default_profile(),
            cap: default_cap(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceSpec {
    #[serde(default = "default_size")]
    pub size: usize,
    /// Largest exponent of the truncation ladder `2^1 .. 2^ladder`.
    #[serde(default = "default_ladder")]
    pub ladder: u32,
}

fn default_size() -> usize {
    8
}
fn default_ladder() -> u32 {
    10
}

impl Default for SpaceSpec {
    fn default() -> Self {
        SpaceSpec {
            size: default_size(),
            ladder: default_ladder(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SuiteSelection {
    #[serde(default)]
    select: Option<Vec<String>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    seed: Option<u64>,
    #[serde(default)]
    space: SpaceSpec,
    #[serde(default)]
    functional: Option<Vec<FunctionalSpec>>,
    #[serde(default)]
    suites: SuiteSelection,
    #[serde(default)]
    tolerances: Tolerances,
    #[serde(default)]
    escape: EscapeSpec,
}

/// A validated run configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteConfig {
    pub seed: u64,
    pub space: SpaceSpec,
    pub functionals: Vec<FunctionalSpec>,
    pub suites: Vec<String>,
    pub tolerances: Tolerances,
    pub escape: EscapeSpec,
}

/// Line of the first `key = ...` assignment inside `[section]` (or at top level).
fn locate(text: &str, section: Option<&str>, key: &str) -> Option<usize> {
    let mut current: Option<String> = None;
    for (i, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.starts_with('[') {
            current = Some(t.trim_matches(|c| c == '[' || c == ']').trim().to_string());
            continue;
        }
        let in_section = match (section, &current) {
            (None, None) => true,
            (Some(s), Some(c)) => c == s,
            _ => false,
        };
        if in_section {
            if let Some((k, _)) = t.split_once('=') {
                if k.trim() == key {
                    return Some(i + 1);
                }
            }
        }
    }
    None
}

impl SuiteConfig {
    pub fn default_with_seed(seed: u64) -> SuiteConfig {
        SuiteConfig {
            seed,
            space: SpaceSpec::default(),
            functionals: FunctionalSpec::catalog(),
            suites: SUITES.iter().map(|s| s.to_string()).collect(),
            tolerances: Tolerances::default(),
            escape: EscapeSpec::default(),
        }
    }

    pub fn parse(text: &str) -> Result<SuiteConfig, ConfigError> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| {
            let line = e
                .span()
                .map(|sp| text[..sp.start.min(text.len())].matches('\n').count() + 1);
            ConfigError {
                field: e
                    .message()
                    .split('`')
                    .nth(1)
                    .unwrap_or("<document>")
                    .to_string(),
                line,
                message: e.message().trim().to_string(),
            }
        })?;
        let err = |section: Option<&str>, key: &str, message: String| ConfigError {
            field: match section {
                Some(s) => format!("{s}.{key}"),
                None => key.to_string(),
            },
            line: locate(text, section, key),
            message,
        };
        let seed = raw.seed.ok_or_else(|| {
            err(
                None,
                "seed",
                "a seed is required for reproducibility".into(),
            )
        })?;
        if raw.space.size < 2 {
            return Err(err(
                Some("space"),
                "size",
                format!("must be at least 2 (got {})", raw.space.size),
            ));
        }
        if !(1..=16).contains(&raw.space.ladder) {
            return Err(err(
                Some("space"),
                "ladder",
                format!("must be in 1..=16 (got {})", raw.space.ladder),
            ));
        }
        let t = raw.tolerances;
        for (key, v) in [
            ("gap", t.gap),
            ("identity", t.identity),
            ("convergence", t.convergence),
            ("mass", t.mass),
            ("regularity", t.regularity),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(err(
                    Some("tolerances"),
                    key,
                    format!("must be positive (got {v})"),
                ));
            }
        }
        if raw.escape.cap < 1 {
            return Err(err(Some("escape"), "cap", "must be at least 1".into()));
        }
        let functionals = raw.functional.unwrap_or_else(FunctionalSpec::catalog);
        if functionals.is_empty() {
            return Err(err(
                None,
                "functional",
                "at least one functional is required".into(),
            ));
        }
        for f in &functionals {
            match f {
                FunctionalSpec::Linear { weights: Some(w) } => {
                    if w.len() != raw.space.size || w.iter().any(|x| !(*x >= 0.0 && x.is_finite()))
                    {
                        return Err(err(
                            Some("functional"),
                            "weights",
                            format!("need {} nonnegative finite weights", raw.space.size),
                        ));
                    }
                }
                FunctionalSpec::WorstCase { scenarios: Some(0) } => {
                    return Err(err(
                        Some("functional"),
                        "scenarios",
                        "must be at least 1".into(),
                    ));
                }
                FunctionalSpec::Mixture { weight: Some(w) } if !(*w > 0.0 && *w < 1.0) => {
                    return Err(err(
                        Some("functional"),
                        "weight",
                        format!("must lie in (0, 1) (got {w})"),
                    ));
                }
                _ => {}
            }
        }
        let suites = match raw.suites.select {
            None => SUITES.iter().map(|s| s.to_string()).collect(),
            Some(sel) => {
                if sel.is_empty() {
                    return Err(err(
                        Some("suites"),
                        "select",
                        "select at least one suite".into(),
                    ));
                }
                for s in &sel {
                    if !SUITES.contains(&s.as_str()) {
                        return Err(err(
                            Some("suites"),
                            "select",
                            format!("unknown suite `{s}` (known: {})", SUITES.join(", ")),
                        ));
                    }
                }
                sel
            }
        };
        Ok(SuiteConfig {
            seed,
            space: raw.space,
            functionals,
            suites,
            tolerances: t,
            escape: raw.escape,
        })
    }

    pub fn load(path: &Path) -> Result<SuiteConfig, ConfigError> {
        let text = fs::read_to_string(path).map_err(|e| ConfigError {
            field: "<file>".into(),
            line: None,
            message: format!("cannot read {}: {e}", path.display()),
        })?;
        SuiteConfig::parse(&text)
    }

    /// n = 4 and ladder capped at 2^6.
    pub fn quick(mut self) -> SuiteConfig {
        self.space.size = self.space.size.min(4);
        self.space.ladder = self.space.ladder.min(6);
        for f in &mut self.functionals {
            if let FunctionalSpec::Linear { weights } = f {
                if weights.as_ref().is_some_and(|w| w.len() != self.space.size) {
                    *weights = None;
                }
            }
        }
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
}

/// One line of the structured report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CaseRecord {
    pub record: String,
    pub case_id: String,
    pub suite: String,
    pub verdict: Verdict,
    pub lhs: Option<Value>,
    pub rhs: Option<Value>,
    pub gap: Option<f64>,
    pub witness_digest: Option<String>,
    pub trace_digest: Option<String>,
    pub inputs_digest: String,
    pub kind: String,
    pub params: Value,
    pub seed: u64,
    pub tol: f64,
    pub detail: Value,
}

fn digest(v: &impl Serialize) -> String {
    let bytes = serde_json::to_vec(v).expect("serializable");
    let h = Sha256::digest(&bytes);
    h[..8].iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

fn ext(v: ExtReal) -> Value {
    serde_json::to_value(v).expect("serializable")
}

/// Finite numbers as JSON numbers, everything else as a string.
fn num(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        json!(v.to_string())
    }
}

struct Case {
    id: String,
    suite: &'static str,
    kind: String,
    params: Value,
    seed: u64,
    tol: f64,
}

impl Case {
    fn record(&self, passed: bool, detail: Value) -> CaseRecord {
        CaseRecord {
            record: "case".into(),
            case_id: self.id.clone(),
            suite: self.suite.into(),
            verdict: if passed { Verdict::Pass } else { Verdict::Fail },
            lhs: None,
            rhs: None,
            gap: None,
            witness_digest: None,
            trace_digest: None,
            inputs_digest: digest(&json!([self.kind, self.params, self.seed, self.tol])),
            kind: self.kind.clone(),
            params: self.params.clone(),
            seed: self.seed,
            tol: self.tol,
            detail,
        }
    }
}

/// Outcome of a run: records sorted by case id plus the header stamp.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub header: Value,
    pub records: Vec<CaseRecord>,
}

impl RunReport {
    pub fn failing(&self) -> Vec<&str> {
        self.records
            .iter()
            .filter(|r| r.verdict == Verdict::Fail)
            .map(|r| r.case_id.as_str())
            .collect()
    }

    pub fn summary(&self) -> Value {
        let mut per_suite: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
        for r in &self.records {
            let e = per_suite.entry(r.suite.as_str()).or_default();
            match r.verdict {
                Verdict::Pass => e.0 += 1,
                Verdict::Fail => e.1 += 1,
            }
        }
        let suites: BTreeMap<&str, Value> = per_suite
            .into_iter()
            .map(|(k, (p, f))| (k, json!({"passed": p, "failed": f})))
            .collect();
        let failing = self.failing();
        json!({
            "record": "summary",
            "cases": self.records.len(),
            "passed": self.records.len() - failing.len(),
            "failed": failing.len(),
            "suites": suites,
            "failing": failing,
        })
    }

    /// Header, one record per case, summary; one JSON document per line.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        out.push_str(&self.header.to_string());
        out.push('\n');
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("serializable"));
            out.push('\n');
        }
        out.push_str(&self.summary().to_string());
        out.push('\n');
        out
    }

    /// Human-readable pass/fail counts per suite and the failing case ids.
    pub fn text_summary(&self) -> String {
        let s = self.summary();
        let mut out = String::new();
        for (suite, c) in s["suites"].as_object().expect("object") {
            let _ = writeln!(
                out,
                "{suite:<14} passed {:>4}  failed {:>4}",
                c["passed"], c["failed"]
            );
        }
        for id in self.failing() {
            let _ = writeln!(out, "FAIL {id}");
        }
        let _ = writeln!(out, "total: {} passed, {} failed", s["passed"], s["failed"]);
        out
    }
}

/// Unique label per configured functional: its kind, suffixed when repeated.
fn labels(specs: &[FunctionalSpec]) -> Vec<String> {
    specs
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let dup = specs.iter().filter(|g| g.kind() == f.kind()).count() > 1;
            if dup {
                format!("{}-{i}", f.kind())
            } else {
                f.kind().to_string()
            }
        })
        .collect()
}

struct Runner<'a> {
    cfg: &'a SuiteConfig,
    space: SpaceRef,
    ladder: Vec<SpaceRef>,
    records: Vec<CaseRecord>,
}

impl Runner<'_> {
    fn case(&self, suite: &'static str, id: String, kind: &str, params: Value, tol: f64) -> Case {
        Case {
            seed: derive_seed(self.cfg.seed, &id),
            id,
            suite,
            kind: kind.into(),
            params,
            tol,
        }
    }

    /// Runs `body`; a library error becomes a failing record carrying the message.
    fn run_case(&mut self, case: Case, body: impl FnOnce(&Case) -> crate::Result<CaseRecord>) {
        let rec =
            body(&case).unwrap_or_else(|e| case.record(false, json!({"error": e.to_string()})));
        self.records.push(rec);
    }

    fn build(&self, spec: &FunctionalSpec, label: &str) -> crate::Result<Functional> {
        let mut rng = rng_for(self.cfg.seed, &format!("functional/{label}"));
        spec.build(&self.space, &mut rng)
    }

    fn duality(&mut self) {
        let tol = self.cfg.tolerances;
        let specs = self.cfg.functionals.clone();
        for (spec, label) in specs.iter().zip(labels(&specs)) {
            let params = serde_json::to_value(spec).expect("serializable");
            let Ok(phi) = self.build(spec, &label) else {
                let c = self.case(
                    "duality",
                    format!("duality/{label}/build"),
                    spec.kind(),
                    params,
                    tol.gap,
                );
                self.run_case(c, |c| {
                    Err(crate::Error::Usage(format!("cannot build {}", c.kind)))
                });
                continue;
            };

            let c = self.case(
                "duality",
                format!("duality/{label}/weak"),
                spec.kind(),
                params.clone(),
                tol.identity,
            );
            self.run_case(c, |c| {
                let mut rng = rng_for(c.seed, "pairs");
                let s = weak_duality_check(
                    &phi,
                    &mut rng,
                    100,
                    10,
                    c.tol,
                    &AscentConfig::default().with_seed(c.seed),
                )?;
                let mut r = c.record(
                    s.violations == 0,
                    serde_json::to_value(&s).expect("serializable"),
                );
                r.gap = Some(s.max_excess).filter(|v| v.is_finite());
                Ok(r)
            });

            for k in 0..3 {
                let c = self.case(
                    "duality",
                    format!("duality/{label}/maxrep-{k}"),
                    spec.kind(),
                    params.clone(),
                    tol.gap,
                );
                self.run_case(c, |c| {
                    let mut rng = rng_for(c.seed, "point");
                    let f = random_func(phi.space(), &mut rng, -3.0, -1.0);
                    let opts = MaxRepOptions {
                        tol: c.tol,
                        fy_tol: tol.identity,
                        fy_samples: 100,
                        seed: c.seed,
                        ascent: AscentConfig::default().with_seed(c.seed),
                    };
                    let rep = verify_maxrep(&phi, &f, &opts)?;
                    let mut r = c.record(
                        rep.certified,
                        json!({
                            "f": f,
                            "witness": rep.witness,
                            "phi_f": ext(rep.lhs),
                            "conjugate_at_witness": ext(rep.conjugate_at_witness),
                            "conjugate_method": rep.conjugate_method,
                            "gap": rep.gap,
                            "fenchel_young_violations": rep.fenchel_young_violations,
                        }),
                    );
                    r.lhs = Some(ext(rep.lhs));
                    r.rhs = Some(ext(rep.rhs));
                    r.gap = Some(rep.gap);
                    r.witness_digest = Some(digest(&rep.witness));
                    Ok(r)
                });
            }

            if phi.translation_invariant() {
                let c = self.case(
                    "duality",
                    format!("duality/{label}/mass"),
                    spec.kind(),
                    params.clone(),
                    tol.mass,
                );
                self.run_case(c, |c| {
                    let mut rng = rng_for(c.seed, "point");
                    let f = random_func(phi.space(), &mut rng, -3.0, -1.0);
                    let m = probability_mass_check(&phi, &f, c.tol)?;
                    let mut r = c.record(m.passed, json!({"f": f, "mass": m.mass}));
                    r.lhs = Some(num(m.mass));
                    r.rhs = Some(json!(1.0));
                    r.gap = Some((m.mass - 1.0).abs());
                    Ok(r)
                });
            }
        }
    }

    fn conditions(&mut self) {
        let tol = self.cfg.tolerances;
        let specs = self.cfg.functionals.clone();
        for (spec, label) in specs.iter().zip(labels(&specs)) {
            let params = serde_json::to_value(spec).expect("serializable");
            let c = self.case(
                "conditions",
                format!("conditions/{label}/audit"),
                spec.kind(),
                params,
                tol.convergence,
            );
            let built = self.build(spec, &label);
            let space = self.space.clone();
            self.run_case(c, |c| {
                let phi = built?;
                let mut rng = rng_for(c.seed, "sequences");
                let mut seqs = generate_sequences(&space, &mut rng, 24);
                seqs.push(indicator_counterexample(&space));
                let opts = ConditionOptions {
                    tol: c.tol,
                    seed: c.seed,
                    ..ConditionOptions::default()
                };
                let audit = audit_implications(&phi, &seqs, &opts)?;
                let ii = audit.passes(ConditionId::Ii).unwrap_or(false);
                let passed = audit.violations.is_empty() && ii == spec.expect_ii();
                let mut r = c.record(
                    passed,
                    json!({
                        "expected_ii": spec.expect_ii(),
                        "audit": audit,
                    }),
                );
                r.trace_digest = audit.ii_failure_trace.as_ref().map(digest);
                Ok(r)
            });
        }
    }

    fn escape(&mut self) {
        let e = self.cfg.escape;
        let (label, expect) = match e.profile {
            Profile::Reciprocal => ("reciprocal".to_string(), true),
            Profile::Capped => (format!("capped-{}", e.cap), false),
        };
        let params = serde_json::to_value(e).expect("serializable");
        let c = self.case(
            "escape",
            format!("escape/{label}"),
            "sup",
            params,
            self.cfg.tolerances.gap,
        );
        let ladder = self.ladder.clone();
        self.run_case(c, |c| {
            let opts = MaxRepOptions {
                tol: c.tol,
                fy_samples: 10,
                seed: c.seed,
                ..MaxRepOptions::default()
            };
            let d = match e.profile {
                Profile::Reciprocal => mass_escape_diagnostic(reciprocal_profile, &ladder, &opts)?,
                Profile::Capped => mass_escape_diagnostic(capped_profile(e.cap), &ladder, &opts)?,
            };
            let passed = d.escape_detected == expect && d.witnesses_at_argmax && d.certified;
            let rows: Vec<Value> = d
                .mass_on_prefix
                .iter()
                .map(|row| {
                    let cols: Vec<f64> = d
                        .rung_sizes
                        .iter()
                        .filter(|&&n| n <= row.len())
                        .map(|&n| row[n - 1])
                        .collect();
                    json!(cols)
                })
                .collect();
            let mut r = c.record(
                passed,
                json!({
                    "label": d.label,
                    "expected_escape": expect,
                    "escape_detected": d.escape_detected,
                    "rung_sizes": d.rung_sizes,
                    "witness_dirac_index": d.witness_dirac_index,
                    "prefix_mass_at_rung_sizes": rows,
                    "uniform_gap": d.uniform_gap,
                }),
            );
            r.witness_digest = Some(digest(&d.per_rung_witness));
            r.trace_digest = Some(digest(&d.mass_on_prefix));
            Ok(r)
        });
    }

    fn tightness(&mut self) {
        let specs = self.cfg.functionals.clone();
        let top = self.ladder.last().expect("nonempty ladder").clone();
        for (spec, label) in specs.iter().zip(labels(&specs)) {
            let params = serde_json::to_value(spec).expect("serializable");
            let c = self.case(
                "tightness",
                format!("tightness/{label}"),
                spec.kind(),
                params,
                1e-6,
            );
            let ladder = self.ladder.clone();
            let top = top.clone();
            self.run_case(c, |c| {
                let phi = spec.build_light_tailed(&top)?;
                let v = tightness_check(&phi, 2.0, &ladder, c.tol)?;
                let expect = spec.expect_tight();
                let mut r = c.record(
                    v.passed == expect,
                    json!({
                        "data": "geometric",
                        "level": 2.0,
                        "expected_tight": expect,
                        "tight": v.passed,
                        "trace": v.trace,
                        "limit": ext(v.limit),
                        "note": v.note,
                    }),
                );
                r.lhs = v.trace.last().map(|&x| ext(x));
                r.rhs = Some(ext(v.limit));
                r.trace_digest = Some(digest(&v.trace));
                Ok(r)
            });
        }
    }

    fn regularity(&mut self) {
        let tol = self.cfg.tolerances.regularity;
        let top = self.ladder.last().expect("nonempty ladder").clone();
        let measures: [(&str, Measure); 3] = [
            (
                "geometric",
                Measure::geometric(&top, 0.5).expect("valid ratio"),
            ),
            ("dirac-head", Measure::dirac(&top, 0).expect("in range")),
            ("uniform", Measure::uniform(&top)),
        ];
        for (name, mu) in measures {
            let c = self.case(
                "regularity",
                format!("regularity/{name}"),
                "measure",
                json!({"measure": name, "size": top.size()}),
                tol,
            );
            self.run_case(c, |c| {
                let mut rng = rng_for(c.seed, "subsets");
                let rep = check_regular(&mu, c.tol, 32, &mut rng);
                let mut r = c.record(
                    rep.regular,
                    serde_json::to_value(&rep).expect("serializable"),
                );
                r.lhs = Some(num(rep.best_prefix_mass));
                r.rhs = Some(num(rep.total_mass));
                r.gap = Some(rep.worst_inner_defect);
                Ok(r)
            });
        }
        let ladder = self.ladder.clone();
        for (name, expect) in [("dirac-ladder", true), ("geometric-ladder", false)] {
            let c = self.case(
                "regularity",
                format!("regularity/{name}"),
                "measure",
                json!({"ladder": name}),
                tol,
            );
            let ladder = ladder.clone();
            self.run_case(c, |c| {
                let ms: Vec<Measure> = ladder
                    .iter()
                    .map(|s| {
                        if expect {
                            Measure::dirac(s, s.size() - 1)
                        } else {
                            Measure::geometric(s, 0.5)
                        }
                    })
                    .collect::<crate::Result<_>>()?;
                let lr = ladder_regularity(&ms, c.tol)?;
                let mut r = c.record(
                    lr.escape_detected == expect,
                    json!({"label": "escape stand-in", "expected_escape": expect, "escape_detected": lr.escape_detected, "prefix_mass": lr.prefix_mass}),
                );
                r.trace_digest = Some(digest(&lr.prefix_mass));
                Ok(r)
            });
        }
    }

    fn approximation(&mut self) {
        let delta = 0.05;
        let big = Space::new(100).expect("positive size");
        let c = self.case(
            "approximation",
            "approximation/sandwich".into(),
            "step",
            json!({"delta": delta, "size": 100, "draws": 100}),
            0.0,
        );
        self.run_case(c, |c| {
            let mut rng = rng_for(c.seed, "funcs");
            let mut worst = 0usize;
            let mut max_levels = 0;
            for _ in 0..100 {
                let f = random_func(&big, &mut rng, -3.0, 3.0);
                let st = step_approximation(&f, delta)?;
                max_levels = max_levels.max(st.levels.len());
                worst += f
                    .values()
                    .iter()
                    .zip(st.g.values())
                    .filter(|(v, g)| !(**g <= **v && **v <= **g + delta))
                    .count();
            }
            Ok(c.record(
                worst == 0,
                json!({"sandwich_violations": worst, "max_levels": max_levels}),
            ))
        });
        let c = self.case(
            "approximation",
            "approximation/inequality".into(),
            "step",
            json!({"delta": delta, "size": 100, "draws": 100}),
            0.0,
        );
        self.run_case(c, |c| {
            let mut rng = rng_for(c.seed, "pairs");
            let mut failures = 0;
            let mut min_slack = f64::INFINITY;
            for _ in 0..100 {
                let f = random_func(&big, &mut rng, -3.0, 3.0);
                let mu = random_measure(&big, &mut rng, 1.0);
                let chk = step_inequality_check(&f, &mu, delta)?;
                min_slack = min_slack.min(chk.rhs - chk.lhs);
                failures += usize::from(!chk.holds);
            }
            let mut r = c.record(
                failures == 0,
                json!({"failures": failures, "min_slack": num(min_slack)}),
            );
            r.gap = Some(min_slack);
            Ok(r)
        });

        let specs = self.cfg.functionals.clone();
        let deltas: Vec<f64> = (0..=10).map(|j| 0.5f64.powi(j)).collect();
        for (spec, label) in specs.iter().zip(labels(&specs)) {
            let params = serde_json::to_value(spec).expect("serializable");
            let c = self.case(
                "approximation",
                format!("approximation/{label}/lower"),
                spec.kind(),
                params,
                deltas[10],
            );
            let built = self.build(spec, &label);
            let space = self.space.clone();
            let deltas = deltas.clone();
            self.run_case(c, |c| {
                let phi = built?;
                let mut rng = rng_for(c.seed, "point");
                let f = random_func(&space, &mut rng, -3.0, -1.0);
                let fam = step_family(&f, &deltas)?;
                let low = lower_regularization(&phi, &f, &fam)?;
                let exact = phi.evaluate(&f)?;
                // The finest step g satisfies f - δ ≤ g ≤ f, so φ(f - δ) bounds the shortfall.
                let floor = phi.evaluate(&f.shift(-c.tol))?;
                let (lo, ex) = (low.to_f64(), exact.to_f64());
                let envelope = ex - floor.to_f64();
                let passed = lo <= ex && ex - lo <= envelope + 1e-12;
                let mut r = c.record(
                    passed,
                    json!({"f": f, "deltas": deltas.len(), "envelope": num(envelope)}),
                );
                r.lhs = Some(ext(low));
                r.rhs = Some(ext(exact));
                r.gap = Some(ex - lo).filter(|v| v.is_finite());
                Ok(r)
            });
        }
    }
}

/// Executes the configured suites (or only `only`) and returns the sorted report.
pub fn run_suites(cfg: &SuiteConfig, only: Option<&str>) -> Result<RunReport, ConfigError> {
    if let Some(s) = only {
        if !SUITES.contains(&s) {
            return Err(ConfigError {
                field: "--suite".into(),
                line: None,
                message: format!("unknown suite `{s}` (known: {})", SUITES.join(", ")),
            });
        }
    }
    let space = Space::new(cfg.space.size).map_err(|e| ConfigError {
        field: "space.size".into(),
        line: None,
        message: e.to_string(),
    })?;
    let ladder =
        make_truncation_ladder(&geometric_schedule(cfg.space.ladder)).map_err(|e| ConfigError {
            field: "space.ladder".into(),
            line: None,
            message: e.to_string(),
        })?;
    let mut runner = Runner {
        cfg,
        space,
        ladder,
        records: Vec::new(),
    };
    let selected: Vec<&str> = match only {
        Some(s) => vec![s],
        None => cfg.suites.iter().map(String::as_str).collect(),
    };
    for s in SUITES {
        if !selected.contains(&s) {
            continue;
        }
        match s {
            "duality" => runner.duality(),
            "conditions" => runner.conditions(),
            "escape" => runner.escape(),
            "tightness" => runner.tightness(),
            "regularity" => runner.regularity(),
            "approximation" => runner.approximation(),
            _ => unreachable!(),
        }
    }
    let mut records = runner.records;
    records.sort_by(|a, b| a.case_id.cmp(&b.case_id));
    let timestamp = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let header = json!({
        "record": "header",
        "schema_version": SCHEMA_VERSION,
        "version": env!("CARGO_PKG_VERSION"),
        "seed": cfg.seed,
        "config_digest": digest(cfg),
        "suites": selected,
        "timestamp": timestamp,
    });
    Ok(RunReport { header, records })
}

/// `--report` if given, else `$DUALREP_REPORT_DIR/dualrep-report.jsonl`, else the working directory.
pub fn report_path(explicit: Option<&Path>) -> PathBuf {
    if let Some(p) = explicit {
        return p.to_path_buf();
    }
    match std::env::var_os(REPORT_DIR_ENV) {
        Some(dir) => PathBuf::from(dir).join(DEFAULT_REPORT_NAME),
        None => PathBuf::from(DEFAULT_REPORT_NAME),
    }
}

/// Loads the case record `case_id` from a report file.
pub fn find_case(report: &Path, case_id: &str) -> std::io::Result<Option<CaseRecord>> {
    let text = fs::read_to_string(report)?;
    for line in text.lines() {
        let v: Value = match serde_json::from_str(line) {
            Ok(v) => v,
            Err(_) => continue,
        };
        if v["record"] == "case" && v["case_id"] == case_id {
            return Ok(serde_json::from_value(v).ok());
        }
    }
    Ok(None)
}

fn fmt_value(v: &Value) -> String {
    match v {
        Value::Array(a) if a.len() > 12 => {
            let head: Vec<String> = a[..6].iter().map(|x| x.to_string()).collect();
            let tail: Vec<String> = a[a.len() - 3..].iter().map(|x| x.to_string()).collect();
            format!(
                "[{}, ... ({} entries) ..., {}]",
                head.join(", "),
                a.len(),
                tail.join(", ")
            )
        }
        other => other.to_string(),
    }
}

/// Human-readable dump of one record: values, witness, traces as tables.
pub fn explain_record(r: &CaseRecord) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "case      {}", r.case_id);
    let _ = writeln!(out, "suite     {}", r.suite);
    let _ = writeln!(out, "verdict   {:?}", r.verdict);
    let _ = writeln!(out, "kind      {}  params {}", r.kind, r.params);
    let _ = writeln!(out, "seed      {}  tol {:e}", r.seed, r.tol);
    for (name, v) in [("lhs", &r.lhs), ("rhs", &r.rhs)] {
        if let Some(v) = v {
            let _ = writeln!(out, "{name:<9} {v}");
        }
    }
    if let Some(g) = r.gap {
        let _ = writeln!(out, "gap       {g:e}");
    }
    let mut tables = Vec::new();
    if let Value::Object(m) = &r.detail {
        for (k, v) in m {
            match (k.as_str(), v) {
                ("trace", Value::Array(t)) => tables.push(("trace", t.clone())),
                ("prefix_mass" | "prefix_mass_at_rung_sizes", Value::Array(rows)) => {
                    tables.push(("prefix mass rows", rows.clone()))
                }
                ("audit", Value::Object(a)) => {
                    let _ = writeln!(
                        out,
                        "{k:<9} passed {}",
                        a.get("passed").map(fmt_value).unwrap_or_default()
                    );
                    let _ = writeln!(
                        out,
                        "          violations {}",
                        a.get("violations").map(fmt_value).unwrap_or_default()
                    );
                    let _ = writeln!(
                        out,
                        "          failures {}",
                        a.get("failures").map(fmt_value).unwrap_or_default()
                    );
                    if let Some(Value::Array(t)) = a.get("ii_failure_trace") {
                        tables.push(("(ii) failure trace", t.clone()));
                    }
                }
                _ => {
                    let _ = writeln!(out, "{k:<9} {}", fmt_value(v));
                }
            }
        }
    }
    for (title, rows) in tables {
        let _ = writeln!(out, "{title}:");
        for (i, row) in rows.iter().enumerate() {
            let _ = writeln!(out, "  {:>4}  {}", i + 1, row);
        }
    }
    out
}
