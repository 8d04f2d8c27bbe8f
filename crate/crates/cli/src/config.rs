//! JSON experiment configuration: parsing, validation, canonical emission and
//! conversion into core objects.

use std::fmt;

use curvehedge_core::market::same_maturity;
use curvehedge_core::nested::{NestedConfig, MIN_INNER_PATHS};
use curvehedge_core::vol::VolFamily;
use curvehedge_core::{BondCurve, DiscreteMeasure, InstrumentSpec, Payoff, TenorStructure, VolSurface};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub market: MarketConfig,
    pub vol: VolConfig,
    pub instrument: InstrumentConfig,
    #[serde(default)]
    pub run: RunConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketConfig {
    /// Valuation date of the curve.
    #[serde(default)]
    pub time: f64,
    /// `(maturity, zero-coupon price)` nodes.
    pub curve: Vec<(f64, f64)>,
    /// Flat short rate used only to report cash values at later dates.
    #[serde(default)]
    pub short_rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VolKind {
    Constant,
    HoLee,
    Vasicek,
    Piecewise,
    Zero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VolConfig {
    pub family: VolKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub factors: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_reversion: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nodes: Option<Vec<(f64, Vec<f64>)>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KindConfig {
    BondCall,
    Caplet,
    Swaption,
    Exchange,
    Generic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PayoffConfig {
    Call { strike: f64 },
    Put { strike: f64 },
    Affine { slope: f64, intercept: f64 },
    CallSpread { lower: f64, upper: f64 },
}

impl From<PayoffConfig> for Payoff {
    fn from(p: PayoffConfig) -> Self {
        match p {
            PayoffConfig::Call { strike } => Payoff::Call { strike },
            PayoffConfig::Put { strike } => Payoff::Put { strike },
            PayoffConfig::Affine { slope, intercept } => Payoff::Affine { slope, intercept },
            PayoffConfig::CallSpread { lower, upper } => Payoff::CallSpread { lower, upper },
        }
    }
}

/// Instrument fields; which ones are required depends on `kind`:
///
/// * `bond-call`: `exercise`, `maturity`, `strike`
/// * `caplet`: `exercise`, `settlement`, `rate`
/// * `swaption`: `exercise`, `tenor` (`T_i < ... < T_j`), `rate`
/// * `exchange`: `mu`, `nu`, `exercise`, `strike`
/// * `generic`: `mu`, `nu`, `exercise`, `settlement`, `payoff`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstrumentConfig {
    pub kind: KindConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exercise: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub maturity: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub settlement: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strike: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tenor: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<Vec<(f64, f64)>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu: Option<Vec<(f64, f64)>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payoff: Option<PayoffConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StrategyConfig {
    Delta,
    ClarkOcone,
    Instrument,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WorldConfig {
    Curve,
    Gbm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub paths: usize,
    pub inner_paths: usize,
    pub steps: Vec<usize>,
    pub seed: u64,
    pub out: String,
    pub strategy: StrategyConfig,
    pub world: WorldConfig,
    pub rebalance_every: usize,
    /// Dates for `hedge`; empty means the valuation date only.
    pub hedge_dates: Vec<f64>,
    /// Outer and inner budgets of the representation check in `verify`.
    pub residual_paths: usize,
    pub residual_inner_paths: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            paths: 10_000,
            inner_paths: 10_000,
            steps: vec![25, 50, 100, 200],
            seed: 1,
            out: "out".into(),
            strategy: StrategyConfig::ClarkOcone,
            world: WorldConfig::Curve,
            rebalance_every: 1,
            hedge_dates: Vec::new(),
            residual_paths: 1000,
            residual_inner_paths: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ConfigError {
    Syntax { line: usize, column: usize, message: String },
    Invalid(Vec<String>),
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Syntax { line, column, message } => {
                write!(f, "config syntax error at line {line}, column {column}: {message}")
            }
            ConfigError::Invalid(list) => {
                writeln!(f, "config has {} violation(s):", list.len())?;
                for v in list {
                    writeln!(f, "  - {v}")?;
                }
                Ok(())
            }
        }
    }
}

impl std::error::Error for ConfigError {}

pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| ConfigError::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let violations = cfg.violations();
    if violations.is_empty() {
        Ok(cfg)
    } else {
        Err(ConfigError::Invalid(violations))
    }
}

/// Canonical JSON text (defaults filled, fixed key order, trailing newline).
pub fn emit(cfg: &ExperimentConfig) -> String {
    let mut s = serde_json::to_string_pretty(cfg).expect("config serializes");
    s.push('\n');
    s
}

fn finite(xs: &[f64]) -> bool {
    xs.iter().all(|x| x.is_finite())
}

impl ExperimentConfig {
    /// Every semantic violation, in a stable order.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        self.market_violations(&mut v);
        self.vol_violations(&mut v);
        self.instrument_violations(&mut v);
        self.run_violations(&mut v);
        v
    }

    fn market_violations(&self, v: &mut Vec<String>) {
        let m = &self.market;
        if !m.time.is_finite() || m.time < 0.0 {
            v.push(format!("market.time must be finite and >= 0, got {}", m.time));
        }
        if !m.short_rate.is_finite() {
            v.push("market.short_rate must be finite".into());
        }
        if m.curve.is_empty() {
            v.push("market.curve must list at least one (maturity, price) node".into());
        }
        for (i, &(y, p)) in m.curve.iter().enumerate() {
            if !(y.is_finite() && y >= m.time) {
                v.push(format!("market.curve[{i}]: maturity {y} must be finite and >= market.time"));
            }
            if !(p.is_finite() && p > 0.0) {
                v.push(format!("market.curve[{i}]: price {p} must be finite and > 0"));
            }
        }
        if m.curve.windows(2).any(|w| w[1].0 <= w[0].0) {
            v.push("market.curve maturities must be strictly increasing".into());
        }
    }

    fn vol_violations(&self, v: &mut Vec<String>) {
        let c = &self.vol;
        let need = |name: &str, field: &Option<Vec<f64>>, v: &mut Vec<String>| -> Option<usize> {
            match field {
                None => {
                    v.push(format!("vol.{name} is required for family {:?}", c.family));
                    None
                }
                Some(x) if x.is_empty() || !finite(x) => {
                    v.push(format!("vol.{name} must be a nonempty list of finite numbers"));
                    None
                }
                Some(x) => Some(x.len()),
            }
        };
        let d = match c.family {
            VolKind::Constant => need("values", &c.values, v),
            VolKind::HoLee => need("beta", &c.beta, v),
            VolKind::Vasicek => {
                let a = need("sigma", &c.sigma, v);
                let b = need("mean_reversion", &c.mean_reversion, v);
                if let Some(mr) = &c.mean_reversion {
                    if mr.iter().any(|x| *x < 0.0) {
                        v.push("vol.mean_reversion must be >= 0".into());
                    }
                }
                match (a, b) {
                    (Some(a), Some(b)) if a != b => {
                        v.push(format!("vol.sigma has {a} factors but vol.mean_reversion has {b}"));
                        None
                    }
                    (a, _) => a,
                }
            }
            VolKind::Piecewise => match &c.nodes {
                None => {
                    v.push("vol.nodes is required for family piecewise".into());
                    None
                }
                Some(nodes) => {
                    let d = nodes.first().map(|n| n.1.len());
                    if nodes.is_empty() || d == Some(0) {
                        v.push("vol.nodes must be nonempty with at least one factor".into());
                    }
                    if nodes.iter().any(|n| Some(n.1.len()) != d) {
                        v.push("vol.nodes must share one factor count".into());
                    }
                    if nodes.windows(2).any(|w| w[1].0 <= w[0].0) {
                        v.push("vol.nodes maturities must be strictly increasing".into());
                    }
                    if nodes.iter().any(|n| !n.0.is_finite() || !finite(&n.1)) {
                        v.push("vol.nodes must be finite".into());
                    }
                    d
                }
            },
            VolKind::Zero => match c.factors {
                Some(0) | None => {
                    v.push("vol.factors must be >= 1 for family zero".into());
                    None
                }
                d => d,
            },
        };
        let fields: [(&str, bool, bool); 5] = [
            ("values", c.values.is_some(), c.family == VolKind::Constant),
            ("beta", c.beta.is_some(), c.family == VolKind::HoLee),
            ("sigma", c.sigma.is_some(), c.family == VolKind::Vasicek),
            ("mean_reversion", c.mean_reversion.is_some(), c.family == VolKind::Vasicek),
            ("nodes", c.nodes.is_some(), c.family == VolKind::Piecewise),
        ];
        for (name, present, allowed) in fields {
            if present && !allowed {
                v.push(format!("vol.{name} does not apply to family {:?}", c.family));
            }
        }
        if let (Some(declared), Some(d)) = (c.factors, d) {
            if declared != d {
                v.push(format!("vol.factors is {declared} but the parameters have {d} factor(s)"));
            }
        }
    }

    fn instrument_violations(&self, v: &mut Vec<String>) {
        let c = &self.instrument;
        let kind = c.kind;
        let (required, forbidden): (&[&str], &[&str]) = match kind {
            KindConfig::BondCall => (
                &["exercise", "maturity", "strike"],
                &["settlement", "rate", "tenor", "mu", "nu", "payoff"],
            ),
            KindConfig::Caplet => (
                &["exercise", "settlement", "rate"],
                &["maturity", "strike", "tenor", "mu", "nu", "payoff"],
            ),
            KindConfig::Swaption => (
                &["exercise", "tenor", "rate"],
                &["maturity", "settlement", "strike", "mu", "nu", "payoff"],
            ),
            KindConfig::Exchange => (
                &["exercise", "mu", "nu", "strike"],
                &["maturity", "settlement", "rate", "tenor", "payoff"],
            ),
            KindConfig::Generic => (
                &["exercise", "settlement", "mu", "nu", "payoff"],
                &["maturity", "strike", "rate", "tenor"],
            ),
        };
        let present = |name: &str| match name {
            "exercise" => c.exercise.is_some(),
            "maturity" => c.maturity.is_some(),
            "settlement" => c.settlement.is_some(),
            "strike" => c.strike.is_some(),
            "rate" => c.rate.is_some(),
            "tenor" => c.tenor.is_some(),
            "mu" => c.mu.is_some(),
            "nu" => c.nu.is_some(),
            "payoff" => c.payoff.is_some(),
            _ => unreachable!(),
        };
        let before = v.len();
        for name in required {
            if !present(name) {
                v.push(format!("instrument.{name} is required for kind {kind:?}"));
            }
        }
        for name in forbidden {
            if present(name) {
                v.push(format!("instrument.{name} does not apply to kind {kind:?}"));
            }
        }
        if let Some(tenor) = &c.tenor {
            if tenor.len() < 2 {
                v.push("instrument.tenor needs at least two dates T_i < ... < T_j".into());
            } else if tenor.windows(2).any(|w| w[1] <= w[0]) {
                v.push(format!(
                    "instrument.tenor violates the tenor ordering T_i < ... < T_j: {tenor:?}"
                ));
            }
            if let (Some(t), Some(first)) = (c.exercise, tenor.first()) {
                if *first < t {
                    v.push(format!("instrument.tenor starts at {first}, before exercise {t}"));
                }
            }
        }
        for (name, x) in [
            ("exercise", c.exercise),
            ("maturity", c.maturity),
            ("settlement", c.settlement),
            ("strike", c.strike),
            ("rate", c.rate),
        ] {
            if let Some(x) = x {
                if !x.is_finite() {
                    v.push(format!("instrument.{name} must be finite"));
                }
            }
        }
        if let Some(t) = c.exercise {
            if t < self.market.time {
                v.push(format!("instrument.exercise {t} precedes market.time {}", self.market.time));
            }
        }
        if v.len() > before {
            return;
        }
        // Referenced maturities must be curve nodes.
        let nodes: Vec<f64> = self.market.curve.iter().map(|n| n.0).collect();
        let mut referenced: Vec<(String, f64)> = Vec::new();
        match kind {
            KindConfig::BondCall => {
                referenced.push(("exercise".into(), c.exercise.unwrap()));
                referenced.push(("maturity".into(), c.maturity.unwrap()));
            }
            KindConfig::Caplet => {
                referenced.push(("exercise".into(), c.exercise.unwrap()));
                referenced.push(("settlement".into(), c.settlement.unwrap()));
            }
            KindConfig::Swaption => {
                for (i, &y) in c.tenor.as_ref().unwrap().iter().enumerate() {
                    referenced.push((format!("tenor[{i}]"), y));
                }
            }
            KindConfig::Exchange | KindConfig::Generic => {
                for (name, atoms) in [("mu", &c.mu), ("nu", &c.nu)] {
                    for (i, &(y, _)) in atoms.as_ref().unwrap().iter().enumerate() {
                        referenced.push((format!("{name}[{i}]"), y));
                    }
                }
            }
        }
        for (name, y) in referenced {
            if !nodes.iter().any(|&n| same_maturity(n, y)) {
                v.push(format!("instrument.{name}: maturity {y} is not a node of market.curve"));
            }
        }
        if v.len() > before {
            return;
        }
        if let Err(e) = self.instrument() {
            v.push(format!("instrument: {e}"));
        }
    }

    fn run_violations(&self, v: &mut Vec<String>) {
        let r = &self.run;
        if r.paths < 2 {
            v.push("run.paths must be >= 2".into());
        }
        if r.inner_paths < MIN_INNER_PATHS {
            v.push(format!("run.inner_paths must be >= {MIN_INNER_PATHS}"));
        }
        if r.residual_inner_paths < MIN_INNER_PATHS {
            v.push(format!("run.residual_inner_paths must be >= {MIN_INNER_PATHS}"));
        }
        if r.residual_paths < 2 {
            v.push("run.residual_paths must be >= 2".into());
        }
        if r.steps.is_empty() || r.steps.contains(&0) || r.steps.windows(2).any(|w| w[1] <= w[0]) {
            v.push("run.steps must be a nonempty strictly increasing list of positive integers".into());
        }
        if r.rebalance_every == 0 {
            v.push("run.rebalance_every must be >= 1".into());
        }
        if r.out.is_empty() {
            v.push("run.out must name a directory".into());
        }
        if let Some(t) = self.instrument.exercise {
            for (i, &d) in r.hedge_dates.iter().enumerate() {
                if !(d >= self.market.time && d <= t) {
                    v.push(format!("run.hedge_dates[{i}] = {d} is outside [market.time, exercise]"));
                }
            }
        }
        if r.world == WorldConfig::Gbm && r.strategy != StrategyConfig::Delta {
            v.push("run.world gbm hedges with the delta strategy only".into());
        }
    }

    pub fn bond_curve(&self) -> anyhow::Result<BondCurve> {
        Ok(BondCurve::new(self.market.time, self.market.curve.clone())?)
    }

    pub fn vol_surface(&self) -> anyhow::Result<VolSurface> {
        let c = &self.vol;
        let family = match c.family {
            VolKind::Constant => VolFamily::Constant(c.values.clone().unwrap_or_default()),
            VolKind::HoLee => VolFamily::HoLee(c.beta.clone().unwrap_or_default()),
            VolKind::Vasicek => VolFamily::Vasicek {
                sigma: c.sigma.clone().unwrap_or_default(),
                mean_reversion: c.mean_reversion.clone().unwrap_or_default(),
            },
            VolKind::Piecewise => VolFamily::PiecewiseMaturity(c.nodes.clone().unwrap_or_default()),
            VolKind::Zero => return Ok(VolSurface::zero(c.factors.unwrap_or(1))),
        };
        Ok(VolSurface::new(family)?)
    }

    pub fn instrument(&self) -> anyhow::Result<InstrumentSpec> {
        let c = &self.instrument;
        let missing = |name: &str| anyhow::anyhow!("instrument.{name} missing");
        let exercise = c.exercise.ok_or_else(|| missing("exercise"))?;
        let measure = |name: &str, atoms: &Option<Vec<(f64, f64)>>| -> anyhow::Result<DiscreteMeasure> {
            Ok(DiscreteMeasure::from_pairs(atoms.as_deref().ok_or_else(|| missing(name))?)?)
        };
        let spec = match c.kind {
            KindConfig::BondCall => InstrumentSpec::bond_call(
                exercise,
                c.maturity.ok_or_else(|| missing("maturity"))?,
                c.strike.ok_or_else(|| missing("strike"))?,
            )?,
            KindConfig::Caplet => InstrumentSpec::caplet(
                exercise,
                c.settlement.ok_or_else(|| missing("settlement"))?,
                c.rate.ok_or_else(|| missing("rate"))?,
            )?,
            KindConfig::Swaption => {
                let tenor = c.tenor.clone().ok_or_else(|| missing("tenor"))?;
                let end = *tenor.last().unwrap_or(&exercise);
                InstrumentSpec::swaption(
                    TenorStructure::new(tenor, exercise, end.max(exercise))?,
                    c.rate.ok_or_else(|| missing("rate"))?,
                )?
            }
            KindConfig::Exchange => InstrumentSpec::exchange(
                measure("mu", &c.mu)?,
                measure("nu", &c.nu)?,
                exercise,
                c.strike.ok_or_else(|| missing("strike"))?,
            )?,
            KindConfig::Generic => InstrumentSpec::generic(
                measure("mu", &c.mu)?,
                measure("nu", &c.nu)?,
                exercise,
                c.settlement.ok_or_else(|| missing("settlement"))?,
                c.payoff.ok_or_else(|| missing("payoff"))?.into(),
            )?,
        };
        Ok(spec)
    }

    pub fn nested(&self) -> NestedConfig {
        NestedConfig::with_inner_paths(self.run.inner_paths)
    }
}
