//! Hyperparameter search spaces.
//!
//! A [`SearchSpace`] is an ordered list of [`ParamSpec`]s parsed from a JSON
//! document. Parameters are evaluated in declaration order, which lets a bound
//! refer to an earlier parameter's sampled value (`"max_ref": "k2"`) and lets a
//! parameter be active only when an earlier categorical takes a given label
//! (`"active_when": {"param": "kernel", "equals": "poly"}`).
//!
//! Sampling is uniform over the declared ranges: linear parameters are uniform
//! on `[min, max]`, log parameters are uniform in log-space. Each configuration
//! consumes draws from the caller's generator in order, so the first `k`
//! configurations of a batch do not depend on the batch size.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Search-space documents shipped with the crate.
pub mod examples {
    /// LeNet on MNIST: learning rate, batch size and kernel counts.
    pub const LENET: &str = include_str!("../spaces/lenet.json");
    /// Three-layer cuda-convnet CNN.
    pub const CUDA_CONVNET: &str = include_str!("../spaces/cuda_convnet.json");
    /// Kernel regularized least squares with conditional kernel parameters.
    pub const KERNEL_LSQR: &str = include_str!("../spaces/kernel_lsqr.json");
    /// Random-features kernel approximation.
    pub const RANDOM_FEATURES: &str = include_str!("../spaces/random_features.json");
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamKind {
    Continuous,
    Integer,
    Categorical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    #[default]
    Linear,
    Log,
}

/// One end of a numeric range: a literal, or the value another parameter took
/// in the same configuration.
#[derive(Debug, Clone, PartialEq)]
pub enum Bound {
    Literal(f64),
    Ref(String),
}

/// Activation predicate: the parameter exists only when `param` is active and
/// equals one of `equals`.
#[derive(Debug, Clone, PartialEq)]
pub struct Activation {
    pub param: String,
    pub equals: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub kind: ParamKind,
    pub scale: Scale,
    pub lower: Option<Bound>,
    pub upper: Option<Bound>,
    pub choices: Vec<String>,
    pub active_when: Option<Activation>,
}

/// A value taken by one parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Int(i64),
    Real(f64),
    Label(String),
}

impl ParamValue {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            ParamValue::Int(v) => Some(*v as f64),
            ParamValue::Real(v) => Some(*v),
            ParamValue::Label(_) => None,
        }
    }

    pub fn as_label(&self) -> Option<&str> {
        match self {
            ParamValue::Label(l) => Some(l),
            _ => None,
        }
    }
}

impl fmt::Display for ParamValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamValue::Int(v) => write!(f, "{v}"),
            ParamValue::Real(v) => write!(f, "{v}"),
            ParamValue::Label(l) => f.write_str(l),
        }
    }
}

/// One hyperparameter assignment. Inactive conditional parameters are absent.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Configuration(BTreeMap<String, ParamValue>);

impl Configuration {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, name: &str) -> Option<&ParamValue> {
        self.0.get(name)
    }

    pub fn insert(&mut self, name: impl Into<String>, value: ParamValue) -> Option<ParamValue> {
        self.0.insert(name.into(), value)
    }

    pub fn remove(&mut self, name: &str) -> Option<ParamValue> {
        self.0.remove(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.0.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &ParamValue)> {
        self.0.iter().map(|(k, v)| (k.as_str(), v))
    }
}

impl FromIterator<(String, ParamValue)> for Configuration {
    fn from_iter<T: IntoIterator<Item = (String, ParamValue)>>(iter: T) -> Self {
        Self(iter.into_iter().collect())
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum SpaceError {
    #[error("schema violation at line {line}, column {column}: {message}")]
    Schema {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("empty space")]
    Empty,
    #[error("params[{index}] `{name}`: duplicate parameter name")]
    Duplicate { name: String, index: usize },
    #[error("params[{index}] `{name}`: cyclic reference to `{target}` (references must name an earlier parameter)")]
    Cycle {
        name: String,
        index: usize,
        target: String,
    },
    #[error("params[{index}] `{name}`: bad reference: {detail}")]
    Reference {
        name: String,
        index: usize,
        detail: String,
    },
    #[error("params[{index}] `{name}`: bad bounds: {detail}")]
    Bounds {
        name: String,
        index: usize,
        detail: String,
    },
    #[error("params[{index}] `{name}`: bad choices: {detail}")]
    Choices {
        name: String,
        index: usize,
        detail: String,
    },
    #[error("params[{index}] `{name}`: bad condition: {detail}")]
    Condition {
        name: String,
        index: usize,
        detail: String,
    },
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDocument {
    params: Vec<RawParam>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawParam {
    name: String,
    kind: ParamKind,
    scale: Option<Scale>,
    min: Option<f64>,
    max: Option<f64>,
    choices: Option<Vec<String>>,
    min_ref: Option<String>,
    max_ref: Option<String>,
    active_when: Option<RawActivation>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawActivation {
    param: String,
    equals: OneOrMany,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum OneOrMany {
    One(String),
    Many(Vec<String>),
}

/// Parse and validate a search-space document.
pub fn parse_space(document: &str) -> Result<SearchSpace, SpaceError> {
    let raw: RawDocument = serde_json::from_str(document).map_err(|e| SpaceError::Schema {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let mut specs = Vec::with_capacity(raw.params.len());
    for (index, p) in raw.params.into_iter().enumerate() {
        let err_bounds = |detail: &str| SpaceError::Bounds {
            name: p.name.clone(),
            index,
            detail: detail.to_string(),
        };
        let bound = |lit: Option<f64>, r: Option<String>, side: &str| match (lit, r) {
            (Some(_), Some(_)) => Err(err_bounds(&format!("both {side} and {side}_ref given"))),
            (Some(v), None) => Ok(Some(Bound::Literal(v))),
            (None, Some(r)) => Ok(Some(Bound::Ref(r))),
            (None, None) => Ok(None),
        };
        let lower = bound(p.min, p.min_ref, "min")?;
        let upper = bound(p.max, p.max_ref, "max")?;
        let active_when = p.active_when.map(|a| Activation {
            param: a.param,
            equals: match a.equals {
                OneOrMany::One(s) => vec![s],
                OneOrMany::Many(v) => v,
            },
        });
        specs.push(ParamSpec {
            name: p.name,
            kind: p.kind,
            scale: p.scale.unwrap_or_default(),
            lower,
            upper,
            choices: p.choices.unwrap_or_default(),
            active_when,
        });
    }
    SearchSpace::new(specs)
}

/// An immutable, validated search space.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchSpace {
    params: Vec<ParamSpec>,
    index: HashMap<String, usize>,
}

impl SearchSpace {
    pub fn new(params: Vec<ParamSpec>) -> Result<Self, SpaceError> {
        if params.is_empty() {
            return Err(SpaceError::Empty);
        }
        let mut index = HashMap::new();
        for (i, p) in params.iter().enumerate() {
            if index.insert(p.name.clone(), i).is_some() {
                return Err(SpaceError::Duplicate {
                    name: p.name.clone(),
                    index: i,
                });
            }
        }
        for (i, p) in params.iter().enumerate() {
            check_param(&params, &index, i, p)?;
        }
        Ok(Self { params, index })
    }

    pub fn params(&self) -> &[ParamSpec] {
        &self.params
    }

    pub fn param(&self, name: &str) -> Option<&ParamSpec> {
        self.index.get(name).map(|&i| &self.params[i])
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Draw `n` i.i.d. configurations.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Vec<Configuration> {
        (0..n).map(|_| self.sample_one(rng)).collect()
    }

    pub fn sample_one<R: Rng + ?Sized>(&self, rng: &mut R) -> Configuration {
        let mut config = Configuration::new();
        for p in &self.params {
            if !is_active(p, &config) {
                continue;
            }
            let value = match p.kind {
                ParamKind::Categorical => {
                    let i = rng.random_range(0..p.choices.len());
                    ParamValue::Label(p.choices[i].clone())
                }
                ParamKind::Continuous => {
                    let (lo, hi) = resolve_bounds(p, &config)
                        .expect("bounds of a validated space resolve during sampling");
                    ParamValue::Real(sample_real(rng, p.scale, lo, hi))
                }
                ParamKind::Integer => {
                    let (lo, hi) = resolve_bounds(p, &config)
                        .expect("bounds of a validated space resolve during sampling");
                    ParamValue::Int(sample_int(rng, p.scale, lo, hi))
                }
            };
            config.insert(p.name.clone(), value);
        }
        config
    }

    /// Check a configuration against the space. An empty list means valid.
    pub fn validate(&self, config: &Configuration) -> Vec<Violation> {
        let mut out = Vec::new();
        for (name, _) in config.iter() {
            if !self.index.contains_key(name) {
                out.push(Violation::new(name, ViolationKind::UnknownParameter));
            }
        }
        for p in &self.params {
            let active = is_active(p, config);
            let value = config.get(&p.name);
            let value = match (active, value) {
                (false, Some(_)) => {
                    out.push(Violation::new(&p.name, ViolationKind::InactiveParameterPresent));
                    continue;
                }
                (false, None) => continue,
                (true, None) => {
                    out.push(Violation::new(&p.name, ViolationKind::Missing));
                    continue;
                }
                (true, Some(v)) => v,
            };
            match p.kind {
                ParamKind::Categorical => match value.as_label() {
                    Some(l) if p.choices.iter().any(|c| c == l) => {}
                    Some(_) => out.push(Violation::new(&p.name, ViolationKind::NotAChoice)),
                    None => out.push(Violation::new(&p.name, ViolationKind::WrongType)),
                },
                ParamKind::Continuous | ParamKind::Integer => {
                    let Some(x) = value.as_f64() else {
                        out.push(Violation::new(&p.name, ViolationKind::WrongType));
                        continue;
                    };
                    if p.kind == ParamKind::Integer && x.fract() != 0.0 {
                        out.push(Violation::new(&p.name, ViolationKind::WrongType));
                        continue;
                    }
                    match resolve_bounds(p, config) {
                        Some((lo, hi)) if x >= lo && x <= hi && x.is_finite() => {}
                        Some(_) => out.push(Violation::new(&p.name, ViolationKind::OutOfBounds)),
                        None => out.push(Violation::new(&p.name, ViolationKind::UnresolvedBound)),
                    }
                }
            }
        }
        out
    }
}

/// Free-function form of [`SearchSpace::sample`].
pub fn sample<R: Rng + ?Sized>(space: &SearchSpace, rng: &mut R, n: usize) -> Vec<Configuration> {
    space.sample(rng, n)
}

/// Free-function form of [`SearchSpace::validate`].
pub fn validate(space: &SearchSpace, config: &Configuration) -> Vec<Violation> {
    space.validate(config)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub param: String,
    pub kind: ViolationKind,
}

impl Violation {
    fn new(param: &str, kind: ViolationKind) -> Self {
        Self {
            param: param.to_string(),
            kind,
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.param, self.kind)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationKind {
    OutOfBounds,
    InactiveParameterPresent,
    Missing,
    UnknownParameter,
    WrongType,
    NotAChoice,
    UnresolvedBound,
}

impl fmt::Display for ViolationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ViolationKind::OutOfBounds => "out of bounds",
            ViolationKind::InactiveParameterPresent => "inactive parameter present",
            ViolationKind::Missing => "missing active parameter",
            ViolationKind::UnknownParameter => "unknown parameter",
            ViolationKind::WrongType => "wrong value type",
            ViolationKind::NotAChoice => "not one of the declared choices",
            ViolationKind::UnresolvedBound => "bound reference does not resolve",
        })
    }
}

fn is_active(p: &ParamSpec, config: &Configuration) -> bool {
    match &p.active_when {
        None => true,
        Some(a) => match config.get(&a.param).and_then(ParamValue::as_label) {
            Some(label) => a.equals.iter().any(|e| e == label),
            None => false,
        },
    }
}

fn resolve(bound: &Bound, config: &Configuration) -> Option<f64> {
    match bound {
        Bound::Literal(v) => Some(*v),
        Bound::Ref(name) => config.get(name).and_then(ParamValue::as_f64),
    }
}

fn resolve_bounds(p: &ParamSpec, config: &Configuration) -> Option<(f64, f64)> {
    let lo = resolve(p.lower.as_ref()?, config)?;
    let hi = resolve(p.upper.as_ref()?, config)?;
    match p.kind {
        ParamKind::Integer => Some((lo.ceil(), hi.floor())),
        _ => Some((lo, hi)),
    }
}

fn sample_real<R: Rng + ?Sized>(rng: &mut R, scale: Scale, lo: f64, hi: f64) -> f64 {
    let u: f64 = rng.random();
    let x = match scale {
        Scale::Linear => lo + (hi - lo) * u,
        Scale::Log => (lo.ln() + (hi.ln() - lo.ln()) * u).exp(),
    };
    x.clamp(lo, hi)
}

fn sample_int<R: Rng + ?Sized>(rng: &mut R, scale: Scale, lo: f64, hi: f64) -> i64 {
    let (lo_i, hi_i) = (lo as i64, hi as i64);
    match scale {
        Scale::Linear => rng.random_range(lo_i..=hi_i),
        Scale::Log => {
            let x = sample_real(rng, Scale::Log, lo, hi);
            // round half up
            ((x + 0.5).floor() as i64).clamp(lo_i, hi_i)
        }
    }
}

fn check_param(
    params: &[ParamSpec],
    index: &HashMap<String, usize>,
    i: usize,
    p: &ParamSpec,
) -> Result<(), SpaceError> {
    let bounds = |detail: String| SpaceError::Bounds {
        name: p.name.clone(),
        index: i,
        detail,
    };

    if let Some(a) = &p.active_when {
        let cond = |detail: String| SpaceError::Condition {
            name: p.name.clone(),
            index: i,
            detail,
        };
        let Some(&j) = index.get(&a.param) else {
            return Err(cond(format!("unknown parameter `{}`", a.param)));
        };
        if j >= i {
            return Err(SpaceError::Cycle {
                name: p.name.clone(),
                index: i,
                target: a.param.clone(),
            });
        }
        let target = &params[j];
        if target.kind != ParamKind::Categorical {
            return Err(cond(format!("`{}` is not categorical", a.param)));
        }
        if a.equals.is_empty() {
            return Err(cond("no labels to compare against".into()));
        }
        if let Some(bad) = a.equals.iter().find(|l| !target.choices.contains(l)) {
            return Err(cond(format!("`{bad}` is not a choice of `{}`", a.param)));
        }
    }

    match p.kind {
        ParamKind::Categorical => {
            let choices = |detail: &str| SpaceError::Choices {
                name: p.name.clone(),
                index: i,
                detail: detail.to_string(),
            };
            if p.choices.is_empty() {
                return Err(choices("categorical parameter needs at least one choice"));
            }
            let mut seen = std::collections::HashSet::new();
            if !p.choices.iter().all(|c| seen.insert(c)) {
                return Err(choices("choices must be unique"));
            }
            if p.lower.is_some() || p.upper.is_some() {
                return Err(bounds("categorical parameters take no bounds".into()));
            }
            Ok(())
        }
        ParamKind::Continuous | ParamKind::Integer => {
            if !p.choices.is_empty() {
                return Err(SpaceError::Choices {
                    name: p.name.clone(),
                    index: i,
                    detail: "only categorical parameters take choices".into(),
                });
            }
            let (Some(lower), Some(upper)) = (&p.lower, &p.upper) else {
                return Err(bounds("numeric parameters need both a lower and an upper bound".into()));
            };
            // Literal extremes of each end, following references one level.
            let lo = literal_extreme(params, index, i, p, lower, Side::Lower)?;
            let hi = literal_extreme(params, index, i, p, upper, Side::Upper)?;
            if !(lo.is_finite() && hi.is_finite()) {
                return Err(bounds("bounds must be finite".into()));
            }
            if lo >= hi {
                return Err(bounds(format!("lower {lo} must be below upper {hi}")));
            }
            if p.scale == Scale::Log && lo <= 0.0 {
                return Err(bounds(format!("log scale requires a positive lower bound, got {lo}")));
            }
            if p.kind == ParamKind::Integer && lo.ceil() > hi.floor() {
                return Err(bounds("integer range contains no integer".into()));
            }
            Ok(())
        }
    }
}

#[derive(Clone, Copy)]
enum Side {
    Lower,
    Upper,
}

/// For a literal bound, its value. For a reference, the referenced parameter's
/// own bound that makes the range narrowest (its lower end for an upper
/// reference, its upper end for a lower reference), so that the checked
/// literal range is non-empty for every value the reference can take.
fn literal_extreme(
    params: &[ParamSpec],
    index: &HashMap<String, usize>,
    i: usize,
    p: &ParamSpec,
    bound: &Bound,
    side: Side,
) -> Result<f64, SpaceError> {
    let target = match bound {
        Bound::Literal(v) => return Ok(*v),
        Bound::Ref(t) => t,
    };
    let reference = |detail: String| SpaceError::Reference {
        name: p.name.clone(),
        index: i,
        detail,
    };
    let Some(&j) = index.get(target) else {
        return Err(reference(format!("unknown parameter `{target}`")));
    };
    if j >= i {
        return Err(SpaceError::Cycle {
            name: p.name.clone(),
            index: i,
            target: target.clone(),
        });
    }
    let t = &params[j];
    if t.kind != p.kind {
        return Err(reference(format!("`{target}` has a different kind")));
    }
    if t.active_when.is_some() {
        return Err(reference(format!("`{target}` is conditional")));
    }
    let other = match side {
        Side::Upper => t.lower.as_ref(),
        Side::Lower => t.upper.as_ref(),
    };
    match other {
        Some(Bound::Literal(v)) => Ok(*v),
        _ => Err(reference(format!(
            "`{target}` must have literal bounds to be referenced"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn lenet() -> SearchSpace {
        parse_space(examples::LENET).unwrap()
    }

    fn kernel() -> SearchSpace {
        parse_space(examples::KERNEL_LSQR).unwrap()
    }

    #[test]
    fn lenet_space_shape() {
        let space = lenet();
        assert_eq!(space.len(), 4);
        let lr = space.param("learning_rate").unwrap();
        assert_eq!(lr.scale, Scale::Log);
        assert_eq!(lr.lower, Some(Bound::Literal(1e-3)));
        assert_eq!(lr.upper, Some(Bound::Literal(1e-1)));
        assert_eq!(space.param("k1").unwrap().upper, Some(Bound::Ref("k2".into())));
        let names: Vec<_> = space.params().iter().map(|p| p.name.as_str()).collect();
        assert_eq!(names, ["learning_rate", "batch_size", "k2", "k1"]);
    }

    #[test]
    fn all_shipped_spaces_parse() {
        for doc in [
            examples::LENET,
            examples::CUDA_CONVNET,
            examples::KERNEL_LSQR,
            examples::RANDOM_FEATURES,
        ] {
            parse_space(doc).unwrap();
        }
    }

    #[test]
    fn empty_space_rejected() {
        assert_eq!(parse_space(r#"{"params": []}"#), Err(SpaceError::Empty));
    }

    #[test]
    fn schema_errors_carry_location() {
        let err = parse_space(r#"{"params": [{"name": "x", "kind": "bogus"}]}"#).unwrap_err();
        assert!(matches!(err, SpaceError::Schema { line: 1, .. }), "{err}");
        let err = parse_space(r#"{"params": [{"name": "x", "kind": "integer", "min": 0, "max": 3, "typo": 1}]}"#)
            .unwrap_err();
        assert!(matches!(err, SpaceError::Schema { .. }));
    }

    #[test]
    fn duplicate_names_rejected() {
        let doc = r#"{"params": [
            {"name": "a", "kind": "integer", "min": 0, "max": 3},
            {"name": "a", "kind": "integer", "min": 0, "max": 3}]}"#;
        assert_eq!(
            parse_space(doc),
            Err(SpaceError::Duplicate {
                name: "a".into(),
                index: 1
            })
        );
    }

    #[test]
    fn forward_and_self_references_are_cycles() {
        let doc = r#"{"params": [
            {"name": "a", "kind": "integer", "min": 0, "max_ref": "b"},
            {"name": "b", "kind": "integer", "min": 5, "max_ref": "a"}]}"#;
        assert!(matches!(parse_space(doc), Err(SpaceError::Cycle { index: 0, .. })));
        let doc = r#"{"params": [{"name": "a", "kind": "integer", "min": 0, "max_ref": "a"}]}"#;
        assert!(matches!(parse_space(doc), Err(SpaceError::Cycle { .. })));
    }

    #[test]
    fn bad_bounds_rejected() {
        let cases = [
            r#"{"params": [{"name": "a", "kind": "continuous", "min": 1, "max": 1}]}"#,
            r#"{"params": [{"name": "a", "kind": "continuous", "scale": "log", "min": 0, "max": 1}]}"#,
            r#"{"params": [{"name": "a", "kind": "integer", "min": 0.2, "max": 0.8}]}"#,
            r#"{"params": [{"name": "a", "kind": "continuous", "min": 0}]}"#,
            r#"{"params": [{"name": "a", "kind": "continuous", "min": 0, "max": 1, "min_ref": "b"}]}"#,
        ];
        for doc in cases {
            assert!(matches!(parse_space(doc), Err(SpaceError::Bounds { .. })), "{doc}");
        }
    }

    #[test]
    fn reference_checks() {
        // kind mismatch
        let doc = r#"{"params": [
            {"name": "a", "kind": "continuous", "min": 10, "max": 20},
            {"name": "b", "kind": "integer", "min": 0, "max_ref": "a"}]}"#;
        assert!(matches!(parse_space(doc), Err(SpaceError::Reference { index: 1, .. })));
        // referenced minimum below own minimum
        let doc = r#"{"params": [
            {"name": "a", "kind": "integer", "min": 1, "max": 20},
            {"name": "b", "kind": "integer", "min": 5, "max_ref": "a"}]}"#;
        assert!(matches!(parse_space(doc), Err(SpaceError::Bounds { index: 1, .. })));
        let doc = r#"{"params": [{"name": "b", "kind": "integer", "min": 5, "max_ref": "zzz"}]}"#;
        assert!(matches!(parse_space(doc), Err(SpaceError::Reference { .. })));
    }

    #[test]
    fn categorical_checks() {
        let doc = r#"{"params": [{"name": "c", "kind": "categorical", "choices": []}]}"#;
        assert!(matches!(parse_space(doc), Err(SpaceError::Choices { .. })));
        let doc = r#"{"params": [{"name": "c", "kind": "categorical", "choices": ["x", "x"]}]}"#;
        assert!(matches!(parse_space(doc), Err(SpaceError::Choices { .. })));
    }

    #[test]
    fn condition_checks() {
        let doc = r#"{"params": [
            {"name": "a", "kind": "integer", "min": 0, "max": 3},
            {"name": "b", "kind": "integer", "min": 0, "max": 3, "active_when": {"param": "a", "equals": "1"}}]}"#;
        assert!(matches!(parse_space(doc), Err(SpaceError::Condition { .. })));
        let doc = r#"{"params": [
            {"name": "k", "kind": "categorical", "choices": ["x"]},
            {"name": "b", "kind": "integer", "min": 0, "max": 3, "active_when": {"param": "k", "equals": "y"}}]}"#;
        assert!(matches!(parse_space(doc), Err(SpaceError::Condition { .. })));
    }

    #[test]
    fn lenet_samples_respect_reference_bound() {
        let space = lenet();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let configs = space.sample(&mut rng, 81);
        assert_eq!(configs.len(), 81);
        for c in &configs {
            let lr = c.get("learning_rate").unwrap().as_f64().unwrap();
            assert!((1e-3..=1e-1).contains(&lr));
            let k1 = c.get("k1").unwrap().as_f64().unwrap();
            let k2 = c.get("k2").unwrap().as_f64().unwrap();
            assert!(5.0 <= k1 && k1 <= k2 && k2 <= 60.0, "{c:?}");
            let bs = c.get("batch_size").unwrap();
            assert!(matches!(bs, ParamValue::Int(10..=1000)));
            assert!(space.validate(c).is_empty());
        }
    }

    #[test]
    fn conditional_parameters_only_when_active() {
        let space = kernel();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut saw_degree = false;
        for c in space.sample(&mut rng, 1000) {
            let kernel = c.get("kernel").unwrap().as_label().unwrap().to_string();
            assert_eq!(c.contains("degree"), kernel == "poly");
            assert_eq!(c.contains("coef0"), kernel == "poly" || kernel == "sigmoid");
            saw_degree |= c.contains("degree");
            assert!(space.validate(&c).is_empty());
        }
        assert!(saw_degree);
    }

    #[test]
    fn single_choice_space_is_constant() {
        let space =
            parse_space(r#"{"params": [{"name": "c", "kind": "categorical", "choices": ["only"]}]}"#).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let configs = space.sample(&mut rng, 3);
        assert_eq!(configs.len(), 3);
        assert!(configs.iter().all(|c| c == &configs[0]));
    }

    #[test]
    fn validate_reports_violations() {
        let space = lenet();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut c = space.sample_one(&mut rng);
        assert!(space.validate(&c).is_empty());
        c.insert("learning_rate", ParamValue::Real(10.0));
        let v = space.validate(&c);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].kind, ViolationKind::OutOfBounds);
        assert_eq!(v[0].kind.to_string(), "out of bounds");

        // k1 above the k2 it references
        let mut c = space.sample_one(&mut rng);
        let k2 = c.get("k2").unwrap().as_f64().unwrap() as i64;
        c.insert("k1", ParamValue::Int(k2 + 1));
        assert_eq!(space.validate(&c)[0].kind, ViolationKind::OutOfBounds);

        let mut c = space.sample_one(&mut rng);
        c.remove("k2");
        let kinds: Vec<_> = space.validate(&c).into_iter().map(|v| v.kind).collect();
        assert_eq!(kinds, [ViolationKind::Missing, ViolationKind::UnresolvedBound]);
    }

    #[test]
    fn validate_flags_inactive_parameter() {
        let space = kernel();
        let c: Configuration = [
            ("preprocessor", ParamValue::Label("normalize".into())),
            ("kernel", ParamValue::Label("rbf".into())),
            ("C", ParamValue::Real(1.0)),
            ("gamma", ParamValue::Real(0.1)),
            ("degree", ParamValue::Int(3)),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
        let v = space.validate(&c);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].param, "degree");
        assert_eq!(v[0].kind.to_string(), "inactive parameter present");
    }

    #[test]
    fn integer_log_rounds_half_up() {
        // With [1, 3] on a log scale, values in [1, 1.5) round to 1, so the
        // frequency of 1 is ln(1.5)/ln(3).
        let space = parse_space(
            r#"{"params": [{"name": "i", "kind": "integer", "scale": "log", "min": 1, "max": 3}]}"#,
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 200_000;
        let ones = space
            .sample(&mut rng, n)
            .iter()
            .filter(|c| c.get("i") == Some(&ParamValue::Int(1)))
            .count();
        let expected = 1.5f64.ln() / 3f64.ln();
        assert!((ones as f64 / n as f64 - expected).abs() < 0.005);
    }

    fn ks_uniform(mut xs: Vec<f64>) -> f64 {
        xs.sort_by(f64::total_cmp);
        let n = xs.len() as f64;
        xs.iter()
            .enumerate()
            .map(|(i, &x)| {
                let lo = (x - i as f64 / n).abs();
                let hi = ((i + 1) as f64 / n - x).abs();
                lo.max(hi)
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn log_scale_marginal_is_log_uniform() {
        let space = lenet();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let (a, b) = (1e-3f64.ln(), 1e-1f64.ln());
        let xs: Vec<f64> = space
            .sample(&mut rng, 100_000)
            .iter()
            .map(|c| (c.get("learning_rate").unwrap().as_f64().unwrap().ln() - a) / (b - a))
            .collect();
        assert!(ks_uniform(xs) < 0.02);
    }

    #[test]
    fn configuration_json_round_trip() {
        let space = kernel();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for c in space.sample(&mut rng, 50) {
            let text = serde_json::to_string(&c).unwrap();
            let back: Configuration = serde_json::from_str(&text).unwrap();
            assert_eq!(back, c);
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn sampling_is_deterministic_and_prefix_stable(seed in any::<u64>(), n in 1usize..60, k in 1usize..60) {
                let k = k.min(n);
                for doc in [examples::LENET, examples::KERNEL_LSQR, examples::CUDA_CONVNET] {
                    let space = parse_space(doc).unwrap();
                    let a = space.sample(&mut ChaCha8Rng::seed_from_u64(seed), n);
                    let b = space.sample(&mut ChaCha8Rng::seed_from_u64(seed), n);
                    let prefix = space.sample(&mut ChaCha8Rng::seed_from_u64(seed), k);
                    prop_assert_eq!(&a, &b);
                    prop_assert_eq!(&a[..k], &prefix[..]);
                    for c in &a {
                        prop_assert!(space.validate(c).is_empty());
                    }
                }
            }
        }
    }
}
