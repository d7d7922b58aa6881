//! Model registry: built-in ODE families, user model files, and derivative
//! bundles.
//!
//! Built-ins (see [`builtin`]):
//!
//! - `normalform`: ẏ = ν − y² + a·y³, the extended truncated normal form.
//! - `stommel1d`: ẏ = p − y(1 + m(1−y)²), the leading-order box-model
//!   equation in the fast-relaxation limit. The O(α⁻¹) remainder is dropped
//!   entirely here; the full α-dependence lives in `stommel2d`.
//! - `stommel2d`: the planar box model ẋ = −α(x−1) − x(1+m(x−y)²),
//!   ẏ = p − y(1+m(x−y)²), with p the primary and m the secondary parameter.
//! - `fraedrich`: Ṫ = a(−T⁴ + b·μ·T² − d·μ), an energy-balance temperature
//!   model with ice-albedo feedback. The derived parameters a, b, d are
//!   computed once from the physical constants at construction. (Some
//!   statements of this model carry an extra 1/c factor on the right-hand
//!   side; this implementation deliberately does not.)

use crate::exprlang::{self, EvalError, ExprAst, ParseError};
use crate::jets::{Jet2, JetError};
use serde::Serialize;
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("unknown built-in model `{0}`")]
    UnknownBuiltin(String),
    #[error("model file line {line}: {message}")]
    FileFormat { line: usize, message: String },
    #[error("model file line {line}: {source}")]
    FileExpr {
        line: usize,
        #[source]
        source: ParseError,
    },
    #[error(transparent)]
    Expr(#[from] ParseError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("constant `{0}` is not defined for this model")]
    NoSuchConstant(String),
    #[error("derivative bundle is not finite at ({x}, {mu})")]
    NonFiniteBundle { x: f64, mu: f64 },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// One-state, one-parameter family ẋ = f(x, μ).
#[derive(Debug, Clone)]
pub struct ScalarModel1P {
    pub name: String,
    pub state: String,
    pub param: String,
    pub constants: BTreeMap<String, f64>,
    pub param_default: f64,
    rhs: ExprAst,
}

/// Two-state, two-parameter family ẋ = F(x,y,μ₁,μ₂), ẏ = G(x,y,μ₁,μ₂). The
/// first parameter is the bifurcation parameter, the second the continuation
/// driver.
#[derive(Debug, Clone)]
pub struct PlanarModel2P {
    pub name: String,
    pub states: [String; 2],
    pub params: [String; 2],
    pub constants: BTreeMap<String, f64>,
    pub param_defaults: [f64; 2],
    rhs: [ExprAst; 2],
}

#[derive(Debug, Clone)]
pub enum ModelAny {
    Scalar(ScalarModel1P),
    Planar(PlanarModel2P),
}

/// All partial derivatives of f at a point through fourth order in the state,
/// populated from a single order-4 jet.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct DerivativeBundle {
    pub f: f64,
    pub f_x: f64,
    pub f_mu: f64,
    pub f_xx: f64,
    pub f_xmu: f64,
    pub f_mumu: f64,
    pub f_xxx: f64,
    pub f_xxxx: f64,
}

impl DerivativeBundle {
    pub fn from_jet(jet: &Jet2, x: f64, mu: f64) -> Result<DerivativeBundle, ModelError> {
        let get = |i, j| jet.partial(i, j).map_err(EvalError::from);
        let b = DerivativeBundle {
            f: get(0, 0)?,
            f_x: get(1, 0)?,
            f_mu: get(0, 1)?,
            f_xx: get(2, 0)?,
            f_xmu: get(1, 1)?,
            f_mumu: get(0, 2)?,
            f_xxx: get(3, 0)?,
            f_xxxx: get(4, 0)?,
        };
        let finite = [
            b.f, b.f_x, b.f_mu, b.f_xx, b.f_xmu, b.f_mumu, b.f_xxx, b.f_xxxx,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(ModelError::NonFiniteBundle { x, mu });
        }
        Ok(b)
    }
}

fn names(list: &[&str]) -> Vec<String> {
    list.iter().map(|s| s.to_string()).collect()
}

impl ScalarModel1P {
    pub fn from_expression(
        name: &str,
        state: &str,
        param: &str,
        constants: BTreeMap<String, f64>,
        param_default: f64,
        rhs_text: &str,
    ) -> Result<ScalarModel1P, ModelError> {
        let mut declared = vec![state.to_string(), param.to_string()];
        declared.extend(constants.keys().cloned());
        let rhs = exprlang::parse(rhs_text, &declared)?;
        Ok(ScalarModel1P {
            name: name.to_string(),
            state: state.to_string(),
            param: param.to_string(),
            constants,
            param_default,
            rhs,
        })
    }

    pub fn rhs(&self) -> &ExprAst {
        &self.rhs
    }

    fn const_slots(&self) -> impl Iterator<Item = f64> + '_ {
        self.constants.values().copied()
    }

    pub fn eval(&self, x: f64, mu: f64) -> Result<f64, EvalError> {
        let mut slots = Vec::with_capacity(2 + self.constants.len());
        slots.push(x);
        slots.push(mu);
        slots.extend(self.const_slots());
        self.rhs.eval_real(&slots)
    }

    /// Order-`order` jet of the right-hand side in (state, parameter).
    pub fn jet_at(&self, x: f64, mu: f64, order: usize) -> Result<Jet2, EvalError> {
        let mut slots = Vec::with_capacity(2 + self.constants.len());
        slots.push(Jet2::state_var(x, order));
        slots.push(Jet2::param_var(mu, order));
        slots.extend(self.const_slots().map(|c| Jet2::constant(c, order)));
        self.rhs.eval_jet(&slots)
    }

    /// f_x at a point (the stability multiplier when the point is an
    /// equilibrium).
    pub fn multiplier(&self, x: f64, mu: f64) -> Result<f64, EvalError> {
        let jet = self.jet_at(x, mu, 1)?;
        Ok(jet.partial(1, 0).map_err(EvalError::from)?)
    }

    pub fn bundle(&self, x: f64, mu: f64) -> Result<DerivativeBundle, ModelError> {
        let jet = self.jet_at(x, mu, 4)?;
        DerivativeBundle::from_jet(&jet, x, mu)
    }

    /// Replaces a constant, returning the modified model.
    pub fn with_constant(mut self, name: &str, value: f64) -> Result<ScalarModel1P, ModelError> {
        match self.constants.get_mut(name) {
            Some(slot) => {
                *slot = value;
                Ok(self)
            }
            None => Err(ModelError::NoSuchConstant(name.to_string())),
        }
    }
}

impl PlanarModel2P {
    pub fn from_expressions(
        name: &str,
        states: [&str; 2],
        params: [&str; 2],
        constants: BTreeMap<String, f64>,
        param_defaults: [f64; 2],
        rhs_f: &str,
        rhs_g: &str,
    ) -> Result<PlanarModel2P, ModelError> {
        let mut declared = vec![
            states[0].to_string(),
            states[1].to_string(),
            params[0].to_string(),
            params[1].to_string(),
        ];
        declared.extend(constants.keys().cloned());
        let f = exprlang::parse(rhs_f, &declared)?;
        let g = exprlang::parse(rhs_g, &declared)?;
        Ok(PlanarModel2P {
            name: name.to_string(),
            states: [states[0].to_string(), states[1].to_string()],
            params: [params[0].to_string(), params[1].to_string()],
            constants,
            param_defaults,
            rhs: [f, g],
        })
    }

    pub fn rhs(&self, field: usize) -> &ExprAst {
        &self.rhs[field]
    }

    pub fn eval(&self, state: [f64; 2], params: [f64; 2]) -> Result<[f64; 2], EvalError> {
        let mut slots = Vec::with_capacity(4 + self.constants.len());
        slots.extend_from_slice(&state);
        slots.extend_from_slice(&params);
        slots.extend(self.constants.values().copied());
        Ok([
            self.rhs[0].eval_real(&slots)?,
            self.rhs[1].eval_real(&slots)?,
        ])
    }

    /// Evaluates field `field` (0 = F, 1 = G) with caller-chosen jets for the
    /// two states and two parameters. Constants are appended internally. This
    /// is the primitive behind every mixed-partial query.
    pub fn eval_field_jets(
        &self,
        field: usize,
        x: &Jet2,
        y: &Jet2,
        p1: &Jet2,
        p2: &Jet2,
    ) -> Result<Jet2, EvalError> {
        let order = x.order();
        let mut slots = Vec::with_capacity(4 + self.constants.len());
        slots.push(x.clone());
        slots.push(y.clone());
        slots.push(p1.clone());
        slots.push(p2.clone());
        slots.extend(
            self.constants
                .values()
                .map(|&c| Jet2::constant(c, order)),
        );
        self.rhs[field].eval_jet(&slots)
    }

    /// Jet of a field in a chosen pair of directions; the remaining two
    /// slots are frozen at their point values.
    pub fn jet_pair(
        &self,
        field: usize,
        state: [f64; 2],
        params: [f64; 2],
        pair: VarPair,
        order: usize,
    ) -> Result<Jet2, EvalError> {
        let c = |v| Jet2::constant(v, order);
        let sv = |v| Jet2::state_var(v, order);
        let pv = |v| Jet2::param_var(v, order);
        let (x, y, p1, p2) = match pair {
            VarPair::XY => (sv(state[0]), pv(state[1]), c(params[0]), c(params[1])),
            VarPair::XP1 => (sv(state[0]), c(state[1]), pv(params[0]), c(params[1])),
            VarPair::YP1 => (c(state[0]), sv(state[1]), pv(params[0]), c(params[1])),
            VarPair::XP2 => (sv(state[0]), c(state[1]), c(params[0]), pv(params[1])),
            VarPair::YP2 => (c(state[0]), sv(state[1]), c(params[0]), pv(params[1])),
        };
        self.eval_field_jets(field, &x, &y, &p1, &p2)
    }

    /// Jacobian of (F, G) with respect to the states.
    pub fn jacobian(&self, state: [f64; 2], params: [f64; 2]) -> Result<[[f64; 2]; 2], EvalError> {
        let fx = self.jet_pair(0, state, params, VarPair::XY, 1)?;
        let gx = self.jet_pair(1, state, params, VarPair::XY, 1)?;
        Ok([
            [
                fx.partial(1, 0).map_err(EvalError::from)?,
                fx.partial(0, 1).map_err(EvalError::from)?,
            ],
            [
                gx.partial(1, 0).map_err(EvalError::from)?,
                gx.partial(0, 1).map_err(EvalError::from)?,
            ],
        ])
    }

    pub fn with_constant(mut self, name: &str, value: f64) -> Result<PlanarModel2P, ModelError> {
        match self.constants.get_mut(name) {
            Some(slot) => {
                *slot = value;
                Ok(self)
            }
            None => Err(ModelError::NoSuchConstant(name.to_string())),
        }
    }
}

/// Which pair of directions a planar jet differentiates in. The first letter
/// maps to the jet's state slot, the second to its parameter slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarPair {
    XY,
    XP1,
    YP1,
    XP2,
    YP2,
}

/// Physical constants of the temperature model and the derived coefficients
/// used in its right-hand side.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct FraedrichConstants {
    pub insolation: f64,
    pub stefan_boltzmann: f64,
    pub thermal_capacity: f64,
    pub emissivity: f64,
    pub albedo_a2: f64,
    pub albedo_b2: f64,
}

impl Default for FraedrichConstants {
    fn default() -> Self {
        FraedrichConstants {
            insolation: 1366.0,
            stefan_boltzmann: 5.6704e-8,
            thermal_capacity: 108.0,
            emissivity: 0.62,
            albedo_a2: 1.6927,
            albedo_b2: 1.690e-5,
        }
    }
}

impl FraedrichConstants {
    /// Derived (a, b, d): a = e_SA σ / c, b = b₂ I₀ / (4 e_SA σ),
    /// d = (a₂ − 1) I₀ / (4 e_SA σ).
    pub fn derived(&self) -> (f64, f64, f64) {
        let es = self.emissivity * self.stefan_boltzmann;
        let a = es / self.thermal_capacity;
        let b = self.albedo_b2 * self.insolation / (4.0 * es);
        let d = (self.albedo_a2 - 1.0) * self.insolation / (4.0 * es);
        (a, b, d)
    }
}

pub fn builtin(name: &str) -> Result<ModelAny, ModelError> {
    match name {
        "normalform" => {
            let mut consts = BTreeMap::new();
            consts.insert("a".to_string(), 0.0);
            Ok(ModelAny::Scalar(ScalarModel1P::from_expression(
                "normalform",
                "y",
                "nu",
                consts,
                0.0,
                "nu - y^2 + a*y^3",
            )?))
        }
        "stommel1d" => {
            let mut consts = BTreeMap::new();
            consts.insert("m".to_string(), 7.5);
            Ok(ModelAny::Scalar(ScalarModel1P::from_expression(
                "stommel1d",
                "y",
                "p",
                consts,
                1.0,
                "p - y*(1 + m*(1 - y)^2)",
            )?))
        }
        "stommel2d" => {
            let mut consts = BTreeMap::new();
            consts.insert("alpha".to_string(), 3600.0);
            Ok(ModelAny::Planar(PlanarModel2P::from_expressions(
                "stommel2d",
                ["x", "y"],
                ["p", "m"],
                consts,
                [1.0, 7.5],
                "-alpha*(x - 1) - x*(1 + m*(x - y)^2)",
                "p - y*(1 + m*(x - y)^2)",
            )?))
        }
        "fraedrich" => Ok(ModelAny::Scalar(fraedrich(FraedrichConstants::default())?)),
        other => Err(ModelError::UnknownBuiltin(other.to_string())),
    }
}

pub fn fraedrich(physical: FraedrichConstants) -> Result<ScalarModel1P, ModelError> {
    let (a, b, d) = physical.derived();
    let mut consts = BTreeMap::new();
    consts.insert("a".to_string(), a);
    consts.insert("b".to_string(), b);
    consts.insert("d".to_string(), d);
    ScalarModel1P::from_expression(
        "fraedrich",
        "T",
        "mu",
        consts,
        1.0,
        "a*(-T^4 + b*mu*T^2 - d*mu)",
    )
}

impl ModelAny {
    pub fn name(&self) -> &str {
        match self {
            ModelAny::Scalar(m) => &m.name,
            ModelAny::Planar(m) => &m.name,
        }
    }

    pub fn with_constant(self, name: &str, value: f64) -> Result<ModelAny, ModelError> {
        // Rebuilding the temperature model from a physical constant keeps the
        // derived coefficients consistent.
        if let ModelAny::Scalar(m) = &self {
            if m.name == "fraedrich" {
                let mut phys = FraedrichConstants::default();
                let updated = match name {
                    "I0" => {
                        phys.insolation = value;
                        true
                    }
                    "sigma" => {
                        phys.stefan_boltzmann = value;
                        true
                    }
                    "c" => {
                        phys.thermal_capacity = value;
                        true
                    }
                    "e_SA" => {
                        phys.emissivity = value;
                        true
                    }
                    "a2" => {
                        phys.albedo_a2 = value;
                        true
                    }
                    "b2" => {
                        phys.albedo_b2 = value;
                        true
                    }
                    _ => false,
                };
                if updated {
                    return Ok(ModelAny::Scalar(fraedrich(phys)?));
                }
            }
        }
        match self {
            ModelAny::Scalar(m) => Ok(ModelAny::Scalar(m.with_constant(name, value)?)),
            ModelAny::Planar(m) => {
                // Parameters with defaults may also be set by name.
                if m.params[0] == name {
                    let mut m = m;
                    m.param_defaults[0] = value;
                    return Ok(ModelAny::Planar(m));
                }
                if m.params[1] == name {
                    let mut m = m;
                    m.param_defaults[1] = value;
                    return Ok(ModelAny::Planar(m));
                }
                Ok(ModelAny::Planar(m.with_constant(name, value)?))
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Model files
//
// Plain-text format, one declaration per line:
//
//     # comment
//     states: y
//     params: p
//     consts: m=7.5
//     eq y = p - y*(1 + m*(1-y)^2)
//
// `consts:` accepts inline `name=value` pairs and further bare `name=value`
// lines until the next section. One `eq` line per declared state. One state
// and one parameter make a scalar model; two of each make a planar model.

pub fn load_model(text: &str) -> Result<ModelAny, ModelError> {
    let mut states: Vec<String> = Vec::new();
    let mut params: Vec<String> = Vec::new();
    let mut consts: BTreeMap<String, f64> = BTreeMap::new();
    let mut equations: Vec<(String, String, usize)> = Vec::new();
    let mut name = "user".to_string();
    let mut in_consts = false;

    let err = |line: usize, message: String| ModelError::FileFormat { line, message };

    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = match raw.find('#') {
            Some(k) => &raw[..k],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix("model:") {
            name = rest.trim().to_string();
            in_consts = false;
        } else if let Some(rest) = line.strip_prefix("states:") {
            states = split_names(rest);
            in_consts = false;
            if states.is_empty() {
                return Err(err(lineno, "states: declares no names".into()));
            }
        } else if let Some(rest) = line.strip_prefix("params:") {
            params = split_names(rest);
            in_consts = false;
            if params.is_empty() {
                return Err(err(lineno, "params: declares no names".into()));
            }
        } else if let Some(rest) = line.strip_prefix("consts:") {
            in_consts = true;
            parse_const_pairs(rest, lineno, &mut consts)?;
        } else if let Some(rest) = line.strip_prefix("eq ") {
            in_consts = false;
            let (lhs, rhs) = rest.split_once('=').ok_or_else(|| {
                err(lineno, "eq line needs the form `eq <state> = <expression>`".into())
            })?;
            equations.push((lhs.trim().to_string(), rhs.trim().to_string(), lineno));
        } else if in_consts && line.contains('=') {
            parse_const_pairs(line, lineno, &mut consts)?;
        } else {
            return Err(err(lineno, format!("unrecognised line `{line}`")));
        }
    }

    if states.is_empty() {
        return Err(err(0, "missing states: declaration".into()));
    }
    if params.is_empty() {
        return Err(err(0, "missing params: declaration".into()));
    }
    for s in &states {
        validate_name(s, 0)?;
    }
    for p in &params {
        validate_name(p, 0)?;
    }
    let mut all: Vec<&String> = states.iter().chain(&params).chain(consts.keys()).collect();
    all.sort();
    for w in all.windows(2) {
        if w[0] == w[1] {
            return Err(err(0, format!("name `{}` declared more than once", w[0])));
        }
    }

    let mut rhs_by_state: BTreeMap<String, (String, usize)> = BTreeMap::new();
    for (lhs, rhs, lineno) in equations {
        if !states.contains(&lhs) {
            return Err(err(lineno, format!("eq for `{lhs}` but `{lhs}` is not a declared state")));
        }
        if rhs_by_state.insert(lhs.clone(), (rhs, lineno)).is_some() {
            return Err(err(lineno, format!("duplicate eq for state `{lhs}`")));
        }
    }
    for s in &states {
        if !rhs_by_state.contains_key(s) {
            return Err(err(0, format!("missing eq line for state `{s}`")));
        }
    }

    match (states.len(), params.len()) {
        (1, 1) => {
            let (rhs, lineno) = &rhs_by_state[&states[0]];
            ScalarModel1P::from_expression(&name, &states[0], &params[0], consts, 0.0, rhs)
                .map(ModelAny::Scalar)
                .map_err(|e| at_line(e, *lineno))
        }
        (2, 2) => {
            let (rhs_f, line_f) = rhs_by_state[&states[0]].clone();
            let (rhs_g, line_g) = rhs_by_state[&states[1]].clone();
            // Parse each side standalone first so errors carry the right line.
            let mut declared = vec![
                states[0].clone(),
                states[1].clone(),
                params[0].clone(),
                params[1].clone(),
            ];
            declared.extend(consts.keys().cloned());
            exprlang::parse(&rhs_f, &declared)
                .map_err(|e| at_line(ModelError::Expr(e), line_f))?;
            exprlang::parse(&rhs_g, &declared)
                .map_err(|e| at_line(ModelError::Expr(e), line_g))?;
            PlanarModel2P::from_expressions(
                &name,
                [&states[0], &states[1]],
                [&params[0], &params[1]],
                consts,
                [0.0, 0.0],
                &rhs_f,
                &rhs_g,
            )
            .map(ModelAny::Planar)
        }
        (ns, np) => Err(err(
            0,
            format!("expected 1 state/1 param or 2 states/2 params, got {ns}/{np}"),
        )),
    }
}

fn at_line(e: ModelError, line: usize) -> ModelError {
    match e {
        ModelError::Expr(source) => ModelError::FileExpr { line, source },
        other => other,
    }
}

pub fn load_model_file(path: &std::path::Path) -> Result<ModelAny, ModelError> {
    let text = std::fs::read_to_string(path)?;
    load_model(&text)
}

fn split_names(rest: &str) -> Vec<String> {
    rest.split(|c: char| c.is_whitespace() || c == ',')
        .filter(|s| !s.is_empty())
        .map(|s| s.to_string())
        .collect()
}

fn validate_name(name: &str, line: usize) -> Result<(), ModelError> {
    let ok = !name.is_empty()
        && name
            .chars()
            .next()
            .map(|c| c.is_ascii_alphabetic() || c == '_')
            .unwrap_or(false)
        && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_');
    if !ok {
        return Err(ModelError::FileFormat {
            line,
            message: format!("`{name}` is not a valid identifier"),
        });
    }
    if exprlang::FUNCTION_NAMES.contains(&name) {
        return Err(ModelError::FileFormat {
            line,
            message: format!("`{name}` shadows a built-in function"),
        });
    }
    Ok(())
}

fn parse_const_pairs(
    text: &str,
    lineno: usize,
    consts: &mut BTreeMap<String, f64>,
) -> Result<(), ModelError> {
    for pair in text.split_whitespace() {
        let (k, v) = pair.split_once('=').ok_or_else(|| ModelError::FileFormat {
            line: lineno,
            message: format!("expected name=value, got `{pair}`"),
        })?;
        validate_name(k.trim(), lineno)?;
        let value: f64 = v.trim().parse().map_err(|_| ModelError::FileFormat {
            line: lineno,
            message: format!("`{v}` is not a number"),
        })?;
        if consts.insert(k.trim().to_string(), value).is_some() {
            return Err(ModelError::FileFormat {
                line: lineno,
                message: format!("duplicate constant `{k}`"),
            });
        }
    }
    Ok(())
}
