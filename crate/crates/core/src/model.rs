//! Ross-Macdonald dynamics with fumigation as the single control input.
//!
//! State `x1` is the proportion of infected mosquitoes and `x2` the proportion
//! of infected humans:
//!
//! ```text
//! dx1/dt = A_m x2 (1 - x1) - u x1
//! dx2/dt = A_h x1 (1 - x2) - gamma x2
//! ```
//!
//! All rates are per day. Nothing here converts units.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, invalid, Error, Result};

/// Tolerance for checking `A_m = a p_m` and `A_h = a p_h N_m/N_h` when the raw
/// epidemiological fields are supplied.
const PROVENANCE_TOL: f64 = 1e-12;

/// Epidemiological rates and fumigation bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawModelParams", into = "RawModelParams")]
pub struct ModelParams {
    pub a_m: f64,
    pub a_h: f64,
    pub gamma: f64,
    pub u_min: f64,
    pub u_max: f64,
    pub raw: Option<RawEpidemiology>,
}

/// Optional provenance of `A_m` and `A_h`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RawEpidemiology {
    /// Biting rate.
    pub a: f64,
    pub p_m: f64,
    pub p_h: f64,
    /// Ratio of female mosquitoes to humans.
    pub mosquito_human_ratio: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModelParams {
    #[serde(rename = "A_m")]
    a_m: f64,
    #[serde(rename = "A_h")]
    a_h: f64,
    gamma: f64,
    u_min: f64,
    u_max: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    a: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    p_m: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    p_h: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mosquito_human_ratio: Option<f64>,
}

impl TryFrom<RawModelParams> for ModelParams {
    type Error = Error;

    fn try_from(r: RawModelParams) -> Result<Self> {
        let raw = match (r.a, r.p_m, r.p_h, r.mosquito_human_ratio) {
            (None, None, None, None) => None,
            (Some(a), Some(p_m), Some(p_h), Some(mosquito_human_ratio)) => Some(RawEpidemiology {
                a,
                p_m,
                p_h,
                mosquito_human_ratio,
            }),
            _ => {
                return Err(invalid(
                    "raw fields a, p_m, p_h, mosquito_human_ratio must be given together",
                ))
            }
        };
        let mut params = ModelParams::new(r.a_m, r.a_h, r.gamma, r.u_min, r.u_max)?;
        if let Some(raw) = raw {
            params = params.with_raw(raw)?;
        }
        Ok(params)
    }
}

impl From<ModelParams> for RawModelParams {
    fn from(p: ModelParams) -> Self {
        RawModelParams {
            a_m: p.a_m,
            a_h: p.a_h,
            gamma: p.gamma,
            u_min: p.u_min,
            u_max: p.u_max,
            a: p.raw.map(|r| r.a),
            p_m: p.raw.map(|r| r.p_m),
            p_h: p.raw.map(|r| r.p_h),
            mosquito_human_ratio: p.raw.map(|r| r.mosquito_human_ratio),
        }
    }
}

impl ModelParams {
    pub fn new(a_m: f64, a_h: f64, gamma: f64, u_min: f64, u_max: f64) -> Result<Self> {
        ensure_finite("model parameters", &[a_m, a_h, gamma, u_min, u_max])?;
        if a_m < 0.0 || a_h < 0.0 || gamma < 0.0 {
            return Err(invalid("A_m, A_h and gamma must be non-negative"));
        }
        if !(0.0 < u_min && u_min < u_max) {
            return Err(invalid(format!(
                "fumigation bounds must satisfy 0 < u_min < u_max, got [{u_min}, {u_max}]"
            )));
        }
        Ok(ModelParams {
            a_m,
            a_h,
            gamma,
            u_min,
            u_max,
            raw: None,
        })
    }

    /// Derives `A_m = a p_m` and `A_h = a p_h N_m/N_h`.
    pub fn from_raw(raw: RawEpidemiology, gamma: f64, u_min: f64, u_max: f64) -> Result<Self> {
        let a_m = raw.a * raw.p_m;
        let a_h = raw.a * raw.p_h * raw.mosquito_human_ratio;
        ModelParams::new(a_m, a_h, gamma, u_min, u_max)?.with_raw(raw)
    }

    /// Attaches raw provenance after checking it reproduces `A_m` and `A_h`.
    pub fn with_raw(mut self, raw: RawEpidemiology) -> Result<Self> {
        ensure_finite("raw parameters", &[raw.a, raw.p_m, raw.p_h, raw.mosquito_human_ratio])?;
        if raw.a < 0.0 || raw.mosquito_human_ratio < 0.0 {
            return Err(invalid("a and mosquito_human_ratio must be non-negative"));
        }
        if !(0.0..=1.0).contains(&raw.p_m) || !(0.0..=1.0).contains(&raw.p_h) {
            return Err(invalid("p_m and p_h must lie in [0, 1]"));
        }
        let a_m = raw.a * raw.p_m;
        let a_h = raw.a * raw.p_h * raw.mosquito_human_ratio;
        if (a_m - self.a_m).abs() > PROVENANCE_TOL || (a_h - self.a_h).abs() > PROVENANCE_TOL {
            return Err(invalid(format!(
                "raw parameters give A_m = {a_m}, A_h = {a_h}, inconsistent with {} and {}",
                self.a_m, self.a_h
            )));
        }
        self.raw = Some(raw);
        Ok(self)
    }

    /// Dengue estimates for Cali, Colombia.
    pub fn cali() -> Self {
        ModelParams::new(0.076608, 0.0722633, 0.1, 0.0333, 0.05).expect("valid constants")
    }

    /// Unchecked right-hand side, for inner integration loops.
    #[inline]
    pub fn rhs(&self, x: [f64; 2], u: f64) -> [f64; 2] {
        [
            self.a_m * x[1] * (1.0 - x[0]) - u * x[0],
            self.a_h * x[0] * (1.0 - x[1]) - self.gamma * x[1],
        ]
    }

    /// Unchecked adjoint right-hand side `M lambda`, with `M = -(df/dx)^T`.
    #[inline]
    pub fn adjoint(&self, x: [f64; 2], lam: [f64; 2], u: f64) -> [f64; 2] {
        let m11 = self.a_m * x[1] + u;
        let m12 = -self.a_h * (1.0 - x[1]);
        let m21 = -self.a_m * (1.0 - x[0]);
        let m22 = self.a_h * x[0] + self.gamma;
        [m11 * lam[0] + m12 * lam[1], m21 * lam[0] + m22 * lam[1]]
    }

    pub fn clamp_input(&self, u: f64) -> f64 {
        u.clamp(self.u_min, self.u_max)
    }
}

/// Infected proportions.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct State {
    pub x1: f64,
    pub x2: f64,
}

impl State {
    pub const ORIGIN: State = State { x1: 0.0, x2: 0.0 };

    pub fn new(x1: f64, x2: f64) -> Self {
        State { x1, x2 }
    }

    pub fn as_array(self) -> [f64; 2] {
        [self.x1, self.x2]
    }

    pub fn is_finite(self) -> bool {
        self.x1.is_finite() && self.x2.is_finite()
    }

    /// Within the unit square `[0,1]^2`.
    pub fn in_unit_square(self) -> bool {
        (0.0..=1.0).contains(&self.x1) && (0.0..=1.0).contains(&self.x2)
    }

    pub fn dist(self, other: State) -> f64 {
        (self.x1 - other.x1).hypot(self.x2 - other.x2)
    }
}

impl From<[f64; 2]> for State {
    fn from(a: [f64; 2]) -> Self {
        State { x1: a[0], x2: a[1] }
    }
}

impl fmt::Display for State {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x1, self.x2)
    }
}

/// Infection caps. The constraint box is `[0, xbar1] x [0, xbar2]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawCaps")]
pub struct ConstraintCaps {
    pub xbar1: f64,
    pub xbar2: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCaps {
    xbar1: f64,
    xbar2: f64,
}

impl TryFrom<RawCaps> for ConstraintCaps {
    type Error = Error;

    fn try_from(r: RawCaps) -> Result<Self> {
        ConstraintCaps::new(r.xbar1, r.xbar2)
    }
}

impl ConstraintCaps {
    pub fn new(xbar1: f64, xbar2: f64) -> Result<Self> {
        ensure_finite("caps", &[xbar1, xbar2])?;
        if !(0.0 < xbar1 && xbar1 <= 1.0 && 0.0 < xbar2 && xbar2 <= 1.0) {
            return Err(invalid(format!("caps must lie in (0, 1], got ({xbar1}, {xbar2})")));
        }
        Ok(ConstraintCaps { xbar1, xbar2 })
    }

    /// Constraint values `g_i(x)`; the box `G` is where all are `<= 0`.
    pub fn constraint_values(&self, x: State) -> [f64; 4] {
        [x.x1 - self.xbar1, -x.x1, x.x2 - self.xbar2, -x.x2]
    }

    pub fn contains(&self, x: State) -> bool {
        self.constraint_values(x).iter().all(|&g| g <= 0.0)
    }

    pub fn contains_strictly(&self, x: State) -> bool {
        self.constraint_values(x).iter().all(|&g| g < 0.0)
    }

    /// Largest constraint violation, zero inside the box.
    pub fn violation(&self, x: State) -> f64 {
        self.constraint_values(x).iter().fold(0.0f64, |acc, &g| acc.max(g))
    }

    /// The index set of faces active at `x` within `tol`.
    pub fn active_faces(&self, x: State, tol: f64) -> Vec<ConstraintFace> {
        ConstraintFace::ALL
            .into_iter()
            .zip(self.constraint_values(x))
            .filter(|(_, g)| g.abs() <= tol)
            .map(|(face, _)| face)
            .collect()
    }

    /// Face violated most deeply by `x`, ties going to the smaller index.
    pub fn deepest_violation(&self, x: State) -> Option<ConstraintFace> {
        let mut best: Option<(ConstraintFace, f64)> = None;
        for (face, g) in ConstraintFace::ALL.into_iter().zip(self.constraint_values(x)) {
            if g > 0.0 && best.is_none_or(|(_, b)| g > b) {
                best = Some((face, g));
            }
        }
        best.map(|(face, _)| face)
    }

    pub fn area(&self) -> f64 {
        self.xbar1 * self.xbar2
    }
}

/// Adjoint vector, defined up to positive scaling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Costate {
    pub lambda1: f64,
    pub lambda2: f64,
}

impl Costate {
    pub fn new(lambda1: f64, lambda2: f64) -> Self {
        Costate { lambda1, lambda2 }
    }

    pub fn as_array(self) -> [f64; 2] {
        [self.lambda1, self.lambda2]
    }

    pub fn norm(self) -> f64 {
        self.lambda1.hypot(self.lambda2)
    }

    pub fn is_zero(self) -> bool {
        self.lambda1 == 0.0 && self.lambda2 == 0.0
    }

    /// Unit-norm copy; `None` for the zero vector.
    pub fn normalized(self) -> Option<Costate> {
        let n = self.norm();
        (n > 0.0 && n.is_finite()).then(|| Costate::new(self.lambda1 / n, self.lambda2 / n))
    }
}

impl From<[f64; 2]> for Costate {
    fn from(a: [f64; 2]) -> Self {
        Costate::new(a[0], a[1])
    }
}

/// The four state constraints: `g1 = x1 - xbar1`, `g2 = -x1`,
/// `g3 = x2 - xbar2`, `g4 = -x2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ConstraintFace {
    G1,
    G2,
    G3,
    G4,
}

impl ConstraintFace {
    pub const ALL: [ConstraintFace; 4] = [
        ConstraintFace::G1,
        ConstraintFace::G2,
        ConstraintFace::G3,
        ConstraintFace::G4,
    ];

    pub fn index(self) -> usize {
        self as usize + 1
    }

    /// Gradient `Dg` of the constraint function.
    pub fn gradient(self) -> [f64; 2] {
        match self {
            ConstraintFace::G1 => [1.0, 0.0],
            ConstraintFace::G2 => [-1.0, 0.0],
            ConstraintFace::G3 => [0.0, 1.0],
            ConstraintFace::G4 => [0.0, -1.0],
        }
    }
}

impl fmt::Display for ConstraintFace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "G{}", self.index())
    }
}

fn check_inputs(x: State, u: f64) -> Result<()> {
    ensure_finite("state and input", &[x.x1, x.x2, u])
}

/// Right-hand side of the controlled dynamics.
pub fn vector_field(x: State, u: f64, p: &ModelParams) -> Result<[f64; 2]> {
    check_inputs(x, u)?;
    Ok(p.rhs(x.as_array(), u))
}

/// `df/dx` as a row-major 2x2 matrix.
pub fn state_jacobian(x: State, u: f64, p: &ModelParams) -> Result<[[f64; 2]; 2]> {
    check_inputs(x, u)?;
    Ok([
        [-p.a_m * x.x2 - u, p.a_m * (1.0 - x.x1)],
        [p.a_h * (1.0 - x.x2), -p.a_h * x.x1 - p.gamma],
    ])
}

/// Adjoint dynamics `d lambda/dt = -(df/dx)^T lambda`.
pub fn adjoint_rhs(x: State, lam: Costate, u: f64, p: &ModelParams) -> Result<[f64; 2]> {
    check_inputs(x, u)?;
    ensure_finite("costate", &[lam.lambda1, lam.lambda2])?;
    Ok(p.adjoint(x.as_array(), lam.as_array(), u))
}

/// Lie derivative `Dg_face(x) f(x, u)`. Evaluated anywhere, not only on the face.
/// For `G3` the result does not depend on `u`.
pub fn lie_derivative(face: ConstraintFace, x: State, u: f64, p: &ModelParams) -> f64 {
    let f = p.rhs(x.as_array(), u);
    let dg = face.gradient();
    dg[0] * f[0] + dg[1] * f[1]
}

/// Endemic equilibrium under a constant fumigation rate, if one exists.
pub fn endemic_equilibrium(u: f64, p: &ModelParams) -> Result<Option<State>> {
    ensure_finite("fumigation rate", &[u])?;
    if u <= 0.0 {
        return Err(invalid("fumigation rate must be positive"));
    }
    let num = p.a_m * p.a_h - u * p.gamma;
    if num <= 0.0 {
        return Ok(None);
    }
    let x1 = num / (p.a_h * (p.a_m + u));
    let x2 = p.a_h * x1 / (p.a_h * x1 + p.gamma);
    Ok(Some(State::new(x1, x2)))
}
