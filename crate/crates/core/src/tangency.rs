//! Points of ultimate tangentiality on the cap faces and the inequalities
//! that decide whether they exist and whether the barrier leaving them
//! (backward in time) enters the interior of the box.
//!
//! No tangencies exist on `G2`/`G4`: the flow there points strictly inward
//! for every input.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::model::{ConstraintCaps, ConstraintFace, Costate, ModelParams, State};

/// Margins this close to zero are reported as boundary cases.
pub const BOUNDARY_TOL: f64 = 1e-12;

/// Which set a computation refers to. Selects the extreme input used by the
/// tangency and entry formulas.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SetKind {
    /// The admissible set: some input keeps the state in the box.
    Admissible,
    /// The maximal robust positively invariant set: every input does.
    #[serde(rename = "mrpi")]
    Mrpi,
}

impl SetKind {
    /// `u_max` for the admissible set, `u_min` for the MRPI.
    pub fn extreme_input(self, p: &ModelParams) -> f64 {
        match self {
            SetKind::Admissible => p.u_max,
            SetKind::Mrpi => p.u_min,
        }
    }
}

impl fmt::Display for SetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SetKind::Admissible => "admissible",
            SetKind::Mrpi => "mrpi",
        })
    }
}

impl std::str::FromStr for SetKind {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "admissible" => Ok(SetKind::Admissible),
            "mrpi" => Ok(SetKind::Mrpi),
            other => Err(invalid(format!("unknown set kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "TangentPointJson", try_from = "TangentPointJson")]
pub struct TangentPoint {
    pub face: ConstraintFace,
    pub point: State,
    pub set_kind: SetKind,
    pub terminal_costate: Costate,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TangentPointJson {
    face: ConstraintFace,
    x1: f64,
    x2: f64,
    set_kind: SetKind,
    lambda: [f64; 2],
}

impl From<TangentPoint> for TangentPointJson {
    fn from(t: TangentPoint) -> Self {
        TangentPointJson {
            face: t.face,
            x1: t.point.x1,
            x2: t.point.x2,
            set_kind: t.set_kind,
            lambda: t.terminal_costate.as_array(),
        }
    }
}

impl TryFrom<TangentPointJson> for TangentPoint {
    type Error = crate::Error;

    fn try_from(j: TangentPointJson) -> Result<Self> {
        if !matches!(j.face, ConstraintFace::G1 | ConstraintFace::G3) {
            return Err(invalid("tangent points only exist on G1 or G3"));
        }
        Ok(TangentPoint {
            face: j.face,
            point: State::new(j.x1, j.x2),
            set_kind: j.set_kind,
            terminal_costate: j.lambda.into(),
        })
    }
}

/// A strict inequality `lhs > rhs` (or `lhs < rhs`) with its signed margin,
/// oriented so that a positive margin means the inequality holds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Inequality {
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
}

impl Inequality {
    fn greater(lhs: f64, rhs: f64) -> Self {
        Inequality {
            lhs,
            rhs,
            margin: lhs - rhs,
        }
    }

    fn less(lhs: f64, rhs: f64) -> Self {
        Inequality {
            lhs,
            rhs,
            margin: rhs - lhs,
        }
    }

    /// Exact strict test.
    pub fn holds(&self) -> bool {
        self.margin > 0.0
    }

    /// Strict test that treats boundary margins as failing.
    pub fn holds_strictly(&self) -> bool {
        self.margin > BOUNDARY_TOL
    }

    pub fn is_boundary(&self) -> bool {
        self.margin.abs() <= BOUNDARY_TOL
    }
}

/// `xbar1 < A_m xbar2 / (A_m xbar2 + u*)`: a tangent point exists on
/// `{xbar1} x [0, xbar2)`.
pub fn g1_existence(p: &ModelParams, caps: &ConstraintCaps, kind: SetKind) -> Inequality {
    let u = kind.extreme_input(p);
    let rhs = p.a_m * caps.xbar2 / (p.a_m * caps.xbar2 + u);
    Inequality::less(caps.xbar1, rhs)
}

/// `xbar2 < A_h xbar1 / (A_h xbar1 + gamma)`: a tangent point exists on
/// `[0, xbar1) x {xbar2}`. Same for both set kinds.
pub fn g3_existence(p: &ModelParams, caps: &ConstraintCaps) -> Inequality {
    let rhs = p.a_h * caps.xbar1 / (p.a_h * caps.xbar1 + p.gamma);
    Inequality::less(caps.xbar2, rhs)
}

pub fn tangent_point_g1(p: &ModelParams, caps: &ConstraintCaps, kind: SetKind) -> Option<TangentPoint> {
    if caps.xbar1 >= 1.0 || !g1_existence(p, caps, kind).holds() {
        return None;
    }
    let u = kind.extreme_input(p);
    let x2 = u * caps.xbar1 / (p.a_m * (1.0 - caps.xbar1));
    (x2 < caps.xbar2).then(|| TangentPoint {
        face: ConstraintFace::G1,
        point: State::new(caps.xbar1, x2),
        set_kind: kind,
        terminal_costate: Costate::new(1.0, 0.0),
    })
}

/// The `G3` tangent point. The Lie derivative on `G3` does not involve the
/// input, so the point is the same for both kinds; `kind` is only recorded.
pub fn tangent_point_g3(p: &ModelParams, caps: &ConstraintCaps, kind: SetKind) -> Option<TangentPoint> {
    if caps.xbar2 >= 1.0 || !g3_existence(p, caps).holds() {
        return None;
    }
    let x1 = p.gamma * caps.xbar2 / (p.a_h * (1.0 - caps.xbar2));
    (x1 < caps.xbar1).then(|| TangentPoint {
        face: ConstraintFace::G3,
        point: State::new(x1, caps.xbar2),
        set_kind: kind,
        terminal_costate: Costate::new(0.0, 1.0),
    })
}

pub fn tangent_point(
    p: &ModelParams,
    caps: &ConstraintCaps,
    kind: SetKind,
    face: ConstraintFace,
) -> Result<Option<TangentPoint>> {
    match face {
        ConstraintFace::G1 => Ok(tangent_point_g1(p, caps, kind)),
        ConstraintFace::G3 => Ok(tangent_point_g3(p, caps, kind)),
        _ => Err(invalid(format!("no tangent points exist on {face}"))),
    }
}

/// Whether the candidate barrier from the tangent point on `face` enters the
/// interior of the box when traced backward.
///
/// * `G1`: `A_h (A_m + u*) xbar1 + gamma u* > A_m A_h`
/// * `G3`: `A_m (A_h + gamma) xbar2 + gamma u* > A_m A_h`
///
/// with `u* = u_max` for the admissible set and `u_min` for the MRPI.
pub fn entry_inequality(
    p: &ModelParams,
    caps: &ConstraintCaps,
    kind: SetKind,
    face: ConstraintFace,
) -> Result<Inequality> {
    let u = kind.extreme_input(p);
    let rhs = p.a_m * p.a_h;
    match face {
        ConstraintFace::G1 => Ok(Inequality::greater(p.a_h * (p.a_m + u) * caps.xbar1 + p.gamma * u, rhs)),
        ConstraintFace::G3 => Ok(Inequality::greater(
            p.a_m * (p.a_h + p.gamma) * caps.xbar2 + p.gamma * u,
            rhs,
        )),
        _ => Err(invalid(format!(
            "entry conditions are only defined on G1 and G3, got {face}"
        ))),
    }
}

/// `(holds, margin)` of the entry inequality. Margins within
/// [`BOUNDARY_TOL`] of zero count as failing.
pub fn entry_condition(
    p: &ModelParams,
    caps: &ConstraintCaps,
    kind: SetKind,
    face: ConstraintFace,
) -> Result<(bool, f64)> {
    let ineq = entry_inequality(p, caps, kind, face)?;
    Ok((ineq.holds_strictly(), ineq.margin))
}
