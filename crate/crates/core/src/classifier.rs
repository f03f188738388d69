//! Four-way classification of a parameter/cap combination.
//!
//! The decision follows the flow: comfortable test first, then the
//! admissible-set tangency and its entry condition (desperate if the barrier
//! cannot enter the box), then the MRPI tangency and entry condition
//! (comfortable-viable if it can, viable otherwise). Every inequality is
//! evaluated and recorded whether or not the flow consults it.

use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::{ConstraintCaps, ConstraintFace, ModelParams};
use crate::tangency::{entry_inequality, g1_existence, g3_existence, Inequality, SetKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Case {
    Desperate,
    Viable,
    ComfortableViable,
    Comfortable,
}

impl Case {
    pub fn as_str(self) -> &'static str {
        match self {
            Case::Comfortable => "comfortable",
            Case::ComfortableViable => "comfortable_viable",
            Case::Viable => "viable",
            Case::Desperate => "desperate",
        }
    }

    /// Cases in which the admissible set is not `{0}` and the MRPI is not
    /// the whole box.
    pub fn admissible_nontrivial(self) -> bool {
        matches!(self, Case::Viable | Case::ComfortableViable)
    }

    pub fn mrpi_nontrivial(self) -> bool {
        self == Case::ComfortableViable
    }
}

impl fmt::Display for Case {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Case {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "comfortable" => Ok(Case::Comfortable),
            "comfortable_viable" => Ok(Case::ComfortableViable),
            "viable" => Ok(Case::Viable),
            "desperate" => Ok(Case::Desperate),
            other => Err(invalid(format!("unknown case {other:?}"))),
        }
    }
}

/// Identifiers of the audited inequalities.
pub mod ids {
    pub const EXISTENCE_G1_ADMISSIBLE: &str = "existence_g1_admissible";
    pub const EXISTENCE_G1_MRPI: &str = "existence_g1_mrpi";
    pub const EXISTENCE_G3: &str = "existence_g3";
    pub const ENTRY_G1_ADMISSIBLE: &str = "entry_g1_admissible";
    pub const ENTRY_G1_MRPI: &str = "entry_g1_mrpi";
    pub const ENTRY_G3_ADMISSIBLE: &str = "entry_g3_admissible";
    pub const ENTRY_G3_MRPI: &str = "entry_g3_mrpi";
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Audit {
    pub id: String,
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub case: Case,
    pub active_face: Option<ConstraintFace>,
    pub boundary: bool,
    pub audits: Vec<Audit>,
}

impl Classification {
    pub fn audit(&self, id: &str) -> Option<&Audit> {
        self.audits.iter().find(|a| a.id == id)
    }

    fn holds(&self, id: &str) -> bool {
        self.audit(id).is_some_and(|a| a.holds)
    }

    /// Face carrying the admissible-set tangency, if any.
    pub fn admissible_tangent_face(&self) -> Option<ConstraintFace> {
        if self.holds(ids::EXISTENCE_G3) {
            Some(ConstraintFace::G3)
        } else if self.holds(ids::EXISTENCE_G1_ADMISSIBLE) {
            Some(ConstraintFace::G1)
        } else {
            None
        }
    }

    /// Face carrying the MRPI tangency, if any.
    pub fn mrpi_tangent_face(&self) -> Option<ConstraintFace> {
        if self.holds(ids::EXISTENCE_G3) {
            Some(ConstraintFace::G3)
        } else if self.holds(ids::EXISTENCE_G1_MRPI) {
            Some(ConstraintFace::G1)
        } else {
            None
        }
    }

    pub fn tangent_face(&self, kind: SetKind) -> Option<ConstraintFace> {
        match kind {
            SetKind::Admissible => self.admissible_tangent_face(),
            SetKind::Mrpi => self.mrpi_tangent_face(),
        }
    }

    /// Whether the set of the given kind is bounded by a barrier curve.
    pub fn has_barrier(&self, kind: SetKind) -> bool {
        match kind {
            SetKind::Admissible => self.case.admissible_nontrivial() && self.admissible_tangent_face().is_some(),
            SetKind::Mrpi => self.case.mrpi_nontrivial(),
        }
    }

    /// The flow-diagram decisions taken, in order.
    pub fn path(&self) -> Vec<String> {
        let mut path = Vec::new();
        let e3 = self.holds(ids::EXISTENCE_G3);
        let e1m = self.holds(ids::EXISTENCE_G1_MRPI);
        let e1a = self.holds(ids::EXISTENCE_G1_ADMISSIBLE);
        if !e3 && !e1m {
            path.push("no tangent point on G1 (u_min) or G3: box is robustly invariant".to_string());
            return path;
        }
        path.push(format!(
            "tangent points: G3 {}, G1 admissible {}, G1 mrpi {}",
            yes_no(e3),
            yes_no(e1a),
            yes_no(e1m)
        ));
        match self.admissible_tangent_face() {
            Some(face) => {
                let id = entry_id(face, SetKind::Admissible);
                path.push(format!(
                    "admissible barrier from {face} enters the box: {}",
                    yes_no(self.holds(id))
                ));
            }
            None => path.push("no admissible tangency: admissible set is the whole box".to_string()),
        }
        if self.case == Case::Desperate {
            path.push("desperate".to_string());
            return path;
        }
        match self.mrpi_tangent_face() {
            Some(face) => {
                let id = entry_id(face, SetKind::Mrpi);
                path.push(format!(
                    "mrpi barrier from {face} enters the box: {}",
                    yes_no(self.holds(id))
                ));
            }
            None => path.push("no mrpi tangency".to_string()),
        }
        path.push(self.case.as_str().to_string());
        path
    }
}

fn yes_no(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "no"
    }
}

fn entry_id(face: ConstraintFace, kind: SetKind) -> &'static str {
    match (face, kind) {
        (ConstraintFace::G1, SetKind::Admissible) => ids::ENTRY_G1_ADMISSIBLE,
        (ConstraintFace::G1, SetKind::Mrpi) => ids::ENTRY_G1_MRPI,
        (_, SetKind::Admissible) => ids::ENTRY_G3_ADMISSIBLE,
        (_, SetKind::Mrpi) => ids::ENTRY_G3_MRPI,
    }
}

fn existence_audit(id: &str, ineq: Inequality) -> Audit {
    Audit {
        id: id.to_string(),
        lhs: ineq.lhs,
        rhs: ineq.rhs,
        holds: ineq.holds(),
        margin: ineq.margin,
    }
}

fn entry_audit(id: &str, ineq: Inequality) -> Audit {
    Audit {
        id: id.to_string(),
        lhs: ineq.lhs,
        rhs: ineq.rhs,
        holds: ineq.holds_strictly(),
        margin: ineq.margin,
    }
}

/// Classifies the system. Existence inequalities are strict; entry
/// inequalities with margins inside the boundary band count as failing.
pub fn classify(p: &ModelParams, caps: &ConstraintCaps) -> Classification {
    let g1 = ConstraintFace::G1;
    let g3 = ConstraintFace::G3;
    let adm = SetKind::Admissible;
    let mrpi = SetKind::Mrpi;
    let entry = |kind, face| entry_inequality(p, caps, kind, face).expect("G1/G3 entry is defined");

    let audits = vec![
        existence_audit(ids::EXISTENCE_G1_ADMISSIBLE, g1_existence(p, caps, adm)),
        existence_audit(ids::EXISTENCE_G1_MRPI, g1_existence(p, caps, mrpi)),
        existence_audit(ids::EXISTENCE_G3, g3_existence(p, caps)),
        entry_audit(ids::ENTRY_G1_ADMISSIBLE, entry(adm, g1)),
        entry_audit(ids::ENTRY_G1_MRPI, entry(mrpi, g1)),
        entry_audit(ids::ENTRY_G3_ADMISSIBLE, entry(adm, g3)),
        entry_audit(ids::ENTRY_G3_MRPI, entry(mrpi, g3)),
    ];
    let holds = |i: usize| audits[i].holds;
    let (h_e1a, h_e1m, h_e3) = (holds(0), holds(1), holds(2));
    let (h_n1a, h_n1m, h_n3a, h_n3m) = (holds(3), holds(4), holds(5), holds(6));
    let boundary = audits.iter().any(|a| a.margin.abs() <= crate::tangency::BOUNDARY_TOL);

    debug_assert!(
        boundary || path_independent(&audits),
        "the two desperate characterizations disagree: {audits:?}"
    );

    let (case, active_face) = if !h_e1m && !h_e3 {
        (Case::Comfortable, None)
    } else {
        let adm_face = if h_e3 {
            Some(g3)
        } else if h_e1a {
            Some(g1)
        } else {
            None
        };
        let adm_barrier = match adm_face {
            Some(f) if f == g3 && h_n3a => Some(g3),
            Some(f) if f == g1 && h_n1a => Some(g1),
            _ => None,
        };
        let mrpi_face = if h_e3 && h_n3m {
            Some(g3)
        } else if !h_e3 && h_e1m && h_n1m {
            Some(g1)
        } else {
            None
        };
        match (adm_face, adm_barrier) {
            (Some(face), None) => (Case::Desperate, Some(face)),
            _ => match mrpi_face {
                Some(face) => (Case::ComfortableViable, Some(face)),
                // Without an admissible tangency the MRPI tangency is on G1.
                None => (Case::Viable, adm_barrier.or(Some(g1))),
            },
        }
    };

    Classification {
        case,
        active_face,
        boundary,
        audits,
    }
}

/// Desperate via G3 and desperate via G1 cannot contradict each other: a
/// failing entry on one face rules out a barrier from the other.
fn path_independent(audits: &[Audit]) -> bool {
    let h = |i: usize| audits[i].margin > 0.0;
    let (e1a, e1m, e3) = (h(0), h(1), h(2));
    let (n1a, n1m, n3a, n3m) = (h(3), h(4), h(5), h(6));
    (n3a || !(e1a && n1a)) && (n1a || !(e3 && n3a)) && (n3m || !(e1m && n1m)) && (n1m || !(e3 && n3m))
}

const REPORT_HEADER: &str = "classification report";

/// Human-readable, deterministic report. Parses back with [`parse_report`].
pub fn classification_report(p: &ModelParams, caps: &ConstraintCaps) -> String {
    render_report(p, caps, &classify(p, caps))
}

pub fn render_report(p: &ModelParams, caps: &ConstraintCaps, cls: &Classification) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{REPORT_HEADER}");
    let _ = writeln!(
        out,
        "params: A_m={:?} A_h={:?} gamma={:?} u_min={:?} u_max={:?}",
        p.a_m, p.a_h, p.gamma, p.u_min, p.u_max
    );
    let _ = writeln!(out, "caps: xbar1={:?} xbar2={:?}", caps.xbar1, caps.xbar2);
    let _ = writeln!(out, "case: {}", cls.case);
    let _ = writeln!(
        out,
        "active_face: {}",
        cls.active_face.map_or("none".to_string(), |f| f.to_string())
    );
    let _ = writeln!(out, "boundary: {}", cls.boundary);
    let _ = writeln!(out, "inequalities:");
    for a in &cls.audits {
        let _ = writeln!(
            out,
            "  {:<24} lhs={:<24e} rhs={:<24e} margin={:<24e} holds={}",
            a.id, a.lhs, a.rhs, a.margin, a.holds
        );
    }
    let _ = writeln!(out, "path:");
    for (i, step) in cls.path().iter().enumerate() {
        let _ = writeln!(out, "  {}. {}", i + 1, step);
    }
    out
}

/// Recovers the [`Classification`] from a rendered report.
pub fn parse_report(report: &str) -> Result<Classification> {
    let bad = |what: &str| invalid(format!("malformed report: {what}"));
    let mut lines = report.lines();
    if lines.next() != Some(REPORT_HEADER) {
        return Err(bad("missing header"));
    }
    let mut case = None;
    let mut active_face = None;
    let mut boundary = None;
    let mut audits = Vec::new();
    let mut in_audits = false;
    for line in lines {
        if let Some(v) = line.strip_prefix("case: ") {
            case = Some(v.trim().parse::<Case>()?);
        } else if let Some(v) = line.strip_prefix("active_face: ") {
            active_face = match v.trim() {
                "none" => None,
                "G1" => Some(ConstraintFace::G1),
                "G2" => Some(ConstraintFace::G2),
                "G3" => Some(ConstraintFace::G3),
                "G4" => Some(ConstraintFace::G4),
                _ => return Err(bad("active_face")),
            };
        } else if let Some(v) = line.strip_prefix("boundary: ") {
            boundary = Some(v.trim().parse::<bool>().map_err(|_| bad("boundary"))?);
        } else if line == "inequalities:" {
            in_audits = true;
        } else if line == "path:" {
            in_audits = false;
        } else if in_audits {
            let mut tokens = line.split_whitespace();
            let id = tokens.next().ok_or_else(|| bad("audit id"))?.to_string();
            let mut field = |name: &str| -> Result<String> {
                let tok = tokens.next().ok_or_else(|| bad(name))?;
                tok.strip_prefix(&format!("{name}="))
                    .map(str::to_string)
                    .ok_or_else(|| bad(name))
            };
            let num = |s: String| s.parse::<f64>().map_err(|_| bad("number"));
            let lhs = num(field("lhs")?)?;
            let rhs = num(field("rhs")?)?;
            let margin = num(field("margin")?)?;
            let holds = field("holds")?.parse::<bool>().map_err(|_| bad("holds"))?;
            audits.push(Audit {
                id,
                lhs,
                rhs,
                holds,
                margin,
            });
        }
    }
    Ok(Classification {
        case: case.ok_or_else(|| bad("case"))?,
        active_face,
        boundary: boundary.ok_or_else(|| bad("boundary"))?,
        audits,
    })
}
