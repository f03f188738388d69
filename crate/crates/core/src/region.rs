//! Polygonal admissible set and MRPI.
//!
//! A nontrivial set is the barrier polyline closed up along the box
//! boundary, walking through the origin corner. The axes `x1 = 0` and
//! `x2 = 0` are never reported as boundary: the flow points strictly inward
//! there, so a state on them is treated like an interior state.

use std::fmt::Write as _;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::barrier::{BarrierCurve, Termination};
use crate::classifier::{Case, Classification};
use crate::error::{invalid, Result};
use crate::geometry::{signed_area, PolygonIndex};
use crate::model::{ConstraintCaps, ConstraintFace, State};
use crate::tangency::SetKind;

pub const DEFAULT_EPS: f64 = 1e-9;

/// How the barrier's far end was joined to the box boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Closure {
    /// The barrier ends on a face.
    HitFace,
    /// The barrier stalled at an equilibrium and was joined radially to
    /// the nearest boundary point.
    VelocityStallRadial,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "RegionJson", from = "RegionJson")]
pub struct RegionSet {
    pub kind: SetKind,
    pub case: Case,
    /// Counterclockwise, not repeating the first vertex. A single vertex at
    /// the origin for the degenerate set.
    pub polygon: Vec<State>,
    /// Inclusive vertex range lying on the barrier.
    pub barrier_range: Option<(usize, usize)>,
    pub area: f64,
    pub closure: Option<Closure>,
    index: LazyIndex,
}

/// Lazily built query index; carries no information of its own.
#[derive(Debug, Clone, Default)]
struct LazyIndex(OnceLock<PolygonIndex>);

impl PartialEq for LazyIndex {
    fn eq(&self, _: &Self) -> bool {
        true
    }
}

#[derive(Serialize, Deserialize)]
struct RegionJson {
    kind: SetKind,
    case: Case,
    vertices: Vec<[f64; 2]>,
    barrier_range: Option<[usize; 2]>,
    area: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    closure: Option<Closure>,
}

impl From<RegionSet> for RegionJson {
    fn from(r: RegionSet) -> Self {
        RegionJson {
            kind: r.kind,
            case: r.case,
            vertices: r.polygon.iter().map(|v| v.as_array()).collect(),
            barrier_range: r.barrier_range.map(|(a, b)| [a, b]),
            area: r.area,
            closure: r.closure,
        }
    }
}

impl From<RegionJson> for RegionSet {
    fn from(j: RegionJson) -> Self {
        RegionSet {
            kind: j.kind,
            case: j.case,
            polygon: j.vertices.into_iter().map(State::from).collect(),
            barrier_range: j.barrier_range.map(|[a, b]| (a, b)),
            area: j.area,
            closure: j.closure,
            index: LazyIndex::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MembershipKind {
    Inside,
    OnBarrier,
    OnConstraintBoundary,
    Outside,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Membership {
    pub kind: MembershipKind,
    /// Distance to the nearest reported boundary segment.
    pub distance: f64,
}

impl Membership {
    /// Inside or on the boundary.
    pub fn is_member(&self) -> bool {
        self.kind != MembershipKind::Outside
    }
}

impl RegionSet {
    pub fn full_box(kind: SetKind, case: Case, caps: &ConstraintCaps) -> Self {
        let polygon = box_corners(caps).to_vec();
        RegionSet {
            kind,
            case,
            area: caps.area(),
            polygon,
            barrier_range: None,
            closure: None,
            index: LazyIndex::default(),
        }
    }

    pub fn degenerate(kind: SetKind, case: Case) -> Self {
        RegionSet {
            kind,
            case,
            polygon: vec![State::ORIGIN],
            barrier_range: None,
            area: 0.0,
            closure: None,
            index: LazyIndex::default(),
        }
    }

    pub fn is_degenerate(&self) -> bool {
        self.polygon.len() < 3
    }

    pub fn area(&self) -> f64 {
        self.area
    }

    /// Whether the segment from vertex `i` to `i + 1` lies on the barrier.
    pub fn is_barrier_segment(&self, i: usize) -> bool {
        self.barrier_range.is_some_and(|(a, b)| i >= a && i < b)
    }

    /// Vertices of the barrier part in polygon order.
    pub fn barrier_vertices(&self) -> &[State] {
        match self.barrier_range {
            Some((a, b)) => &self.polygon[a..=b],
            None => &[],
        }
    }

    fn index(&self) -> &PolygonIndex {
        self.index.0.get_or_init(|| PolygonIndex::new(&self.polygon))
    }

    fn inside_polygon(&self, x: State) -> bool {
        self.index().contains(&self.polygon, x)
    }

    /// Nearest non-axis boundary segment: (index, distance).
    pub fn nearest_boundary(&self, x: State) -> Option<(usize, f64)> {
        let n = self.polygon.len();
        self.index().nearest(&self.polygon, x, |i| {
            on_axis(self.polygon[i], self.polygon[(i + 1) % n])
        })
    }

    /// Point membership with a boundary band of width `eps`.
    pub fn contains(&self, x: State, eps: f64) -> Result<Membership> {
        if eps.is_nan() || eps <= 0.0 {
            return Err(invalid("membership band must be positive"));
        }
        if !x.is_finite() {
            return Err(invalid("state must be finite"));
        }
        if self.is_degenerate() {
            let distance = x.dist(State::ORIGIN);
            let kind = if distance <= eps {
                MembershipKind::Inside
            } else {
                MembershipKind::Outside
            };
            return Ok(Membership { kind, distance });
        }
        let (seg, distance) = self.nearest_boundary(x).unwrap_or((0, f64::INFINITY));
        let kind = if distance <= eps {
            if self.is_barrier_segment(seg) {
                MembershipKind::OnBarrier
            } else {
                MembershipKind::OnConstraintBoundary
            }
        } else if self.inside_polygon(x) {
            MembershipKind::Inside
        } else {
            MembershipKind::Outside
        };
        Ok(Membership { kind, distance })
    }

    /// Signed distance to the part of the boundary that can be crossed:
    /// the barrier and the cap faces. Positive inside.
    pub fn signed_distance(&self, x: State) -> f64 {
        if self.is_degenerate() {
            return -x.dist(State::ORIGIN);
        }
        let d = self.nearest_boundary(x).map_or(f64::INFINITY, |(_, d)| d);
        if self.inside_polygon(x) {
            d
        } else {
            -d
        }
    }

    /// CSV vertex list `x1,x2,on_barrier`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x1,x2,on_barrier\n");
        for (i, v) in self.polygon.iter().enumerate() {
            let on = self.barrier_range.is_some_and(|(a, b)| i >= a && i <= b);
            let _ = writeln!(out, "{:.16e},{:.16e},{}", v.x1, v.x2, on);
        }
        out
    }
}

fn on_axis(a: State, b: State) -> bool {
    (a.x1 == 0.0 && b.x1 == 0.0) || (a.x2 == 0.0 && b.x2 == 0.0)
}

fn box_corners(caps: &ConstraintCaps) -> [State; 4] {
    [
        State::ORIGIN,
        State::new(caps.xbar1, 0.0),
        State::new(caps.xbar1, caps.xbar2),
        State::new(0.0, caps.xbar2),
    ]
}

/// Position along the box perimeter, counterclockwise from the origin.
fn perimeter_coord(x: State, face: ConstraintFace, caps: &ConstraintCaps) -> f64 {
    let (a, b) = (caps.xbar1, caps.xbar2);
    match face {
        ConstraintFace::G4 => x.x1,
        ConstraintFace::G1 => a + x.x2,
        ConstraintFace::G3 => a + b + (a - x.x1),
        ConstraintFace::G2 => 2.0 * a + b + (b - x.x2),
    }
}

/// Face a boundary point lies on, preferring the face it was reported on.
fn boundary_face(x: State, caps: &ConstraintCaps) -> ConstraintFace {
    let mut best = (ConstraintFace::G1, f64::INFINITY);
    for (face, g) in ConstraintFace::ALL.into_iter().zip(caps.constraint_values(x)) {
        if g.abs() < best.1 {
            best = (face, g.abs());
        }
    }
    best.0
}

fn nearest_boundary_point(x: State, caps: &ConstraintCaps) -> State {
    let candidates = [
        (caps.xbar1 - x.x1, State::new(caps.xbar1, x.x2)),
        (x.x1, State::new(0.0, x.x2)),
        (caps.xbar2 - x.x2, State::new(x.x1, caps.xbar2)),
        (x.x2, State::new(x.x1, 0.0)),
    ];
    candidates
        .into_iter()
        .fold((f64::INFINITY, x), |best, c| {
            if c.0.abs() < best.0 {
                (c.0.abs(), c.1)
            } else {
                best
            }
        })
        .1
}

/// Closes a barrier curve into a counterclockwise polygon.
pub fn region_from_barrier(curve: &BarrierCurve, case: Case, caps: &ConstraintCaps) -> RegionSet {
    // Barrier from its far end to the tangent point.
    let mut vertices: Vec<State> = curve.states().collect::<Vec<_>>().into_iter().rev().collect();
    let mut closure = Closure::HitFace;
    let far = match curve.termination {
        Termination::HitFace { point, .. } => point,
        Termination::VelocityStall { equilibrium } => {
            closure = Closure::VelocityStallRadial;
            let anchor = nearest_boundary_point(equilibrium, caps);
            vertices.insert(0, anchor);
            anchor
        }
        Termination::HorizonExceeded => {
            let anchor = nearest_boundary_point(curve.far_end().state, caps);
            vertices.insert(0, anchor);
            anchor
        }
    };
    let barrier_len = vertices.len();
    let tangent = curve.tangent.point;
    let p_tan = perimeter_coord(tangent, curve.tangent.face, caps);
    let p_far = perimeter_coord(far, boundary_face(far, caps), caps);

    // Walk from the tangent point to the far end through the origin corner.
    let corners = box_corners(caps);
    let corner_coords = [0.0, caps.xbar1, caps.xbar1 + caps.xbar2, 2.0 * caps.xbar1 + caps.xbar2];
    let perimeter = 2.0 * (caps.xbar1 + caps.xbar2);
    let mut walk: Vec<(f64, State)> = Vec::new();
    if p_far < p_tan {
        // counterclockwise, wrapping past the origin
        for (c, v) in corner_coords.iter().zip(corners) {
            let unwrapped = if *c <= p_tan { c + perimeter } else { *c };
            let far_unwrapped = p_far + perimeter;
            if unwrapped > p_tan && unwrapped < far_unwrapped {
                walk.push((unwrapped, v));
            }
        }
        walk.sort_by(|a, b| a.0.total_cmp(&b.0));
    } else {
        // clockwise, wrapping past the origin
        for (c, v) in corner_coords.iter().zip(corners) {
            let unwrapped = if *c >= p_tan { c - perimeter } else { *c };
            let far_unwrapped = p_far - perimeter;
            if unwrapped < p_tan && unwrapped > far_unwrapped {
                walk.push((unwrapped, v));
            }
        }
        walk.sort_by(|a, b| b.0.total_cmp(&a.0));
    }
    vertices.extend(walk.into_iter().map(|(_, v)| v));
    vertices.dedup();

    let mut barrier_range = (0, barrier_len - 1);
    let mut area = signed_area(&vertices);
    if area < 0.0 {
        vertices.reverse();
        let n = vertices.len();
        barrier_range = (n - barrier_len, n - 1);
        area = -area;
    }
    RegionSet {
        kind: curve.set_kind,
        case,
        polygon: vertices,
        barrier_range: Some(barrier_range),
        area,
        closure: Some(closure),
        index: LazyIndex::default(),
    }
}

/// Barrier curves for the two sets, where they exist.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Barriers {
    pub admissible: Option<BarrierCurve>,
    pub mrpi: Option<BarrierCurve>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EfficiencyRatio {
    Value(f64),
    /// The admissible set is `{0}`; the ratio is undefined.
    Desperate(DesperateTag),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DesperateTag {
    Desperate,
}

impl EfficiencyRatio {
    pub fn value(&self) -> Option<f64> {
        match self {
            EfficiencyRatio::Value(v) => Some(*v),
            EfficiencyRatio::Desperate(_) => None,
        }
    }
}

/// `Area(M) / Area(A)`.
pub fn efficiency_ratio(mrpi: &RegionSet, admissible: &RegionSet) -> EfficiencyRatio {
    if admissible.is_degenerate() || admissible.area <= 0.0 {
        return EfficiencyRatio::Desperate(DesperateTag::Desperate);
    }
    if mrpi.is_degenerate() {
        return EfficiencyRatio::Value(0.0);
    }
    EfficiencyRatio::Value((mrpi.area / admissible.area).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Regions {
    pub admissible: RegionSet,
    pub mrpi: RegionSet,
    pub efficiency_ratio: EfficiencyRatio,
}

/// Assembles both sets from the classification and the barrier curves.
pub fn build_regions(caps: &ConstraintCaps, cls: &Classification, curves: &Barriers) -> Result<Regions> {
    let expect_adm = cls.has_barrier(SetKind::Admissible);
    let expect_mrpi = cls.has_barrier(SetKind::Mrpi);
    if expect_adm != curves.admissible.is_some() || expect_mrpi != curves.mrpi.is_some() {
        return Err(invalid(format!(
            "barriers do not match the {} case: expected admissible={expect_adm}, mrpi={expect_mrpi}",
            cls.case
        )));
    }
    for (curve, kind) in [(&curves.admissible, SetKind::Admissible), (&curves.mrpi, SetKind::Mrpi)] {
        if let Some(c) = curve {
            if c.set_kind != kind {
                return Err(invalid(format!(
                    "a {} curve was supplied as the {kind} barrier",
                    c.set_kind
                )));
            }
        }
    }
    let case = cls.case;
    let (admissible, mrpi) = match case {
        Case::Comfortable => (
            RegionSet::full_box(SetKind::Admissible, case, caps),
            RegionSet::full_box(SetKind::Mrpi, case, caps),
        ),
        Case::Desperate => (
            RegionSet::degenerate(SetKind::Admissible, case),
            RegionSet::degenerate(SetKind::Mrpi, case),
        ),
        Case::Viable | Case::ComfortableViable => {
            let admissible = match &curves.admissible {
                Some(c) => region_from_barrier(c, case, caps),
                None => RegionSet::full_box(SetKind::Admissible, case, caps),
            };
            let mrpi = match &curves.mrpi {
                Some(c) => region_from_barrier(c, case, caps),
                None => RegionSet::degenerate(SetKind::Mrpi, case),
            };
            (admissible, mrpi)
        }
    };
    let efficiency_ratio = efficiency_ratio(&mrpi, &admissible);
    Ok(Regions {
        admissible,
        mrpi,
        efficiency_ratio,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::barrier::compute_barrier;
    use crate::classifier::classify;
    use crate::geometry::polygon_is_simple;
    use crate::model::ModelParams;

    fn setup(a: f64, b: f64) -> (ConstraintCaps, Classification, Barriers) {
        let p = ModelParams::cali();
        let caps = ConstraintCaps::new(a, b).unwrap();
        let cls = classify(&p, &caps);
        let mut barriers = Barriers::default();
        if cls.has_barrier(SetKind::Admissible) {
            barriers.admissible = compute_barrier(&p, &caps, SetKind::Admissible).unwrap();
        }
        if cls.has_barrier(SetKind::Mrpi) {
            barriers.mrpi = compute_barrier(&p, &caps, SetKind::Mrpi).unwrap();
        }
        (caps, cls, barriers)
    }

    #[test]
    fn comfortable_regions_are_the_box() {
        let (caps, cls, b) = setup(0.7, 0.7);
        let r = build_regions(&caps, &cls, &b).unwrap();
        let expected = vec![
            State::new(0.0, 0.0),
            State::new(0.7, 0.0),
            State::new(0.7, 0.7),
            State::new(0.0, 0.7),
        ];
        assert_eq!(r.admissible.polygon, expected);
        assert_eq!(r.mrpi.polygon, expected);
        assert_eq!(r.admissible.area, 0.7 * 0.7);
        assert_eq!(r.efficiency_ratio, EfficiencyRatio::Value(1.0));
    }

    #[test]
    fn desperate_regions_are_the_origin() {
        let (caps, cls, b) = setup(0.15, 0.04);
        let r = build_regions(&caps, &cls, &b).unwrap();
        assert!(r.admissible.is_degenerate() && r.mrpi.is_degenerate());
        assert_eq!(r.efficiency_ratio.value(), None);
        let m = r.admissible.contains(State::ORIGIN, DEFAULT_EPS).unwrap();
        assert_eq!(m.kind, MembershipKind::Inside);
        let m = r.admissible.contains(State::new(0.01, 0.01), DEFAULT_EPS).unwrap();
        assert_eq!(m.kind, MembershipKind::Outside);
    }

    #[test]
    fn viable_admissible_region() {
        let (caps, cls, b) = setup(0.15, 0.2);
        let r = build_regions(&caps, &cls, &b).unwrap();
        let a = &r.admissible;
        assert!(a.area > 0.0 && a.area < 0.03);
        assert!(polygon_is_simple(&a.polygon));
        assert!(signed_area(&a.polygon) > 0.0);
        assert!(r.mrpi.is_degenerate());
        assert_eq!(r.efficiency_ratio, EfficiencyRatio::Value(0.0));
        assert_eq!(
            a.contains(State::ORIGIN, DEFAULT_EPS).unwrap().kind,
            MembershipKind::Inside
        );
        assert_eq!(
            a.contains(State::new(0.15, 0.2), DEFAULT_EPS).unwrap().kind,
            MembershipKind::Outside
        );
        let tangent = b.admissible.as_ref().unwrap().tangent.point;
        assert!(a.contains(tangent, DEFAULT_EPS).unwrap().is_member());
        assert!(a.contains(tangent, DEFAULT_EPS).unwrap().distance <= DEFAULT_EPS);
        let bv = a.barrier_vertices();
        let mid = bv[bv.len() / 2];
        assert_eq!(a.contains(mid, DEFAULT_EPS).unwrap().kind, MembershipKind::OnBarrier);
        // a point on the x1 axis is interior-like
        assert_eq!(
            a.contains(State::new(0.05, 0.0), DEFAULT_EPS).unwrap().kind,
            MembershipKind::Inside
        );
    }

    #[test]
    fn comfortable_viable_regions_nest() {
        let (caps, cls, b) = setup(0.7, 0.2);
        let r = build_regions(&caps, &cls, &b).unwrap();
        assert!(polygon_is_simple(&r.admissible.polygon));
        assert!(polygon_is_simple(&r.mrpi.polygon));
        for v in &r.mrpi.polygon {
            assert!(r.admissible.contains(*v, DEFAULT_EPS).unwrap().is_member(), "{v}");
        }
        let ratio = r.efficiency_ratio.value().unwrap();
        assert!(ratio > 0.0 && ratio < 1.0);
    }

    #[test]
    fn mismatched_curves_rejected() {
        let (caps, cls, b) = setup(0.15, 0.2);
        let swapped = Barriers {
            admissible: None,
            mrpi: b.admissible.clone(),
        };
        assert!(build_regions(&caps, &cls, &swapped).is_err());
        let (caps_c, cls_c, _) = setup(0.7, 0.7);
        assert!(build_regions(&caps_c, &cls_c, &b).is_err());
    }

    #[test]
    fn json_schema() {
        let (caps, cls, b) = setup(0.15, 0.2);
        let r = build_regions(&caps, &cls, &b).unwrap();
        let v = serde_json::to_value(&r.admissible).unwrap();
        for key in ["kind", "case", "vertices", "barrier_range", "area"] {
            assert!(v.get(key).is_some(), "{key}");
        }
        let back: RegionSet = serde_json::from_value(v).unwrap();
        assert_eq!(back, r.admissible);
        let csv = r.admissible.to_csv();
        assert!(csv.starts_with("x1,x2,on_barrier\n"));
        assert_eq!(
            serde_json::to_value(r.efficiency_ratio).unwrap(),
            serde_json::json!(0.0)
        );
        let d = EfficiencyRatio::Desperate(DesperateTag::Desperate);
        assert_eq!(serde_json::to_value(d).unwrap(), serde_json::json!("desperate"));
    }
}
