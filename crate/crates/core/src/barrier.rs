//! Barrier curves traced backward from a tangent point.
//!
//! Along a barrier the state and adjoint satisfy
//!
//! ```text
//! dx/dt = f(x, u),  d lambda/dt = -(df/dx)^T lambda,  lambda . f(x, u) = 0
//! ```
//!
//! with the input minimizing (admissible set) or maximizing (MRPI) the
//! Hamiltonian `lambda . f`. Since `u` enters `f` only through `-u x1`, that
//! input is bang-bang on the sign of `lambda1`. Curves are integrated in
//! backward time `s = t_bar - t` starting from the tangent point, with the
//! adjoint renormalized to unit length after every accepted step.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::classifier::{classify, Case};
use crate::error::{invalid, Error, Result};
use crate::geometry::point_segment_distance;
use crate::model::{lie_derivative, ConstraintCaps, ConstraintFace, Costate, ModelParams, State};
use crate::ode::{Integrator, Segment, Settings};
use crate::tangency::{tangent_point, SetKind, TangentPoint};

/// Knobs for [`compute_barrier_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarrierOptions {
    pub integrator: Settings,
    /// Largest backward time before giving up, in days.
    pub horizon: f64,
    /// Largest distance between consecutive samples in the state plane.
    pub max_segment: f64,
    /// Largest distance between the dense output and the chord joining two
    /// consecutive samples.
    pub max_sagitta: f64,
    /// Speed below which the curve is considered stalled at an equilibrium.
    pub stall_speed: f64,
    /// Bisection tolerance in `s` for switches and face crossings.
    pub event_tol: f64,
}

impl Default for BarrierOptions {
    fn default() -> Self {
        BarrierOptions {
            integrator: Settings::default(),
            horizon: 10_000.0,
            max_segment: 1e-3,
            max_sagitta: 1e-8,
            stall_speed: 1e-9,
            event_tol: 1e-12,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BarrierSample {
    /// Backward time from the tangent point.
    pub s: f64,
    pub state: State,
    /// Unit-norm adjoint.
    pub costate: Costate,
    pub u: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Termination {
    HitFace { face: ConstraintFace, point: State },
    VelocityStall { equilibrium: State },
    HorizonExceeded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BarrierCurve {
    pub set_kind: SetKind,
    pub tangent: TangentPoint,
    pub samples: Vec<BarrierSample>,
    pub termination: Termination,
    /// Backward times at which `lambda1` changed sign.
    pub switches: Vec<f64>,
}

impl BarrierCurve {
    /// The sample farthest (in backward time) from the tangent point.
    pub fn far_end(&self) -> &BarrierSample {
        self.samples.last().expect("a curve has at least its tangent point")
    }

    pub fn states(&self) -> impl Iterator<Item = State> + '_ {
        self.samples.iter().map(|s| s.state)
    }

    /// CSV with header `s,x1,x2,lambda1,lambda2,u`, 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("s,x1,x2,lambda1,lambda2,u\n");
        for s in &self.samples {
            let _ = writeln!(
                out,
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                s.s, s.state.x1, s.state.x2, s.costate.lambda1, s.costate.lambda2, s.u
            );
        }
        out
    }
}

/// Bang input from the sign of `lambda1`. `lambda1 = 0` takes the `>= 0` branch.
pub fn switching_input(lam: Costate, kind: SetKind, p: &ModelParams) -> Result<f64> {
    if lam.is_zero() {
        return Err(invalid("switching input is undefined for a zero costate"));
    }
    Ok(bang(lam.lambda1 >= 0.0, kind, p))
}

fn bang(nonneg: bool, kind: SetKind, p: &ModelParams) -> f64 {
    match (kind, nonneg) {
        (SetKind::Admissible, true) | (SetKind::Mrpi, false) => p.u_max,
        (SetKind::Admissible, false) | (SetKind::Mrpi, true) => p.u_min,
    }
}

/// Barrier of the requested set with default options.
///
/// Returns `Ok(None)` when the set has no barrier: no tangent point exists
/// for that kind, or the candidate from it leaves the box on the first
/// backward step. Comfortable and desperate systems are a precondition error.
pub fn compute_barrier(p: &ModelParams, caps: &ConstraintCaps, kind: SetKind) -> Result<Option<BarrierCurve>> {
    compute_barrier_with(p, caps, kind, &BarrierOptions::default())
}

pub fn compute_barrier_with(
    p: &ModelParams,
    caps: &ConstraintCaps,
    kind: SetKind,
    opts: &BarrierOptions,
) -> Result<Option<BarrierCurve>> {
    let cls = classify(p, caps);
    if matches!(cls.case, Case::Comfortable | Case::Desperate) {
        return Err(Error::Precondition(format!(
            "no barrier exists in the {} case",
            cls.case
        )));
    }
    let Some(face) = cls.tangent_face(kind) else {
        return Ok(None);
    };
    match tangent_point(p, caps, kind, face)? {
        Some(tp) => trace_barrier(p, caps, &tp, opts),
        None => Ok(None),
    }
}

type Packed = [f64; 4];

fn pack(x: State, lam: Costate) -> Packed {
    [x.x1, x.x2, lam.lambda1, lam.lambda2]
}

fn unpack_state(y: &Packed) -> State {
    State::new(y[0], y[1])
}

/// Traces the candidate barrier from `tangent` without consulting the
/// classifier. `Ok(None)` means the first backward step left the open box.
pub fn trace_barrier(
    p: &ModelParams,
    caps: &ConstraintCaps,
    tangent: &TangentPoint,
    opts: &BarrierOptions,
) -> Result<Option<BarrierCurve>> {
    let kind = tangent.set_kind;
    let lam0 = tangent
        .terminal_costate
        .normalized()
        .ok_or_else(|| invalid("terminal costate must be nonzero"))?;
    let mut nonneg = lam0.lambda1 >= 0.0;
    let mut u = bang(nonneg, kind, p);

    let mut curve = BarrierCurve {
        set_kind: kind,
        tangent: *tangent,
        samples: vec![BarrierSample {
            s: 0.0,
            state: tangent.point,
            costate: lam0,
            u,
        }],
        termination: Termination::HorizonExceeded,
        switches: Vec::new(),
    };

    let mut integ = Integrator::new(opts.integrator);
    let mut s = 0.0;
    let mut y = pack(tangent.point, lam0);
    let mut first_step = true;

    loop {
        if s >= opts.horizon {
            return Err(Error::HorizonExceeded {
                horizon: opts.horizon,
                partial: Box::new(curve),
            });
        }
        let rhs = |y: &Packed| -> Packed {
            let x = [y[0], y[1]];
            let f = p.rhs(x, u);
            let m = p.adjoint(x, [y[2], y[3]], u);
            [-f[0], -f[1], -m[0], -m[1]]
        };
        let seg = integ.step(&rhs, s, &y, opts.horizon)?;

        if first_step {
            first_step = false;
            if !caps.contains_strictly(unpack_state(&seg.y1)) {
                return Ok(None);
            }
        }

        // Earliest of: leaving the closed box, lambda1 changing sign.
        let exit = peak_violation(&seg, caps)
            .map(|t_peak| seg.locate_before(|y| max_constraint(caps, y), t_peak, opts.event_tol));
        let switch = ((seg.y1[2] >= 0.0) != nonneg).then(|| seg.locate(|y| y[2], opts.event_tol));

        match (exit, switch) {
            (Some((t_exit, y_exit)), sw) if sw.is_none_or(|(t_sw, _)| t_exit <= t_sw) => {
                let mut x = unpack_state(&y_exit);
                let face = caps
                    .deepest_violation(x)
                    .or_else(|| caps.active_faces(x, 1e-9).first().copied())
                    .unwrap_or(ConstraintFace::G1);
                x = project_onto_face(x, face, caps);
                let y_end = [x.x1, x.x2, y_exit[2], y_exit[3]];
                push_resampled(&mut curve, &seg, t_exit, y_end, u, opts);
                curve.termination = Termination::HitFace { face, point: x };
                return Ok(Some(curve));
            }
            (_, Some((t_sw, y_sw))) => {
                push_resampled(&mut curve, &seg, t_sw, y_sw, u, opts);
                curve.switches.push(t_sw);
                nonneg = !nonneg;
                u = bang(nonneg, kind, p);
                s = t_sw;
                y = renormalize(y_sw)?;
                integ.restart();
            }
            _ => {
                push_resampled(&mut curve, &seg, seg.t1, seg.y1, u, opts);
                s = seg.t1;
                y = renormalize(seg.y1)?;
            }
        }

        let x = unpack_state(&y);
        let f = p.rhs(x.as_array(), u);
        if f[0].hypot(f[1]) < opts.stall_speed {
            curve.termination = Termination::VelocityStall { equilibrium: x };
            return Ok(Some(curve));
        }
    }
}

/// Time of the deepest excursion out of the closed box within the step,
/// if there is one.
fn peak_violation(seg: &Segment<4>, caps: &ConstraintCaps) -> Option<f64> {
    let (t1, hi1) = seg.max_component(0);
    let (t2, hi2) = seg.max_component(1);
    let (t3, lo1) = seg.min_component(0);
    let (t4, lo2) = seg.min_component(1);
    [(t1, hi1 - caps.xbar1), (t2, hi2 - caps.xbar2), (t3, -lo1), (t4, -lo2)]
        .into_iter()
        .filter(|&(_, v)| v > 0.0)
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(t, _)| t)
}

fn max_constraint(caps: &ConstraintCaps, y: &Packed) -> f64 {
    caps.constraint_values(unpack_state(y))
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max)
}

fn project_onto_face(x: State, face: ConstraintFace, caps: &ConstraintCaps) -> State {
    let clamp = |v: f64, hi: f64| v.clamp(0.0, hi);
    let (x1, x2) = (clamp(x.x1, caps.xbar1), clamp(x.x2, caps.xbar2));
    match face {
        ConstraintFace::G1 => State::new(caps.xbar1, x2),
        ConstraintFace::G2 => State::new(0.0, x2),
        ConstraintFace::G3 => State::new(x1, caps.xbar2),
        ConstraintFace::G4 => State::new(x1, 0.0),
    }
}

fn renormalize(y: Packed) -> Result<Packed> {
    let lam = Costate::new(y[2], y[3])
        .normalized()
        .ok_or_else(|| Error::Verification("costate vanished along the barrier".into()))?;
    Ok([y[0], y[1], lam.lambda1, lam.lambda2])
}

/// Appends samples on `(seg.t0, t_end]` so that consecutive states are at
/// most `max_segment` apart. The last one is exactly `y_end`.
fn push_resampled(
    curve: &mut BarrierCurve,
    seg: &Segment<4>,
    t_end: f64,
    y_end: Packed,
    u: f64,
    opts: &BarrierOptions,
) {
    let span = t_end - seg.t0;
    if span <= 0.0 {
        return;
    }
    let at = |t: f64| if t >= t_end { y_end } else { seg.eval(t) };
    let chord = unpack_state(&seg.y0).dist(unpack_state(&y_end));
    let dt_max = span / ((chord / opts.max_segment).ceil()).max(1.0);
    let mut dt = dt_max;
    let mut t = seg.t0;
    let mut prev = unpack_state(&seg.y0);
    while t < t_end {
        let next = |dt: f64| {
            if t_end - (t + dt) <= 1e-9 * dt {
                t_end
            } else {
                t + dt
            }
        };
        let too_far = |t_next: f64, x: State| {
            let mid = unpack_state(&seg.eval(0.5 * (t + t_next)));
            prev.dist(x) > opts.max_segment || point_segment_distance(mid, prev, x) > opts.max_sagitta
        };
        let mut t_next = next(dt);
        let mut y = at(t_next);
        while too_far(t_next, unpack_state(&y)) && t_next - t > 1e-15 * span.max(1.0) {
            dt *= 0.5;
            t_next = next(dt);
            y = at(t_next);
        }
        let costate = Costate::new(y[2], y[3])
            .normalized()
            .unwrap_or(Costate::new(y[2], y[3]));
        prev = unpack_state(&y);
        curve.samples.push(BarrierSample {
            s: t_next,
            state: prev,
            costate,
            u,
        });
        t = t_next;
        dt = (2.0 * dt).min(dt_max);
    }
}

/// Tolerances for [`verify_barrier`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyTolerances {
    pub hamiltonian: f64,
    pub extremality: f64,
    pub graze_distance: f64,
    pub graze_violation: f64,
    pub terminal_tangency: f64,
}

impl Default for VerifyTolerances {
    fn default() -> Self {
        VerifyTolerances {
            hamiltonian: 1e-6,
            extremality: 1e-12,
            graze_distance: 1e-4,
            graze_violation: 1e-6,
            terminal_tangency: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    /// Largest `|lambda . f(x, u)|` and the sample where it occurs.
    pub hamiltonian_max: f64,
    pub hamiltonian_worst: usize,
    /// Largest amount by which the recorded input fails to be extremal.
    pub extremality_gap: f64,
    pub extremality_worst: usize,
    /// Distance from the forward re-integration's endpoint to the tangent point.
    pub graze_distance: f64,
    pub graze_max_violation: f64,
    /// `L_f g` at the tangent point under the recorded terminal input.
    pub terminal_lie_derivative: f64,
    pub failures: Vec<String>,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Checks the necessary conditions along a curve and returns the report,
/// whether or not it passes.
pub fn inspect_barrier(
    curve: &BarrierCurve,
    p: &ModelParams,
    caps: &ConstraintCaps,
    tol: &VerifyTolerances,
) -> Result<VerificationReport> {
    let kind = curve.set_kind;
    let mut hamiltonian_max = 0.0f64;
    let mut hamiltonian_worst = 0;
    let mut extremality_gap = 0.0f64;
    let mut extremality_worst = 0;
    for (i, s) in curve.samples.iter().enumerate() {
        let x = s.state.as_array();
        let lam = s.costate.as_array();
        let h = |u: f64| {
            let f = p.rhs(x, u);
            lam[0] * f[0] + lam[1] * f[1]
        };
        let hr = h(s.u).abs();
        if hr > hamiltonian_max {
            hamiltonian_max = hr;
            hamiltonian_worst = i;
        }
        let best = match kind {
            SetKind::Admissible => h(p.u_min).min(h(p.u_max)),
            SetKind::Mrpi => h(p.u_min).max(h(p.u_max)),
        };
        let gap = (h(s.u) - best).abs();
        if gap > extremality_gap {
            extremality_gap = gap;
            extremality_worst = i;
        }
    }

    let (graze_distance, graze_max_violation) = graze(curve, p, caps)?;
    let u0 = curve.samples[0].u;
    let terminal_lie_derivative = lie_derivative(curve.tangent.face, curve.tangent.point, u0, p);

    let mut failures = Vec::new();
    if hamiltonian_max > tol.hamiltonian {
        failures.push(format!(
            "hamiltonian residual {hamiltonian_max:e} at sample {hamiltonian_worst}"
        ));
    }
    if extremality_gap > tol.extremality {
        failures.push(format!(
            "input not extremal by {extremality_gap:e} at sample {extremality_worst}"
        ));
    }
    if graze_distance > tol.graze_distance {
        failures.push(format!(
            "forward re-integration misses the tangent point by {graze_distance:e}"
        ));
    }
    if graze_max_violation > tol.graze_violation {
        failures.push(format!(
            "forward re-integration violates a cap by {graze_max_violation:e}"
        ));
    }
    if terminal_lie_derivative.abs() > tol.terminal_tangency {
        failures.push(format!(
            "terminal lie derivative {terminal_lie_derivative:e} is not zero"
        ));
    }
    Ok(VerificationReport {
        hamiltonian_max,
        hamiltonian_worst,
        extremality_gap,
        extremality_worst,
        graze_distance,
        graze_max_violation,
        terminal_lie_derivative,
        failures,
    })
}

/// Verifies a curve at default tolerances; failing checks are an error.
pub fn verify_barrier(curve: &BarrierCurve, p: &ModelParams, caps: &ConstraintCaps) -> Result<VerificationReport> {
    let report = inspect_barrier(curve, p, caps, &VerifyTolerances::default())?;
    if report.passed() {
        Ok(report)
    } else {
        Err(Error::Verification(report.failures.join("; ")))
    }
}

/// Re-integrates the state forward from the far end using the recorded
/// input schedule. Returns (distance to tangent point, max cap violation).
fn graze(curve: &BarrierCurve, p: &ModelParams, caps: &ConstraintCaps) -> Result<(f64, f64)> {
    let samples = &curve.samples;
    let mut x = samples.last().expect("nonempty").state.as_array();
    let mut max_violation = caps.violation(State::from(x));
    let mut integ = Integrator::new(Settings::default());
    // Arcs of constant input, walked from the far end toward s = 0.
    let mut hi = samples.len() - 1;
    while hi > 0 {
        let u = samples[hi].u;
        let mut lo = hi - 1;
        while lo > 0 && samples[lo].u == u {
            lo -= 1;
        }
        let duration = samples[hi].s - samples[lo].s;
        let rhs = |y: &[f64; 2]| p.rhs(*y, u);
        let mut t = 0.0;
        integ.restart();
        while t < duration {
            let seg = integ.step(&rhs, t, &x, duration)?;
            for k in 1..=4 {
                let y = seg.eval(seg.t0 + seg.h() * k as f64 / 4.0);
                max_violation = max_violation.max(caps.violation(State::from(y)));
            }
            t = seg.t1;
            x = seg.y1;
        }
        hi = lo;
    }
    Ok((State::from(x).dist(curve.tangent.point), max_violation))
}

/// Whether the polyline through the curve's states crosses itself.
pub fn is_simple(curve: &BarrierCurve) -> bool {
    let pts: Vec<State> = curve.states().collect();
    crate::geometry::polyline_is_simple(&pts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tangency::tangent_point_g1;

    fn caps(a: f64, b: f64) -> ConstraintCaps {
        ConstraintCaps::new(a, b).unwrap()
    }

    #[test]
    fn switching_law() {
        let p = ModelParams::cali();
        let e1 = Costate::new(1.0, 0.0);
        let e2 = Costate::new(0.0, 1.0);
        assert_eq!(switching_input(e1, SetKind::Admissible, &p).unwrap(), p.u_max);
        assert_eq!(switching_input(e1, SetKind::Mrpi, &p).unwrap(), p.u_min);
        assert_eq!(switching_input(e2, SetKind::Admissible, &p).unwrap(), p.u_max);
        assert_eq!(switching_input(e2, SetKind::Mrpi, &p).unwrap(), p.u_min);
        let neg = Costate::new(-0.5, 0.5);
        assert_eq!(switching_input(neg, SetKind::Admissible, &p).unwrap(), p.u_min);
        assert_eq!(switching_input(neg, SetKind::Mrpi, &p).unwrap(), p.u_max);
        assert!(switching_input(Costate::new(0.0, 0.0), SetKind::Mrpi, &p).is_err());
    }

    #[test]
    fn precondition_errors() {
        let p = ModelParams::cali();
        for c in [caps(0.7, 0.7), caps(0.15, 0.04)] {
            for kind in [SetKind::Admissible, SetKind::Mrpi] {
                assert!(matches!(compute_barrier(&p, &c, kind), Err(Error::Precondition(_))));
            }
        }
    }

    #[test]
    fn mrpi_candidate_rejected_in_viable_case() {
        let p = ModelParams::cali();
        assert!(compute_barrier(&p, &caps(0.15, 0.2), SetKind::Mrpi).unwrap().is_none());
        // tracing directly from the point shows the same rejection
        let tp = tangent_point_g1(&p, &caps(0.15, 0.2), SetKind::Mrpi).unwrap();
        assert!((tp.point.x2 - 0.076708).abs() < 5e-7);
        assert!(trace_barrier(&p, &caps(0.15, 0.2), &tp, &BarrierOptions::default())
            .unwrap()
            .is_none());
    }

    #[test]
    fn admissible_barrier_in_viable_case() {
        let p = ModelParams::cali();
        let c = caps(0.15, 0.2);
        let curve = compute_barrier(&p, &c, SetKind::Admissible).unwrap().unwrap();
        assert_eq!(curve.samples[0].state, curve.tangent.point);
        assert!((curve.tangent.point.x2 - 0.115178).abs() < 5e-7);
        assert!(curve.samples[1].state.x1 < 0.15);
        for s in &curve.samples {
            assert!((s.costate.norm() - 1.0).abs() < 1e-12);
        }
        for s in &curve.samples[..curve.samples.len() - 1] {
            assert!(c.contains(s.state));
        }
        assert!(matches!(curve.termination, Termination::HitFace { .. }));
        verify_barrier(&curve, &p, &c).unwrap();
        assert!(is_simple(&curve));
        for w in curve.samples.windows(2) {
            assert!(w[0].state.dist(w[1].state) <= 1e-3 + 1e-12);
            assert!(w[1].s > w[0].s);
        }
    }

    #[test]
    fn negated_costate_breaks_extremality() {
        let p = ModelParams::cali();
        let c = caps(0.15, 0.2);
        let mut curve = compute_barrier(&p, &c, SetKind::Admissible).unwrap().unwrap();
        let i = curve.samples.len() / 2;
        assert!(curve.samples[i].costate.lambda1.abs() > 1e-3);
        let lam = curve.samples[i].costate;
        curve.samples[i].costate = Costate::new(-lam.lambda1, -lam.lambda2);
        let report = inspect_barrier(&curve, &p, &c, &VerifyTolerances::default()).unwrap();
        assert!(!report.passed());
        assert_eq!(report.extremality_worst, i);
        assert!(verify_barrier(&curve, &p, &c).is_err());
    }

    #[test]
    fn truncated_curve_grazes_trivially() {
        let p = ModelParams::cali();
        let c = caps(0.7, 0.2);
        let mut curve = compute_barrier(&p, &c, SetKind::Mrpi).unwrap().unwrap();
        curve.samples.truncate(1);
        let report = verify_barrier(&curve, &p, &c).unwrap();
        assert_eq!(report.graze_distance, 0.0);
    }

    #[test]
    fn csv_header_and_precision() {
        let p = ModelParams::cali();
        let curve = compute_barrier(&p, &caps(0.7, 0.2), SetKind::Mrpi).unwrap().unwrap();
        let csv = curve.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("s,x1,x2,lambda1,lambda2,u"));
        let first: Vec<f64> = lines.next().unwrap().split(',').map(|v| v.parse().unwrap()).collect();
        assert_eq!(first[1], curve.tangent.point.x1);
        assert_eq!(csv.lines().count(), curve.samples.len() + 1);
    }

    #[test]
    fn horizon_exceeded_carries_partial_curve() {
        let p = ModelParams::cali();
        let c = caps(0.7, 0.2);
        let opts = BarrierOptions {
            horizon: 1.0,
            ..BarrierOptions::default()
        };
        match compute_barrier_with(&p, &c, SetKind::Mrpi, &opts) {
            Err(Error::HorizonExceeded { partial, .. }) => assert!(partial.samples.len() > 1),
            other => panic!("expected horizon error, got {other:?}"),
        }
    }
}
