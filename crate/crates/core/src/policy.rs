//! Fumigation advice from the location of the state, and forward simulation
//! under constant, scheduled or closed-loop inputs.

use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};

use crate::classifier::{Case, Classification};
use crate::error::{invalid, Result};
use crate::model::{ConstraintCaps, ConstraintFace, ModelParams, State};
use crate::ode::{Integrator, Segment, Settings};
use crate::region::{Membership, MembershipKind, Regions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    UseMin,
    UseMax,
    RelaxCapsOrIncreaseFumigation,
}

/// Which rule of the management table produced the advice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rationale {
    ComfortableBox,
    InsideMrpi,
    InsideAdmissible,
    OnAdmissibleBarrier,
    OnAdmissibleCapFace,
    OutsideAdmissible,
    Desperate,
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Action::UseMin => "use_min",
            Action::UseMax => "use_max",
            Action::RelaxCapsOrIncreaseFumigation => "relax_caps_or_increase_fumigation",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicyAdvice {
    pub action: Action,
    pub rationale: Rationale,
    pub admissible: Membership,
    pub mrpi: Membership,
}

impl PolicyAdvice {
    pub fn input(&self, p: &ModelParams) -> f64 {
        match self.action {
            Action::UseMin => p.u_min,
            Action::UseMax | Action::RelaxCapsOrIncreaseFumigation => p.u_max,
        }
    }
}

/// Advice for state `x`. Boundary bands have width `eps`.
pub fn recommend(
    x: State,
    caps: &ConstraintCaps,
    regions: &Regions,
    cls: &Classification,
    eps: f64,
) -> Result<PolicyAdvice> {
    if !x.is_finite() || !x.in_unit_square() {
        return Err(invalid(format!("state {x} lies outside the unit square")));
    }
    let admissible = regions.admissible.contains(x, eps)?;
    let mrpi = regions.mrpi.contains(x, eps)?;
    let advice = |action, rationale| PolicyAdvice {
        action,
        rationale,
        admissible,
        mrpi,
    };
    let relax = Action::RelaxCapsOrIncreaseFumigation;
    Ok(match cls.case {
        Case::Desperate if mrpi.is_member() => advice(Action::UseMin, Rationale::InsideMrpi),
        Case::Desperate => advice(relax, Rationale::Desperate),
        Case::Comfortable if caps.contains(x) => advice(Action::UseMin, Rationale::ComfortableBox),
        Case::Comfortable => advice(relax, Rationale::OutsideAdmissible),
        Case::Viable | Case::ComfortableViable => {
            if mrpi.is_member() {
                advice(Action::UseMin, Rationale::InsideMrpi)
            } else {
                match admissible.kind {
                    MembershipKind::OnBarrier => advice(Action::UseMax, Rationale::OnAdmissibleBarrier),
                    MembershipKind::OnConstraintBoundary => advice(Action::UseMax, Rationale::OnAdmissibleCapFace),
                    MembershipKind::Inside => advice(Action::UseMin, Rationale::InsideAdmissible),
                    MembershipKind::Outside => advice(relax, Rationale::OutsideAdmissible),
                }
            }
        }
    })
}

/// Everything the closed loop needs to evaluate advice.
#[derive(Debug, Clone, Copy)]
pub struct PolicyContext<'a> {
    pub caps: &'a ConstraintCaps,
    pub regions: &'a Regions,
    pub classification: &'a Classification,
}

#[derive(Debug, Clone)]
pub enum Control<'a> {
    Constant(f64),
    /// Piecewise-constant input as `(duration, u)` pieces. The last value is
    /// held until the horizon.
    Schedule(Vec<(f64, f64)>),
    ClosedLoop(PolicyContext<'a>),
}

impl Control<'_> {
    pub fn label(&self) -> String {
        match self {
            Control::Constant(u) => format!("const:{u}"),
            Control::Schedule(pieces) => format!("schedule:{}", pieces.len()),
            Control::ClosedLoop(_) => "policy".to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimOptions {
    pub settings: Settings,
    /// A cap counts as violated once exceeded by more than this.
    pub violation_tol: f64,
    pub stop_on_violation: bool,
    /// Closed loop: switch to `u_max` within this distance of the crossable
    /// boundary of the admissible set.
    pub switch_distance: f64,
    /// Closed loop: return to `u_min` only beyond this distance.
    pub hysteresis: f64,
    /// Membership band for advice.
    pub eps: f64,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            settings: Settings::default(),
            violation_tol: 0.0,
            stop_on_violation: false,
            switch_distance: 1e-4,
            hysteresis: 0.005,
            eps: crate::region::DEFAULT_EPS,
        }
    }
}

/// `u` is the input applied over the step ending at `t` (for the first
/// sample, the input applied from it).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub t: f64,
    pub x1: f64,
    pub x2: f64,
    pub u: f64,
}

impl TrajectorySample {
    pub fn state(&self) -> State {
        State::new(self.x1, self.x2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub t: f64,
    pub face: ConstraintFace,
    pub x1: f64,
    pub x2: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMeta {
    pub control: String,
    /// Closed loop only: steps taken at `u_max` because the advice was to
    /// relax the caps.
    pub relax_caps_steps: usize,
    pub switches: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub samples: Vec<TrajectorySample>,
    pub violation: Option<Violation>,
    pub metadata: TrajectoryMeta,
}

impl Trajectory {
    pub fn last_state(&self) -> State {
        self.samples.last().map_or(State::ORIGIN, |s| s.state())
    }

    /// CSV `t,x1,x2,u,violated_face`; the face column is filled from the
    /// first violation onwards.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,x1,x2,u,violated_face\n");
        for s in &self.samples {
            let face = match self.violation {
                Some(v) if s.t >= v.t => v.face.to_string(),
                _ => String::new(),
            };
            let _ = writeln!(out, "{:.16e},{:.16e},{:.16e},{:.16e},{}", s.t, s.x1, s.x2, s.u, face);
        }
        out
    }
}

fn check_input(u: f64, p: &ModelParams) -> Result<f64> {
    if !u.is_finite() || u < p.u_min || u > p.u_max {
        return Err(invalid(format!("input {u} outside [{}, {}]", p.u_min, p.u_max)));
    }
    Ok(u)
}

fn cap_excess(x: &[f64; 2], caps: &ConstraintCaps) -> f64 {
    (x[0] - caps.xbar1).max(x[1] - caps.xbar2)
}

/// Largest excess over the caps along a step's dense output, so that a
/// trajectory poking out between two samples is still caught.
pub(crate) fn peak_cap_excess(seg: &Segment<2>, caps: &ConstraintCaps) -> (f64, f64) {
    let (t1, m1) = seg.max_component(0);
    let (t2, m2) = seg.max_component(1);
    let (e1, e2) = (m1 - caps.xbar1, m2 - caps.xbar2);
    if e1 >= e2 {
        (t1, e1)
    } else {
        (t2, e2)
    }
}

fn cap_face(x: State, caps: &ConstraintCaps) -> ConstraintFace {
    if x.x1 - caps.xbar1 >= x.x2 - caps.xbar2 {
        ConstraintFace::G1
    } else {
        ConstraintFace::G3
    }
}

struct Run<'p> {
    p: &'p ModelParams,
    caps: ConstraintCaps,
    opts: SimOptions,
    traj: Trajectory,
}

impl Run<'_> {
    fn push(&mut self, t: f64, y: [f64; 2], u: f64) {
        if let Some(last) = self.traj.samples.last() {
            if t <= last.t {
                return;
            }
        }
        self.traj.samples.push(TrajectorySample {
            t,
            x1: y[0],
            x2: y[1],
            u,
        });
    }

    /// Records the first violation inside `seg`. Returns true when the run
    /// should stop.
    fn watch(&mut self, seg: &Segment<2>, offset: f64) -> bool {
        if self.traj.violation.is_some() {
            return self.opts.stop_on_violation;
        }
        let tol = self.opts.violation_tol;
        let (t_peak, excess) = peak_cap_excess(seg, &self.caps);
        if excess <= tol {
            return false;
        }
        let caps = self.caps;
        let (t, y) = seg.locate_before(|y| cap_excess(y, &caps) - tol, t_peak, 1e-12);
        let x = State::from(y);
        self.traj.violation = Some(Violation {
            t: offset + t,
            face: cap_face(x, &caps),
            x1: x.x1,
            x2: x.x2,
        });
        self.opts.stop_on_violation
    }

    /// Open loop with fixed `u` over local time `[0, duration]`.
    fn piece(&mut self, x: [f64; 2], u: f64, offset: f64, duration: f64) -> Result<([f64; 2], bool)> {
        let p = self.p;
        let rhs = |y: &[f64; 2]| p.rhs(*y, u);
        let mut integ = Integrator::new(self.opts.settings);
        let mut t = 0.0;
        let mut y = x;
        while t < duration {
            let seg = integ.step(&rhs, t, &y, duration)?;
            t = seg.t1;
            y = seg.y1;
            let stop = self.watch(&seg, offset);
            self.push(offset + t, y, u);
            if stop {
                return Ok((y, true));
            }
        }
        Ok((y, false))
    }
}

/// Forward simulation from `x0` over `[0, horizon]` days.
pub fn simulate(
    p: &ModelParams,
    caps: &ConstraintCaps,
    x0: State,
    control: &Control<'_>,
    horizon: f64,
    opts: &SimOptions,
) -> Result<Trajectory> {
    if !x0.is_finite() || !x0.in_unit_square() {
        return Err(invalid(format!("initial state {x0} lies outside the unit square")));
    }
    if horizon <= 0.0 || !horizon.is_finite() {
        return Err(invalid("horizon must be positive and finite"));
    }
    let mut run = Run {
        p,
        caps: *caps,
        opts: *opts,
        traj: Trajectory {
            samples: Vec::new(),
            violation: None,
            metadata: TrajectoryMeta {
                control: control.label(),
                ..Default::default()
            },
        },
    };
    if cap_excess(&x0.as_array(), caps) > opts.violation_tol {
        run.traj.violation = Some(Violation {
            t: 0.0,
            face: cap_face(x0, caps),
            x1: x0.x1,
            x2: x0.x2,
        });
    }
    match control {
        Control::Constant(u) => {
            let u = check_input(*u, p)?;
            run.traj.samples.push(sample(0.0, x0, u));
            if !(run.traj.violation.is_some() && opts.stop_on_violation) {
                run.piece(x0.as_array(), u, 0.0, horizon)?;
            }
        }
        Control::Schedule(pieces) => {
            if pieces.is_empty() {
                return Err(invalid("schedule must have at least one piece"));
            }
            for &(d, u) in pieces {
                check_input(u, p)?;
                if d <= 0.0 || !d.is_finite() {
                    return Err(invalid(format!("schedule duration {d} must be positive")));
                }
            }
            run.traj.samples.push(sample(0.0, x0, pieces[0].1));
            let mut start = 0.0;
            let mut y = x0.as_array();
            for (i, &(d, u)) in pieces.iter().enumerate() {
                if start >= horizon || (run.traj.violation.is_some() && opts.stop_on_violation) {
                    break;
                }
                let last = i + 1 == pieces.len();
                let d = if last { horizon - start } else { d.min(horizon - start) };
                let (y_end, stop) = run.piece(y, u, start, d)?;
                y = y_end;
                if stop {
                    break;
                }
                start += d;
            }
        }
        Control::ClosedLoop(ctx) => closed_loop(&mut run, ctx, x0, horizon)?,
    }
    Ok(run.traj)
}

fn sample(t: f64, x: State, u: f64) -> TrajectorySample {
    TrajectorySample {
        t,
        x1: x.x1,
        x2: x.x2,
        u,
    }
}

fn guarded(case: Case) -> bool {
    matches!(case, Case::Viable | Case::ComfortableViable)
}

fn closed_loop(run: &mut Run<'_>, ctx: &PolicyContext<'_>, x0: State, horizon: f64) -> Result<()> {
    let p = run.p;
    let opts = run.opts;
    let admissible = &ctx.regions.admissible;
    let guard = guarded(ctx.classification.case) && !admissible.is_degenerate();
    let advise = |x: State| recommend(x, ctx.caps, ctx.regions, ctx.classification, opts.eps);

    let first = advise(x0)?;
    let mut high = first.action != Action::UseMin || (guard && admissible.signed_distance(x0) <= opts.switch_distance);
    let mut relax = first.action == Action::RelaxCapsOrIncreaseFumigation;
    let input = |high: bool| if high { p.u_max } else { p.u_min };
    run.traj.samples.push(sample(0.0, x0, input(high)));

    let mut integ = Integrator::new(opts.settings);
    let mut t = 0.0;
    let mut y = x0.as_array();
    while t < horizon {
        let u = input(high);
        let rhs = |y: &[f64; 2]| p.rhs(*y, u);
        let mut seg = integ.step(&rhs, t, &y, horizon)?;
        let mut hit_guard = false;
        if !high && guard {
            let g = |y: &[f64; 2]| admissible.signed_distance(State::from(*y)) - opts.switch_distance;
            if g(&seg.y1) <= 0.0 {
                let (t_hit, y_hit) = seg.locate(g, 1e-12);
                seg = truncated(&seg, t_hit, y_hit, &rhs);
                hit_guard = true;
            }
        }
        t = seg.t1;
        y = seg.y1;
        let stop = run.watch(&seg, 0.0);
        run.push(t, y, u);
        if relax {
            run.traj.metadata.relax_caps_steps += 1;
        }
        if stop {
            break;
        }

        let x = State::from(y);
        let advice = advise(x)?;
        relax = advice.action == Action::RelaxCapsOrIncreaseFumigation;
        let next_high = if hit_guard || advice.action != Action::UseMin {
            true
        } else if high {
            !(advice.mrpi.is_member() || admissible.signed_distance(x) > opts.hysteresis)
        } else {
            false
        };
        if next_high != high {
            run.traj.metadata.switches += 1;
            high = next_high;
            integ.restart();
        }
    }
    Ok(())
}

fn truncated<F: Fn(&[f64; 2]) -> [f64; 2]>(seg: &Segment<2>, t: f64, y: [f64; 2], rhs: &F) -> Segment<2> {
    Segment {
        t0: seg.t0,
        t1: t,
        y0: seg.y0,
        y1: y,
        f0: seg.f0,
        f1: rhs(&y),
    }
}

/// One open-loop move of `dt` days at input `u`, as used by interactive
/// sessions. Identical to one piece of a scheduled [`simulate`].
pub fn advance(
    p: &ModelParams,
    caps: &ConstraintCaps,
    x: State,
    u: f64,
    dt: f64,
    opts: &SimOptions,
) -> Result<Trajectory> {
    simulate(p, caps, x, &Control::Schedule(vec![(dt, u)]), dt, opts)
}
