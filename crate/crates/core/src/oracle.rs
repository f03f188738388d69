//! Brute-force grid approximation of both sets by forward simulation.
//!
//! The model is cooperative and its field decreases in `u`, so the constant
//! input `u_max` yields the smallest response among all admissible inputs
//! and `u_min` the largest. A grid point therefore belongs to the admissible
//! set iff its `u_max` trajectory stays in the box, and to the MRPI iff its
//! `u_min` trajectory does.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::model::{endemic_equilibrium, ConstraintCaps, ModelParams, State};
use crate::ode::{Integrator, Settings};
use crate::policy::peak_cap_excess;
use crate::region::{RegionSet, Regions};
use crate::tangency::SetKind;

/// Slack allowed when testing box membership along a trajectory.
const STAY_TOL: f64 = 1e-12;
/// Radius of the equilibrium tail test.
const TAIL_RADIUS: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridVerdict {
    pub n1: usize,
    pub n2: usize,
    pub caps: ConstraintCaps,
    pub horizon: f64,
    /// Row-major by `x1`: index `i1 * n2 + i2`.
    pub admissible: Vec<bool>,
    pub invariant: Vec<bool>,
}

impl GridVerdict {
    pub fn index(&self, i1: usize, i2: usize) -> usize {
        i1 * self.n2 + i2
    }

    pub fn point(&self, i1: usize, i2: usize) -> State {
        grid_point(&self.caps, self.n1, self.n2, i1, i2)
    }

    pub fn flags(&self, kind: SetKind) -> &[bool] {
        match kind {
            SetKind::Admissible => &self.admissible,
            SetKind::Mrpi => &self.invariant,
        }
    }

    /// Fraction of the box flagged, an estimate of the set's relative area.
    pub fn area_fraction(&self, kind: SetKind) -> f64 {
        let flags = self.flags(kind);
        flags.iter().filter(|&&b| b).count() as f64 / flags.len() as f64
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("x1,x2,admissible,invariant\n");
        for i1 in 0..self.n1 {
            for i2 in 0..self.n2 {
                let x = self.point(i1, i2);
                let k = self.index(i1, i2);
                let _ = writeln!(
                    out,
                    "{:.16e},{:.16e},{},{}",
                    x.x1, x.x2, self.admissible[k], self.invariant[k]
                );
            }
        }
        out
    }

    /// Plain PGM (P2) picture: 0 outside, 1 admissible only, 2 invariant.
    /// The top row is the largest `x2`.
    pub fn to_pgm(&self) -> String {
        let mut out = format!("P2\n{} {}\n2\n", self.n1, self.n2);
        for i2 in (0..self.n2).rev() {
            let row: Vec<&str> = (0..self.n1)
                .map(|i1| {
                    let k = self.index(i1, i2);
                    if self.invariant[k] {
                        "2"
                    } else if self.admissible[k] {
                        "1"
                    } else {
                        "0"
                    }
                })
                .collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
        out
    }
}

fn grid_point(caps: &ConstraintCaps, n1: usize, n2: usize, i1: usize, i2: usize) -> State {
    State::new(
        caps.xbar1 * i1 as f64 / (n1 - 1) as f64,
        caps.xbar2 * i2 as f64 / (n2 - 1) as f64,
    )
}

/// Whether the trajectory from `x0` under constant `u` stays in the box
/// over `horizon` days, with early exits from the ordering argument and a
/// tail test at the horizon.
pub fn stays_in_box(
    p: &ModelParams,
    caps: &ConstraintCaps,
    x0: State,
    u: f64,
    horizon: f64,
    settings: &Settings,
) -> Result<bool> {
    let eq = endemic_equilibrium(u, p)?;
    let eq_inside = eq.is_none_or(|e| caps.contains(e));
    let outside = |y: &[f64; 2]| y[0] > caps.xbar1 + STAY_TOL || y[1] > caps.xbar2 + STAY_TOL;
    let rhs = |y: &[f64; 2]| p.rhs(*y, u);
    if outside(&x0.as_array()) {
        return Ok(false);
    }
    let mut integ = Integrator::new(*settings);
    let mut t = 0.0;
    let mut y = x0.as_array();
    loop {
        let f = rhs(&y);
        // Nonincreasing from here on.
        if f[0] <= 0.0 && f[1] <= 0.0 {
            return Ok(true);
        }
        // Nondecreasing towards the endemic equilibrium.
        if f[0] >= 0.0 && f[1] >= 0.0 {
            return Ok(eq_inside);
        }
        if t >= horizon {
            break;
        }
        let seg = integ.step(&rhs, t, &y, horizon)?;
        if peak_cap_excess(&seg, caps).1 > STAY_TOL {
            return Ok(false);
        }
        t = seg.t1;
        y = seg.y1;
    }
    let f = rhs(&y);
    let near_eq = match eq {
        Some(e) => eq_inside && State::from(y).dist(e) < TAIL_RADIUS,
        None => State::from(y).dist(State::ORIGIN) < TAIL_RADIUS,
    };
    Ok((y[1] < caps.xbar2 && f[1] <= 0.0) || near_eq)
}

pub fn grid_membership(
    p: &ModelParams,
    caps: &ConstraintCaps,
    n1: usize,
    n2: usize,
    horizon: f64,
) -> Result<GridVerdict> {
    grid_membership_with(p, caps, n1, n2, horizon, &Settings::default())
}

pub fn grid_membership_with(
    p: &ModelParams,
    caps: &ConstraintCaps,
    n1: usize,
    n2: usize,
    horizon: f64,
    settings: &Settings,
) -> Result<GridVerdict> {
    if n1 < 2 || n2 < 2 {
        return Err(invalid("grid resolution must be at least 2 in each direction"));
    }
    if horizon <= 0.0 || !horizon.is_finite() {
        return Err(invalid("horizon must be positive and finite"));
    }
    let mut admissible = Vec::with_capacity(n1 * n2);
    let mut invariant = Vec::with_capacity(n1 * n2);
    for i1 in 0..n1 {
        for i2 in 0..n2 {
            let x = grid_point(caps, n1, n2, i1, i2);
            admissible.push(stays_in_box(p, caps, x, p.u_max, horizon, settings)?);
            invariant.push(stays_in_box(p, caps, x, p.u_min, horizon, settings)?);
        }
    }
    Ok(GridVerdict {
        n1,
        n2,
        caps: *caps,
        horizon,
        admissible,
        invariant,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Disagreement {
    pub i1: usize,
    pub i2: usize,
    pub x1: f64,
    pub x2: f64,
    pub region: bool,
    pub oracle: bool,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Agreement {
    pub kind: SetKind,
    pub points: usize,
    pub agreeing: usize,
    pub off_band_points: usize,
    pub off_band_agreeing: usize,
    pub disagreements: Vec<Disagreement>,
}

impl Agreement {
    pub fn fraction(&self) -> f64 {
        ratio(self.agreeing, self.points)
    }

    pub fn off_band_fraction(&self) -> f64 {
        ratio(self.off_band_agreeing, self.off_band_points)
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        1.0
    } else {
        a as f64 / b as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub band: f64,
    pub admissible: Agreement,
    pub mrpi: Agreement,
}

impl Comparison {
    /// Both sets agree on at least `threshold` of the off-band points.
    pub fn passed(&self, threshold: f64) -> bool {
        self.admissible.off_band_fraction() >= threshold && self.mrpi.off_band_fraction() >= threshold
    }

    pub fn summary(&self) -> String {
        let line = |a: &Agreement| {
            format!(
                "{}: overall {:.4} ({}/{}), off-band {:.4} ({}/{})",
                a.kind,
                a.fraction(),
                a.agreeing,
                a.points,
                a.off_band_fraction(),
                a.off_band_agreeing,
                a.off_band_points
            )
        };
        format!("band {}\n{}\n{}\n", self.band, line(&self.admissible), line(&self.mrpi))
    }
}

fn agreement(verdict: &GridVerdict, region: &RegionSet, band: f64) -> Result<Agreement> {
    let flags = verdict.flags(region.kind);
    let mut a = Agreement {
        kind: region.kind,
        points: 0,
        agreeing: 0,
        off_band_points: 0,
        off_band_agreeing: 0,
        disagreements: Vec::new(),
    };
    for i1 in 0..verdict.n1 {
        for i2 in 0..verdict.n2 {
            let x = verdict.point(i1, i2);
            let m = region.contains(x, crate::region::DEFAULT_EPS)?;
            let oracle = flags[verdict.index(i1, i2)];
            let same = m.is_member() == oracle;
            a.points += 1;
            a.agreeing += same as usize;
            if m.distance > band {
                a.off_band_points += 1;
                a.off_band_agreeing += same as usize;
            }
            if !same {
                a.disagreements.push(Disagreement {
                    i1,
                    i2,
                    x1: x.x1,
                    x2: x.x2,
                    region: m.is_member(),
                    oracle,
                    distance: m.distance,
                });
            }
        }
    }
    Ok(a)
}

/// Agreement between the polygonal sets and the grid verdict; points within
/// `band` of a region boundary count only towards the overall fraction.
pub fn compare(verdict: &GridVerdict, regions: &Regions, band: f64) -> Result<Comparison> {
    Ok(Comparison {
        band,
        admissible: agreement(verdict, &regions.admissible, band)?,
        mrpi: agreement(verdict, &regions.mrpi, band)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn verdict(a: f64, b: f64, n: usize) -> GridVerdict {
        grid_membership(&ModelParams::cali(), &ConstraintCaps::new(a, b).unwrap(), n, n, 3000.0).unwrap()
    }

    #[test]
    fn comfortable_everything_inside() {
        let v = verdict(0.7, 0.7, 50);
        assert!(v.admissible.iter().all(|&b| b));
        assert!(v.invariant.iter().all(|&b| b));
    }

    #[test]
    fn desperate_only_origin_cell() {
        let v = verdict(0.15, 0.04, 50);
        let cell = (0.15f64 / 49.0).hypot(0.04 / 49.0);
        for i1 in 0..50 {
            for i2 in 0..50 {
                if v.admissible[v.index(i1, i2)] {
                    assert!(
                        v.point(i1, i2).dist(State::ORIGIN) <= cell + 1e-12,
                        "{}",
                        v.point(i1, i2)
                    );
                }
            }
        }
        assert!(v.admissible[0]);
    }

    #[test]
    fn invariant_implies_admissible_and_staircase() {
        for (a, b) in [(0.7, 0.2), (0.15, 0.2), (0.5, 0.5)] {
            let v = verdict(a, b, 40);
            for k in 0..v.admissible.len() {
                assert!(!v.invariant[k] || v.admissible[k]);
            }
            for i1 in 0..v.n1 {
                let row: Vec<bool> = (0..v.n2).map(|i2| v.admissible[v.index(i1, i2)]).collect();
                let transitions = row.windows(2).filter(|w| w[0] != w[1]).count();
                assert!(transitions <= 1, "row {i1}");
                assert!(transitions == 0 || row[0]);
            }
        }
    }

    #[test]
    fn exports() {
        let v = verdict(0.7, 0.7, 3);
        let csv = v.to_csv();
        assert!(csv.starts_with("x1,x2,admissible,invariant\n"));
        assert_eq!(csv.lines().count(), 10);
        assert_eq!(v.to_pgm(), "P2\n3 3\n2\n2 2 2\n2 2 2\n2 2 2\n");
        assert!(grid_membership(&ModelParams::cali(), &v.caps, 1, 3, 10.0).is_err());
    }
}
