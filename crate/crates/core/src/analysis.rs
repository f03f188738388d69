//! The full pipeline: classification, barriers and regions.

use serde::Serialize;

use crate::barrier::{
    compute_barrier_with, inspect_barrier, BarrierCurve, BarrierOptions, VerificationReport, VerifyTolerances,
};
use crate::classifier::{classify, Classification};
use crate::error::{Error, Result};
use crate::model::{ConstraintCaps, ModelParams, State};
use crate::policy::{recommend, PolicyAdvice, PolicyContext};
use crate::region::{build_regions, Barriers, Regions};
use crate::scenario::ScenarioFile;
use crate::tangency::SetKind;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Analysis {
    pub params: ModelParams,
    pub caps: ConstraintCaps,
    pub classification: Classification,
    pub barriers: Barriers,
    pub regions: Regions,
}

impl Analysis {
    pub fn run(p: &ModelParams, caps: &ConstraintCaps) -> Result<Self> {
        Self::run_with(p, caps, &BarrierOptions::default())
    }

    pub fn from_scenario(s: &ScenarioFile) -> Result<Self> {
        Self::run_with(&s.model, &s.caps, &s.settings.barrier_options())
    }

    pub fn run_with(p: &ModelParams, caps: &ConstraintCaps, opts: &BarrierOptions) -> Result<Self> {
        let classification = classify(p, caps);
        let mut barriers = Barriers::default();
        for kind in [SetKind::Admissible, SetKind::Mrpi] {
            if !classification.has_barrier(kind) {
                continue;
            }
            let curve = compute_barrier_with(p, caps, kind, opts)?
                .ok_or_else(|| Error::Verification(format!("the {kind} barrier leaves the box on its first step")))?;
            match kind {
                SetKind::Admissible => barriers.admissible = Some(curve),
                SetKind::Mrpi => barriers.mrpi = Some(curve),
            }
        }
        let regions = build_regions(caps, &classification, &barriers)?;
        Ok(Analysis {
            params: *p,
            caps: *caps,
            classification,
            barriers,
            regions,
        })
    }

    pub fn curves(&self) -> impl Iterator<Item = &BarrierCurve> {
        self.barriers.admissible.iter().chain(self.barriers.mrpi.iter())
    }

    pub fn verification(&self) -> Result<Vec<VerificationReport>> {
        self.curves()
            .map(|c| inspect_barrier(c, &self.params, &self.caps, &VerifyTolerances::default()))
            .collect()
    }

    pub fn context(&self) -> PolicyContext<'_> {
        PolicyContext {
            caps: &self.caps,
            regions: &self.regions,
            classification: &self.classification,
        }
    }

    pub fn recommend(&self, x: State, eps: f64) -> Result<PolicyAdvice> {
        recommend(x, &self.caps, &self.regions, &self.classification, eps)
    }
}
