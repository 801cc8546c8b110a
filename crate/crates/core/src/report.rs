//! Report emission: the JSON document produced by a scenario run, and the
//! CSV table produced by a convergence study. Field order is fixed by the
//! struct definitions so repeated runs serialize byte-identically.

use crate::scenario::{Geometry, Scenario};
use crate::verify::CheckReport;
use serde::Serialize;

/// Sign and indexing conventions the numbers in the report depend on.
#[derive(Clone, Debug, Serialize)]
pub struct Conventions {
    /// Sign `s` in the shape operator `A X = s grad_X nu` (surface runs);
    /// reported as the default +1 for chart runs.
    pub shape_sign: f64,
    /// Normal orientation factor (+1/-1) applied to the chart cross product.
    pub orientation: f64,
    /// Which eigenvalue "lambda_1" denotes under Neumann conditions.
    pub neumann_indexing: &'static str,
}

impl Conventions {
    pub fn for_scenario(sc: &Scenario) -> Self {
        let (shape_sign, orientation) = match &sc.geometry {
            Geometry::Manifold(_) => (1.0, 1.0),
            Geometry::Surface(imm) => (imm.shape_sign, imm.orientation),
        };
        Conventions {
            shape_sign,
            orientation,
            neumann_indexing: "first nonconstant mode (constants deflated)",
        }
    }
}

/// Top-level JSON document for one scenario run.
#[derive(Clone, Debug, Serialize)]
pub struct Report {
    pub scenario_id: String,
    pub conventions: Conventions,
    pub checks: Vec<CheckReport>,
}

impl Report {
    pub fn to_json(&self) -> String {
        // every float the harness produces is finite, so this cannot fail
        serde_json::to_string_pretty(self).expect("report serialization")
    }

    /// True when any check is violated or aborted on an error.
    pub fn any_failed(&self) -> bool {
        self.checks
            .iter()
            .any(|c| c.verdict == crate::verify::Verdict::Violated || c.error.is_some())
    }
}

/// One row of a convergence study.
#[derive(Clone, Debug)]
pub struct ConvergeRow {
    pub level: usize,
    pub dofs: usize,
    pub lambda1: f64,
    /// Pairwise observed order; needs three consecutive levels.
    pub order_estimate: Option<f64>,
    /// Richardson extrapolate from this level and the previous one.
    pub extrapolate: Option<f64>,
}

pub fn converge_csv(rows: &[ConvergeRow]) -> String {
    let mut out = String::from("level,dofs,lambda1,order_estimate,extrapolate\n");
    for r in rows {
        let ord = r.order_estimate.map(|v| format!("{v:.6}")).unwrap_or_default();
        let ext = r.extrapolate.map(|v| format!("{v:.12e}")).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{:.12e},{},{}\n",
            r.level, r.dofs, r.lambda1, ord, ext
        ));
    }
    out
}

/// JSON document for the `spectrum` command: the lowest `k` eigenvalues on
/// the finest mesh level.
#[derive(Clone, Debug, Serialize)]
pub struct SpectrumReport {
    pub scenario_id: String,
    pub conventions: Conventions,
    pub dofs: usize,
    pub method: &'static str,
    pub eigenvalues: Vec<f64>,
    pub residuals: Vec<f64>,
}

impl SpectrumReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization")
    }
}
