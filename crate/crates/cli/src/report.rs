//! Machine- and human-readable run reports. The JSON form round-trips
//! through serde and is byte-identical across runs with the same seed
//! (timing is excluded from the JSON form for that reason).

use serde::{Deserialize, Serialize};

use qfactor_core::factorise::{ConditionReport, FactorisationCertificate, MultiFactorisation};
use qfactor_core::tsirelson::ObservableResiduals;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionSummary {
    pub composition: f64,
    pub unital: f64,
    pub nonincreasing: f64,
    pub weak_unital: f64,
    pub independence_m: f64,
    pub independence_n: f64,
    pub dim_h: usize,
}

impl From<&ConditionReport> for ConditionSummary {
    fn from(r: &ConditionReport) -> Self {
        ConditionSummary {
            composition: r.cond1_residual,
            unital: r.cond2_unital_residual,
            nonincreasing: r.cond2_nonincreasing_margin,
            weak_unital: r.cond2_weak_unital_residual,
            independence_m: r.cond3_m_residual,
            independence_n: r.cond3_n_residual,
            dim_h: r.dim_h,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockRow {
    pub z: usize,
    pub d_a: usize,
    pub d_b: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservableSummary {
    pub isometry: f64,
    pub a_completeness: f64,
    pub b_completeness: f64,
    pub embed_x: f64,
    pub embed_y: f64,
    pub embed_xy: f64,
}

impl From<&ObservableResiduals> for ObservableSummary {
    fn from(r: &ObservableResiduals) -> Self {
        ObservableSummary {
            isometry: r.isometry,
            a_completeness: r.a_completeness,
            b_completeness: r.b_completeness,
            embed_x: r.embed_x,
            embed_y: r.embed_y,
            embed_xy: r.embed_xy,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChshSummary {
    pub pr_win_prob: f64,
    pub classical_max: f64,
    pub quantum_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub command: String,
    /// "pass" | "condition-failure" | "factorisation-impossible" | "error".
    pub status: String,
    pub exit_code: i32,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub conditions: Option<ConditionSummary>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub cmi: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub blocks: Option<Vec<BlockRow>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub residual: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub observables: Option<ObservableSummary>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub chsh: Option<ChshSummary>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub message: Option<String>,
    /// Wall-clock milliseconds; omitted from JSON output so that reports
    /// with identical seeds are byte-identical.
    #[serde(skip_serializing, default)]
    pub timing_ms: Option<f64>,
}

impl Report {
    pub fn new(command: &str) -> Self {
        Report {
            command: command.to_string(),
            status: "pass".into(),
            exit_code: 0,
            conditions: None,
            cmi: None,
            blocks: None,
            residual: None,
            observables: None,
            chsh: None,
            message: None,
            timing_ms: None,
        }
    }

    pub fn with_certificate(&mut self, cert: &FactorisationCertificate) {
        self.residual = Some(cert.residual);
        self.cmi = Some(cert.claim1_cmi);
        self.blocks = Some(
            cert.decomposition
                .blocks
                .iter()
                .enumerate()
                .map(|(z, b)| BlockRow {
                    z,
                    d_a: b.da,
                    d_b: b.db,
                    weight: cert.block_weights[z],
                })
                .collect(),
        );
    }

    pub fn with_multi(&mut self, mf: &MultiFactorisation) {
        self.residual = Some(mf.residual);
        self.message = Some(format!("{} stages factorised", mf.marginals.len()));
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn render_human(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("command: {}\n", self.command));
        out.push_str(&format!("status:  {}\n", self.status));
        if let Some(c) = &self.conditions {
            out.push_str(&format!(
                "conditions (dim H = {}):\n  (i)   composition      {:.3e}\n  (ii)  unital           {:.3e}\n        non-increasing   {:.3e}\n        weak unital      {:.3e}\n  (iii) independence m/n {:.3e} / {:.3e}\n",
                c.dim_h, c.composition, c.unital, c.nonincreasing, c.weak_unital,
                c.independence_m, c.independence_n
            ));
        }
        if let Some(cmi) = self.cmi {
            out.push_str(&format!("cmi:     {cmi:.6e} bits\n"));
        }
        if let Some(blocks) = &self.blocks {
            out.push_str("blocks:  z  dA  dB  weight\n");
            for b in blocks {
                out.push_str(&format!(
                    "         {}  {}   {}   {:.6}\n",
                    b.z, b.d_a, b.d_b, b.weight
                ));
            }
        }
        if let Some(r) = self.residual {
            out.push_str(&format!("residual: {r:.6e}\n"));
        }
        if let Some(o) = &self.observables {
            out.push_str(&format!(
                "observable residuals:\n  isometry {:.3e}  completeness {:.3e}/{:.3e}\n  embeddings X {:.3e}  Y {:.3e}  XY {:.3e}\n",
                o.isometry, o.a_completeness, o.b_completeness, o.embed_x, o.embed_y, o.embed_xy
            ));
        }
        if let Some(c) = &self.chsh {
            out.push_str(&format!(
                "chsh: PR win {:.4}, classical max {:.4}, quantum bound {:.10}\n",
                c.pr_win_prob, c.classical_max, c.quantum_bound
            ));
        }
        if let Some(m) = &self.message {
            out.push_str(&format!("note:    {m}\n"));
        }
        if let Some(t) = self.timing_ms {
            out.push_str(&format!("time:    {t:.1} ms\n"));
        }
        out.push_str(&format!("exit:    {}\n", self.exit_code));
        out
    }
}
