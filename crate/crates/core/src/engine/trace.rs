use std::io::{self, Write};
use std::path::Path as FsPath;

use serde::{Deserialize, Serialize};

use super::Scenario;
use crate::error::Result;
use crate::gradsys::Certificate;

/// Per-step linear-algebra diagnostics.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Certificate of the fast step, for the two-timescale law.
    pub certificate: Option<Certificate>,
    /// Condition number of `I - ∂c/∂p`, for the exact law.
    pub condition: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub t: f64,
    pub positions: Vec<f64>,
    pub controls: Vec<f64>,
    /// `‖p_i - c_i‖` per agent.
    pub tracking: Vec<f64>,
    /// `H(p^k, t_k)`.
    pub cost: f64,
    pub diagnostics: Diagnostics,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimTrace {
    pub label: String,
    pub dim: usize,
    pub dt: f64,
    pub seed: u64,
    pub records: Vec<StepRecord>,
}

/// Extremes of the per-step certificates over a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertificateSummary {
    pub initial: Option<Certificate>,
    pub max_gamma: Option<f64>,
    pub min_margin: Option<f64>,
    pub min_lambda: Option<f64>,
    pub max_lambda: Option<f64>,
    pub dominance_violations: usize,
    pub max_condition: Option<f64>,
}

/// The JSON summary written next to each trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub controller: String,
    pub seed: u64,
    pub agents: usize,
    pub dim: usize,
    pub dt: f64,
    pub steps: usize,
    pub total_cost: f64,
    /// `max_i ‖p_i - c_i‖` at the last step.
    pub final_tracking_error: f64,
    pub certificate: CertificateSummary,
}

fn fold(values: impl Iterator<Item = f64>, f: fn(f64, f64) -> f64) -> Option<f64> {
    values.reduce(f)
}

impl SimTrace {
    pub(crate) fn new(scenario: &Scenario, label: String, records: Vec<StepRecord>) -> Self {
        Self {
            label,
            dim: scenario.d(),
            dt: scenario.dt,
            seed: scenario.seed,
            records,
        }
    }

    pub fn agents(&self) -> usize {
        self.records.first().map_or(0, |r| r.positions.len() / self.dim)
    }

    /// Left Riemann sum `Σ_{k<K} H(p^k, t_k) δt`.
    pub fn total_cost(&self) -> f64 {
        let k = self.records.len().saturating_sub(1);
        self.records[..k].iter().map(|r| r.cost * self.dt).sum()
    }

    pub fn final_tracking_error(&self) -> f64 {
        self.records
            .last()
            .map_or(0.0, |r| r.tracking.iter().copied().fold(0.0, f64::max))
    }

    pub fn final_positions(&self) -> &[f64] {
        self.records.last().map_or(&[], |r| &r.positions)
    }

    pub fn summary(&self) -> Summary {
        let certs: Vec<&Certificate> = self
            .records
            .iter()
            .filter_map(|r| r.diagnostics.certificate.as_ref())
            .collect();
        let certificate = CertificateSummary {
            initial: self.records.first().and_then(|r| r.diagnostics.certificate.clone()),
            max_gamma: fold(certs.iter().map(|c| c.gamma), f64::max),
            min_margin: fold(certs.iter().map(|c| c.margin), f64::min),
            min_lambda: fold(certs.iter().map(|c| c.lambda_min), f64::min),
            max_lambda: fold(certs.iter().map(|c| c.lambda_max), f64::max),
            dominance_violations: certs.iter().filter(|c| !c.dominance).count(),
            max_condition: fold(self.records.iter().filter_map(|r| r.diagnostics.condition), f64::max),
        };
        Summary {
            controller: self.label.clone(),
            seed: self.seed,
            agents: self.agents(),
            dim: self.dim,
            dt: self.dt,
            steps: self.records.len().saturating_sub(1),
            total_cost: self.total_cost(),
            final_tracking_error: self.final_tracking_error(),
            certificate,
        }
    }

    /// `step,t,agent,px,py[,pz],ux,uy[,uz],track_err,H_total`.
    pub fn csv_header(&self) -> String {
        let axes = ["x", "y", "z"];
        let mut cols = vec!["step".to_string(), "t".into(), "agent".into()];
        cols.extend(axes[..self.dim].iter().map(|a| format!("p{a}")));
        cols.extend(axes[..self.dim].iter().map(|a| format!("u{a}")));
        cols.push("track_err".into());
        cols.push("H_total".into());
        cols.join(",")
    }

    /// One row per agent and step. Floats use Rust's shortest round-trip
    /// formatting.
    pub fn write_csv(&self, mut w: impl Write) -> io::Result<()> {
        writeln!(w, "{}", self.csv_header())?;
        let d = self.dim;
        for r in &self.records {
            for i in 0..r.tracking.len() {
                write!(w, "{},{},{}", r.step, r.t, i)?;
                for x in &r.positions[i * d..(i + 1) * d] {
                    write!(w, ",{x}")?;
                }
                for x in &r.controls[i * d..(i + 1) * d] {
                    write!(w, ",{x}")?;
                }
                writeln!(w, ",{},{}", r.tracking[i], r.cost)?;
            }
        }
        Ok(())
    }

    /// Writes `trace.csv` and `summary.json` into `dir`.
    pub fn write_to(&self, dir: &FsPath) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut csv = io::BufWriter::new(std::fs::File::create(dir.join("trace.csv"))?);
        self.write_csv(&mut csv)?;
        csv.flush()?;
        let json = serde_json::to_string_pretty(&self.summary())?;
        std::fs::write(dir.join("summary.json"), json + "\n")?;
        Ok(())
    }
}
