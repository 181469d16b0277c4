//! Correlation coefficients, the CHSH statistic, and the Theory/Data/Model
//! comparison table.

use std::fmt::Write as _;
use std::io::{Read, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::epr::{DetectorAngles, Setting};
use crate::error::{Error, Result};
use crate::exact::{conditional_outcomes, enumerate, ExactDistribution};
use crate::rbm::RbmModel;
use crate::sampling::{joint_state_counts, visible_counts};

/// Largest CHSH value `|C₁ + C₂ + C₃ − C₄|` for local models with
/// measurement-independent hidden states.
pub const CHSH_LOCAL_BOUND: f64 = 2.0;

// Exact probabilities can overshoot ±1 by a few ulps.
const RANGE_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Source {
    Theory,
    Empirical,
    ModelExact,
    ModelSampled,
}

/// The four correlations `C(α, β)` and their CHSH combination.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub c_ab: f64,
    pub c_ab_prime: f64,
    pub c_a_prime_b: f64,
    pub c_a_prime_b_prime: f64,
    pub s: f64,
    pub source: Source,
}

impl CorrelationReport {
    /// Builds a report from correlations in the order (a,b), (a,b′), (a′,b), (a′,b′).
    pub fn from_values(c: [f64; 4], source: Source) -> Result<Self> {
        Ok(CorrelationReport {
            c_ab: c[0],
            c_ab_prime: c[1],
            c_a_prime_b: c[2],
            c_a_prime_b_prime: c[3],
            s: chsh(c[0], c[1], c[2], c[3])?,
            source,
        })
    }

    /// Correlations in the order (a,b), (a,b′), (a′,b), (a′,b′).
    pub fn values(&self) -> [f64; 4] {
        [
            self.c_ab,
            self.c_ab_prime,
            self.c_a_prime_b,
            self.c_a_prime_b_prime,
        ]
    }

    pub fn violates_chsh(&self) -> bool {
        self.s > CHSH_LOCAL_BOUND
    }

    /// One-line summary of the CHSH value against the local bound.
    pub fn verdict(&self) -> String {
        if self.violates_chsh() {
            format!("S = {:.3} (> 2: violates CHSH bound)", self.s)
        } else {
            format!("S = {:.3} (<= 2: does not violate CHSH bound)", self.s)
        }
    }
}

/// `S = |C(a,b) + C(a,b′) + C(a′,b) − C(a′,b′)|`.
pub fn chsh(c_ab: f64, c_ab_prime: f64, c_a_prime_b: f64, c_a_prime_b_prime: f64) -> Result<f64> {
    for c in [c_ab, c_ab_prime, c_a_prime_b, c_a_prime_b_prime] {
        if !(c.abs() <= 1.0 + RANGE_SLACK) {
            return Err(Error::OutOfRange(format!(
                "correlation {c} is outside [-1, 1]"
            )));
        }
    }
    Ok((c_ab + c_ab_prime + c_a_prime_b - c_a_prime_b_prime).abs())
}

/// Singlet predictions `C(θ_α, θ_β) = −cos(θ_α − θ_β)`.
pub fn theory_correlations(angles: &DetectorAngles) -> CorrelationReport {
    let c = Setting::PAIRS.map(|(a, b)| -(angles.alpha_angle(a) - angles.beta_angle(b)).cos());
    CorrelationReport::from_values(c, Source::Theory).expect("cosines lie in [-1, 1]")
}

/// Exact correlations of an EPR-layout model.
pub fn model_correlations_exact(model: &RbmModel) -> Result<CorrelationReport> {
    correlations_from_distribution(&enumerate(model)?)
}

/// Exact correlations from an already enumerated distribution.
pub fn correlations_from_distribution(dist: &ExactDistribution) -> Result<CorrelationReport> {
    let mut c = [0.0; 4];
    for (k, &pair) in Setting::PAIRS.iter().enumerate() {
        let t = conditional_outcomes(dist, pair)?;
        c[k] = t[0][0] + t[1][1] - t[0][1] - t[1][0];
    }
    CorrelationReport::from_values(c, Source::ModelExact)
}

/// Correlations estimated from block Gibbs samples of the visible layer.
pub fn model_correlations_sampled<R: Rng + ?Sized>(
    model: &RbmModel,
    n_chains: usize,
    burn_in: usize,
    sweeps_per_chain: usize,
    rng: &mut R,
) -> Result<CorrelationReport> {
    if model.n_visible() != 4 {
        return Err(Error::NotEprLayout(model.n_visible()));
    }
    let counts = visible_counts(
        &joint_state_counts(model, n_chains, burn_in, sweeps_per_chain, rng),
        model.n_hidden(),
    );
    correlations_from_visible_counts(&counts, Source::ModelSampled)
}

/// Correlations from a 16-entry histogram over visible patterns `(v₁v₂v₃v₄)`.
pub fn correlations_from_visible_counts(
    counts: &[u64],
    source: Source,
) -> Result<CorrelationReport> {
    if counts.len() != 16 {
        return Err(Error::DimensionMismatch {
            what: "visible histogram",
            expected: 16,
            actual: counts.len(),
        });
    }
    let mut c = [0.0; 4];
    let mut missing = Vec::new();
    for (k, &(a, b)) in Setting::PAIRS.iter().enumerate() {
        let base = usize::from(a.bit() * 8 + b.bit() * 4);
        let cell = |x: usize, y: usize| counts[base + 2 * x + y] as f64;
        let total = cell(0, 0) + cell(0, 1) + cell(1, 0) + cell(1, 1);
        if total == 0.0 {
            missing.push(crate::epr::pair_label(a, b));
            continue;
        }
        c[k] = (cell(0, 0) + cell(1, 1) - cell(0, 1) - cell(1, 0)) / total;
    }
    if !missing.is_empty() {
        return Err(Error::InsufficientData(missing));
    }
    CorrelationReport::from_values(c, source)
}

/// One line of the comparison table.
#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub quantity: String,
    pub theory: f64,
    pub data: Option<f64>,
    pub model: f64,
}

/// Theory, data and model correlations side by side, with the CHSH row last.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonTable {
    pub rows: Vec<TableRow>,
}

const QUANTITIES: [&str; 5] = ["C(a,b)", "C(a,b')", "C(a',b)", "C(a',b')", "S"];

/// Assembles the comparison; `data` is optional.
pub fn comparison_table(
    theory: &CorrelationReport,
    data: Option<&CorrelationReport>,
    model: &CorrelationReport,
) -> Result<ComparisonTable> {
    let mut sources = vec![theory.source, model.source];
    sources.extend(data.map(|d| d.source));
    for (k, s) in sources.iter().enumerate() {
        if sources[k + 1..].contains(s) {
            return Err(Error::OutOfRange(format!(
                "comparison columns must come from distinct sources, {s:?} appears twice"
            )));
        }
    }
    let column = |r: &CorrelationReport| {
        let v = r.values();
        [v[0], v[1], v[2], v[3], r.s]
    };
    let (t, m) = (column(theory), column(model));
    let d = data.map(column);
    let rows = QUANTITIES
        .iter()
        .enumerate()
        .map(|(k, q)| TableRow {
            quantity: q.to_string(),
            theory: t[k],
            data: d.map(|d| d[k]),
            model: m[k],
        })
        .collect();
    Ok(ComparisonTable { rows })
}

/// The value a three-decimal rendering reads back as.
fn round3(x: f64) -> f64 {
    format!("{x:.3}").parse().expect("formatted float parses")
}

impl ComparisonTable {
    /// Fixed-width text with three decimals; a missing data column shows `—`.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<10} {:>8} {:>8} {:>8}",
            "", "Theory", "Data", "Model"
        );
        for row in &self.rows {
            let data = row
                .data
                .map(|d| format!("{d:.3}"))
                .unwrap_or_else(|| "—".to_string());
            let _ = writeln!(
                out,
                "{:<10} {:>8.3} {:>8} {:>8.3}",
                row.quantity, row.theory, data, row.model
            );
        }
        out
    }

    /// CSV with columns `quantity,theory,data,model`; missing data is empty.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        out.write_record(["quantity", "theory", "data", "model"])?;
        for row in &self.rows {
            out.write_record([
                row.quantity.clone(),
                format!("{:.3}", row.theory),
                row.data.map(|d| format!("{d:.3}")).unwrap_or_default(),
                format!("{:.3}", row.model),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut input = csv::Reader::from_reader(reader);
        let parse = |field: &str| -> Result<f64> {
            field
                .parse()
                .map_err(|e| Error::Parse(format!("table value {field:?}: {e}")))
        };
        let mut rows = Vec::new();
        for record in input.records() {
            let record = record?;
            if record.len() != 4 {
                return Err(Error::Parse(format!(
                    "table row has {} fields",
                    record.len()
                )));
            }
            rows.push(TableRow {
                quantity: record[0].to_string(),
                theory: parse(&record[1])?,
                data: if record[2].is_empty() {
                    None
                } else {
                    Some(parse(&record[2])?)
                },
                model: parse(&record[3])?,
            });
        }
        Ok(ComparisonTable { rows })
    }

    /// Copy with every value rounded to three decimals.
    pub fn rounded(&self) -> Self {
        ComparisonTable {
            rows: self
                .rows
                .iter()
                .map(|r| TableRow {
                    quantity: r.quantity.clone(),
                    theory: round3(r.theory),
                    data: r.data.map(round3),
                    model: round3(r.model),
                })
                .collect(),
        }
    }
}
