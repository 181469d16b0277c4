//! Simulated EPR experiments on the spin singlet.
//!
//! Each trial picks one of two detector settings at each station uniformly at
//! random and draws the outcome pair from the singlet joint law
//! `P(x_α, x_β) = (1 − x_α x_β cos(θ_α − θ_β)) / 4`.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::bell::{chsh, CorrelationReport, Source};
use crate::error::{Error, Result};
use crate::seed::{stream_rng, Stream};

/// Which of the two detector orientations a station uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Setting {
    /// `a` at station A, `b` at station B; encoded as 0.
    Unprimed,
    /// `a′` or `b′`; encoded as 1.
    Primed,
}

impl Setting {
    /// The four setting pairs in the order (a,b), (a,b′), (a′,b), (a′,b′).
    pub const PAIRS: [(Setting, Setting); 4] = [
        (Setting::Unprimed, Setting::Unprimed),
        (Setting::Unprimed, Setting::Primed),
        (Setting::Primed, Setting::Unprimed),
        (Setting::Primed, Setting::Primed),
    ];

    pub fn bit(self) -> u8 {
        match self {
            Setting::Unprimed => 0,
            Setting::Primed => 1,
        }
    }

    pub fn from_bit(bit: u8) -> Result<Self> {
        match bit {
            0 => Ok(Setting::Unprimed),
            1 => Ok(Setting::Primed),
            other => Err(Error::NotBinary {
                what: "setting",
                value: other,
            }),
        }
    }
}

impl Serialize for Setting {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_u8(self.bit())
    }
}

impl<'de> Deserialize<'de> for Setting {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        Setting::from_bit(u8::deserialize(d)?).map_err(serde::de::Error::custom)
    }
}

/// Human-readable name of a setting pair, e.g. `(a',b)`.
pub fn pair_label(alpha: Setting, beta: Setting) -> String {
    let a = if alpha == Setting::Primed { "a'" } else { "a" };
    let b = if beta == Setting::Primed { "b'" } else { "b" };
    format!("({a},{b})")
}

/// A spin measurement result.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Outcome {
    Plus,
    Minus,
}

impl Outcome {
    pub fn value(self) -> i8 {
        match self {
            Outcome::Plus => 1,
            Outcome::Minus => -1,
        }
    }

    pub fn from_value(value: i8) -> Result<Self> {
        match value {
            1 => Ok(Outcome::Plus),
            -1 => Ok(Outcome::Minus),
            other => Err(Error::OutOfRange(format!(
                "outcome must be +1 or -1, got {other}"
            ))),
        }
    }

    /// Visible-unit bit: +1 ↔ 1, −1 ↔ 0.
    pub fn bit(self) -> u8 {
        match self {
            Outcome::Plus => 1,
            Outcome::Minus => 0,
        }
    }

    pub fn from_bit(bit: u8) -> Result<Self> {
        match bit {
            1 => Ok(Outcome::Plus),
            0 => Ok(Outcome::Minus),
            other => Err(Error::NotBinary {
                what: "outcome",
                value: other,
            }),
        }
    }
}

/// Detector orientations in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorAngles {
    pub a: f64,
    pub a_prime: f64,
    pub b: f64,
    pub b_prime: f64,
}

impl Default for DetectorAngles {
    /// `a = 0`, `a′ = π/2`, `b = π/4`, `b′ = −π/4`, the orientations that
    /// maximize the quantum CHSH value.
    fn default() -> Self {
        DetectorAngles {
            a: 0.0,
            a_prime: FRAC_PI_2,
            b: FRAC_PI_4,
            b_prime: -FRAC_PI_4,
        }
    }
}

impl DetectorAngles {
    pub fn alpha_angle(&self, setting: Setting) -> f64 {
        match setting {
            Setting::Unprimed => self.a,
            Setting::Primed => self.a_prime,
        }
    }

    pub fn beta_angle(&self, setting: Setting) -> f64 {
        match setting {
            Setting::Unprimed => self.b,
            Setting::Primed => self.b_prime,
        }
    }

    /// Parses `a,a',b,b'` in radians.
    pub fn parse_list(text: &str) -> Result<Self> {
        let values: Vec<f64> = text
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("angle {s:?}: {e}")))
            })
            .collect::<Result<_>>()?;
        match values[..] {
            [a, a_prime, b, b_prime] if values.iter().all(|x| x.is_finite()) => {
                Ok(DetectorAngles {
                    a,
                    a_prime,
                    b,
                    b_prime,
                })
            }
            _ => Err(Error::Parse(format!(
                "expected four finite angles a,a',b,b', got {text:?}"
            ))),
        }
    }
}

/// One run of the experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EprTrial {
    pub alpha: Setting,
    pub beta: Setting,
    pub x_alpha: Outcome,
    pub x_beta: Outcome,
}

/// A seeded collection of simulated trials.
#[derive(Debug, Clone, PartialEq)]
pub struct EprDataset {
    pub trials: Vec<EprTrial>,
    pub seed: u64,
    pub angles: DetectorAngles,
}

/// Singlet joint probability of outcomes `(x_α, x_β)` at the given angles.
pub fn singlet_joint_probability(
    theta_alpha: f64,
    theta_beta: f64,
    x_alpha: Outcome,
    x_beta: Outcome,
) -> f64 {
    let sign = f64::from(x_alpha.value() * x_beta.value());
    (1.0 - sign * (theta_alpha - theta_beta).cos()) / 4.0
}

const OUTCOME_PAIRS: [(Outcome, Outcome); 4] = [
    (Outcome::Plus, Outcome::Plus),
    (Outcome::Plus, Outcome::Minus),
    (Outcome::Minus, Outcome::Plus),
    (Outcome::Minus, Outcome::Minus),
];

/// Draws `n_trials` trials from `rng`.
pub fn generate_trials<R: Rng + ?Sized>(
    angles: &DetectorAngles,
    n_trials: usize,
    rng: &mut R,
) -> Vec<EprTrial> {
    (0..n_trials)
        .map(|_| {
            let alpha = if rng.random_bool(0.5) {
                Setting::Primed
            } else {
                Setting::Unprimed
            };
            let beta = if rng.random_bool(0.5) {
                Setting::Primed
            } else {
                Setting::Unprimed
            };
            let (ta, tb) = (angles.alpha_angle(alpha), angles.beta_angle(beta));
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut pick = OUTCOME_PAIRS[3];
            for pair in OUTCOME_PAIRS {
                acc += singlet_joint_probability(ta, tb, pair.0, pair.1);
                if u < acc {
                    pick = pair;
                    break;
                }
            }
            EprTrial {
                alpha,
                beta,
                x_alpha: pick.0,
                x_beta: pick.1,
            }
        })
        .collect()
}

/// Simulates a dataset on the data stream of `seed`.
pub fn generate_dataset(angles: DetectorAngles, n_trials: usize, seed: u64) -> Result<EprDataset> {
    if n_trials == 0 {
        return Err(Error::Empty("a dataset needs at least one trial"));
    }
    let mut rng = stream_rng(seed, Stream::Data);
    Ok(EprDataset {
        trials: generate_trials(&angles, n_trials, &mut rng),
        seed,
        angles,
    })
}

/// Per-setting-pair mean of `x_α x_β`.
pub fn empirical_correlations(trials: &[EprTrial]) -> Result<CorrelationReport> {
    let mut sums = [0i64; 4];
    let mut counts = [0u64; 4];
    for t in trials {
        let k = usize::from(t.alpha.bit() * 2 + t.beta.bit());
        sums[k] += i64::from(t.x_alpha.value() * t.x_beta.value());
        counts[k] += 1;
    }
    let missing: Vec<String> = Setting::PAIRS
        .iter()
        .zip(&counts)
        .filter(|(_, &c)| c == 0)
        .map(|(&(a, b), _)| pair_label(a, b))
        .collect();
    if !missing.is_empty() {
        return Err(Error::InsufficientData(missing));
    }
    let c: Vec<f64> = sums
        .iter()
        .zip(&counts)
        .map(|(&s, &n)| s as f64 / n as f64)
        .collect();
    Ok(CorrelationReport {
        c_ab: c[0],
        c_ab_prime: c[1],
        c_a_prime_b: c[2],
        c_a_prime_b_prime: c[3],
        s: chsh(c[0], c[1], c[2], c[3])?,
        source: Source::Empirical,
    })
}

/// Visible vector `(α, β, x_α, x_β)` as bits.
pub fn encode_trial(trial: &EprTrial) -> [u8; 4] {
    [
        trial.alpha.bit(),
        trial.beta.bit(),
        trial.x_alpha.bit(),
        trial.x_beta.bit(),
    ]
}

/// Inverse of [`encode_trial`].
pub fn decode_visible(visible: &[u8]) -> Result<EprTrial> {
    if visible.len() != 4 {
        return Err(Error::DimensionMismatch {
            what: "visible",
            expected: 4,
            actual: visible.len(),
        });
    }
    Ok(EprTrial {
        alpha: Setting::from_bit(visible[0])?,
        beta: Setting::from_bit(visible[1])?,
        x_alpha: Outcome::from_bit(visible[2])?,
        x_beta: Outcome::from_bit(visible[3])?,
    })
}

/// Contents of the JSON file written beside a dataset CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub seed: u64,
    pub n_trials: usize,
    pub angles: DetectorAngles,
}

/// Location of the metadata sidecar for a dataset CSV: `data.csv` → `data.json`.
pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

const CSV_HEADER: [&str; 4] = ["alpha", "beta", "x_alpha", "x_beta"];

fn signed(o: Outcome) -> &'static str {
    match o {
        Outcome::Plus => "+1",
        Outcome::Minus => "-1",
    }
}

/// Writes trials as CSV: `alpha,beta` in {0,1}, `x_alpha,x_beta` in {+1,-1}.
pub fn write_trials_csv<W: Write>(trials: &[EprTrial], writer: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    out.write_record(CSV_HEADER)?;
    for t in trials {
        out.write_record([
            if t.alpha == Setting::Primed { "1" } else { "0" },
            if t.beta == Setting::Primed { "1" } else { "0" },
            signed(t.x_alpha),
            signed(t.x_beta),
        ])?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Deserialize)]
struct TrialRecord {
    alpha: u8,
    beta: u8,
    x_alpha: i8,
    x_beta: i8,
}

pub fn read_trials_csv<R: Read>(reader: R) -> Result<Vec<EprTrial>> {
    let mut input = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = input.headers()?.clone();
    if header.iter().ne(CSV_HEADER) {
        return Err(Error::Parse(format!(
            "dataset header must be {}, got {}",
            CSV_HEADER.join(","),
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    input
        .deserialize::<TrialRecord>()
        .enumerate()
        .map(|(row, rec)| {
            let rec = rec.map_err(|e| Error::Parse(format!("dataset row {}: {e}", row + 1)))?;
            let wrap = |e: Error| Error::Parse(format!("dataset row {}: {e}", row + 1));
            Ok(EprTrial {
                alpha: Setting::from_bit(rec.alpha).map_err(wrap)?,
                beta: Setting::from_bit(rec.beta).map_err(wrap)?,
                x_alpha: Outcome::from_value(rec.x_alpha).map_err(wrap)?,
                x_beta: Outcome::from_value(rec.x_beta).map_err(wrap)?,
            })
        })
        .collect()
}

impl EprDataset {
    pub fn meta(&self) -> DatasetMeta {
        DatasetMeta {
            seed: self.seed,
            n_trials: self.trials.len(),
            angles: self.angles,
        }
    }

    /// Visible vectors for every trial.
    pub fn encoded(&self) -> Vec<[u8; 4]> {
        self.trials.iter().map(encode_trial).collect()
    }

    /// Writes the CSV at `path` and its JSON sidecar.
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = BufWriter::new(File::create(path)?);
        write_trials_csv(&self.trials, file)?;
        let mut meta = BufWriter::new(File::create(sidecar_path(path))?);
        serde_json::to_writer_pretty(&mut meta, &self.meta())?;
        meta.write_all(b"\n")?;
        meta.flush()?;
        Ok(())
    }

    /// Reads a dataset CSV. Seed and angles come from the sidecar when it
    /// exists; otherwise the seed is 0 and the angles are the defaults.
    pub fn load(path: &Path) -> Result<Self> {
        let trials = read_trials_csv(BufReader::new(File::open(path)?))?;
        let meta_path = sidecar_path(path);
        let (seed, angles) = if meta_path.exists() {
            let meta: DatasetMeta =
                serde_json::from_reader(BufReader::new(File::open(meta_path)?))?;
            if meta.n_trials != trials.len() {
                return Err(Error::Parse(format!(
                    "sidecar records {} trials but the CSV has {}",
                    meta.n_trials,
                    trials.len()
                )));
            }
            (meta.seed, meta.angles)
        } else {
            (0, DetectorAngles::default())
        };
        Ok(EprDataset {
            trials,
            seed,
            angles,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{any, prop_assert, prop_assert_eq, proptest};

    #[test]
    fn singlet_reference_values() {
        // Frozen from tr(ρ Πₐ ⊗ Π_b) on the singlet density matrix.
        let p = singlet_joint_probability(0.0, FRAC_PI_4, Outcome::Plus, Outcome::Plus);
        assert!((p - 0.073_223_304_703_363_09).abs() < 1e-15);
        assert_eq!(
            singlet_joint_probability(0.3, 0.3, Outcome::Plus, Outcome::Plus),
            0.0
        );
    }

    #[test]
    fn zero_trials_is_an_error() {
        assert!(generate_dataset(DetectorAngles::default(), 0, 1).is_err());
    }

    #[test]
    fn same_seed_same_dataset() {
        let a = generate_dataset(DetectorAngles::default(), 1000, 42).unwrap();
        let b = generate_dataset(DetectorAngles::default(), 1000, 42).unwrap();
        let c = generate_dataset(DetectorAngles::default(), 1000, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.trials, c.trials);
    }

    #[test]
    fn large_dataset_matches_singlet_predictions() {
        let data = generate_dataset(DetectorAngles::default(), 100_000, 5).unwrap();
        let mut counts = [0usize; 4];
        for t in &data.trials {
            counts[usize::from(t.alpha.bit() * 2 + t.beta.bit())] += 1;
        }
        assert!(
            counts.iter().all(|&c| c.abs_diff(25_000) <= 500),
            "{counts:?}"
        );
        let r = empirical_correlations(&data.trials).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        for (c, e) in r.values().into_iter().zip([-h, -h, -h, h]) {
            assert!((c - e).abs() < 0.01, "{c} vs {e}");
        }
    }

    #[test]
    fn outcome_marginals_are_unbiased() {
        let n = 200_000;
        let data = generate_dataset(DetectorAngles::default(), n, 6).unwrap();
        for setting in [Setting::Unprimed, Setting::Primed] {
            let xs: Vec<f64> = data
                .trials
                .iter()
                .filter(|t| t.alpha == setting)
                .map(|t| f64::from(t.x_alpha.value()))
                .collect();
            let mean = xs.iter().sum::<f64>() / xs.len() as f64;
            assert!(mean.abs() < 3.0 / (xs.len() as f64).sqrt(), "{mean}");
        }
    }

    #[test]
    fn two_trial_correlation() {
        let t = |x, y| EprTrial {
            alpha: Setting::Unprimed,
            beta: Setting::Unprimed,
            x_alpha: x,
            x_beta: y,
        };
        let trials = [
            t(Outcome::Plus, Outcome::Plus),
            t(Outcome::Minus, Outcome::Minus),
        ];
        match empirical_correlations(&trials) {
            Err(Error::InsufficientData(missing)) => {
                assert_eq!(missing, vec!["(a,b')", "(a',b)", "(a',b')"]);
            }
            other => panic!("expected insufficient data, got {other:?}"),
        }
        let mut all = trials.to_vec();
        for (a, b) in &Setting::PAIRS[1..] {
            all.push(EprTrial {
                alpha: *a,
                beta: *b,
                x_alpha: Outcome::Plus,
                x_beta: Outcome::Minus,
            });
        }
        let r = empirical_correlations(&all).unwrap();
        assert_eq!(r.c_ab, 1.0);
        assert_eq!(r.c_ab_prime, -1.0);
    }

    #[test]
    fn independent_coin_outcomes_are_uncorrelated() {
        let mut rng = stream_rng(9, Stream::Data);
        let mut data = generate_dataset(DetectorAngles::default(), 100_000, 9).unwrap();
        for t in &mut data.trials {
            t.x_alpha = Outcome::from_bit(Rng::random_bool(&mut rng, 0.5) as u8).unwrap();
            t.x_beta = Outcome::from_bit(Rng::random_bool(&mut rng, 0.5) as u8).unwrap();
        }
        let r = empirical_correlations(&data.trials).unwrap();
        assert!(r.values().iter().all(|c| c.abs() < 0.02), "{r:?}");
    }

    #[test]
    fn encoding_examples() {
        let t = EprTrial {
            alpha: Setting::Unprimed,
            beta: Setting::Unprimed,
            x_alpha: Outcome::Plus,
            x_beta: Outcome::Plus,
        };
        assert_eq!(encode_trial(&t), [0, 0, 1, 1]);
        let t = EprTrial {
            alpha: Setting::Primed,
            beta: Setting::Unprimed,
            x_alpha: Outcome::Minus,
            x_beta: Outcome::Minus,
        };
        assert_eq!(encode_trial(&t), [1, 0, 0, 0]);
    }

    #[test]
    fn encoding_is_a_bijection() {
        let mut seen = std::collections::HashSet::new();
        for k in 0..16u8 {
            let v = [k >> 3 & 1, k >> 2 & 1, k >> 1 & 1, k & 1];
            let t = decode_visible(&v).unwrap();
            assert_eq!(encode_trial(&t), v);
            assert!(seen.insert(t));
        }
        assert!(decode_visible(&[0, 0, 2, 0]).is_err());
        assert!(decode_visible(&[0, 0, 1]).is_err());
    }

    #[test]
    fn csv_round_trip_and_format() {
        let data = generate_dataset(DetectorAngles::default(), 50, 3).unwrap();
        let mut buf = Vec::new();
        write_trials_csv(&data.trials, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("alpha,beta,x_alpha,x_beta\n"));
        assert!(text.lines().skip(1).all(|l| {
            let f: Vec<&str> = l.split(',').collect();
            f.len() == 4 && ["0", "1"].contains(&f[0]) && ["+1", "-1"].contains(&f[2])
        }));
        assert_eq!(read_trials_csv(&buf[..]).unwrap(), data.trials);
    }

    #[test]
    fn csv_rejects_bad_rows() {
        assert!(read_trials_csv("alpha,beta,x_alpha,x_beta\n0,1,+1,0\n".as_bytes()).is_err());
        assert!(read_trials_csv("alpha,beta,x_alpha,x_beta\n2,1,+1,-1\n".as_bytes()).is_err());
        assert!(read_trials_csv("a,b,c,d\n0,1,+1,-1\n".as_bytes()).is_err());
    }

    #[test]
    fn save_and_load_with_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.csv");
        let angles = DetectorAngles {
            a: 0.1,
            a_prime: 0.2,
            b: 0.3,
            b_prime: 0.4,
        };
        let data = generate_dataset(angles, 20, 77).unwrap();
        data.save(&path).unwrap();
        assert!(dir.path().join("data.json").exists());
        assert_eq!(EprDataset::load(&path).unwrap(), data);
    }

    #[test]
    fn angle_list_parsing() {
        let a = DetectorAngles::parse_list(
            "0, 1.5707963267948966,0.7853981633974483,-0.7853981633974483",
        )
        .unwrap();
        assert_eq!(a, DetectorAngles::default());
        assert!(DetectorAngles::parse_list("0,1,2").is_err());
        assert!(DetectorAngles::parse_list("0,1,x,2").is_err());
        assert!(DetectorAngles::parse_list("0,1,inf,2").is_err());
    }

    proptest! {
        #[test]
        fn singlet_law_is_normalized(ta in -10.0f64..10.0, tb in -10.0f64..10.0) {
            let total: f64 = OUTCOME_PAIRS
                .iter()
                .map(|&(x, y)| singlet_joint_probability(ta, tb, x, y))
                .sum();
            prop_assert!((total - 1.0).abs() < 1e-15);
            let corr: f64 = OUTCOME_PAIRS
                .iter()
                .map(|&(x, y)| f64::from(x.value() * y.value()) * singlet_joint_probability(ta, tb, x, y))
                .sum();
            prop_assert!((corr + (ta - tb).cos()).abs() < 1e-15);
        }

        #[test]
        fn correlations_survive_encoding(seed in any::<u64>(), n in 8usize..400) {
            let data = generate_dataset(DetectorAngles::default(), n, seed).unwrap();
            let decoded: Vec<EprTrial> = data
                .encoded()
                .iter()
                .map(|v| decode_visible(v).unwrap())
                .collect();
            prop_assert_eq!(&decoded, &data.trials);
            let a = empirical_correlations(&data.trials);
            let b = empirical_correlations(&decoded);
            match (a, b) {
                (Ok(a), Ok(b)) => prop_assert_eq!(a, b),
                (Err(_), Err(_)) => {}
                _ => prop_assert!(false, "encoding changed correlation availability"),
            }
        }
    }
}
