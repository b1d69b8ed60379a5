use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use towerforge::{IntervalSet, Partition, RankOneSpec, Rational};

/// Rationals as `[numerator, denominator]` integer pairs.
pub mod pair {
    use num_traits::ToPrimitive;
    use serde::{de, ser, Deserialize, Deserializer, Serialize, Serializer};
    use towerforge::{rat, Rational};

    pub fn serialize<S: Serializer>(r: &Rational, s: S) -> Result<S::Ok, S::Error> {
        let n = r.numer().to_i64().ok_or_else(|| ser::Error::custom("numerator overflows i64"))?;
        let d = r.denom().to_i64().ok_or_else(|| ser::Error::custom("denominator overflows i64"))?;
        [n, d].serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Rational, D::Error> {
        let [n, q] = <[i64; 2]>::deserialize(d)?;
        if q == 0 {
            return Err(de::Error::custom("zero denominator"));
        }
        Ok(rat(n, q))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SystemRef {
    Preset(String),
    Spec(RankOneSpec),
}

/// A cylinder `[word]` placed at coordinate `lo`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CylinderSpec {
    pub lo: i64,
    pub word: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "operation", rename_all = "kebab-case")]
pub enum Operation {
    BuildTower {
        k: IntervalSet,
        n: usize,
    },
    RefineTower {
        k: IntervalSet,
        initial_n: usize,
        n: usize,
    },
    Uniformity {
        c: IntervalSet,
        k: IntervalSet,
        #[serde(with = "pair")]
        epsilon: Rational,
        m_schedule: Vec<u64>,
        samples: usize,
    },
    Uniformize {
        alpha: Partition,
        beta: Option<Partition>,
        #[serde(with = "pair")]
        epsilon: Rational,
        steps: usize,
        certify_n_max: usize,
        #[serde(with = "pair")]
        certify_epsilon: Rational,
        m_schedule: Vec<u64>,
        samples: usize,
    },
    Subshift {
        alpha: Partition,
        word_length: usize,
    },
    RadonCheck {
        alpha: Partition,
        cylinders: Vec<CylinderSpec>,
        walks: usize,
        horizon: usize,
        #[serde(with = "pair")]
        epsilon: Rational,
        word_length: usize,
    },
    ExportBratteli {
        levels: usize,
        vershik_level: Option<usize>,
    },
    Stats {
        c: IntervalSet,
        k: IntervalSet,
        samples: usize,
        /// `None` reads each point at its largest feasible horizon.
        horizons: Option<Vec<usize>>,
        digits: usize,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Outputs {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub json: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plot: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dot: Option<PathBuf>,
    /// Step logs, one JSON object per line.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub log: Option<PathBuf>,
    /// Final partition in the partition file format.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub partition: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub system: SystemRef,
    pub depth: usize,
    #[serde(flatten)]
    pub operation: Operation,
    #[serde(default)]
    pub outputs: Outputs,
}

impl ExperimentConfig {
    /// SHA-256 of the config with output paths cleared, as lowercase hex.
    pub fn hash(&self) -> String {
        let mut bare = self.clone();
        bare.outputs = Outputs::default();
        let bytes = serde_json::to_vec(&bare).expect("config serializes");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use towerforge::rat;

    fn sample() -> ExperimentConfig {
        ExperimentConfig {
            system: SystemRef::Preset("hajian-kakutani".into()),
            depth: 8,
            operation: Operation::Uniformity {
                c: IntervalSet::parse("0/1:1/2").unwrap(),
                k: IntervalSet::parse("0/1:1/1").unwrap(),
                epsilon: rat(1, 10),
                m_schedule: vec![1, 2, 4],
                samples: 16,
            },
            outputs: Outputs::default(),
        }
    }

    #[test]
    fn config_round_trips() {
        let cfg = sample();
        let json = serde_json::to_string(&cfg).unwrap();
        assert!(json.contains("\"epsilon\":[1,10]"));
        let back: ExperimentConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn hash_ignores_output_paths() {
        let a = sample();
        let mut b = sample();
        b.outputs.json = Some("report.json".into());
        assert_eq!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
        let mut c = sample();
        c.depth = 9;
        assert_ne!(a.hash(), c.hash());
    }
}
