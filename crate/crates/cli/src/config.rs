//! TOML experiment configuration. Command-line flags override file values.
//!
//! ```toml
//! graph = "cycle:16"          # family spec or path to an edge-list file
//! protocol = "rps"            # rps | rank
//! seed = 7
//! trials = 100
//! round_cap = 5000            # default: per-protocol cap
//! rank_bits_c = 3.0
//! v = 1.0                     # or one value per node: [1.0, 2.0, ...]
//!
//! [deviation]
//! node = 0
//! strategy = "biased_moves"
//! rock = 1.0
//!
//! [output]
//! format = "json-lines"       # json-lines | csv
//! trace = false
//! path = "runs.jsonl"
//! ```

use std::path::{Path, PathBuf};
use std::str::FromStr;

use rational_mis::deviations::{DeviationKind, DeviationSpec};
use rational_mis::signing::SignatureBackend;
use rational_mis::{Error, Protocol, Result, Variant};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Format {
    #[default]
    #[serde(rename = "json-lines")]
    JsonLines,
    #[serde(rename = "csv")]
    Csv,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json-lines" | "jsonl" => Ok(Format::JsonLines),
            "csv" => Ok(Format::Csv),
            _ => Err(Error::Config(format!(
                "unknown format {s:?} (json-lines or csv)"
            ))),
        }
    }
}

/// A single payoff for every node, or one per node.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Payoffs {
    Uniform(f64),
    PerNode(Vec<f64>),
}

impl Payoffs {
    pub fn resolve(&self, n: usize) -> Result<Vec<f64>> {
        match self {
            Payoffs::Uniform(v) => Ok(vec![*v; n]),
            Payoffs::PerNode(vs) if vs.len() == n => Ok(vs.clone()),
            Payoffs::PerNode(vs) => Err(Error::Config(format!(
                "{} payoffs given for {n} nodes",
                vs.len()
            ))),
        }
    }
}

impl FromStr for Payoffs {
    type Err = Error;

    /// `1.5` or `1,2,3`.
    fn from_str(s: &str) -> Result<Self> {
        let vals = s
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Config(format!("bad payoff {t:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(if vals.len() == 1 && !s.contains(',') {
            Payoffs::Uniform(vals[0])
        } else {
            Payoffs::PerNode(vals)
        })
    }
}

/// Flat `[deviation]` table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviationTable {
    pub node: u32,
    pub strategy: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub activation: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rock: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub paper: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scissors: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub len: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
}

impl DeviationTable {
    pub fn to_spec(&self) -> Result<DeviationSpec> {
        let mut s = format!("node={},strategy={}", self.node, self.strategy);
        let mut push = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                s.push_str(&format!(",{k}={v}"));
            }
        };
        push("activation", self.activation.map(|x| x.to_string()));
        push("rock", self.rock.map(|x| x.to_string()));
        push("paper", self.paper.map(|x| x.to_string()));
        push("scissors", self.scissors.map(|x| x.to_string()));
        push("len", self.len.map(|x| x.to_string()));
        push("p", self.p.map(|x| x.to_string()));
        s.parse()
    }

    pub fn from_spec(spec: &DeviationSpec) -> Self {
        let mut t = DeviationTable {
            node: spec.node.0,
            strategy: spec.kind.name().to_string(),
            activation: (spec.activation_round != 0).then_some(spec.activation_round),
            rock: None,
            paper: None,
            scissors: None,
            len: None,
            p: None,
        };
        match spec.kind {
            DeviationKind::BiasedMoves {
                rock,
                paper,
                scissors,
            } => {
                (t.rock, t.paper, t.scissors) = (Some(rock), Some(paper), Some(scissors));
            }
            DeviationKind::GarbageSender { len } => t.len = Some(len as u64),
            DeviationKind::BiasedRand { p_one } => t.p = Some(p_one),
            _ => {}
        }
        t
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default)]
    pub format: Format,
    #[serde(default)]
    pub trace: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub graph: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub protocol: Option<Protocol>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variant: Option<Variant>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub signatures: Option<SignatureBackend>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trials: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jobs: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub round_cap: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rank_bits_c: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rank_bits: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v: Option<Payoffs>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deviation: Option<DeviationTable>,
    #[serde(default)]
    pub output: OutputSection,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("config: {e}")))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config always serialises")
    }

    /// Values set in `other` replace ours.
    pub fn overlay(mut self, other: ConfigFile) -> Self {
        macro_rules! take {
            ($($f:ident),*) => { $( if other.$f.is_some() { self.$f = other.$f; } )* };
        }
        take!(
            graph,
            protocol,
            variant,
            signatures,
            seed,
            trials,
            jobs,
            round_cap,
            rank_bits_c,
            rank_bits,
            v,
            deviation
        );
        if other.output != OutputSection::default() {
            let o = other.output;
            if o.format != Format::default() {
                self.output.format = o.format;
            }
            self.output.trace |= o.trace;
            if o.path.is_some() {
                self.output.path = o.path;
            }
        }
        self
    }

    pub fn deviation_spec(&self) -> Result<Option<DeviationSpec>> {
        self.deviation
            .as_ref()
            .map(DeviationTable::to_spec)
            .transpose()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn documented_example_parses() {
        let text = r#"
            graph = "cycle:16"
            protocol = "rps"
            seed = 7
            trials = 100
            rank_bits_c = 3.0
            v = [1.0, 2.0]

            [deviation]
            node = 0
            strategy = "biased_moves"
            rock = 1.0
            paper = 0.0
            scissors = 0.0

            [output]
            format = "csv"
            trace = true
        "#;
        let c = ConfigFile::parse(text).unwrap();
        assert_eq!(c.protocol, Some(Protocol::Rps));
        assert_eq!(c.v, Some(Payoffs::PerNode(vec![1.0, 2.0])));
        assert_eq!(c.output.format, Format::Csv);
        let spec = c.deviation_spec().unwrap().unwrap();
        assert_eq!(
            spec.to_string(),
            "node=0,strategy=biased_moves,rock=1,paper=0,scissors=0"
        );
        assert_eq!(ConfigFile::parse(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(ConfigFile::parse("grpah = \"cycle:4\"").is_err());
        assert!(ConfigFile::parse("[output]\ncolour = 1").is_err());
        assert!(ConfigFile::parse("[deviation]\nnode = 0\nstrategy = \"silent\"\nx = 1").is_err());
    }

    #[test]
    fn deviation_table_round_trip() {
        for s in [
            "node=2,strategy=garbage_sender,len=16,activation=3",
            "node=0,strategy=biased_rand,p=0.25",
        ] {
            let spec: DeviationSpec = s.parse().unwrap();
            assert_eq!(DeviationTable::from_spec(&spec).to_spec().unwrap(), spec);
        }
    }

    #[test]
    fn payoffs_from_flag() {
        assert_eq!("2".parse::<Payoffs>().unwrap(), Payoffs::Uniform(2.0));
        assert_eq!(
            "1,2".parse::<Payoffs>().unwrap().resolve(2).unwrap(),
            vec![1.0, 2.0]
        );
        assert!("1,2".parse::<Payoffs>().unwrap().resolve(3).is_err());
    }
}
