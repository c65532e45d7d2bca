//! JSON input and output formats. Node-keyed maps use node ids as string keys.

use std::collections::BTreeMap;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::cash::TermStructure;
use crate::error::{Error, Result};
use crate::measure::{decompose, ProductMeasure};
use crate::risk::{PenaltyTable, PenaltyValue, Profile, RiskMeasureSpec, TableMeasure};
use crate::tree::{AdaptedProcess, EventTree, NodeSpec};
use crate::zoo::{DiscountFamily, InnerRisk};

pub type NodeMap = BTreeMap<u64, f64>;

pub fn from_json<T: DeserializeOwned>(text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::Json(e.to_string()))
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("reports serialize")
}

/// Map keys inside tagged enums reach the deserializer as strings.
mod string_keys {
    use std::collections::BTreeMap;
    use std::str::FromStr;

    use serde::de::Error as _;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use super::PenaltyDoc;

    fn parse<'de, K: FromStr + Ord, V, D: Deserializer<'de>>(raw: BTreeMap<String, V>) -> Result<BTreeMap<K, V>, D::Error> {
        raw.into_iter()
            .map(|(k, v)| k.parse().map(|k| (k, v)).map_err(|_| D::Error::custom(format!("bad key {k:?}"))))
            .collect()
    }

    pub fn serialize<T: Serialize, S: Serializer>(v: &T, s: S) -> Result<S::Ok, S::Error> {
        v.serialize(s)
    }

    pub fn deserialize<'de, K, V, D>(d: D) -> Result<BTreeMap<K, V>, D::Error>
    where
        K: FromStr + Ord,
        V: Deserialize<'de>,
        D: Deserializer<'de>,
    {
        parse::<K, V, D>(BTreeMap::<String, V>::deserialize(d)?)
    }

    pub mod option {
        use super::*;

        pub fn serialize<T: Serialize, S: Serializer>(v: &Option<T>, s: S) -> Result<S::Ok, S::Error> {
            v.serialize(s)
        }

        pub fn deserialize<'de, K, V, D>(d: D) -> Result<Option<BTreeMap<K, V>>, D::Error>
        where
            K: FromStr + Ord,
            V: Deserialize<'de>,
            D: Deserializer<'de>,
        {
            Option::<BTreeMap<String, V>>::deserialize(d)?.map(parse::<K, V, D>).transpose()
        }
    }

    pub mod nested {
        use super::*;

        pub fn serialize<S: Serializer>(v: &PenaltyDoc, s: S) -> Result<S::Ok, S::Error> {
            v.serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<PenaltyDoc, D::Error> {
            let raw = BTreeMap::<String, BTreeMap<String, super::super::PenaltyValue>>::deserialize(d)?;
            parse::<usize, _, D>(raw)?
                .into_iter()
                .map(|(t, inner)| parse::<u64, _, D>(inner).map(|m| (t, m)))
                .collect()
        }

        pub mod option {
            use super::*;

            pub fn serialize<S: Serializer>(v: &Option<PenaltyDoc>, s: S) -> Result<S::Ok, S::Error> {
                v.serialize(s)
            }

            pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<PenaltyDoc>, D::Error> {
                #[derive(Deserialize)]
                struct Wrap(#[serde(with = "super")] PenaltyDoc);
                Ok(Option::<Wrap>::deserialize(d)?.map(|w| w.0))
            }
        }
    }
}

/// Tree file with optional discount weights and named processes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreeFile {
    pub horizon: usize,
    pub nodes: Vec<NodeSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<NodeMap>,
    #[serde(default)]
    pub processes: BTreeMap<String, NodeMap>,
}

impl TreeFile {
    pub fn from_tree(tree: &EventTree, processes: BTreeMap<String, &AdaptedProcess>) -> Self {
        TreeFile {
            horizon: tree.horizon(),
            nodes: tree.node_specs(),
            mu: Some(tree.mu_by_id()),
            processes: processes.into_iter().map(|(k, x)| (k, x.to_ids(tree))).collect(),
        }
    }

    pub fn build(&self) -> Result<EventTree> {
        EventTree::from_nodes(self.horizon, &self.nodes, self.mu.as_ref())
    }

    pub fn process(&self, tree: &EventTree, name: &str) -> Result<AdaptedProcess> {
        let map = self
            .processes
            .get(name)
            .ok_or_else(|| Error::InvalidParameter(format!("processes.{name} not found")))?;
        AdaptedProcess::from_ids(tree, map, &format!("processes.{name}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureFile {
    #[serde(rename = "Z")]
    pub z: NodeMap,
}

impl MeasureFile {
    pub fn from_measure(tree: &EventTree, q: &ProductMeasure) -> Self {
        MeasureFile { z: q.density().to_ids(tree) }
    }

    pub fn build(&self, tree: &EventTree) -> Result<ProductMeasure> {
        ProductMeasure::new(tree, AdaptedProcess::from_ids(tree, &self.z, "Z")?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisintegrationFile {
    #[serde(rename = "M")]
    pub m: NodeMap,
    #[serde(rename = "D")]
    pub d: NodeMap,
    pub gamma: NodeMap,
}

impl DisintegrationFile {
    pub fn from_measure(tree: &EventTree, q: &ProductMeasure) -> Result<Self> {
        let dis = decompose(tree, q)?;
        Ok(DisintegrationFile { m: dis.m.to_ids(tree), d: dis.d.to_ids(tree), gamma: dis.gamma.to_ids(tree) })
    }
}

/// A constant or one value per time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProfileDoc {
    Constant(f64),
    PerTime(Vec<f64>),
}

impl From<ProfileDoc> for Profile {
    fn from(p: ProfileDoc) -> Self {
        match p {
            ProfileDoc::Constant(v) => Profile::constant(v),
            ProfileDoc::PerTime(v) => Profile::per_time(v),
        }
    }
}

impl From<&Profile> for ProfileDoc {
    fn from(p: &Profile) -> Self {
        match p.values() {
            [v] => ProfileDoc::Constant(*v),
            vs => ProfileDoc::PerTime(vs.to_vec()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InnerDoc {
    Expectation {
        #[serde(default, skip_serializing_if = "Option::is_none", with = "string_keys::option")]
        density: Option<NodeMap>,
    },
    Entropic {
        r: f64,
    },
    Avar {
        lambda: f64,
    },
}

/// Penalties keyed by time, then node id.
pub type PenaltyDoc = BTreeMap<usize, BTreeMap<u64, PenaltyValue>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableMeasureDoc {
    pub id: String,
    #[serde(rename = "Z", with = "string_keys")]
    pub z: NodeMap,
    /// Missing entries are infinite.
    #[serde(with = "string_keys::nested")]
    pub penalty: PenaltyDoc,
    #[serde(default, skip_serializing_if = "Option::is_none", with = "string_keys::nested::option")]
    pub one_step: Option<PenaltyDoc>,
}

/// Risk measure file: `{"kind": ..., "params": {...}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "kebab-case")]
pub enum RiskDoc {
    Entropic { r: ProfileDoc },
    SimplifiedEntropic { u: ProfileDoc, v: ProfileDoc },
    Avar { lambda: ProfileDoc },
    DecoupledAvar { lambda1: ProfileDoc, lambda2: ProfileDoc },
    FixedGamma {
        inner: InnerDoc,
        #[serde(with = "string_keys")]
        gamma: NodeMap,
    },
    Dirac { inner: InnerDoc, s: usize },
    StoppingSup { inner: InnerDoc },
    PenaltyTable { measures: Vec<TableMeasureDoc> },
    RecursiveWrapper { inner: Box<RiskDoc> },
}

fn inner_spec(doc: InnerDoc, tree: &EventTree) -> Result<InnerRisk> {
    Ok(match doc {
        InnerDoc::Expectation { density } => InnerRisk::Expectation {
            density: density.map(|m| AdaptedProcess::from_ids(tree, &m, "inner.density")).transpose()?,
        },
        InnerDoc::Entropic { r } => InnerRisk::Entropic { r },
        InnerDoc::Avar { lambda } => InnerRisk::Avar { lambda },
    })
}

fn inner_doc(inner: &InnerRisk, tree: &EventTree) -> InnerDoc {
    match inner {
        InnerRisk::Expectation { density } => InnerDoc::Expectation { density: density.as_ref().map(|m| m.to_ids(tree)) },
        InnerRisk::Entropic { r } => InnerDoc::Entropic { r: *r },
        InnerRisk::Avar { lambda } => InnerDoc::Avar { lambda: *lambda },
    }
}

fn penalty_values(doc: &PenaltyDoc, tree: &EventTree, what: &str) -> Result<Vec<PenaltyValue>> {
    let mut out = vec![PenaltyValue::Infinite; tree.len()];
    for (&t, nodes) in doc {
        for (&id, &v) in nodes {
            let n = tree
                .index_of(id)
                .ok_or_else(|| Error::InvalidParameter(format!("{what}.{t}.{id}: no such node")))?;
            if tree.time(n) != t {
                return Err(Error::MeasurabilityViolation(format!(
                    "{what}.{t}.{id}: node {id} is at time {}",
                    tree.time(n)
                )));
            }
            out[n] = v;
        }
    }
    Ok(out)
}

fn penalty_doc(values: &[PenaltyValue], tree: &EventTree) -> PenaltyDoc {
    let mut doc = PenaltyDoc::new();
    for (n, v) in values.iter().enumerate() {
        if v.is_finite() {
            doc.entry(tree.time(n)).or_default().insert(tree.id(n), *v);
        }
    }
    doc
}

impl RiskDoc {
    /// Builds and validates the risk measure on `tree`.
    pub fn build(self, tree: &EventTree) -> Result<RiskMeasureSpec> {
        let rm = self.into_spec(tree)?;
        rm.validate(tree)?;
        Ok(rm)
    }

    fn into_spec(self, tree: &EventTree) -> Result<RiskMeasureSpec> {
        Ok(match self {
            RiskDoc::Entropic { r } => RiskMeasureSpec::Entropic { r: r.into() },
            RiskDoc::SimplifiedEntropic { u, v } => RiskMeasureSpec::SimplifiedEntropic { u: u.into(), v: v.into() },
            RiskDoc::Avar { lambda } => RiskMeasureSpec::Avar { lambda: lambda.into() },
            RiskDoc::DecoupledAvar { lambda1, lambda2 } => {
                RiskMeasureSpec::DecoupledAvar { lambda1: lambda1.into(), lambda2: lambda2.into() }
            }
            RiskDoc::FixedGamma { inner, gamma } => RiskMeasureSpec::Separated {
                inner: inner_spec(inner, tree)?,
                family: DiscountFamily::Fixed(AdaptedProcess::from_ids(tree, &gamma, "gamma")?),
            },
            RiskDoc::Dirac { inner, s } => {
                RiskMeasureSpec::Separated { inner: inner_spec(inner, tree)?, family: DiscountFamily::Dirac(s) }
            }
            RiskDoc::StoppingSup { inner } => {
                RiskMeasureSpec::Separated { inner: inner_spec(inner, tree)?, family: DiscountFamily::StoppingTimes }
            }
            RiskDoc::PenaltyTable { measures } => {
                let measures = measures
                    .into_iter()
                    .map(|m| {
                        let what = format!("measures.{}", m.id);
                        Ok(TableMeasure {
                            measure: ProductMeasure::new(tree, AdaptedProcess::from_ids(tree, &m.z, &format!("{what}.Z"))?)?,
                            penalty: penalty_values(&m.penalty, tree, &format!("{what}.penalty"))?,
                            one_step: m
                                .one_step
                                .as_ref()
                                .map(|d| penalty_values(d, tree, &format!("{what}.one_step")))
                                .transpose()?,
                            id: m.id,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                RiskMeasureSpec::PenaltyTable(PenaltyTable { measures })
            }
            RiskDoc::RecursiveWrapper { inner } => RiskMeasureSpec::recursive(inner.into_spec(tree)?),
        })
    }

    pub fn from_spec(rm: &RiskMeasureSpec, tree: &EventTree) -> Self {
        match rm {
            RiskMeasureSpec::Entropic { r } => RiskDoc::Entropic { r: r.into() },
            RiskMeasureSpec::SimplifiedEntropic { u, v } => RiskDoc::SimplifiedEntropic { u: u.into(), v: v.into() },
            RiskMeasureSpec::Avar { lambda } => RiskDoc::Avar { lambda: lambda.into() },
            RiskMeasureSpec::DecoupledAvar { lambda1, lambda2 } => {
                RiskDoc::DecoupledAvar { lambda1: lambda1.into(), lambda2: lambda2.into() }
            }
            RiskMeasureSpec::Separated { inner, family } => {
                let inner = inner_doc(inner, tree);
                match family {
                    DiscountFamily::Fixed(g) => RiskDoc::FixedGamma { inner, gamma: g.to_ids(tree) },
                    DiscountFamily::Dirac(s) => RiskDoc::Dirac { inner, s: *s },
                    DiscountFamily::StoppingTimes => RiskDoc::StoppingSup { inner },
                }
            }
            RiskMeasureSpec::PenaltyTable(table) => RiskDoc::PenaltyTable {
                measures: table
                    .measures
                    .iter()
                    .map(|m| TableMeasureDoc {
                        id: m.id.clone(),
                        z: m.measure.density().to_ids(tree),
                        penalty: penalty_doc(&m.penalty, tree),
                        one_step: m.one_step.as_ref().map(|v| penalty_doc(v, tree)),
                    })
                    .collect(),
            },
            RiskMeasureSpec::Recursive(inner) => RiskDoc::RecursiveWrapper { inner: Box::new(RiskDoc::from_spec(inner, tree)) },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermFile {
    pub rates: NodeMap,
    pub zcb: BTreeMap<u64, BTreeMap<usize, f64>>,
}

impl TermFile {
    pub fn build(&self, tree: &EventTree) -> Result<TermStructure> {
        TermStructure::from_ids(tree, &self.rates, &self.zcb)
    }

    pub fn from_term(term: &TermStructure, tree: &EventTree) -> Self {
        TermFile { rates: term.rates_by_id(tree), zcb: term.zcb_by_id(tree) }
    }
}
