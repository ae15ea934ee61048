//! Local payoff of a node given its own output and its neighbours' outputs.

use std::cmp::Ordering;
use std::fmt;

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::engine::OutputValue;
use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};

/// A payoff: finite, or the negative-infinity outcome of a locally invalid
/// solution. Never represented as a large negative float.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum UtilityValue {
    NegativeInfinity,
    Finite(f64),
}

impl UtilityValue {
    pub fn is_neg_inf(self) -> bool {
        matches!(self, UtilityValue::NegativeInfinity)
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            UtilityValue::Finite(x) => Some(x),
            UtilityValue::NegativeInfinity => None,
        }
    }
}

impl PartialOrd for UtilityValue {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        use UtilityValue::*;
        match (self, other) {
            (NegativeInfinity, NegativeInfinity) => Some(Ordering::Equal),
            (NegativeInfinity, Finite(_)) => Some(Ordering::Less),
            (Finite(_), NegativeInfinity) => Some(Ordering::Greater),
            (Finite(a), Finite(b)) => a.partial_cmp(b),
        }
    }
}

impl fmt::Display for UtilityValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            UtilityValue::NegativeInfinity => f.write_str("-inf"),
            UtilityValue::Finite(x) => write!(f, "{x}"),
        }
    }
}

impl Serialize for UtilityValue {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            UtilityValue::NegativeInfinity => s.serialize_str("-inf"),
            UtilityValue::Finite(x) => s.serialize_f64(*x),
        }
    }
}

impl<'de> Deserialize<'de> for UtilityValue {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = UtilityValue;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a number or \"-inf\"")
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> std::result::Result<Self::Value, E> {
                Ok(UtilityValue::Finite(v))
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<Self::Value, E> {
                Ok(UtilityValue::Finite(v as f64))
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<Self::Value, E> {
                Ok(UtilityValue::Finite(v as f64))
            }

            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<Self::Value, E> {
                if v == "-inf" {
                    Ok(UtilityValue::NegativeInfinity)
                } else {
                    Err(E::invalid_value(de::Unexpected::Str(v), &self))
                }
            }
        }
        d.deserialize_any(V)
    }
}

/// Evaluates the four cases in order: aborted, excluded, included, invalid.
pub fn evaluate_node(
    i: NodeId,
    out_i: Option<OutputValue>,
    neighbor_outs: &[Option<OutputValue>],
    v_i: f64,
) -> Result<UtilityValue> {
    use OutputValue::*;
    let missing = || Error::Contract(format!("node {i} or a neighbour has no output"));
    let own = out_i.ok_or_else(missing)?;
    let nbrs = neighbor_outs
        .iter()
        .map(|o| o.ok_or_else(missing))
        .collect::<Result<Vec<_>>>()?;
    let any = |x: OutputValue| nbrs.contains(&x);
    Ok(if own == Bot || any(Bot) || (own == Zero && any(One)) {
        UtilityValue::Finite(0.0)
    } else if own == One && !any(One) {
        UtilityValue::Finite(v_i)
    } else {
        UtilityValue::NegativeInfinity
    })
}

pub fn evaluate_all(
    g: &Graph,
    outputs: &[Option<OutputValue>],
    v: &[f64],
) -> Result<Vec<UtilityValue>> {
    if outputs.len() != g.n() || v.len() != g.n() {
        return Err(Error::Contract(
            "outputs and payoffs must cover every node".into(),
        ));
    }
    let mut scratch = Vec::new();
    g.nodes()
        .map(|i| {
            scratch.clear();
            scratch.extend(g.neighbors(i).iter().map(|j| outputs[j.idx()]));
            evaluate_node(i, outputs[i.idx()], &scratch, v[i.idx()])
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::GraphFamily;
    use proptest::prelude::*;
    use OutputValue::*;

    fn eval(own: OutputValue, nbrs: &[OutputValue]) -> UtilityValue {
        let nbrs: Vec<_> = nbrs.iter().copied().map(Some).collect();
        evaluate_node(NodeId(0), Some(own), &nbrs, 2.0).unwrap()
    }

    #[test]
    fn node_examples() {
        assert_eq!(eval(One, &[Zero, Zero]), UtilityValue::Finite(2.0));
        assert_eq!(eval(Zero, &[Zero]), UtilityValue::NegativeInfinity);
        assert_eq!(eval(Bot, &[One]), UtilityValue::Finite(0.0));
        assert_eq!(eval(One, &[One, Zero]), UtilityValue::NegativeInfinity);
        assert_eq!(eval(One, &[]), UtilityValue::Finite(2.0));
        assert_eq!(eval(Zero, &[]), UtilityValue::NegativeInfinity);
    }

    #[test]
    fn missing_output_is_contract_error() {
        assert!(matches!(
            evaluate_node(NodeId(0), None, &[], 1.0),
            Err(Error::Contract(_))
        ));
        assert!(evaluate_node(NodeId(0), Some(One), &[None], 1.0).is_err());
    }

    fn graph(s: &str) -> Graph {
        s.parse::<GraphFamily>().unwrap().build(0).unwrap()
    }

    #[test]
    fn all_examples() {
        let p3 = graph("path:3");
        let u = evaluate_all(&p3, &[Some(Zero), Some(One), Some(Zero)], &[1.0; 3]).unwrap();
        assert_eq!(
            u,
            vec![
                UtilityValue::Finite(0.0),
                UtilityValue::Finite(1.0),
                UtilityValue::Finite(0.0)
            ]
        );
        let k2 = graph("complete:2");
        let u = evaluate_all(&k2, &[Some(One), Some(One)], &[1.0; 2]).unwrap();
        assert!(u.iter().all(|x| x.is_neg_inf()));
        let u = evaluate_all(&k2, &[Some(Bot), Some(One)], &[1.0; 2]).unwrap();
        assert_eq!(u, vec![UtilityValue::Finite(0.0); 2]);
    }

    #[test]
    fn neg_inf_is_lowest() {
        assert!(UtilityValue::NegativeInfinity < UtilityValue::Finite(-1e300));
        assert!(UtilityValue::Finite(0.0) < UtilityValue::Finite(1.0));
    }

    #[test]
    fn serde_round_trip() {
        for u in [
            UtilityValue::NegativeInfinity,
            UtilityValue::Finite(1.5),
            UtilityValue::Finite(0.0),
        ] {
            let text = serde_json::to_string(&u).unwrap();
            assert_eq!(serde_json::from_str::<UtilityValue>(&text).unwrap(), u);
        }
        assert_eq!(
            serde_json::to_string(&UtilityValue::NegativeInfinity).unwrap(),
            "\"-inf\""
        );
    }

    fn output() -> impl Strategy<Value = OutputValue> {
        prop_oneof![Just(One), Just(Zero), Just(Bot)]
    }

    proptest! {
        // Exactly one case fires, and the finite values are 0 or v.
        #[test]
        fn one_case_fires(own in output(), nbrs in prop::collection::vec(output(), 0..5)) {
            let u = eval(own, &nbrs);
            let a = own == Bot || nbrs.contains(&Bot);
            let b = !a && own == Zero && nbrs.contains(&One);
            let c = !a && !b && own == One && !nbrs.contains(&One);
            let d = !a && !b && !c;
            prop_assert_eq!(u32::from(a) + u32::from(b) + u32::from(c) + u32::from(d), 1);
            match u {
                UtilityValue::Finite(x) => prop_assert!(x == 0.0 || x == 2.0),
                UtilityValue::NegativeInfinity => prop_assert!(d),
            }
        }

        // Every node finite, no abort, ones paid v  <=>  the ones form an MIS.
        #[test]
        fn utility_matches_mis(n in 1usize..9, p in 0.0f64..1.0, seed in any::<u64>(), mask in any::<u16>()) {
            let g = format!("erdos_renyi:{p}:{n}").parse::<GraphFamily>().unwrap().build(seed).unwrap();
            let outputs: Vec<_> = (0..n).map(|i| Some(if mask >> i & 1 == 1 { One } else { Zero })).collect();
            let u = evaluate_all(&g, &outputs, &vec![1.0; n]).unwrap();
            let ones: Vec<NodeId> = g.nodes().filter(|i| outputs[i.idx()] == Some(One)).collect();
            let all_good = u.iter().zip(&outputs).all(|(x, o)| match (x, o) {
                (UtilityValue::Finite(v), Some(One)) => *v == 1.0,
                (UtilityValue::Finite(_), _) => true,
                (UtilityValue::NegativeInfinity, _) => false,
            });
            prop_assert_eq!(all_good, g.is_maximal_independent_set(&ones));
        }
    }
}
