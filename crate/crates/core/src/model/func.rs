//! Deterministic selection functions.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A total map from joint parent values to the target's value.
///
/// The domain is stored explicitly as value tuples in parent order, so the
/// same type serves ground-truth functions (domain = full product of the
/// parents' alphabets) and learned functions (domain = the observed joint
/// parent support). Serialized with comma-joined value tuples as keys.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionFunction {
    /// Target node id.
    pub target: String,
    /// Parent node ids, fixing tuple order.
    pub parents: Vec<String>,
    #[serde(
        serialize_with = "ser_table",
        deserialize_with = "de_table"
    )]
    table: BTreeMap<Vec<u32>, u32>,
}

impl SelectionFunction {
    /// Build from explicit (tuple, value) entries.
    pub fn new(
        target: impl Into<String>,
        parents: Vec<String>,
        entries: impl IntoIterator<Item = (Vec<u32>, u32)>,
    ) -> Result<Self> {
        let parents_len = parents.len();
        let mut table = BTreeMap::new();
        for (tuple, value) in entries {
            if tuple.len() != parents_len {
                return Err(Error::ShapeMismatch(format!(
                    "selection tuple {tuple:?} has {} entries, expected {parents_len}",
                    tuple.len()
                )));
            }
            table.insert(tuple, value);
        }
        Ok(SelectionFunction { target: target.into(), parents, table })
    }

    /// Build over the full product of per-parent alphabets.
    pub fn from_fn(
        target: impl Into<String>,
        parents: Vec<String>,
        alphabets: &[Vec<u32>],
        f: impl Fn(&[u32]) -> u32,
    ) -> Result<Self> {
        let mut entries = Vec::new();
        let mut tuple = vec![0u32; alphabets.len()];
        product(alphabets, &mut tuple, 0, &mut |t| entries.push((t.to_vec(), f(t))));
        Self::new(target, parents, entries)
    }

    /// Apply to a parent-value tuple. Errors with the offending tuple on a
    /// domain miss.
    pub fn apply(&self, parent_values: &[u32]) -> Result<u32> {
        self.table
            .get(parent_values)
            .copied()
            .ok_or_else(|| Error::DomainMiss {
                node: self.target.clone(),
                tuple: parent_values.to_vec(),
            })
    }

    /// Iterate the domain in lexicographic tuple order.
    pub fn domain(&self) -> impl Iterator<Item = (&Vec<u32>, u32)> {
        self.table.iter().map(|(k, v)| (k, *v))
    }

    /// Number of domain tuples.
    pub fn domain_len(&self) -> usize {
        self.table.len()
    }

    /// Distinct output values over the stored domain, ascending.
    pub fn image(&self) -> Vec<u32> {
        let mut vals: Vec<u32> = self.table.values().copied().collect();
        vals.sort_unstable();
        vals.dedup();
        vals
    }

    /// Distinct output values over an arbitrary product of per-parent value
    /// sets (tuples outside the stored domain are skipped).
    pub fn image_over(&self, alphabets: &[Vec<u32>]) -> Vec<u32> {
        let mut vals = Vec::new();
        let mut tuple = vec![0u32; alphabets.len()];
        product(alphabets, &mut tuple, 0, &mut |t| {
            if let Some(&v) = self.table.get(t) {
                vals.push(v);
            }
        });
        vals.sort_unstable();
        vals.dedup();
        vals
    }
}

fn product(alphabets: &[Vec<u32>], tuple: &mut Vec<u32>, depth: usize, f: &mut impl FnMut(&[u32])) {
    if depth == alphabets.len() {
        f(tuple);
        return;
    }
    for &v in &alphabets[depth] {
        tuple[depth] = v;
        product(alphabets, tuple, depth + 1, f);
    }
}

fn ser_table<S: serde::Serializer>(
    table: &BTreeMap<Vec<u32>, u32>,
    s: S,
) -> std::result::Result<S::Ok, S::Error> {
    let keyed: BTreeMap<String, u32> = table
        .iter()
        .map(|(k, v)| {
            let key = k.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
            (key, *v)
        })
        .collect();
    serde::Serialize::serialize(&keyed, s)
}

fn de_table<'de, D: serde::Deserializer<'de>>(
    d: D,
) -> std::result::Result<BTreeMap<Vec<u32>, u32>, D::Error> {
    let keyed: BTreeMap<String, u32> = serde::Deserialize::deserialize(d)?;
    let mut table = BTreeMap::new();
    for (k, v) in keyed {
        let tuple: std::result::Result<Vec<u32>, _> = if k.is_empty() {
            Ok(Vec::new())
        } else {
            k.split(',').map(str::parse).collect()
        };
        table.insert(tuple.map_err(serde::de::Error::custom)?, v);
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn or_table() {
        let f = SelectionFunction::from_fn(
            "s",
            vec!["a".into(), "b".into()],
            &[vec![0, 1], vec![0, 1]],
            |t| u32::from(t[0] == 1 || t[1] == 1),
        )
        .unwrap();
        assert_eq!(f.apply(&[1, 0]).unwrap(), 1);
        assert_eq!(f.apply(&[0, 0]).unwrap(), 0);
    }

    #[test]
    fn identity_selection() {
        let f = SelectionFunction::from_fn("s", vec!["a".into()], &[vec![0, 1, 2, 3]], |t| t[0])
            .unwrap();
        assert_eq!(f.apply(&[3]).unwrap(), 3);
    }

    #[test]
    fn majority_of_three_matches_enumerated_truth_table() {
        // Hand enumeration of the 8-row majority table.
        let rows = [
            ([0u32, 0, 0], 0),
            ([0, 0, 1], 0),
            ([0, 1, 0], 0),
            ([0, 1, 1], 1),
            ([1, 0, 0], 0),
            ([1, 0, 1], 1),
            ([1, 1, 0], 1),
            ([1, 1, 1], 1),
        ];
        let f = SelectionFunction::from_fn(
            "s",
            vec!["a".into(), "b".into(), "c".into()],
            &[vec![0, 1], vec![0, 1], vec![0, 1]],
            |t| u32::from(t.iter().sum::<u32>() >= 2),
        )
        .unwrap();
        for (tuple, want) in rows {
            assert_eq!(f.apply(&tuple).unwrap(), want, "tuple {tuple:?}");
        }
        assert_eq!(f.apply(&[1, 1, 0]).unwrap(), 1);
    }

    #[test]
    fn domain_miss_names_the_tuple() {
        let f = SelectionFunction::from_fn("s", vec!["a".into()], &[vec![0, 1]], |t| t[0]).unwrap();
        match f.apply(&[7]) {
            Err(Error::DomainMiss { node, tuple }) => {
                assert_eq!(node, "s");
                assert_eq!(tuple, vec![7]);
            }
            other => panic!("expected domain miss, got {other:?}"),
        }
    }

    #[test]
    fn json_round_trip_uses_comma_keys() {
        let f = SelectionFunction::from_fn(
            "s",
            vec!["a".into(), "b".into()],
            &[vec![0, 1], vec![0, 1]],
            |t| t[0] ^ t[1],
        )
        .unwrap();
        let js = serde_json::to_string(&f).unwrap();
        assert!(js.contains("\"1,0\":1"), "{js}");
        let back: SelectionFunction = serde_json::from_str(&js).unwrap();
        assert_eq!(back, f);
    }
}
