//! Set calculus over the subset lattice: recovering intersection
//! cardinalities from union cardinalities, and reading off partitions by
//! exact parent signature.
//!
//! Index subsets are encoded as bitmasks (bit i = source i), which is also
//! the JSON encoding used by the CLI.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Union cardinalities of a family of `n` sets, one entry per nonempty
/// index subset. Monotonicity and submodularity are verified on input,
/// since any family of actual sets satisfies both.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SetFamily {
    n: usize,
    /// union_card[mask] = |union of the sets selected by mask|; entry 0 is 0.
    union_card: Vec<u64>,
}

impl SetFamily {
    /// Maximum family size (2^n lattice tables stay in memory).
    pub const MAX_SETS: usize = 20;

    /// Build from a dense table indexed by bitmask (length 2^n, entry 0
    /// ignored).
    pub fn new(n: usize, union_card: Vec<u64>) -> Result<Self> {
        if n == 0 || n > Self::MAX_SETS {
            return Err(Error::Domain(format!("family size {n} outside 1..={}", Self::MAX_SETS)));
        }
        if union_card.len() != 1 << n {
            return Err(Error::ShapeMismatch(format!(
                "union table has {} entries, expected {}",
                union_card.len(),
                1usize << n
            )));
        }
        let f = SetFamily { n, union_card };
        f.check_monotone()?;
        f.check_submodular()?;
        Ok(f)
    }

    /// Compute union cardinalities of explicit sets.
    pub fn from_explicit_sets(sets: &[std::collections::BTreeSet<u64>]) -> Result<Self> {
        let n = sets.len();
        if n == 0 || n > Self::MAX_SETS {
            return Err(Error::Domain(format!("family size {n} outside 1..={}", Self::MAX_SETS)));
        }
        let mut union_card = vec![0u64; 1 << n];
        for mask in 1usize..1 << n {
            let mut u = std::collections::BTreeSet::new();
            for (i, s) in sets.iter().enumerate() {
                if mask & (1 << i) != 0 {
                    u.extend(s.iter().copied());
                }
            }
            union_card[mask] = u.len() as u64;
        }
        let f = SetFamily { n, union_card };
        f.check_monotone()?;
        f.check_submodular()?;
        Ok(f)
    }

    /// Number of sets.
    pub fn n(&self) -> usize {
        self.n
    }

    /// |union over the sets in `mask`| (mask nonzero).
    pub fn union_card(&self, mask: usize) -> u64 {
        self.union_card[mask]
    }

    /// Monotone along covers iff monotone globally.
    fn check_monotone(&self) -> Result<()> {
        for mask in 1usize..1 << self.n {
            for i in 0..self.n {
                let bit = 1usize << i;
                if mask & bit == 0 && self.union_card[mask] > self.union_card[mask | bit] {
                    return Err(Error::Unrealizable(format!(
                        "union cardinality decreases from mask {mask:#b} to {:#b}",
                        mask | bit
                    )));
                }
            }
        }
        Ok(())
    }

    /// Local submodularity: U(K+a) + U(K+b) >= U(K+a+b) + U(K).
    fn check_submodular(&self) -> Result<()> {
        for mask in 0usize..1 << self.n {
            for a in 0..self.n {
                let ba = 1usize << a;
                if mask & ba != 0 {
                    continue;
                }
                for b in a + 1..self.n {
                    let bb = 1usize << b;
                    if mask & bb != 0 {
                        continue;
                    }
                    let lhs = self.union_card[mask | ba] + self.union_card[mask | bb];
                    let rhs = self.union_card[mask | ba | bb] + self.union_card[mask];
                    if lhs < rhs {
                        return Err(Error::Unrealizable(format!(
                            "submodularity fails at mask {mask:#b} with sets {a} and {b}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Intersection cardinalities for every nonempty subset, recovered from
/// union cardinalities by the inclusion–exclusion rearrangement
///
///   |inter_S| = sum over nonempty K subseteq S of (-1)^(|K|-1) |union_K|,
///
/// evaluated bottom-up over the subset lattice as one signed subset-sum
/// transform (the naive recursion re-expands exponentially). Entry 0 of
/// the returned table is 0. Errors if any recovered cardinality is
/// negative, which certifies the input is not realizable by sets.
pub fn intersections_from_unions(family: &SetFamily) -> Result<Vec<u64>> {
    let n = family.n;
    let size = 1usize << n;
    let mut acc = vec![0i64; size];
    for mask in 1..size {
        let sign = if mask.count_ones() % 2 == 1 { 1 } else { -1 };
        acc[mask] = sign * family.union_card[mask] as i64;
    }
    for i in 0..n {
        let bit = 1usize << i;
        for mask in 0..size {
            if mask & bit != 0 {
                let lower = acc[mask ^ bit];
                acc[mask] += lower;
            }
        }
    }
    let mut out = vec![0u64; size];
    for mask in 1..size {
        if acc[mask] < 0 {
            return Err(Error::Unrealizable(format!(
                "intersection cardinality for mask {mask:#b} computes to {}",
                acc[mask]
            )));
        }
        out[mask] = acc[mask] as u64;
    }
    Ok(out)
}

/// One block of latent dimensions sharing an exact source signature.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignatureBlock {
    /// Bitmask of the sources this block is connected to (nonempty).
    pub signature: usize,
    /// Number of latent dimensions carrying exactly this signature.
    pub dims: u64,
}

/// Partition of latent dimensions by exact parent signature.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParentSignaturePartition {
    /// Nonempty blocks, ascending by signature mask.
    pub blocks: Vec<SignatureBlock>,
    /// Total dimensions connected to at least one source.
    pub total_dims: u64,
}

/// Convert per-subset changing-subspace dimensions (union semantics: the
/// dimension count affected by *any* source in the subset) into the
/// partition of latent dimensions by exact parent signature.
///
/// First recovers intersection dimensions, then applies superset Moebius
/// inversion to isolate the dimensions connected to exactly each signature.
pub fn partition_by_signature(family: &SetFamily) -> Result<ParentSignaturePartition> {
    let n = family.n;
    let size = 1usize << n;
    let inter = intersections_from_unions(family)?;
    let mut exact: Vec<i64> = inter.iter().map(|&v| v as i64).collect();
    for i in 0..n {
        let bit = 1usize << i;
        for mask in (0..size).rev() {
            if mask & bit == 0 {
                let upper = exact[mask | bit];
                exact[mask] -= upper;
            }
        }
    }
    let mut blocks = Vec::new();
    let mut total = 0u64;
    for mask in 1..size {
        match exact[mask] {
            0 => {}
            d if d > 0 => {
                blocks.push(SignatureBlock { signature: mask, dims: d as u64 });
                total += d as u64;
            }
            d => {
                return Err(Error::Unrealizable(format!(
                    "signature {mask:#b} receives negative dimension count {d}"
                )))
            }
        }
    }
    let full = family.union_card[size - 1];
    if total != full {
        return Err(Error::Unrealizable(format!(
            "signature blocks sum to {total}, full union dimension is {full}"
        )));
    }
    Ok(ParentSignaturePartition { blocks, total_dims: total })
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeSet;

    use proptest::prelude::*;

    use super::*;

    fn set(vals: &[u64]) -> BTreeSet<u64> {
        vals.iter().copied().collect()
    }

    #[test]
    fn two_set_intersection_from_unions() {
        // A1={1,2}, A2={2,3}: unions (2,2,3) -> |A1 n A2| = 1.
        let f = SetFamily::new(2, vec![0, 2, 2, 3]).unwrap();
        let inter = intersections_from_unions(&f).unwrap();
        assert_eq!(inter[0b01], 2);
        assert_eq!(inter[0b10], 2);
        assert_eq!(inter[0b11], 1);
    }

    #[test]
    fn pairwise_disjoint_triple() {
        let f = SetFamily::from_explicit_sets(&[set(&[0]), set(&[1, 2]), set(&[3, 4, 5])]).unwrap();
        let inter = intersections_from_unions(&f).unwrap();
        for mask in 1usize..8 {
            let expected = match mask {
                0b001 => 1,
                0b010 => 2,
                0b100 => 3,
                _ => 0,
            };
            assert_eq!(inter[mask], expected, "mask {mask:#b}");
        }
    }

    #[test]
    fn nested_chain_intersections_equal_innermost() {
        let a = set(&[0, 1]);
        let b = set(&[0, 1, 2, 3]);
        let c = set(&[0, 1, 2, 3, 4, 5]);
        let f = SetFamily::from_explicit_sets(&[a.clone(), b, c]).unwrap();
        let inter = intersections_from_unions(&f).unwrap();
        for mask in [0b001usize, 0b011, 0b101, 0b111] {
            assert_eq!(inter[mask], a.len() as u64, "mask {mask:#b}");
        }
    }

    #[test]
    fn submodularity_violation_is_rejected_on_input() {
        let err = SetFamily::new(2, vec![0, 1, 1, 3]).unwrap_err();
        assert!(err.to_string().contains("submodularity"), "{err}");
    }

    #[test]
    fn negative_intermediate_cardinality_is_unrealizable() {
        // Monotone and locally submodular, yet the triple intersection
        // computes to 2+2+2 - (4+4+4) + 5 = -1: no explicit sets exist.
        let f = SetFamily::new(3, vec![0, 2, 2, 4, 2, 4, 4, 5]).unwrap();
        let err = intersections_from_unions(&f).unwrap_err();
        assert!(matches!(err, Error::Unrealizable(_)), "{err}");
    }

    #[test]
    fn antitone_in_supersets() {
        let f = SetFamily::from_explicit_sets(&[set(&[0, 1, 2]), set(&[1, 2, 3]), set(&[2, 3])])
            .unwrap();
        let inter = intersections_from_unions(&f).unwrap();
        for small in 1usize..8 {
            for big in small..8 {
                if big & small == small {
                    assert!(inter[small] >= inter[big]);
                }
            }
        }
    }

    #[test]
    fn single_source_partition() {
        let f = SetFamily::new(1, vec![0, 3]).unwrap();
        let p = partition_by_signature(&f).unwrap();
        assert_eq!(p.blocks, vec![SignatureBlock { signature: 1, dims: 3 }]);
        assert_eq!(p.total_dims, 3);
    }

    #[test]
    fn two_source_overlap_partition() {
        // dims 2 and 2 with union 3 -> exactly-one blocks of 1 and shared 1.
        let f = SetFamily::new(2, vec![0, 2, 2, 3]).unwrap();
        let p = partition_by_signature(&f).unwrap();
        assert_eq!(
            p.blocks,
            vec![
                SignatureBlock { signature: 0b01, dims: 1 },
                SignatureBlock { signature: 0b10, dims: 1 },
                SignatureBlock { signature: 0b11, dims: 1 },
            ]
        );
        assert_eq!(p.total_dims, 3);
    }

    #[test]
    fn text_to_top_level_bipartite_partition() {
        // First source touches one latent dim, second touches that dim and
        // one more: blocks are shared {1,2}: 1 and private {2}: 1.
        let f = SetFamily::new(2, vec![0, 1, 2, 2]).unwrap();
        let p = partition_by_signature(&f).unwrap();
        assert_eq!(
            p.blocks,
            vec![
                SignatureBlock { signature: 0b10, dims: 1 },
                SignatureBlock { signature: 0b11, dims: 1 },
            ]
        );
    }

    proptest! {
        /// Round trip against explicit sets: union cardinalities in, exact
        /// intersection counts out, for every nonempty subset.
        #[test]
        fn round_trip_matches_explicit_sets(
            sets in proptest::collection::vec(
                proptest::collection::btree_set(0u64..32, 0..10),
                1..6,
            )
        ) {
            let f = SetFamily::from_explicit_sets(&sets).unwrap();
            let inter = intersections_from_unions(&f).unwrap();
            for mask in 1usize..1 << sets.len() {
                let mut iter = sets.iter().enumerate().filter(|(i, _)| mask & (1 << i) != 0);
                let (_, first) = iter.next().unwrap();
                let mut acc: BTreeSet<u64> = first.clone();
                for (_, s) in iter {
                    acc = acc.intersection(s).copied().collect();
                }
                prop_assert_eq!(inter[mask], acc.len() as u64, "mask {:#b}", mask);
            }
        }

        /// Signature blocks always sum to the full union and are consistent
        /// with direct signature counting on explicit sets.
        #[test]
        fn partition_matches_direct_signature_count(
            sets in proptest::collection::vec(
                proptest::collection::btree_set(0u64..24, 0..8),
                1..5,
            )
        ) {
            let f = SetFamily::from_explicit_sets(&sets).unwrap();
            let p = partition_by_signature(&f).unwrap();
            // Direct: for each element of the universe, its signature.
            let mut counts = std::collections::BTreeMap::new();
            for e in 0u64..24 {
                let mut sig = 0usize;
                for (i, s) in sets.iter().enumerate() {
                    if s.contains(&e) {
                        sig |= 1 << i;
                    }
                }
                if sig != 0 {
                    *counts.entry(sig).or_insert(0u64) += 1;
                }
            }
            let got: std::collections::BTreeMap<usize, u64> =
                p.blocks.iter().map(|b| (b.signature, b.dims)).collect();
            prop_assert_eq!(got, counts);
        }
    }
}
