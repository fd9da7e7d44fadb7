//! Sparse signed measures as finite weighted sums of Dirac atoms.
//!
//! Every iterate handled by the solvers lives here: a measure is a list of
//! `(position, weight)` atoms in insertion order. Positions are compared
//! bitwise — two atoms merge only when every coordinate has the exact same
//! bit pattern, which keeps support bookkeeping deterministic.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Atoms with |weight| below this are dropped by every constructor.
pub const WEIGHT_FLOOR: f64 = 1e-12;

/// One weighted Dirac atom.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    #[serde(rename = "x")]
    pub position: Vec<f64>,
    #[serde(rename = "w")]
    pub weight: f64,
}

/// A finite signed measure `u = Σ_j w_j δ_{x_j}`.
///
/// Invariants maintained by all constructors:
/// * no atom has `|weight| < WEIGHT_FLOOR`,
/// * no two atoms share a bitwise-identical position,
/// * atom order is insertion order (first occurrence wins on merge).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SparseMeasure {
    atoms: Vec<Atom>,
}

fn pos_bits(p: &[f64]) -> Vec<u64> {
    p.iter().map(|c| c.to_bits()).collect()
}

impl SparseMeasure {
    /// The zero measure.
    pub fn empty() -> Self {
        Self { atoms: Vec::new() }
    }

    /// Build from `(position, weight)` pairs, merging bitwise-coincident
    /// positions by weight addition and pruning at [`WEIGHT_FLOOR`].
    pub fn from_atoms<I, P>(atoms: I) -> Self
    where
        I: IntoIterator<Item = (P, f64)>,
        P: Into<Vec<f64>>,
    {
        let mut out: Vec<Atom> = Vec::new();
        let mut keys: Vec<Vec<u64>> = Vec::new();
        for (p, w) in atoms {
            let p = p.into();
            let key = pos_bits(&p);
            match keys.iter().position(|k| *k == key) {
                Some(i) => out[i].weight += w,
                None => {
                    keys.push(key);
                    out.push(Atom {
                        position: p,
                        weight: w,
                    });
                }
            }
        }
        Self { atoms: out }.prune()
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// Support positions in stored order.
    pub fn positions(&self) -> impl Iterator<Item = &[f64]> {
        self.atoms.iter().map(|a| a.position.as_slice())
    }

    /// Weight of the atom at a bitwise-identical position (`u({x})`), 0 if absent.
    pub fn weight_at(&self, position: &[f64]) -> f64 {
        let key = pos_bits(position);
        self.atoms
            .iter()
            .find(|a| pos_bits(&a.position) == key)
            .map_or(0.0, |a| a.weight)
    }

    /// Total variation norm `‖u‖_M = Σ_j |w_j|`.
    pub fn total_variation(&self) -> f64 {
        self.atoms.iter().map(|a| a.weight.abs()).sum()
    }

    /// Restriction of `u` to the atoms whose position satisfies `keep`.
    /// Weights are unchanged; order is preserved.
    pub fn restrict<F: FnMut(&[f64]) -> bool>(&self, mut keep: F) -> Self {
        Self {
            atoms: self
                .atoms
                .iter()
                .filter(|a| keep(&a.position))
                .cloned()
                .collect(),
        }
    }

    /// Signed mass of the open Euclidean ball: `u(B_radius(center))`,
    /// summing weights of atoms with `‖x − center‖ < radius` (strict).
    pub fn ball_mass(&self, center: &[f64], radius: f64) -> f64 {
        self.atoms
            .iter()
            .filter(|a| dist(&a.position, center) < radius)
            .map(|a| a.weight)
            .sum()
    }

    /// Convex combination `(1 − eta)·u + eta·v` with coincident positions
    /// merged by weight addition, then pruned.
    pub fn convex_combine(&self, v: &SparseMeasure, eta: f64) -> Self {
        assert!((0.0..=1.0).contains(&eta), "eta must lie in [0, 1]");
        let own = self
            .atoms
            .iter()
            .map(|a| (a.position.clone(), (1.0 - eta) * a.weight));
        let other = v
            .atoms
            .iter()
            .map(|a| (a.position.clone(), eta * a.weight));
        Self::from_atoms(own.chain(other))
    }

    /// Drop atoms with `|weight| < WEIGHT_FLOOR`. Idempotent.
    pub fn prune(mut self) -> Self {
        self.atoms.retain(|a| a.weight.abs() >= WEIGHT_FLOOR);
        self
    }

    /// Minimal representer `MR(u)`: the finite parameter `z = (x, λ)` listing
    /// atoms in stored order. Errors on the zero measure.
    pub fn minimal_representer(&self) -> Result<FiniteParam> {
        let first = self.atoms.first().ok_or(Error::EmptyRepresenter)?;
        let dim = first.position.len();
        let mut positions = Vec::with_capacity(self.len() * dim);
        let mut weights = Vec::with_capacity(self.len());
        for a in &self.atoms {
            positions.extend_from_slice(&a.position);
            weights.push(a.weight);
        }
        Ok(FiniteParam {
            dim,
            positions,
            weights,
        })
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Finite parametrization `z = (x_1..x_N, λ_1..λ_N)` of an `N`-atom measure.
///
/// Positions are stored flat (`N·dim` entries, atom-major); the parameter
/// vector used by Newton steps is `[x_1, …, x_N, λ_1, …, λ_N]`.
#[derive(Clone, Debug, PartialEq)]
pub struct FiniteParam {
    pub dim: usize,
    pub positions: Vec<f64>,
    pub weights: Vec<f64>,
}

impl FiniteParam {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn position(&self, j: usize) -> &[f64] {
        &self.positions[j * self.dim..(j + 1) * self.dim]
    }

    /// Number of scalar parameters `N·(dim + 1)`.
    pub fn n_params(&self) -> usize {
        self.len() * (self.dim + 1)
    }

    /// Flatten to `[x_1, …, x_N, λ_1, …, λ_N]`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.n_params());
        v.extend_from_slice(&self.positions);
        v.extend_from_slice(&self.weights);
        v
    }

    /// Rebuild from the flat layout produced by [`FiniteParam::to_vec`].
    pub fn from_vec(dim: usize, n: usize, v: &[f64]) -> Self {
        assert_eq!(v.len(), n * (dim + 1));
        Self {
            dim,
            positions: v[..n * dim].to_vec(),
            weights: v[n * dim..].to_vec(),
        }
    }
}

/// The measure `U(z) = Σ_j λ_j δ_{x_j}` with coincident positions merged and
/// zero weights pruned.
pub fn measure_of(z: &FiniteParam) -> SparseMeasure {
    SparseMeasure::from_atoms(
        (0..z.len()).map(|j| (z.position(j).to_vec(), z.weights[j])),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn heat_truth() -> SparseMeasure {
        SparseMeasure::from_atoms([
            (vec![0.28, 0.71], 1.0),
            (vec![0.51, 0.27], -0.7),
            (vec![0.71, 0.53], 0.8),
        ])
    }

    #[test]
    fn total_variation_examples() {
        assert_eq!(SparseMeasure::empty().total_variation(), 0.0);
        assert_eq!(heat_truth().total_variation(), 2.5);
        let sig = SparseMeasure::from_atoms([
            (vec![3.125], -1.0),
            (vec![7.0], 0.7),
            (vec![179f64.sqrt()], 0.5),
        ]);
        assert!((sig.total_variation() - 2.2).abs() < 1e-15);
    }

    #[test]
    fn from_atoms_merges_bitwise_and_prunes() {
        let u = SparseMeasure::from_atoms([
            (vec![0.5], 1.0),
            (vec![0.5], 0.25),
            (vec![0.25], 1e-13),
        ]);
        assert_eq!(u.len(), 1);
        assert_eq!(u.atoms()[0].weight, 1.25);
        // nearby but not bitwise-identical positions stay separate
        let v = SparseMeasure::from_atoms([(vec![0.5], 1.0), (vec![0.5 + 1e-16], 1.0)]);
        assert_eq!(v.len(), if 0.5 + 1e-16 == 0.5 { 1 } else { 2 });
    }

    #[test]
    fn restrict_keeps_weights_and_order() {
        let u = heat_truth();
        let drop = [vec![0.51, 0.27]];
        let r = u.restrict(|x| !drop.iter().any(|d| d.as_slice() == x));
        assert_eq!(r.len(), 2);
        assert_eq!(r.atoms()[0].position, vec![0.28, 0.71]);
        assert_eq!(r.atoms()[1].weight, 0.8);
    }

    #[test]
    fn ball_mass_is_signed_and_strict() {
        let u = SparseMeasure::from_atoms([(vec![0.0], 1.0), (vec![0.5], -0.25), (vec![1.0], 2.0)]);
        // radius exactly reaching an atom excludes it (open ball)
        assert_eq!(u.ball_mass(&[0.0], 0.5), 1.0);
        assert_eq!(u.ball_mass(&[0.0], 0.6), 0.75);
        assert_eq!(u.ball_mass(&[0.25], 10.0), 2.75);
        assert_eq!(u.ball_mass(&[-3.0], 1.0), 0.0);
    }

    #[test]
    fn convex_combine_endpoints_and_merge() {
        let u = heat_truth();
        let v = SparseMeasure::from_atoms([(vec![0.28, 0.71], 1.0), (vec![0.9, 0.9], -2.0)]);
        assert_eq!(u.convex_combine(&v, 0.0), u);
        assert_eq!(u.convex_combine(&v, 1.0), v);
        let mid = u.convex_combine(&v, 0.5);
        // shared position merged: 0.5·1.0 + 0.5·1.0
        assert_eq!(mid.weight_at(&[0.28, 0.71]), 1.0);
        assert_eq!(mid.len(), 4);
        // exact cancellation prunes
        let w = SparseMeasure::from_atoms([(vec![0.1], 1.0)]);
        let neg = SparseMeasure::from_atoms([(vec![0.1], -1.0)]);
        assert!(w.convex_combine(&neg, 0.5).is_empty());
    }

    #[test]
    fn minimal_representer_roundtrip_and_empty_error() {
        assert!(matches!(
            SparseMeasure::empty().minimal_representer(),
            Err(Error::EmptyRepresenter)
        ));
        let u = heat_truth();
        let z = u.minimal_representer().unwrap();
        assert_eq!(z.len(), 3);
        assert_eq!(z.dim, 2);
        assert_eq!(z.position(1), &[0.51, 0.27]);
        assert_eq!(z.weights, vec![1.0, -0.7, 0.8]);
        assert_eq!(measure_of(&z), u, "measure_of ∘ minimal_representer = id");
    }

    #[test]
    fn measure_of_merges_duplicates() {
        let z = FiniteParam {
            dim: 1,
            positions: vec![0.5, 0.5, 0.7],
            weights: vec![1.0, -1.0, 0.3],
        };
        let u = measure_of(&z);
        assert_eq!(u.len(), 1);
        assert_eq!(u.weight_at(&[0.7]), 0.3);
    }

    #[test]
    fn finite_param_vec_roundtrip() {
        let z = heat_truth().minimal_representer().unwrap();
        let v = z.to_vec();
        assert_eq!(v.len(), 9);
        assert_eq!(FiniteParam::from_vec(2, 3, &v), z);
    }

    #[test]
    fn prune_is_idempotent() {
        let u = SparseMeasure::from_atoms([(vec![0.1], 1e-12), (vec![0.2], 0.9e-12)]);
        assert_eq!(u.len(), 1, "weights at the floor are kept, below dropped");
        assert_eq!(u.clone().prune(), u);
    }

    #[test]
    fn json_roundtrip_matches_schema() {
        let u = heat_truth();
        let s = serde_json::to_string(&u).unwrap();
        assert!(s.starts_with(r#"[{"x":[0.28,0.71],"w":1.0}"#));
        let back: SparseMeasure = serde_json::from_str(&s).unwrap();
        assert_eq!(back, u);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn arb_measure() -> impl Strategy<Value = SparseMeasure> {
            proptest::collection::vec(((0.0..1.0f64, 0.0..1.0f64), -2.0..2.0f64), 0..6).prop_map(
                |atoms| {
                    SparseMeasure::from_atoms(
                        atoms.into_iter().map(|((a, b), w)| (vec![a, b], w)),
                    )
                },
            )
        }

        proptest! {
            #[test]
            fn tv_convexity(u in arb_measure(), v in arb_measure(), eta in 0.0..=1.0f64) {
                let combined = u.convex_combine(&v, eta);
                let bound = (1.0 - eta) * u.total_variation() + eta * v.total_variation();
                prop_assert!(combined.total_variation() <= bound + 1e-12);
            }

            #[test]
            fn constructors_respect_floor(u in arb_measure()) {
                prop_assert!(u.atoms().iter().all(|a| a.weight.abs() >= WEIGHT_FLOOR));
                prop_assert_eq!(u.clone().prune(), u);
            }

            #[test]
            fn ball_additivity_disjoint(u in arb_measure()) {
                // balls around (0.25,·) and (0.75,·) with radius 0.2 are disjoint
                let m1 = u.ball_mass(&[0.25, 0.5], 0.2);
                let m2 = u.ball_mass(&[0.75, 0.5], 0.2);
                let both = u.restrict(|x| {
                    super::dist(x, &[0.25, 0.5]) < 0.2 || super::dist(x, &[0.75, 0.5]) < 0.2
                });
                prop_assert!((m1 + m2 - both.atoms().iter().map(|a| a.weight).sum::<f64>()).abs() < 1e-12);
            }
        }
    }
}
