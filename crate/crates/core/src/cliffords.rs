// SPDX-License-Identifier: Apache-2.0

//! One- and two-qubit Clifford groups over a signed-Pauli tableau
//! representation, minimal decompositions of two-qubit Cliffords into
//! single-qubit layers and exchange (iSWAP) primitives, and the ideal
//! unitaries for both.
//!
//! Elements are represented by the conjugation images of the generator
//! Paulis (X₁, Z₁, X₂, Z₂), each a Pauli with a sign. Composition and
//! inversion are exact integer operations, so an 11520-element group table
//! with minimal-iSWAP decompositions (found by breadth-first search over
//! {single-qubit layer, iSWAP} words) is built once and shared.

use std::collections::HashMap;
use std::sync::OnceLock;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::operators::{self, CMatrix};

/// Signed Pauli on up to two qubits: bit q of `x`/`z` is the X/Z component
/// on qubit q; the operator is (−1)^sign · i^{x·z} X^x Z^z per qubit (the
/// canonical form in which (x, z) = (1, 1) is Y, not iXZ).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SignedPauli {
    pub x: u8,
    pub z: u8,
    pub negative: bool,
}

impl SignedPauli {
    fn canonical_i_exponent(x: u8, z: u8) -> u8 {
        ((x & z).count_ones() as u8) & 3
    }

    /// Multiply canonical Paulis, returning the product in canonical form
    /// plus the accumulated power of i (mod 4).
    fn mul(self, other: SignedPauli) -> (SignedPauli, u8) {
        let x = self.x ^ other.x;
        let z = self.z ^ other.z;
        // i^{xa·za} Xa Za · i^{xb·zb} Xb Zb
        //   = i^{xa·za + xb·zb} (−1)^{za·xb} X^{xa⊕xb} Z^{za⊕zb}
        //   = i^{…} · i^{−(x⊕)·(z⊕)} · canonical(x⊕, z⊕)
        let mut k: i32 = Self::canonical_i_exponent(self.x, self.z) as i32
            + Self::canonical_i_exponent(other.x, other.z) as i32
            + 2 * ((self.z & other.x).count_ones() as i32)
            - Self::canonical_i_exponent(x, z) as i32;
        if self.negative {
            k += 2;
        }
        if other.negative {
            k += 2;
        }
        let k = k.rem_euclid(4) as u8;
        (
            SignedPauli {
                x,
                z,
                negative: false,
            },
            k,
        )
    }

    /// 4×4 matrix of the two-qubit signed Pauli.
    pub fn unitary(&self) -> CMatrix {
        let single = |x: bool, z: bool| -> CMatrix {
            match (x, z) {
                (false, false) => operators::pauli('I'),
                (true, false) => operators::pauli('X'),
                (false, true) => operators::pauli('Z'),
                (true, true) => operators::pauli('Y'),
            }
        };
        let q1 = single(self.x & 1 != 0, self.z & 1 != 0);
        let q2 = single(self.x & 2 != 0, self.z & 2 != 0);
        let m = q1.kronecker(&q2);
        if self.negative {
            m.map(|v| -v)
        } else {
            m
        }
    }
}

/// A two-qubit Clifford as the images of X₁, Z₁, X₂, Z₂ under conjugation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Tableau {
    images: [SignedPauli; 4],
}

impl Tableau {
    pub fn identity() -> Self {
        Tableau {
            images: [
                SignedPauli { x: 1, z: 0, negative: false },
                SignedPauli { x: 0, z: 1, negative: false },
                SignedPauli { x: 2, z: 0, negative: false },
                SignedPauli { x: 0, z: 2, negative: false },
            ],
        }
    }

    /// Conjugate an arbitrary signed Pauli: C P C†.
    pub fn conjugate(&self, p: SignedPauli) -> SignedPauli {
        // P = (−1)^s i^{x·z} X1^{x1} Z1^{z1} X2^{x2} Z2^{z2}; replace each
        // generator by its image and multiply left-to-right.
        let mut acc = SignedPauli {
            x: 0,
            z: 0,
            negative: false,
        };
        let mut k: i32 = SignedPauli::canonical_i_exponent(p.x, p.z) as i32;
        if p.negative {
            k += 2;
        }
        let bits = [
            (p.x & 1 != 0, 0), // X1
            (p.z & 1 != 0, 1), // Z1
            (p.x & 2 != 0, 2), // X2
            (p.z & 2 != 0, 3), // Z2
        ];
        for (present, idx) in bits {
            if present {
                let (next, dk) = acc.mul(self.images[idx]);
                acc = next;
                k += dk as i32;
            }
        }
        let k = k.rem_euclid(4);
        debug_assert!(k == 0 || k == 2, "conjugation produced a non-Hermitian phase");
        SignedPauli {
            x: acc.x,
            z: acc.z,
            negative: k == 2,
        }
    }

    /// Composition: `self` applied after `earlier`.
    pub fn compose(&self, earlier: &Tableau) -> Tableau {
        Tableau {
            images: earlier.images.map(|p| self.conjugate(p)),
        }
    }

    /// Group inverse.
    pub fn inverse(&self) -> Tableau {
        // Unsigned part: invert the symplectic action by brute-force lookup
        // of which canonical Pauli maps onto each generator; signs follow by
        // one conjugation check per generator.
        let generators = Tableau::identity().images;
        let mut images = [SignedPauli {
            x: 0,
            z: 0,
            negative: false,
        }; 4];
        for (k, target) in generators.iter().enumerate() {
            let mut found = false;
            'search: for x in 0..4u8 {
                for z in 0..4u8 {
                    let candidate = SignedPauli {
                        x,
                        z,
                        negative: false,
                    };
                    let image = self.conjugate(candidate);
                    if image.x == target.x && image.z == target.z {
                        images[k] = SignedPauli {
                            x,
                            z,
                            negative: image.negative,
                        };
                        found = true;
                        break 'search;
                    }
                }
            }
            debug_assert!(found, "symplectic map is a bijection");
        }
        Tableau { images }
    }

    /// Recover the tableau of a 4×4 unitary; `None` if it is not Clifford.
    pub fn from_unitary(u: &CMatrix) -> Option<Tableau> {
        let generators = Tableau::identity().images;
        let udag = u.adjoint();
        let mut images = [SignedPauli {
            x: 0,
            z: 0,
            negative: false,
        }; 4];
        for (k, g) in generators.iter().enumerate() {
            let conj = u * g.unitary() * &udag;
            let mut matched = None;
            for x in 0..4u8 {
                for z in 0..4u8 {
                    for negative in [false, true] {
                        let p = SignedPauli { x, z, negative };
                        if (conj.clone() - p.unitary()).norm() < 1e-9 {
                            matched = Some(p);
                        }
                    }
                }
            }
            images[k] = matched?;
        }
        Some(Tableau { images })
    }
}

/// Exchange rotation exp(−iθ(XX+YY)/2) on the computational basis
/// |00⟩,|01⟩,|10⟩,|11⟩: at θ = π/2 this is the iSWAP primitive realized by
/// the parametric drive (|01⟩ → −i|10⟩); θ = π/4 makes Bell states.
pub fn exchange_gate(theta: f64) -> CMatrix {
    let mut u = operators::identity(4);
    let c = Complex64::new(theta.cos(), 0.0);
    let s = Complex64::new(0.0, -theta.sin());
    u[(1, 1)] = c;
    u[(2, 2)] = c;
    u[(1, 2)] = s;
    u[(2, 1)] = s;
    u
}

/// The iSWAP unitary used as the two-qubit primitive.
pub fn iswap_unitary() -> CMatrix {
    exchange_gate(std::f64::consts::FRAC_PI_2)
}

fn hadamard() -> CMatrix {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    CMatrix::from_row_slice(
        2,
        2,
        &[
            Complex64::new(s, 0.0),
            Complex64::new(s, 0.0),
            Complex64::new(s, 0.0),
            Complex64::new(-s, 0.0),
        ],
    )
}

fn phase_s() -> CMatrix {
    CMatrix::from_row_slice(
        2,
        2,
        &[
            Complex64::new(1.0, 0.0),
            Complex64::new(0.0, 0.0),
            Complex64::new(0.0, 0.0),
            Complex64::new(0.0, 1.0),
        ],
    )
}

/// The 24 single-qubit Clifford unitaries, enumerated by breadth-first
/// closure over {H, S} with a deterministic order.
pub fn single_qubit_cliffords() -> &'static Vec<CMatrix> {
    static TABLE: OnceLock<Vec<CMatrix>> = OnceLock::new();
    TABLE.get_or_init(|| {
        // Key: conjugation images of X and Z as signed single-qubit Paulis,
        // mapped through the two-qubit machinery on qubit 1 only.
        let embed = |u2: &CMatrix| u2.kronecker(&operators::identity(2));
        let key = |u2: &CMatrix| -> Tableau {
            Tableau::from_unitary(&embed(u2)).expect("Clifford generator")
        };
        let mut elements: Vec<CMatrix> = vec![operators::identity(2)];
        let mut seen: HashMap<Tableau, usize> = HashMap::new();
        seen.insert(key(&elements[0]), 0);
        let gens = [hadamard(), phase_s()];
        let mut frontier = vec![0usize];
        while let Some(idx) = frontier.pop() {
            let base = elements[idx].clone();
            for g in &gens {
                let candidate = g * &base;
                let k = key(&candidate);
                if !seen.contains_key(&k) {
                    seen.insert(k, elements.len());
                    frontier.push(elements.len());
                    elements.push(candidate);
                }
            }
        }
        assert_eq!(elements.len(), 24);
        elements
    })
}

/// Decomposition of a two-qubit Clifford: single-qubit layers interleaved
/// with iSWAPs, applied right to left:
/// C = L_k · iSWAP · L_{k−1} · … · iSWAP · L_0.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decomposition {
    /// (C1 index for Q1, C1 index for Q2) per layer; `layers.len() − 1`
    /// iSWAPs are interleaved between them.
    pub layers: Vec<(u8, u8)>,
}

impl Decomposition {
    pub fn iswap_count(&self) -> usize {
        self.layers.len() - 1
    }
}

/// The two-qubit Clifford group table: 11520 elements, closed under
/// composition, each with its inverse and a minimal-iSWAP decomposition.
pub struct CliffordGroup {
    elements: Vec<Tableau>,
    index: HashMap<Tableau, usize>,
    inverses: Vec<u32>,
    decompositions: Vec<Decomposition>,
    unitaries: Vec<OnceLock<CMatrix>>,
    /// Identity element index (always 0 by construction).
    pub identity: usize,
    /// Index of the iSWAP primitive as a group element.
    pub iswap: usize,
}

/// Number of two-qubit Clifford elements.
pub const TWO_QUBIT_GROUP_ORDER: usize = 11520;

static GROUP: OnceLock<CliffordGroup> = OnceLock::new();

/// The shared, lazily built two-qubit group table.
pub fn two_qubit_group() -> &'static CliffordGroup {
    GROUP.get_or_init(CliffordGroup::build)
}

impl CliffordGroup {
    fn build() -> Self {
        let singles = single_qubit_cliffords();
        let embed = |c1: &CMatrix, c2: &CMatrix| c1.kronecker(c2);

        // Tableaux of all 576 single-qubit layers, and of the iSWAP.
        let mut layer_tableaux = Vec::with_capacity(576);
        for (i, c1) in singles.iter().enumerate() {
            for (j, c2) in singles.iter().enumerate() {
                let t = Tableau::from_unitary(&embed(c1, c2)).expect("layer is Clifford");
                layer_tableaux.push(((i as u8, j as u8), t));
            }
        }
        let iswap_tab = Tableau::from_unitary(&iswap_unitary()).expect("iSWAP is Clifford");

        let mut elements: Vec<Tableau> = Vec::with_capacity(TWO_QUBIT_GROUP_ORDER);
        let mut index: HashMap<Tableau, usize> = HashMap::with_capacity(TWO_QUBIT_GROUP_ORDER);
        let mut decompositions: Vec<Decomposition> = Vec::with_capacity(TWO_QUBIT_GROUP_ORDER);

        // Depth 0: identity first (layer (0,0)), then the other layers.
        for &((i, j), t) in &layer_tableaux {
            if !index.contains_key(&t) {
                index.insert(t, elements.len());
                elements.push(t);
                decompositions.push(Decomposition {
                    layers: vec![(i, j)],
                });
            }
        }
        assert_eq!(elements.len(), 576);

        // BFS over words: next = L · iSWAP · current.
        let mut frontier: Vec<usize> = (0..elements.len()).collect();
        while !frontier.is_empty() && elements.len() < TWO_QUBIT_GROUP_ORDER {
            let mut next_frontier = Vec::new();
            for &cur in &frontier {
                let after_iswap = iswap_tab.compose(&elements[cur]);
                let base_decomp = decompositions[cur].clone();
                for &((i, j), ref t) in &layer_tableaux {
                    let candidate = t.compose(&after_iswap);
                    if !index.contains_key(&candidate) {
                        let id = elements.len();
                        index.insert(candidate, id);
                        elements.push(candidate);
                        let mut layers = base_decomp.layers.clone();
                        layers.push((i, j));
                        decompositions.push(Decomposition { layers });
                        next_frontier.push(id);
                    }
                }
            }
            frontier = next_frontier;
        }
        assert_eq!(elements.len(), TWO_QUBIT_GROUP_ORDER);

        let inverses: Vec<u32> = elements
            .iter()
            .map(|t| index[&t.inverse()] as u32)
            .collect();
        let unitaries = (0..elements.len()).map(|_| OnceLock::new()).collect();
        let iswap = index[&iswap_tab];

        CliffordGroup {
            elements,
            index,
            inverses,
            decompositions,
            unitaries,
            identity: 0,
            iswap,
        }
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn tableau(&self, id: usize) -> &Tableau {
        &self.elements[id]
    }

    pub fn index_of(&self, t: &Tableau) -> Option<usize> {
        self.index.get(t).copied()
    }

    pub fn compose(&self, later: usize, earlier: usize) -> usize {
        let t = self.elements[later].compose(&self.elements[earlier]);
        self.index[&t]
    }

    pub fn inverse(&self, id: usize) -> usize {
        self.inverses[id] as usize
    }

    pub fn decomposition(&self, id: usize) -> &Decomposition {
        &self.decompositions[id]
    }

    /// Ideal unitary (up to global phase), reconstructed from the
    /// decomposition and cached.
    pub fn unitary(&self, id: usize) -> &CMatrix {
        self.unitaries[id].get_or_init(|| {
            let singles = single_qubit_cliffords();
            let decomp = &self.decompositions[id];
            let mut u: Option<CMatrix> = None;
            for (k, &(i, j)) in decomp.layers.iter().enumerate() {
                let layer = singles[i as usize].kronecker(&singles[j as usize]);
                u = Some(match u {
                    None => layer,
                    Some(acc) => layer * iswap_unitary() * acc,
                });
                let _ = k;
            }
            u.expect("decomposition has at least one layer")
        })
    }

    /// Mean iSWAP count over the whole group.
    pub fn average_iswaps_per_clifford(&self) -> f64 {
        let total: usize = self
            .decompositions
            .iter()
            .map(|d| d.iswap_count())
            .sum();
        total as f64 / self.len() as f64
    }

    /// Histogram of iSWAP counts.
    pub fn iswap_count_histogram(&self) -> Vec<usize> {
        let max = self
            .decompositions
            .iter()
            .map(|d| d.iswap_count())
            .max()
            .unwrap_or(0);
        let mut hist = vec![0; max + 1];
        for d in &self.decompositions {
            hist[d.iswap_count()] += 1;
        }
        hist
    }
}

/// Order of the single-qubit Clifford group.
pub fn one_qubit_group_order() -> usize {
    single_qubit_cliffords().len()
}

/// A sampled randomized-benchmarking sequence: `m` uniformly random Clifford
/// ids (with an optional interleaved gate after each) plus the recovery
/// inverse, so the noiseless composition is the identity.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RbSequence {
    pub random_ids: Vec<u32>,
    /// Gate inserted after every random element, when interleaving.
    pub interleaved_id: Option<u32>,
    pub recovery_id: u32,
}

impl RbSequence {
    /// Element ids in application order, recovery last.
    pub fn gate_ids(&self) -> Vec<u32> {
        let mut out = Vec::new();
        for &id in &self.random_ids {
            out.push(id);
            if let Some(g) = self.interleaved_id {
                out.push(g);
            }
        }
        out.push(self.recovery_id);
        out
    }
}

/// Sample a length-`m` RB sequence. The recovery element inverts the whole
/// composition exactly (tableau arithmetic), so the noiseless sequence is
/// the identity up to global phase.
pub fn sample_rb_sequence<R: Rng>(
    group: &CliffordGroup,
    m: usize,
    interleave: Option<usize>,
    rng: &mut R,
) -> RbSequence {
    assert!(m >= 1, "sequence length must be at least 1");
    let mut random_ids = Vec::with_capacity(m);
    let mut composed = group.identity;
    for _ in 0..m {
        let id = rng.gen_range(0..group.len());
        random_ids.push(id as u32);
        composed = group.compose(id, composed);
        if let Some(g) = interleave {
            composed = group.compose(g, composed);
        }
    }
    RbSequence {
        random_ids,
        interleaved_id: interleave.map(|g| g as u32),
        recovery_id: group.inverse(composed) as u32,
    }
}
