//! Complete binary tree of height `N`, indexed by bit strings.
//!
//! A vertex at depth `k` is identified with an integer index in
//! `0..2^k` whose bits spell the path from the root (most significant bit
//! first).  The parent of `(k, j)` is `(k-1, j >> 1)`; its children are
//! `(k+1, 2j)` and `(k+1, 2j+1)`.  Edges are identified with their lower
//! endpoint, so the edge set is the set of vertices of depth >= 1.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hard cap on the tree height unless overridden via [`TreeShape::with_cap`].
/// Vertex counts grow as `2^(N+1)`, so 20 keeps full-tree fields around 2M
/// entries.
pub const DEFAULT_MAX_HEIGHT: usize = 20;

/// Heights for which dense edge-pair kernels may be materialized
/// (`(2^(N+1)-2)^2` entries; about 4M at the cap).
pub const DENSE_KERNEL_MAX_HEIGHT: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TreeShape {
    n: usize,
}

impl TreeShape {
    pub fn new(n: usize) -> Result<Self> {
        Self::with_cap(n, DEFAULT_MAX_HEIGHT)
    }

    /// Same as [`TreeShape::new`] with an explicit height cap.
    pub fn with_cap(n: usize, cap: usize) -> Result<Self> {
        if n == 0 || n > cap {
            return Err(Error::HeightOutOfRange { n, max: cap });
        }
        Ok(TreeShape { n })
    }

    pub fn height(&self) -> usize {
        self.n
    }

    pub fn leaf_count(&self) -> usize {
        1 << self.n
    }

    /// `2^(N+1) - 1` vertices including the root.
    pub fn vertex_count(&self) -> usize {
        (1 << (self.n + 1)) - 1
    }

    /// `2^(N+1) - 2` edges, one per vertex of depth >= 1.
    pub fn edge_count(&self) -> usize {
        (1 << (self.n + 1)) - 2
    }

    /// Validated vertex constructor.
    pub fn vertex(&self, depth: usize, index: u64) -> Result<VertexRef> {
        if depth > self.n {
            return Err(Error::DepthOutOfRange { depth, n: self.n });
        }
        if index >= 1u64 << depth {
            return Err(Error::VertexOutOfRange { depth, index });
        }
        Ok(VertexRef { depth, index })
    }

    /// All vertices in level order (depth ascending, index ascending).
    pub fn vertices(&self) -> impl Iterator<Item = VertexRef> + '_ {
        (0..=self.n).flat_map(|k| (0..1u64 << k).map(move |j| VertexRef { depth: k, index: j }))
    }

    pub fn leaves(&self) -> impl Iterator<Item = VertexRef> + '_ {
        let n = self.n;
        (0..1u64 << n).map(move |j| VertexRef { depth: n, index: j })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VertexRef {
    depth: usize,
    index: u64,
}

impl VertexRef {
    pub fn root() -> Self {
        VertexRef { depth: 0, index: 0 }
    }

    /// Panicking constructor; use [`TreeShape::vertex`] to validate against
    /// a shape instead.
    pub fn new(depth: usize, index: u64) -> Self {
        assert!(
            depth < 64 && index < 1u64 << depth,
            "index {index} out of range at depth {depth}"
        );
        VertexRef { depth, index }
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn index(&self) -> u64 {
        self.index
    }

    pub fn is_root(&self) -> bool {
        self.depth == 0
    }

    pub fn parent(&self) -> Option<VertexRef> {
        if self.depth == 0 {
            None
        } else {
            Some(VertexRef {
                depth: self.depth - 1,
                index: self.index >> 1,
            })
        }
    }

    pub fn child(&self, bit: u64) -> VertexRef {
        debug_assert!(bit < 2);
        VertexRef {
            depth: self.depth + 1,
            index: (self.index << 1) | bit,
        }
    }

    /// Ancestor at the given depth (`depth <= self.depth`); depth 0 is the
    /// root, `self.depth` is the vertex itself.
    pub fn ancestor(&self, depth: usize) -> VertexRef {
        assert!(depth <= self.depth, "ancestor depth exceeds vertex depth");
        VertexRef {
            depth,
            index: self.index >> (self.depth - depth),
        }
    }
}

/// Depth of the lowest common ancestor: the length of the longest common
/// prefix of the two path strings.  Both vertices must belong to the same
/// tree.
pub fn dlca(x: VertexRef, y: VertexRef) -> usize {
    let m = x.depth.min(y.depth);
    let a = x.index >> (x.depth - m);
    let b = y.index >> (y.depth - m);
    // Number of bits that must be dropped until the prefixes agree.
    let mismatched = (64 - (a ^ b).leading_zeros()) as usize;
    m - mismatched
}

/// Positive edge weights, one per depth `1..=N`; every edge at depth `k`
/// carries the weight `W_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "WeightsRepr", into = "WeightsRepr")]
pub struct TreeWeights {
    values: Vec<f64>,
}

/// Wire format: `{"N": 3, "W": [w1, w2, w3]}`.
#[derive(Serialize, Deserialize)]
struct WeightsRepr {
    #[serde(rename = "N")]
    n: usize,
    #[serde(rename = "W")]
    w: Vec<f64>,
}

impl TryFrom<WeightsRepr> for TreeWeights {
    type Error = Error;

    fn try_from(repr: WeightsRepr) -> Result<Self> {
        if repr.w.len() != repr.n {
            return Err(Error::DimensionMismatch {
                what: "weight vector",
                expected: repr.n,
                actual: repr.w.len(),
            });
        }
        TreeWeights::explicit(repr.w)
    }
}

impl From<TreeWeights> for WeightsRepr {
    fn from(w: TreeWeights) -> Self {
        WeightsRepr {
            n: w.values.len(),
            w: w.values,
        }
    }
}

impl TreeWeights {
    pub fn explicit(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::HeightOutOfRange {
                n: 0,
                max: DEFAULT_MAX_HEIGHT,
            });
        }
        for (i, &v) in values.iter().enumerate() {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidWeight {
                    depth: i + 1,
                    value: v,
                });
            }
        }
        Ok(TreeWeights { values })
    }

    pub fn unit(n: usize) -> Result<Self> {
        Self::explicit(vec![1.0; n.max(1)])
    }

    /// `W_k = c * 2^-k`.
    pub fn dyadic(n: usize, c: f64) -> Result<Self> {
        Self::explicit((1..=n).map(|k| c * (0.5f64).powi(k as i32)).collect())
    }

    /// `W_k = c * beta^k`.
    pub fn geometric(n: usize, c: f64, beta: f64) -> Result<Self> {
        Self::explicit((1..=n).map(|k| c * beta.powi(k as i32)).collect())
    }

    pub fn height(&self) -> usize {
        self.values.len()
    }

    pub fn shape(&self) -> TreeShape {
        TreeShape {
            n: self.values.len(),
        }
    }

    /// Weight at depth `k`, `1 <= k <= N`.
    pub fn at(&self, k: usize) -> f64 {
        self.values[k - 1]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Hex SHA-256 of the canonical wire form, for labeling outputs.
    pub fn digest(&self) -> String {
        use sha2::{Digest, Sha256};
        let repr = serde_json::to_string(self).expect("weights serialize");
        let hash = Sha256::digest(repr.as_bytes());
        hash.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Which slots a [`ScalarField`] occupies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FieldRole {
    /// One value per vertex, root included.
    Vertices,
    /// One value per edge, indexed by the lower endpoint (depth >= 1).
    Edges,
    /// One value per depth-`N` vertex.
    Leaves,
}

/// Flat level-order storage of a function on vertices, edges or leaves.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    role: FieldRole,
    n: usize,
    values: Vec<f64>,
}

fn role_len(role: FieldRole, n: usize) -> usize {
    match role {
        FieldRole::Vertices => (1 << (n + 1)) - 1,
        FieldRole::Edges => (1 << (n + 1)) - 2,
        FieldRole::Leaves => 1 << n,
    }
}

impl ScalarField {
    pub fn zeros(role: FieldRole, n: usize) -> Self {
        ScalarField {
            role,
            n,
            values: vec![0.0; role_len(role, n)],
        }
    }

    pub fn constant(role: FieldRole, n: usize, c: f64) -> Self {
        ScalarField {
            role,
            n,
            values: vec![c; role_len(role, n)],
        }
    }

    pub fn from_values(role: FieldRole, n: usize, values: Vec<f64>) -> Result<Self> {
        let expected = role_len(role, n);
        if values.len() != expected {
            return Err(Error::FieldLength {
                role,
                n,
                expected,
                actual: values.len(),
            });
        }
        Ok(ScalarField { role, n, values })
    }

    pub fn role(&self) -> FieldRole {
        self.role
    }

    pub fn height(&self) -> usize {
        self.n
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Storage slot of a vertex/edge/leaf in canonical level order.
    fn slot(&self, v: VertexRef) -> usize {
        debug_assert!(v.depth <= self.n);
        match self.role {
            FieldRole::Vertices => ((1usize << v.depth) - 1) + v.index as usize,
            FieldRole::Edges => {
                debug_assert!(v.depth >= 1, "root carries no edge value");
                ((1usize << v.depth) - 2) + v.index as usize
            }
            FieldRole::Leaves => {
                debug_assert!(v.depth == self.n, "not a leaf");
                v.index as usize
            }
        }
    }

    pub fn at(&self, v: VertexRef) -> f64 {
        self.values[self.slot(v)]
    }

    pub fn set(&mut self, v: VertexRef, value: f64) {
        let slot = self.slot(v);
        self.values[slot] = value;
    }

    pub fn expect_role(&self, role: FieldRole) -> Result<()> {
        if self.role != role {
            return Err(Error::WrongRole {
                expected: role,
                actual: self.role,
            });
        }
        Ok(())
    }
}

/// First differences along parent edges: `(dF)(x) = F(x) - F(parent(x))`.
pub fn gradient(f: &ScalarField) -> Result<ScalarField> {
    f.expect_role(FieldRole::Vertices)?;
    let n = f.n;
    let mut out = ScalarField::zeros(FieldRole::Edges, n);
    for k in 1..=n {
        for j in 0..1u64 << k {
            let v = VertexRef { depth: k, index: j };
            let p = v.parent().expect("depth >= 1");
            out.set(v, f.at(v) - f.at(p));
        }
    }
    Ok(out)
}

/// Path sums of an edge field, anchored at `F(root) = 0`; inverse of
/// [`gradient`] up to the root value.  Each vertex value accumulates the
/// edges along the root-to-vertex path in root-first order.
pub fn integrate(g: &ScalarField) -> Result<ScalarField> {
    g.expect_role(FieldRole::Edges)?;
    let n = g.n;
    let mut out = ScalarField::zeros(FieldRole::Vertices, n);
    for k in 1..=n {
        for j in 0..1u64 << k {
            let v = VertexRef { depth: k, index: j };
            let p = v.parent().expect("depth >= 1");
            out.set(v, out.at(p) + g.at(v));
        }
    }
    Ok(out)
}

/// Copy the depth-`N` slice of a vertex field into a leaf field.
pub fn restrict_to_leaves(f: &ScalarField) -> Result<ScalarField> {
    f.expect_role(FieldRole::Vertices)?;
    let n = f.n;
    let start = (1usize << n) - 1;
    ScalarField::from_values(FieldRole::Leaves, n, f.values[start..].to_vec())
}

/// A symmetry of the complete binary tree: every internal vertex may swap
/// its two subtrees.  Depths are preserved, so the action is a family of
/// index permutations, one per depth.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeAutomorphism {
    n: usize,
    /// `perm[slot(k, j)] = sigma_k(j)`, stored over all vertices in level
    /// order.
    perm: Vec<u64>,
}

impl TreeAutomorphism {
    pub fn identity(n: usize) -> Self {
        let mut perm = Vec::with_capacity((1 << (n + 1)) - 1);
        for k in 0..=n {
            perm.extend(0..1u64 << k);
        }
        TreeAutomorphism { n, perm }
    }

    /// Build from one swap bit per internal vertex (level order, `2^N - 1`
    /// entries).  `swaps[v] = true` exchanges the two children of the image
    /// of `v`'s slot: `sigma(v.child(b)) = sigma(v).child(b ^ swaps[v])`.
    pub fn from_swaps(n: usize, swaps: &[bool]) -> Result<Self> {
        let internal = (1usize << n) - 1;
        if swaps.len() != internal {
            return Err(Error::DimensionMismatch {
                what: "swap vector",
                expected: internal,
                actual: swaps.len(),
            });
        }
        let mut perm = vec![0u64; (1 << (n + 1)) - 1];
        for k in 1..=n {
            let parent_base = (1usize << (k - 1)) - 1;
            let base = (1usize << k) - 1;
            for j in 0..1u64 << k {
                let pj = (j >> 1) as usize;
                let flip = swaps[parent_base + pj] as u64;
                let image_parent = perm[parent_base + pj];
                perm[base + j as usize] = (image_parent << 1) | ((j & 1) ^ flip);
            }
        }
        Ok(TreeAutomorphism { n, perm })
    }

    /// Uniformly random automorphism, deterministic in the seed.
    pub fn random(n: usize, seed: u64) -> Self {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let swaps: Vec<bool> = (0..(1usize << n) - 1).map(|_| rng.random()).collect();
        Self::from_swaps(n, &swaps).expect("swap vector length matches")
    }

    pub fn height(&self) -> usize {
        self.n
    }

    pub fn apply(&self, v: VertexRef) -> VertexRef {
        let slot = ((1usize << v.depth) - 1) + v.index as usize;
        VertexRef {
            depth: v.depth,
            index: self.perm[slot],
        }
    }

    /// Pull a field back along the symmetry: `out(v) = f(sigma(v))`.
    pub fn pullback(&self, f: &ScalarField) -> Result<ScalarField> {
        if f.height() != self.n {
            return Err(Error::HeightMismatch {
                left: f.height(),
                right: self.n,
            });
        }
        let mut out = ScalarField::zeros(f.role(), self.n);
        let depths = match f.role() {
            FieldRole::Vertices => 0..=self.n,
            FieldRole::Edges => 1..=self.n,
            FieldRole::Leaves => self.n..=self.n,
        };
        for k in depths {
            for j in 0..1u64 << k {
                let v = VertexRef { depth: k, index: j };
                out.set(v, f.at(self.apply(v)));
            }
        }
        Ok(out)
    }
}
