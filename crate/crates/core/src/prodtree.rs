//! Server-side product tree over encrypted differences.
//!
//! Leaves hold `c_i ⊖ c_t`, padded with encryptions of 1 up to the next
//! power of two `P`; every internal node is the homomorphic product of its
//! two children. Nodes live in a 1-based heap vector of length `2P`: the
//! root is node 1, the children of `k` are `2k` and `2k + 1`, and leaves
//! occupy `[P, 2P)`. A node decrypts to (approximately) zero exactly when
//! some leaf below it does.

use std::thread;

use thiserror::Error;

use crate::he::{depth_error_bound, remaining_depth, BackendTag, Ciphertext, Evaluator, HeContext, HeError};

/// Plaintext of the padding leaves. Nonzero, so pads never create a match.
pub const PAD_SENTINEL: f64 = 1.0;

/// Magic prefix of dataset files.
pub const DATASET_MAGIC: &[u8; 4] = b"HSD1";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TreeError {
    #[error("dataset must be nonempty")]
    Empty,
    #[error("dataset params '{dataset}' do not match context '{context}'")]
    ParamsMismatch { dataset: String, context: String },
    #[error("tree of depth {depth} needs {needed} levels but only {available} remain")]
    DepthExhausted { depth: u32, needed: u32, available: u32 },
    #[error("input ciphertexts are not all at the same level")]
    LevelMismatch,
    #[error("pivot {pivot} is not an internal node of a tree with {padded} leaves")]
    NotInternal { pivot: u64, padded: u64 },
    #[error("heap index {pivot} is not a leaf of a tree with {padded} leaves")]
    NotALeaf { pivot: u64, padded: u64 },
    #[error("malformed dataset: {0}")]
    Malformed(String),
    #[error(transparent)]
    He(#[from] HeError),
}

/// Smallest power of two `P ≥ n` and its exponent `d`.
pub fn padded_size(n: usize) -> (usize, u32) {
    let padded = n.max(1).next_power_of_two();
    (padded, padded.trailing_zeros())
}

/// Ordered encrypted values `c_0..c_{n-1}` under one parameter set.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    params_id: String,
    items: Vec<Ciphertext>,
}

impl Dataset {
    pub fn new(params_id: impl Into<String>, items: Vec<Ciphertext>) -> Result<Self, TreeError> {
        let first = items.first().ok_or(TreeError::Empty)?;
        if items.iter().any(|c| c.tag() != first.tag()) {
            return Err(TreeError::He(HeError::TagMismatch {
                left: first.tag(),
                right: items.iter().map(Ciphertext::tag).find(|t| *t != first.tag()).unwrap(),
            }));
        }
        Ok(Self { params_id: params_id.into(), items })
    }

    /// Encrypts `values` in order under the evaluator's public key.
    pub fn encrypt(ev: &Evaluator, values: &[f64]) -> Result<Self, TreeError> {
        let items = values.iter().map(|&v| ev.encrypt(v)).collect::<Result<Vec<_>, _>>()?;
        Self::new(ev.context().params_id(), items)
    }

    pub fn params_id(&self) -> &str {
        &self.params_id
    }

    pub fn items(&self) -> &[Ciphertext] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// `"HSD1" | params-id length (2, BE) | params-id | count (4, BE) | ciphertext envelopes`.
    pub fn to_bytes(&self, ctx: &HeContext) -> Vec<u8> {
        let id = self.params_id.as_bytes();
        let mut out = Vec::new();
        out.extend_from_slice(DATASET_MAGIC);
        out.extend_from_slice(&(id.len() as u16).to_be_bytes());
        out.extend_from_slice(id);
        out.extend_from_slice(&(self.items.len() as u32).to_be_bytes());
        for c in &self.items {
            out.extend_from_slice(&ctx.ciphertext_to_bytes(c));
        }
        out
    }

    /// Parameter identifier stored in a dataset file header.
    pub fn read_params_id(bytes: &[u8]) -> Result<String, TreeError> {
        if bytes.len() < 6 || &bytes[..4] != DATASET_MAGIC {
            return Err(TreeError::Malformed("bad dataset magic".into()));
        }
        let len = u16::from_be_bytes([bytes[4], bytes[5]]) as usize;
        let id = bytes.get(6..6 + len).ok_or_else(|| TreeError::Malformed("truncated header".into()))?;
        String::from_utf8(id.to_vec()).map_err(|_| TreeError::Malformed("params id is not UTF-8".into()))
    }

    pub fn from_bytes(ctx: &HeContext, bytes: &[u8]) -> Result<Self, TreeError> {
        let id = Self::read_params_id(bytes)?;
        if id != ctx.params_id() {
            return Err(TreeError::ParamsMismatch { dataset: id, context: ctx.params_id().to_string() });
        }
        let mut pos = 6 + id.len();
        let count = bytes
            .get(pos..pos + 4)
            .map(|b| u32::from_be_bytes(b.try_into().unwrap()) as usize)
            .ok_or_else(|| TreeError::Malformed("truncated count".into()))?;
        pos += 4;
        let mut items = Vec::with_capacity(count.min(1 << 20));
        for _ in 0..count {
            let (c, used) = ctx.ciphertext_from_prefix(&bytes[pos..])?;
            items.push(c);
            pos += used;
        }
        if pos != bytes.len() {
            return Err(TreeError::Malformed("trailing bytes after last ciphertext".into()));
        }
        Self::new(id, items)
    }
}

/// Optional public damping of the product magnitudes.
///
/// With an expected non-match difference magnitude `g`, every level is
/// multiplied by `γ = 1/g²` after its pairwise products. `γ = 1` (the
/// default) performs no extra operation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TreeConfig {
    pub expected_gap: f64,
}

impl Default for TreeConfig {
    fn default() -> Self {
        Self { expected_gap: 1.0 }
    }
}

impl TreeConfig {
    pub fn gamma(&self) -> f64 {
        1.0 / (self.expected_gap * self.expected_gap)
    }

    fn normalizes(&self) -> bool {
        self.gamma() != 1.0
    }
}

/// Perfect binary tree of ciphertexts in heap layout.
#[derive(Clone, Debug)]
pub struct CipherTree {
    nodes: Vec<Option<Ciphertext>>,
    depth: u32,
    n_real: usize,
    gamma: f64,
}

impl CipherTree {
    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn n_real(&self) -> usize {
        self.n_real
    }

    /// Number of leaves `P = 2^depth`, also the heap offset of the first leaf.
    pub fn padded_len(&self) -> usize {
        1 << self.depth
    }

    pub fn leaf_offset(&self) -> usize {
        self.padded_len()
    }

    /// Length of the heap vector, slot 0 included.
    pub fn heap_len(&self) -> usize {
        self.nodes.len()
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn root(&self) -> &Ciphertext {
        self.nodes[1].as_ref().expect("root present")
    }

    /// Node `k` for `1 ≤ k < 2P`.
    pub fn node(&self, k: usize) -> Option<&Ciphertext> {
        self.nodes.get(k).and_then(Option::as_ref)
    }

    /// Children `(2·pivot, 2·pivot + 1)` of an internal node.
    pub fn node_pair(&self, pivot: u64) -> Result<(&Ciphertext, &Ciphertext), TreeError> {
        let padded = self.padded_len() as u64;
        if pivot < 1 || pivot >= padded {
            return Err(TreeError::NotInternal { pivot, padded });
        }
        let left = 2 * pivot as usize;
        Ok((self.node(left).unwrap(), self.node(left + 1).unwrap()))
    }

    /// Dataset position of a leaf, or `None` for a padding leaf.
    pub fn heap_to_index(&self, pivot: u64) -> Result<Option<usize>, TreeError> {
        leaf_index(pivot, self.padded_len() as u64, self.n_real)
    }
}

/// Leaf-to-dataset mapping for a tree with `padded` leaves and `n_real`
/// genuine items.
pub fn leaf_index(pivot: u64, padded: u64, n_real: usize) -> Result<Option<usize>, TreeError> {
    if pivot < padded || pivot >= 2 * padded {
        return Err(TreeError::NotALeaf { pivot, padded });
    }
    let index = (pivot - padded) as usize;
    Ok((index < n_real).then_some(index))
}

fn worker_count() -> usize {
    thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

/// Products of consecutive pairs; a trailing odd element passes through.
pub fn pairwise_mul(ev: &Evaluator, level: &[Ciphertext]) -> Result<Vec<Ciphertext>, TreeError> {
    let first = level.first().ok_or(TreeError::Empty)?;
    if level.iter().any(|c| c.level() != first.level()) {
        return Err(TreeError::LevelMismatch);
    }
    let pairs: Vec<&[Ciphertext]> = level.chunks(2).collect();
    let mul = |chunk: &[Ciphertext]| -> Result<Ciphertext, TreeError> {
        match chunk {
            [a, b] => Ok(ev.hmul(a, b)?),
            [a] => Ok(a.clone()),
            _ => unreachable!(),
        }
    };
    let workers = worker_count().min(pairs.len());
    if workers <= 1 {
        return pairs.into_iter().map(mul).collect();
    }
    let per = pairs.len().div_ceil(workers);
    thread::scope(|s| {
        let handles: Vec<_> = pairs
            .chunks(per)
            .map(|group| s.spawn(move || group.iter().map(|c| mul(c)).collect::<Result<Vec<_>, _>>()))
            .collect();
        let mut out = Vec::with_capacity(pairs.len());
        for h in handles {
            out.extend(h.join().expect("pairwise worker panicked")?);
        }
        Ok(out)
    })
}

/// Builds the tree for one target.
///
/// Performs exactly `n` subtractions and `P − 1` multiplications (plus
/// `depth` constant multiplications per level when normalizing).
pub fn build_tree(
    ev: &Evaluator,
    data: &Dataset,
    target: &Ciphertext,
    config: &TreeConfig,
) -> Result<CipherTree, TreeError> {
    let ctx = ev.context();
    if data.params_id() != ctx.params_id() {
        return Err(TreeError::ParamsMismatch {
            dataset: data.params_id().to_string(),
            context: ctx.params_id().to_string(),
        });
    }
    if target.tag() != ctx.tag() {
        return Err(HeError::TagMismatch { left: ctx.tag(), right: target.tag() }.into());
    }
    let n_real = data.len();
    let (padded, depth) = padded_size(n_real);
    let per_level = if config.normalizes() { 2 } else { 1 };
    let needed = depth * per_level;
    let available = remaining_depth(target);
    if available < needed {
        return Err(TreeError::DepthExhausted { depth, needed, available });
    }

    if ctx.tag() == BackendTag::Ckks {
        if let Some(bound) = depth_error_bound(depth) {
            log::debug!("building depth-{depth} tree; measured root error bound on [0.9, 1.1] leaves: {bound:e}");
        }
    }

    let mut nodes: Vec<Option<Ciphertext>> = vec![None; 2 * padded];
    let mut current = Vec::with_capacity(padded);
    for c in data.items() {
        current.push(ev.hsub(c, target)?);
    }
    for _ in n_real..padded {
        current.push(ev.encrypt(PAD_SENTINEL)?);
    }
    for (slot, c) in nodes[padded..].iter_mut().zip(&current) {
        *slot = Some(c.clone());
    }
    for level in (0..depth).rev() {
        let mut next = pairwise_mul(ev, &current)?;
        if config.normalizes() {
            next = next.iter().map(|c| ev.hmul_plain(c, config.gamma())).collect::<Result<_, _>>()?;
        }
        let start = 1usize << level;
        for (slot, c) in nodes[start..2 * start].iter_mut().zip(&next) {
            *slot = Some(c.clone());
        }
        current = next;
    }
    Ok(CipherTree { nodes, depth, n_real, gamma: config.gamma() })
}
