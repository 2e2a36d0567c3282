//! Private membership search over homomorphically encrypted values.
//!
//! The server holds encrypted values `c_i` and receives an encrypted target
//! `c_t`. It builds a binary tree whose leaves are `c_i ⊖ c_t` and whose
//! internal nodes are products of their children, then answers the client's
//! requests for node pairs. The client, holding the secret key, decrypts
//! along one root-to-leaf path and learns the leftmost matching index in
//! `1 + 2·log₂ n` messages.
//!
//! Modules, bottom up: [`ckks`] (leveled RNS CKKS), [`he`] (backend-neutral
//! capability plus an exact plain oracle), [`prodtree`], [`transport`],
//! [`protocol`] and [`cli`].

pub mod ckks;
pub mod cli;
pub mod he;
pub mod prodtree;
pub mod protocol;
pub mod transport;
