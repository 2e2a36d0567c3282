//! Measured error of complete product trees on the desk presets.

use rand::Rng;

use super::{Evaluator, HeContext, HeError, SecretKey};

/// Upper bound on `|Dec(root) − Π x_i|` for a complete product tree of
/// depth `d` (index) whose `2^d` leaves are fresh encryptions of values in
/// `[0.9, 1.1]`, under the `desk-d` preset. Measured empirically with a
/// safety margin; see [`product_tree_error`].
pub const DESK_DEPTH_ERROR: [f64; 9] = [5e-9, 1e-8, 2e-8, 3e-8, 5e-8, 5e-8, 1e-7, 1e-7, 2e-7];

/// Table entry for depth `d`, if one was measured.
pub fn depth_error_bound(d: u32) -> Option<f64> {
    DESK_DEPTH_ERROR.get(d as usize).copied()
}

/// Builds one product tree over `2^depth` random leaves in `[0.9, 1.1]` and
/// returns the absolute error of the decrypted root against the `f64`
/// product.
pub fn product_tree_error<R: Rng>(
    ev: &Evaluator,
    ctx: &HeContext,
    sk: &SecretKey,
    depth: u32,
    rng: &mut R,
) -> Result<f64, HeError> {
    let values: Vec<f64> = (0..1usize << depth).map(|_| rng.gen_range(0.9..=1.1)).collect();
    let mut level = values.iter().map(|&v| ev.encrypt(v)).collect::<Result<Vec<_>, _>>()?;
    while level.len() > 1 {
        level = level.chunks(2).map(|p| ev.hmul(&p[0], &p[1])).collect::<Result<_, _>>()?;
    }
    let exact: f64 = values.iter().product();
    Ok((ctx.decrypt(sk, &level[0])?.value() - exact).abs())
}
