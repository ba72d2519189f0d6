//! The two training losses and their exact analytic gradients.
//!
//! * [`geometric_loss`]: binary cross-entropy evaluated only on the weakly
//!   labeled regions, each class normalized by its own pixel count so the
//!   tiny ROAD rectangle is not drowned out by the sky.
//! * [`iic_loss`]: negative mutual information of the 2x2 joint distribution
//!   of soft labels over tracked point pairs. Maximizing MI rewards
//!   predictions that are confident, consistent across the pair, and not
//!   collapsed onto a single class; its value always lies in [-ln 2, 0].
//! * [`final_loss`]: per-frame-averaged geometric term plus a weighted
//!   consistency term, with logits sampled bilinearly at subpixel track
//!   locations and gradients scattered back through the transposed weights.
//!
//! Numerical contract: BCE goes through softplus (never `ln` of a stored
//! probability), MI clamps probabilities at 1e-12 inside logs only, and the
//! joint distribution is accumulated in a sorted, order-canonical way so the
//! loss is exactly invariant under permutations of the pair list.

use thiserror::Error;

use crate::img::{bilinear, bilinear_scatter};
use crate::weakmask::{BinaryMask, Label, PartialMask};

/// Probabilities are clamped to at least this inside logarithms.
pub const LOG_CLAMP: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum LossError {
    #[error("logit map is {got_w}x{got_h} but mask is {want_w}x{want_h}")]
    SizeMismatch {
        got_w: usize,
        got_h: usize,
        want_w: usize,
        want_h: usize,
    },
    #[error("mask has no {region} pixels")]
    EmptyRegion { region: &'static str },
    #[error("empty pair batch")]
    EmptyBatch,
    #[error("probability vector {vec:?} is not on the simplex")]
    BadProbability { vec: [f64; 2] },
}

/// Per-pixel network outputs, pre-sigmoid.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitMap {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl LogitMap {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    /// Bilinear sample at a subpixel position (sample-grid convention).
    #[inline]
    pub fn sample(&self, x: f64, y: f64) -> f64 {
        bilinear(&self.data, self.width, self.height, x, y)
    }

    /// Hard decision per pixel: road iff the logit is strictly positive
    /// (ties go to non-road).
    pub fn to_binary_mask(&self) -> BinaryMask {
        BinaryMask {
            width: self.width,
            height: self.height,
            road: self.data.iter().map(|&y| y > 0.0).collect(),
        }
    }
}

#[inline]
pub fn sigmoid(y: f64) -> f64 {
    if y >= 0.0 {
        1.0 / (1.0 + (-y).exp())
    } else {
        let e = y.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow in either tail.
#[inline]
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Class-balanced masked BCE.
///
/// `value = -(1/N) sum_ROAD ln s(y) - (1/M) sum_NONROAD ln(1 - s(y))`, with
/// `ln s(y) = -softplus(-y)`. The gradient is `(s(y) - 1)/N` at ROAD pixels,
/// `s(y)/M` at NONROAD pixels and exactly zero at IGNORE pixels.
pub fn geometric_loss(
    logits: &LogitMap,
    mask: &PartialMask,
) -> Result<(f64, LogitMap), LossError> {
    if logits.width != mask.width || logits.height != mask.height {
        return Err(LossError::SizeMismatch {
            got_w: logits.width,
            got_h: logits.height,
            want_w: mask.width,
            want_h: mask.height,
        });
    }
    let (road, nonroad, _) = mask.counts();
    if road == 0 {
        return Err(LossError::EmptyRegion { region: "ROAD" });
    }
    if nonroad == 0 {
        return Err(LossError::EmptyRegion { region: "NONROAD" });
    }
    let n = road as f64;
    let m = nonroad as f64;
    let mut value = 0.0;
    let mut grad = LogitMap::zeros(logits.width, logits.height);
    for (i, (&y, label)) in logits.data.iter().zip(&mask.labels).enumerate() {
        match label {
            Label::Road => {
                value += softplus(-y) / n;
                grad.data[i] = (sigmoid(y) - 1.0) / n;
            }
            Label::NonRoad => {
                value += softplus(y) / m;
                grad.data[i] = sigmoid(y) / m;
            }
            Label::Ignore => {}
        }
    }
    Ok((value, grad))
}

/// Soft label distributions of one tracked point in the two frames.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbPair {
    /// `[1 - s(y), s(y)]` in the first frame.
    pub s: [f64; 2],
    /// `[1 - s(y'), s(y')]` in the second frame.
    pub s_prime: [f64; 2],
}

impl ProbPair {
    pub fn from_logits(y: f64, y_prime: f64) -> Self {
        let s1 = sigmoid(y);
        let s2 = sigmoid(y_prime);
        Self {
            s: [1.0 - s1, s1],
            s_prime: [1.0 - s2, s2],
        }
    }

    /// Builds from explicit probability vectors (useful for boundary cases
    /// like one-hot labels that no finite logit reaches).
    pub fn from_probs(s: [f64; 2], s_prime: [f64; 2]) -> Result<Self, LossError> {
        for vec in [s, s_prime] {
            let ok = vec.iter().all(|&v| (0.0..=1.0).contains(&v))
                && (vec[0] + vec[1] - 1.0).abs() <= 1e-12;
            if !ok {
                return Err(LossError::BadProbability { vec });
            }
        }
        Ok(Self { s, s_prime })
    }
}

/// Empirical 2x2 joint distribution of soft labels over a pair batch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointDistribution {
    pub p: [[f64; 2]; 2],
    /// Row marginals `p_k = sum_l P[k][l]`.
    pub row: [f64; 2],
    /// Column marginals `p'_l = sum_k P[k][l]`.
    pub col: [f64; 2],
    pub n: usize,
}

/// Averages the outer products `s_i (s'_i)^T`.
///
/// Each of the four entries is accumulated by sorted summation so the result
/// is exactly invariant under permutations of `pairs`.
pub fn joint_distribution(pairs: &[ProbPair]) -> Result<JointDistribution, LossError> {
    if pairs.is_empty() {
        return Err(LossError::EmptyBatch);
    }
    let n = pairs.len() as f64;
    let mut p = [[0.0f64; 2]; 2];
    let mut terms = Vec::with_capacity(pairs.len());
    for k in 0..2 {
        for l in 0..2 {
            terms.clear();
            terms.extend(pairs.iter().map(|pr| pr.s[k] * pr.s_prime[l]));
            terms.sort_by(f64::total_cmp);
            p[k][l] = terms.iter().sum::<f64>() / n;
        }
    }
    let row = [p[0][0] + p[0][1], p[1][0] + p[1][1]];
    let col = [p[0][0] + p[1][0], p[0][1] + p[1][1]];
    Ok(JointDistribution {
        p,
        row,
        col,
        n: pairs.len(),
    })
}

/// Negative mutual information of the pair batch, with per-pair gradients
/// with respect to the two underlying logits.
///
/// Paper-literal form: no symmetrization of the joint. See
/// [`iic_loss_with`] for the opt-in symmetrized variant.
pub fn iic_loss(pairs: &[ProbPair]) -> Result<(f64, Vec<(f64, f64)>), LossError> {
    iic_loss_with(pairs, false)
}

/// [`iic_loss`] with an optional symmetrization `P <- (P + P^T) / 2` before
/// the MI evaluation (the gradient accounts for it).
pub fn iic_loss_with(
    pairs: &[ProbPair],
    symmetrize: bool,
) -> Result<(f64, Vec<(f64, f64)>), LossError> {
    let joint = joint_distribution(pairs)?;
    let mut p = joint.p;
    if symmetrize {
        let off = (p[0][1] + p[1][0]) / 2.0;
        p = [[p[0][0], off], [off, p[1][1]]];
    }
    let row = [p[0][0] + p[0][1], p[1][0] + p[1][1]];
    let col = [p[0][0] + p[1][0], p[0][1] + p[1][1]];

    let ln = |v: f64| v.max(LOG_CLAMP).ln();
    let mut value = 0.0;
    // dL/dP[k][l] for L = -I(P); the log ratio reuses the same clamping as
    // the value so the two stay consistent.
    let mut g = [[0.0f64; 2]; 2];
    for k in 0..2 {
        for l in 0..2 {
            let ratio = ln(p[k][l]) - ln(row[k]) - ln(col[l]);
            if p[k][l] > 0.0 {
                value -= p[k][l] * ratio;
            }
            g[k][l] = 1.0 - ratio;
        }
    }
    if symmetrize {
        // Chain rule through P_sym = (P + P^T) / 2.
        let mut gs = [[0.0f64; 2]; 2];
        for k in 0..2 {
            for l in 0..2 {
                gs[k][l] = (g[k][l] + g[l][k]) / 2.0;
            }
        }
        g = gs;
    }

    let n = joint.n as f64;
    let grads = pairs
        .iter()
        .map(|pr| {
            let dsig = pr.s[0] * pr.s[1]; // s'(y) = s(y)(1 - s(y))
            let dsig_p = pr.s_prime[0] * pr.s_prime[1];
            let dy = dsig / n
                * (pr.s_prime[0] * (g[1][0] - g[0][0]) + pr.s_prime[1] * (g[1][1] - g[0][1]));
            let dy_p = dsig_p / n
                * (pr.s[0] * (g[0][1] - g[0][0]) + pr.s[1] * (g[1][1] - g[1][0]));
            (dy, dy_p)
        })
        .collect();
    Ok((value, grads))
}

/// Weights for [`final_loss`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossOptions {
    /// Weight of the consistency term.
    pub lambda: f64,
    /// Symmetrize the joint distribution before the MI evaluation.
    pub symmetrize: bool,
}

impl Default for LossOptions {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            symmetrize: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FinalLossOutput {
    /// `geometric + lambda * consistency`.
    pub value: f64,
    /// Mean of the two frames' geometric losses.
    pub geometric: f64,
    /// Unweighted consistency (MI) term; 0.0 when `pairs` is empty.
    pub consistency: f64,
    pub grad_a: LogitMap,
    pub grad_b: LogitMap,
}

/// Joint two-frame loss: averaged geometric terms plus the consistency term
/// over tracked point pairs `((ua, va), (ub, vb))` in the two frames.
///
/// Logits are sampled bilinearly at the subpixel positions; consistency
/// gradients are scattered back through the transposed bilinear weights. An
/// empty pair list leaves the geometric term alone (additive identity), so
/// the consistency path contributes nothing, exactly.
pub fn final_loss(
    logits_a: &LogitMap,
    logits_b: &LogitMap,
    mask_a: &PartialMask,
    mask_b: &PartialMask,
    pairs: &[((f64, f64), (f64, f64))],
    opts: &LossOptions,
) -> Result<FinalLossOutput, LossError> {
    let (ga, mut grad_a) = geometric_loss(logits_a, mask_a)?;
    let (gb, mut grad_b) = geometric_loss(logits_b, mask_b)?;
    for g in grad_a.data.iter_mut() {
        *g *= 0.5;
    }
    for g in grad_b.data.iter_mut() {
        *g *= 0.5;
    }
    let geometric = (ga + gb) / 2.0;

    let mut consistency = 0.0;
    if !pairs.is_empty() {
        let prob_pairs: Vec<ProbPair> = pairs
            .iter()
            .map(|&((ua, va), (ub, vb))| {
                ProbPair::from_logits(logits_a.sample(ua, va), logits_b.sample(ub, vb))
            })
            .collect();
        let (value, grads) = iic_loss_with(&prob_pairs, opts.symmetrize)?;
        consistency = value;
        for (&((ua, va), (ub, vb)), &(dy, dy_p)) in pairs.iter().zip(&grads) {
            bilinear_scatter(
                &mut grad_a.data,
                grad_a.width,
                grad_a.height,
                ua,
                va,
                opts.lambda * dy,
            );
            bilinear_scatter(
                &mut grad_b.data,
                grad_b.width,
                grad_b.height,
                ub,
                vb,
                opts.lambda * dy_p,
            );
        }
    }

    Ok(FinalLossOutput {
        value: geometric + opts.lambda * consistency,
        geometric,
        consistency,
        grad_a,
        grad_b,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const LN2: f64 = std::f64::consts::LN_2;

    fn striped_mask(width: usize, height: usize) -> PartialMask {
        // Top third NONROAD, bottom third ROAD, middle IGNORE.
        let labels = (0..width * height)
            .map(|i| {
                let y = i / width;
                if y < height / 3 {
                    Label::NonRoad
                } else if y >= 2 * height / 3 {
                    Label::Road
                } else {
                    Label::Ignore
                }
            })
            .collect();
        PartialMask {
            width,
            height,
            labels,
        }
    }

    #[test]
    fn zero_logits_cost_two_ln_two() {
        let mask = striped_mask(8, 6);
        let logits = LogitMap::zeros(8, 6);
        let (value, _) = geometric_loss(&logits, &mask).unwrap();
        assert!((value - 2.0 * LN2).abs() < 1e-12, "value={value}");
    }

    #[test]
    fn saturated_correct_logits_cost_nothing() {
        let mask = striped_mask(8, 6);
        let logits = LogitMap::from_fn(8, 6, |x, y| match mask.label(x, y) {
            Label::Road => 20.0,
            Label::NonRoad => -20.0,
            Label::Ignore => 3.0,
        });
        let (value, grad) = geometric_loss(&logits, &mask).unwrap();
        assert!(value < 1e-8, "value={value}");
        let inf_norm = grad.data.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        assert!(inf_norm < 1e-8, "grad inf-norm={inf_norm}");
    }

    #[test]
    fn ignore_pixels_cannot_influence_the_value() {
        let mask = striped_mask(8, 6);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let logits = LogitMap::from_fn(8, 6, |_, _| rng.gen_range(-2.0..2.0));
        let (v1, g1) = geometric_loss(&logits, &mask).unwrap();
        let mut perturbed = logits.clone();
        for (i, l) in mask.labels.iter().enumerate() {
            if *l == Label::Ignore {
                perturbed.data[i] += 37.0;
            }
        }
        let (v2, g2) = geometric_loss(&perturbed, &mask).unwrap();
        assert_eq!(v1, v2);
        for (i, l) in mask.labels.iter().enumerate() {
            if *l == Label::Ignore {
                assert_eq!(g1.data[i], 0.0);
                assert_eq!(g2.data[i], 0.0);
            }
        }
    }

    #[test]
    fn degenerate_masks_are_rejected() {
        let all_ignore = PartialMask {
            width: 4,
            height: 4,
            labels: vec![Label::Ignore; 16],
        };
        assert!(matches!(
            geometric_loss(&LogitMap::zeros(4, 4), &all_ignore),
            Err(LossError::EmptyRegion { region: "ROAD" })
        ));
        assert!(matches!(
            geometric_loss(&LogitMap::zeros(3, 3), &striped_mask(8, 6)),
            Err(LossError::SizeMismatch { .. })
        ));
    }

    #[test]
    fn geometric_gradient_matches_finite_differences() {
        let mask = striped_mask(8, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let logits = LogitMap::from_fn(8, 8, |_, _| rng.gen_range(-3.0..3.0));
        let (_, grad) = geometric_loss(&logits, &mask).unwrap();
        let h = 1e-4;
        for i in 0..logits.data.len() {
            let mut plus = logits.clone();
            plus.data[i] += h;
            let mut minus = logits.clone();
            minus.data[i] -= h;
            let fd = (geometric_loss(&plus, &mask).unwrap().0
                - geometric_loss(&minus, &mask).unwrap().0)
                / (2.0 * h);
            let a = grad.data[i];
            let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-8);
            assert!(rel < 1e-5, "pixel {i}: analytic {a} vs fd {fd}");
        }
    }

    #[test]
    fn joint_distribution_anchors() {
        let one_hot = ProbPair::from_probs([1.0, 0.0], [1.0, 0.0]).unwrap();
        let j = joint_distribution(&[one_hot]).unwrap();
        assert_eq!(j.p, [[1.0, 0.0], [0.0, 0.0]]);

        let other = ProbPair::from_probs([0.0, 1.0], [0.0, 1.0]).unwrap();
        let j = joint_distribution(&[one_hot, other]).unwrap();
        assert_eq!(j.p, [[0.5, 0.0], [0.0, 0.5]]);
        assert_eq!(j.row, [0.5, 0.5]);
        assert_eq!(j.col, [0.5, 0.5]);

        let uniform = ProbPair::from_probs([0.5, 0.5], [0.5, 0.5]).unwrap();
        let j = joint_distribution(&[uniform; 3]).unwrap();
        for k in 0..2 {
            for l in 0..2 {
                assert!((j.p[k][l] - 0.25).abs() < 1e-15);
            }
        }
        assert!(matches!(
            joint_distribution(&[]),
            Err(LossError::EmptyBatch)
        ));
    }

    #[test]
    fn joint_entries_sum_to_one_for_random_batches() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..200 {
            let pairs: Vec<ProbPair> = (0..rng.gen_range(1..40))
                .map(|_| {
                    ProbPair::from_logits(rng.gen_range(-6.0..6.0), rng.gen_range(-6.0..6.0))
                })
                .collect();
            let j = joint_distribution(&pairs).unwrap();
            let sum: f64 = j.p.iter().flatten().sum();
            assert!((sum - 1.0).abs() < 1e-9);
            assert!(j.p.iter().flatten().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn iic_anchors_hit_the_mi_bounds() {
        // Perfect 2-class agreement: P = diag(0.5, 0.5), I = ln 2.
        let pairs = [
            ProbPair::from_probs([1.0, 0.0], [1.0, 0.0]).unwrap(),
            ProbPair::from_probs([0.0, 1.0], [0.0, 1.0]).unwrap(),
        ];
        let (value, grads) = iic_loss(&pairs).unwrap();
        assert!((value + LN2).abs() < 1e-9, "value={value}");
        // One-hot probabilities sit where the sigmoid is flat: zero gradient.
        for (dy, dy_p) in grads {
            assert_eq!(dy, 0.0);
            assert_eq!(dy_p, 0.0);
        }

        // Uniform independence: I = 0.
        let uniform = ProbPair::from_probs([0.5, 0.5], [0.5, 0.5]).unwrap();
        let (value, _) = iic_loss(&[uniform; 4]).unwrap();
        assert!(value.abs() < 1e-9, "value={value}");
    }

    #[test]
    fn iic_value_stays_in_mi_bounds_for_random_batches() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        for _ in 0..2000 {
            let pairs: Vec<ProbPair> = (0..rng.gen_range(1..32))
                .map(|_| {
                    ProbPair::from_logits(rng.gen_range(-8.0..8.0), rng.gen_range(-8.0..8.0))
                })
                .collect();
            let (value, _) = iic_loss(&pairs).unwrap();
            assert!(
                (-LN2 - 1e-12..=1e-12).contains(&value),
                "value {value} out of [-ln2, 0]"
            );
        }
    }

    #[test]
    fn iic_is_exactly_permutation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let mut pairs: Vec<ProbPair> = (0..25)
            .map(|_| ProbPair::from_logits(rng.gen_range(-4.0..4.0), rng.gen_range(-4.0..4.0)))
            .collect();
        let (v1, g1) = iic_loss(&pairs).unwrap();
        pairs.reverse();
        let (v2, g2) = iic_loss(&pairs).unwrap();
        assert_eq!(v1, v2, "value must not depend on pair order");
        for (a, b) in g1.iter().zip(g2.iter().rev()) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn iic_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(53);
        for symmetrize in [false, true] {
            let logits: Vec<(f64, f64)> = (0..16)
                .map(|_| (rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)))
                .collect();
            let build = |ls: &[(f64, f64)]| -> Vec<ProbPair> {
                ls.iter().map(|&(a, b)| ProbPair::from_logits(a, b)).collect()
            };
            let (_, grads) = iic_loss_with(&build(&logits), symmetrize).unwrap();
            let h = 1e-4;
            for i in 0..logits.len() {
                for side in 0..2 {
                    let mut plus = logits.clone();
                    let mut minus = logits.clone();
                    if side == 0 {
                        plus[i].0 += h;
                        minus[i].0 -= h;
                    } else {
                        plus[i].1 += h;
                        minus[i].1 -= h;
                    }
                    let vp = iic_loss_with(&build(&plus), symmetrize).unwrap().0;
                    let vm = iic_loss_with(&build(&minus), symmetrize).unwrap().0;
                    let fd = (vp - vm) / (2.0 * h);
                    let a = if side == 0 { grads[i].0 } else { grads[i].1 };
                    let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-8);
                    assert!(
                        rel < 1e-4,
                        "symmetrize={symmetrize} pair {i} side {side}: {a} vs {fd}"
                    );
                }
            }
        }
    }

    #[test]
    fn final_loss_with_no_pairs_is_the_geometric_term() {
        let mask = striped_mask(8, 6);
        let mut rng = ChaCha8Rng::seed_from_u64(61);
        let la = LogitMap::from_fn(8, 6, |_, _| rng.gen_range(-2.0..2.0));
        let lb = LogitMap::from_fn(8, 6, |_, _| rng.gen_range(-2.0..2.0));
        let out = final_loss(&la, &lb, &mask, &mask, &[], &LossOptions::default()).unwrap();
        let (ga, _) = geometric_loss(&la, &mask).unwrap();
        let (gb, _) = geometric_loss(&lb, &mask).unwrap();
        assert_eq!(out.value, (ga + gb) / 2.0);
        assert_eq!(out.consistency, 0.0);
    }

    #[test]
    fn confident_consistent_pairs_reach_minus_ln_two() {
        let mask = striped_mask(8, 6);
        // Perfect predictions relative to the mask, strongly saturated.
        let logits = LogitMap::from_fn(8, 6, |x, y| match mask.label(x, y) {
            Label::Road => 25.0,
            Label::NonRoad => -25.0,
            Label::Ignore => {
                if y >= 3 {
                    25.0
                } else {
                    -25.0
                }
            }
        });
        // Consistent confident pairs with both labels present: sample one
        // road point and one sky point in both frames.
        let pairs = [((2.0, 5.0), (3.0, 5.0)), ((2.0, 0.0), (3.0, 0.0))];
        let out = final_loss(
            &logits,
            &logits,
            &mask,
            &mask,
            &pairs,
            &LossOptions::default(),
        )
        .unwrap();
        assert!(
            (out.value + LN2).abs() < 1e-7,
            "value={} want ~{}",
            out.value,
            -LN2
        );
    }

    #[test]
    fn final_loss_gradient_matches_finite_differences() {
        let mask = striped_mask(8, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(71);
        for opts in [
            LossOptions::default(),
            LossOptions {
                lambda: 0.7,
                symmetrize: true,
            },
        ] {
            let la = LogitMap::from_fn(8, 8, |_, _| rng.gen_range(-2.0..2.0));
            let lb = LogitMap::from_fn(8, 8, |_, _| rng.gen_range(-2.0..2.0));
            let pairs: Vec<((f64, f64), (f64, f64))> = (0..5)
                .map(|_| {
                    (
                        (rng.gen_range(0.0..7.0), rng.gen_range(0.0..7.0)),
                        (rng.gen_range(0.0..7.0), rng.gen_range(0.0..7.0)),
                    )
                })
                .collect();
            let out = final_loss(&la, &lb, &mask, &mask, &pairs, &opts).unwrap();
            let h = 1e-4;
            for target in 0..2 {
                for i in 0..64 {
                    let eval = |delta: f64| {
                        let mut la2 = la.clone();
                        let mut lb2 = lb.clone();
                        if target == 0 {
                            la2.data[i] += delta;
                        } else {
                            lb2.data[i] += delta;
                        }
                        final_loss(&la2, &lb2, &mask, &mask, &pairs, &opts)
                            .unwrap()
                            .value
                    };
                    let fd = (eval(h) - eval(-h)) / (2.0 * h);
                    let a = if target == 0 {
                        out.grad_a.data[i]
                    } else {
                        out.grad_b.data[i]
                    };
                    let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-8);
                    assert!(
                        rel < 1e-4,
                        "map {target} pixel {i}: analytic {a} vs fd {fd}"
                    );
                }
            }
        }
    }

    #[test]
    fn bad_probability_vectors_are_rejected() {
        assert!(ProbPair::from_probs([0.6, 0.5], [0.5, 0.5]).is_err());
        assert!(ProbPair::from_probs([-0.1, 1.1], [0.5, 0.5]).is_err());
        assert!(ProbPair::from_probs([0.25, 0.75], [1.0, 0.0]).is_ok());
    }
}
