//! Causal multi-scale decomposition of a signal into detail bands and a
//! trend (approximation) band, with exact reconstruction by construction.
//!
//! The scheme is a causal Haar à-trous (undecimated) cascade:
//!
//! ```text
//! a_0(t) = x(t)
//! a_j(t) = (a_{j-1}(t) + a_{j-1}(t - 2^{j-1})) / 2
//! d_j(t) = a_{j-1}(t) - a_j(t)
//! ```
//!
//! with left-boundary replication of the first sample. Every band has full
//! source length, only past samples are read (no look-ahead into forecasting
//! features), and the telescoping sum `a_L + d_L + ... + d_1` returns the
//! input exactly.

use crate::error::{Error, Result};

/// Decomposition output: `levels` detail bands plus the final approximation.
///
/// The first `warmup = 2^levels - 1` samples of every band are contaminated
/// by the boundary policy; feature builders must not consume them.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleStack {
    pub levels: usize,
    /// `details[j-1]` holds d_j; all bands have length `source_len`.
    pub details: Vec<Vec<f64>>,
    /// The coarsest approximation a_L.
    pub approx: Vec<f64>,
    /// Count of leading samples affected by boundary replication.
    pub warmup: usize,
    pub source_len: usize,
}

/// Leading samples contaminated by the boundary policy at `levels` scales.
pub fn warmup_len(levels: usize) -> usize {
    (1usize << levels) - 1
}

/// Decompose `x` into `levels` detail bands and one approximation band.
pub fn decompose_causal(x: &[f64], levels: usize) -> Result<ScaleStack> {
    if levels == 0 {
        return Err(Error::InvalidArgument("levels must be >= 1".into()));
    }
    let min_len = 1usize << levels;
    if x.len() < min_len {
        return Err(Error::InvalidArgument(format!(
            "series of length {} is too short for {} levels (needs >= {})",
            x.len(),
            levels,
            min_len
        )));
    }

    let n = x.len();
    let mut details = Vec::with_capacity(levels);
    let mut approx = x.to_vec();
    for j in 1..=levels {
        let lag = 1usize << (j - 1);
        let mut next = vec![0.0f64; n];
        let mut detail = vec![0.0f64; n];
        for t in 0..n {
            let lagged = if t >= lag { approx[t - lag] } else { approx[0] };
            next[t] = (approx[t] + lagged) / 2.0;
            detail[t] = approx[t] - next[t];
        }
        details.push(detail);
        approx = next;
    }

    Ok(ScaleStack {
        levels,
        details,
        approx,
        warmup: warmup_len(levels),
        source_len: n,
    })
}

/// Sum the approximation and all detail bands back into the source signal.
pub fn reconstruct(stack: &ScaleStack) -> Result<Vec<f64>> {
    if stack.approx.len() != stack.source_len {
        return Err(Error::CorruptStack(format!(
            "approx band has {} samples, expected {}",
            stack.approx.len(),
            stack.source_len
        )));
    }
    if stack.details.len() != stack.levels {
        return Err(Error::CorruptStack(format!(
            "{} detail bands for {} levels",
            stack.details.len(),
            stack.levels
        )));
    }
    for (j, d) in stack.details.iter().enumerate() {
        if d.len() != stack.source_len {
            return Err(Error::CorruptStack(format!(
                "detail band d_{} has {} samples, expected {}",
                j + 1,
                d.len(),
                stack.source_len
            )));
        }
    }
    let mut out = stack.approx.clone();
    // Summing coarse-to-fine unwinds the telescoping pairwise.
    for d in stack.details.iter().rev() {
        for (o, v) in out.iter_mut().zip(d) {
            *o += v;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_series(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.random_range(-50.0..50.0)).collect()
    }

    #[test]
    fn constant_series_has_zero_details() {
        for levels in 1..=4 {
            let x = vec![7.25; 64];
            let stack = decompose_causal(&x, levels).unwrap();
            for d in &stack.details {
                assert!(d.iter().all(|&v| v == 0.0));
            }
            assert!(stack.approx.iter().all(|&v| v == 7.25));
            assert_eq!(stack.warmup, (1 << levels) - 1);
        }
    }

    #[test]
    fn unit_impulse_single_level() {
        let mut x = vec![0.0; 16];
        x[5] = 1.0;
        let stack = decompose_causal(&x, 1).unwrap();
        assert_eq!(stack.details[0][5], 0.5);
        assert_eq!(stack.details[0][6], -0.5);
        assert_eq!(stack.approx[5], 0.5);
        assert_eq!(stack.approx[6], 0.5);
        assert_eq!(stack.details[0][4], 0.0);
        assert_eq!(stack.details[0][7], 0.0);
    }

    #[test]
    fn round_trip_is_exact_within_tolerance() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..100 {
            let x = random_series(&mut rng, 1024);
            let stack = decompose_causal(&x, 3).unwrap();
            let back = reconstruct(&stack).unwrap();
            let max_err = x
                .iter()
                .zip(&back)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max);
            assert!(max_err < 1e-9, "max reconstruction error {max_err}");
        }
    }

    #[test]
    fn too_short_input_is_rejected() {
        let x = vec![1.0; 7];
        let err = decompose_causal(&x, 3).unwrap_err();
        assert_eq!(err.class(), "invalid-argument");
        assert!(decompose_causal(&x, 0).is_err());
    }

    #[test]
    fn corrupt_stack_is_rejected() {
        let x: Vec<f64> = (0..32).map(|i| i as f64).collect();
        let mut stack = decompose_causal(&x, 2).unwrap();
        stack.details[1].pop();
        let err = reconstruct(&stack).unwrap_err();
        assert_eq!(err.class(), "corrupt-stack");
    }

    #[test]
    fn zeroed_details_reconstruct_the_trend() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random_series(&mut rng, 128);
        let mut stack = decompose_causal(&x, 3).unwrap();
        for d in &mut stack.details {
            d.iter_mut().for_each(|v| *v = 0.0);
        }
        let smoothed = reconstruct(&stack).unwrap();
        assert_eq!(smoothed, stack.approx);
    }

    // Causality: mutating any suffix never changes band values at earlier
    // indices, exactly.
    #[test]
    fn suffix_mutations_leave_earlier_bands_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let n = 256;
            let x = random_series(&mut rng, n);
            let levels = rng.random_range(1..=4);
            let cut = rng.random_range(1..n);
            let base = decompose_causal(&x, levels).unwrap();

            let mut mutated = x.clone();
            for v in mutated.iter_mut().skip(cut) {
                *v += rng.random_range(1.0..100.0);
            }
            let after = decompose_causal(&mutated, levels).unwrap();

            for j in 0..levels {
                assert_eq!(base.details[j][..cut], after.details[j][..cut]);
            }
            assert_eq!(base.approx[..cut], after.approx[..cut]);
        }
    }

    #[test]
    fn decomposition_is_linear() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let n = 200;
        let x = random_series(&mut rng, n);
        let y = random_series(&mut rng, n);
        let (alpha, beta) = (2.5, -0.75);
        let combined: Vec<f64> = x.iter().zip(&y).map(|(a, b)| alpha * a + beta * b).collect();

        let sx = decompose_causal(&x, 3).unwrap();
        let sy = decompose_causal(&y, 3).unwrap();
        let sc = decompose_causal(&combined, 3).unwrap();

        for j in 0..3 {
            for t in 0..n {
                let expect = alpha * sx.details[j][t] + beta * sy.details[j][t];
                assert!((sc.details[j][t] - expect).abs() < 1e-9);
            }
        }
        for t in 0..n {
            let expect = alpha * sx.approx[t] + beta * sy.approx[t];
            assert!((sc.approx[t] - expect).abs() < 1e-9);
        }
    }

    // Shift covariance outside the warm-up region: delaying the signal by s
    // delays every band by s, exactly, for indices >= warmup + s.
    #[test]
    fn shift_covariance_outside_warmup() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let n = 300;
        let x = random_series(&mut rng, n);
        for s in [1usize, 3, 8] {
            let mut shifted = vec![x[0]; s];
            shifted.extend_from_slice(&x[..n - s]);
            for levels in 1..=3 {
                let sx = decompose_causal(&x, levels).unwrap();
                let ss = decompose_causal(&shifted, levels).unwrap();
                let from = warmup_len(levels) + s;
                for t in from..n {
                    for j in 0..levels {
                        assert_eq!(ss.details[j][t], sx.details[j][t - s], "d{} t={t} s={s}", j + 1);
                    }
                    assert_eq!(ss.approx[t], sx.approx[t - s]);
                }
            }
        }
    }
}
