//! Horizontal-flip augmentation: mirror frames across the vertical axis and
//! negate the steering angle. Throttle and brake are unaffected.

use crate::autodiff::Tensor;
use crate::data::frame::FrameSequence;
use crate::error::Result;

/// Mirrors the trailing width axis of any rank >= 1 tensor.
pub fn flip_width(t: &Tensor) -> Tensor {
    let shape = t.shape().to_vec();
    let w = *shape.last().expect("rank >= 1");
    let rows = t.len() / w;
    let mut data = vec![0.0; t.len()];
    for r in 0..rows {
        let src = &t.data()[r * w..(r + 1) * w];
        let dst = &mut data[r * w..(r + 1) * w];
        for x in 0..w {
            dst[x] = src[w - 1 - x];
        }
    }
    Tensor::new(shape, data).expect("same shape as input")
}

pub fn augment_flip(frames: &FrameSequence, angle: f64) -> Result<(FrameSequence, f64)> {
    let flipped = flip_width(frames.tensor());
    Ok((FrameSequence::from_tensor(flipped)?, -angle))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn flip_moves_single_bright_pixel_to_mirrored_column() {
        let (h, w) = (2, 5);
        for c in 0..w {
            let mut data = vec![0.0; h * w];
            data[w + c] = 1.0; // row 1, column c
            let t = Tensor::new(vec![1, h, w], data).unwrap();
            let f = flip_width(&t);
            assert_eq!(f.data()[w + (w - 1 - c)], 1.0);
            assert_eq!(f.data().iter().filter(|v| **v != 0.0).count(), 1);
        }
    }

    #[test]
    fn flip_is_an_involution_on_sequences() {
        let mut vals = Vec::new();
        for i in 0..(3 * 2 * 2 * 4) {
            vals.push(((i * 13 % 17) as f64 / 17.0) * 2.0 - 1.0);
        }
        let seq =
            FrameSequence::from_tensor(Tensor::new(vec![3, 2, 2, 4], vals).unwrap()).unwrap();
        let (once, a1) = augment_flip(&seq, 0.3).unwrap();
        let (twice, a2) = augment_flip(&once, a1).unwrap();
        assert_eq!(twice.tensor(), seq.tensor());
        assert_eq!(a2, 0.3);
    }

    #[test]
    fn zero_angle_is_a_fixed_point() {
        let seq = FrameSequence::from_tensor(Tensor::zeros(vec![3, 1, 2, 2])).unwrap();
        let (_, a) = augment_flip(&seq, 0.0).unwrap();
        assert_eq!(a, 0.0);
    }

    proptest! {
        #[test]
        fn flip_involution_holds_for_random_tensors(
            w in 1usize..6,
            h in 1usize..4,
            seed in 0u64..1000,
        ) {
            let n = 3 * h * w;
            let data: Vec<f64> = (0..n)
                .map(|i| {
                    let x = (i as u64).wrapping_mul(6364136223846793005).wrapping_add(seed);
                    (x % 2000) as f64 / 1000.0 - 1.0
                })
                .collect();
            let t = Tensor::new(vec![3, h, w], data).unwrap();
            prop_assert_eq!(flip_width(&flip_width(&t)), t);
        }
    }
}
