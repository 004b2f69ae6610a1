use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::tensor::Tensor;

/// `U(0, 1)` values of the given shape, a pure function of `seed`.
pub fn uniform_map(shape: &[usize], seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random::<f64>()).collect()).expect("shape product")
}

/// Per-channel Sobel gradient magnitude with replicated borders.
pub fn edge_map(x: &Tensor) -> Result<Tensor> {
    let (c, h, w) = x.image_dims()?;
    let src = x.data();
    let mut out = vec![0.0; src.len()];
    let at = |ch: usize, y: isize, xx: isize| {
        let y = y.clamp(0, h as isize - 1) as usize;
        let xx = xx.clamp(0, w as isize - 1) as usize;
        src[ch * h * w + y * w + xx]
    };
    for ch in 0..c {
        for y in 0..h as isize {
            for xx in 0..w as isize {
                let gx = at(ch, y - 1, xx + 1) + 2.0 * at(ch, y, xx + 1) + at(ch, y + 1, xx + 1)
                    - at(ch, y - 1, xx - 1)
                    - 2.0 * at(ch, y, xx - 1)
                    - at(ch, y + 1, xx - 1);
                let gy = at(ch, y + 1, xx - 1) + 2.0 * at(ch, y + 1, xx) + at(ch, y + 1, xx + 1)
                    - at(ch, y - 1, xx - 1)
                    - 2.0 * at(ch, y - 1, xx)
                    - at(ch, y - 1, xx + 1);
                out[ch * h * w + y as usize * w + xx as usize] = (gx * gx + gy * gy).sqrt();
            }
        }
    }
    Tensor::new(x.shape().to_vec(), out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_in_unit_interval_and_reproducible() {
        let a = uniform_map(&[1, 5, 5], 3);
        assert!(a.data().iter().all(|v| (0.0..1.0).contains(v)));
        assert_eq!(a, uniform_map(&[1, 5, 5], 3));
    }

    #[test]
    fn edges() {
        assert!(edge_map(&Tensor::full(&[1, 6, 6], 2.0)).unwrap().data().iter().all(|&v| v == 0.0));
        let step = Tensor::new(vec![1, 1, 4], vec![0.0, 0.0, 1.0, 1.0]).unwrap();
        let e = edge_map(&step).unwrap();
        assert_eq!(e.data(), &[0.0, 4.0, 4.0, 0.0]);
    }
}
