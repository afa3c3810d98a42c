//! Seeded random streams and complex Gaussian draws.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::spectrogram::ComplexSpectrogram;

pub type SampleRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> SampleRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent stream `stream` under the key derived from `seed`.
///
/// ChaCha streams share the key but never overlap, so chain `j` of EM
/// iteration `k` gets the same draws whatever order the chains run in.
pub fn stream(seed: u64, stream: u64) -> SampleRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// One draw from `N_C(0, 1)`: real and imaginary parts each have variance 1/2.
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * core::f64::consts::FRAC_1_SQRT_2
}

pub fn complex_normal_grid<R: Rng + ?Sized>(f_bins: usize, t_frames: usize, rng: &mut R) -> ComplexSpectrogram {
    let mut out = ComplexSpectrogram::zeros(f_bins, t_frames);
    for c in out.as_mut_slice() {
        *c = complex_normal(rng);
    }
    out
}
