//! Waveform-level enhancement: STFT, EM, inverse STFT.

use std::thread;

use udiffse_core::em::{enhance_from, initial_nmf, ChainRunner, EnhancementConfig, EnhancementResult};
use udiffse_core::score::ScoreModel;
use udiffse_core::waveform::Waveform;
use udiffse_core::ComplexSpectrogram;

use crate::error::{Error, Result};
use crate::stft::Stft;

/// Runs chains on up to `jobs` scoped threads.
#[derive(Debug, Clone, Copy)]
pub struct Threaded {
    pub jobs: usize,
}

impl ChainRunner for Threaded {
    fn run<F>(&self, chains: usize, chain: F) -> Vec<udiffse_core::Result<ComplexSpectrogram>>
    where
        F: Fn(usize) -> udiffse_core::Result<ComplexSpectrogram> + Sync,
    {
        let jobs = self.jobs.clamp(1, chains.max(1));
        if jobs == 1 {
            return (0..chains).map(chain).collect();
        }
        let mut out: Vec<Option<udiffse_core::Result<ComplexSpectrogram>>> = (0..chains).map(|_| None).collect();
        thread::scope(|s| {
            let chain = &chain;
            let handles: Vec<_> = (0..jobs)
                .map(|w| s.spawn(move || (w..chains).step_by(jobs).map(|j| (j, chain(j))).collect::<Vec<_>>()))
                .collect();
            for h in handles {
                for (j, r) in h.join().expect("chain worker panicked") {
                    out[j] = Some(r);
                }
            }
        });
        out.into_iter().map(|r| r.expect("every chain ran")).collect()
    }
}

/// Enhances `noisy`, returning the waveform at the input length and the EM result.
pub fn enhance_waveform<M: ScoreModel + Sync + ?Sized, C: ChainRunner + ?Sized>(
    noisy: &Waveform,
    model: &M,
    stft: &Stft,
    cfg: &EnhancementConfig,
    runner: &C,
) -> Result<(Waveform, EnhancementResult)> {
    if noisy.sample_rate() != stft.config().sample_rate {
        return Err(Error::Usage(format!(
            "input is {} Hz, the pipeline expects {} Hz",
            noisy.sample_rate(),
            stft.config().sample_rate
        )));
    }
    let x = stft.stft(noisy)?;
    let init = initial_nmf(&x, cfg)?;
    let result = enhance_from(&x, model, model.schedule(), cfg, init, runner)?;
    let out = stft.istft(&result.s_hat, noisy.len())?;
    Ok((out, result))
}
