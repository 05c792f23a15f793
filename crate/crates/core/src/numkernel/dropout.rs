//! Counter-based dropout masks: each element's keep decision is a pure
//! function of (seed, epoch, batch, layer, element index).

use std::sync::atomic::{AtomicU64, Ordering};

use crate::fingerprints::splitmix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DropoutMode {
    /// Evaluation: dropout is the identity.
    Off,
    /// Masks keyed by (seed, epoch, batch, layer); reproducible.
    Keyed { seed: u64, epoch: u64, batch: u64 },
    /// A new mask on every call. Useful only to exercise non-determinism
    /// detection; never reproducible.
    Fresh,
}

static FRESH_COUNTER: AtomicU64 = AtomicU64::new(1);

fn uniform(bits: u64) -> f64 {
    (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Inverted-dropout mask of length `n`: entries are 0 or `1 / (1 - rate)`.
pub fn dropout_mask(mode: DropoutMode, layer: u64, n: usize, rate: f64) -> Option<Vec<f64>> {
    if rate <= 0.0 {
        return None;
    }
    let key = match mode {
        DropoutMode::Off => return None,
        DropoutMode::Keyed { seed, epoch, batch } => {
            splitmix(splitmix(splitmix(splitmix(seed) ^ epoch) ^ batch) ^ layer)
        }
        DropoutMode::Fresh => splitmix(FRESH_COUNTER.fetch_add(1, Ordering::Relaxed) ^ layer),
    };
    let scale = 1.0 / (1.0 - rate);
    Some(
        (0..n as u64)
            .map(|i| if uniform(splitmix(key ^ i.wrapping_mul(0x9e37_79b9_7f4a_7c15))) < rate { 0.0 } else { scale })
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keyed_masks_are_reproducible() {
        let mode = DropoutMode::Keyed { seed: 1, epoch: 2, batch: 3 };
        let a = dropout_mask(mode, 0, 1000, 0.2).unwrap();
        assert_eq!(a, dropout_mask(mode, 0, 1000, 0.2).unwrap());
        assert_ne!(a, dropout_mask(mode, 1, 1000, 0.2).unwrap());
        let dropped = a.iter().filter(|&&v| v == 0.0).count();
        assert!((150..250).contains(&dropped), "{dropped}");
        assert!(dropout_mask(DropoutMode::Off, 0, 10, 0.5).is_none());
        assert_ne!(dropout_mask(DropoutMode::Fresh, 0, 64, 0.5), dropout_mask(DropoutMode::Fresh, 0, 64, 0.5));
    }
}
