//! Fixed ChaCha stream ids. Every random draw in a run derives from the
//! single run seed plus one of these stream ids, so results never depend
//! on evaluation order or worker count.

const KIND_SHIFT: u32 = 56;
const EPOCH_SHIFT: u32 = 28;

/// Model parameter initialization.
pub const INIT: u64 = 1 << KIND_SHIFT;
/// Synthetic dataset generation (keyed by the dataset seed).
pub const SYNTH: u64 = 4 << KIND_SHIFT;

/// Per-epoch shuffle of record indices.
pub fn shuffle(epoch: usize) -> u64 {
    debug_assert!(epoch < 1 << EPOCH_SHIFT);
    (2 << KIND_SHIFT) | epoch as u64
}

/// Two-view augmentation of one record in one epoch. Depends only on
/// (seed, epoch, record id), never on batch composition or worker count.
pub fn augment(epoch: usize, record: usize) -> u64 {
    debug_assert!(epoch < 1 << EPOCH_SHIFT);
    debug_assert!(record < 1 << EPOCH_SHIFT);
    (3 << KIND_SHIFT) | ((epoch as u64) << EPOCH_SHIFT) | record as u64
}

/// Probe-phase transform of one record.
pub fn probe(record: usize) -> u64 {
    debug_assert!(record < 1 << EPOCH_SHIFT);
    (5 << KIND_SHIFT) | record as u64
}
