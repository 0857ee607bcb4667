//! A six-device, four-file instance small enough to follow by hand.
//!
//! Devices `u1..u6` are ids `0..5` and files `f1..f4` are ids `0..3`.
//!
//! | device | caches          | wants      |
//! |--------|-----------------|------------|
//! | u1     | f1, f2, f3, f4  | nothing    |
//! | u2     | f1, f2, f4      | f3         |
//! | u3     | f1, f2, f3      | f4         |
//! | u4     | f1, f2, f3      | f4         |
//! | u5     | f1, f2          | f3, f4     |
//! | u6     | f3, f4          | f1, f2     |
//!
//! Noise, power budget and bandwidth are all `1`, so gains read as SNRs.
//! Only the links `u1 → {u2, u4, u5, u6}` and `u2 → {u3, u5}` are strong;
//! everything else sits at `0.05`, far below a 0.5 bit/s/Hz threshold.
//!
//! A two-slot schedule clears every demand: first `u1` sends `f1⊕f4` to
//! `{u4, u6}` while `u2` sends `f4` to `{u3, u5}` at 2.5 bit/s/Hz with
//! powers `(0.1, 1)`, then `u1` alone sends `f2⊕f3` to `{u2, u5, u6}` at
//! 3 bit/s/Hz. With `B = 10` that takes `4 + 10/3` seconds.

use crate::channel::{ChannelRealization, GainMatrix, RadioParams};
use crate::scheduler::{manual_decision_at_rate, NetworkState, SlotDecision, Transmission};
use crate::state::{FileSet, Frame, SideInformation};

pub const DEVICES: usize = 6;
pub const FILES: usize = 4;
pub const FILE_SIZE_BITS: f64 = 10.0;

const BACKGROUND: f64 = 0.05;

pub fn caches() -> Vec<FileSet> {
    [&[0, 1, 2, 3][..], &[0, 1, 3], &[0, 1, 2], &[0, 1, 2], &[0, 1], &[2, 3]]
        .iter()
        .map(|c| FileSet::from_files(FILES, c.iter().copied()))
        .collect()
}

pub fn gains() -> GainMatrix {
    let mut g = GainMatrix::uniform(DEVICES, BACKGROUND);
    for (k, i, v) in [(0, 1, 7.0), (0, 3, 100.0), (0, 4, 7.0), (0, 5, 100.0), (1, 2, 10.0), (1, 4, 40.0)] {
        g.set(k, i, v);
    }
    g
}

pub fn channel() -> ChannelRealization {
    ChannelRealization::fixed(gains(), RadioParams::normalized())
}

/// Initial state with file size `file_size_bits`.
pub fn state_with_file_size(file_size_bits: f64) -> NetworkState {
    let frame = Frame::new(FILES, file_size_bits).expect("valid frame");
    let side = SideInformation::from_caches(FILES, caches()).expect("every file is cached");
    NetworkState::new(frame, side, &channel())
}

pub fn state() -> NetworkState {
    state_with_file_size(FILE_SIZE_BITS)
}

/// The two-slot hand schedule as (transmissions, powers, common rate).
pub fn hand_schedule() -> Vec<(Vec<Transmission>, Vec<f64>, f64)> {
    let tx = |transmitter, files: &[usize], targets: &[usize]| Transmission {
        transmitter,
        files: files.to_vec(),
        targets: targets.to_vec(),
    };
    vec![
        (
            vec![tx(0, &[0, 3], &[3, 5]), tx(1, &[3], &[2, 4])],
            vec![0.1, 1.0, 0.0, 0.0, 0.0, 0.0],
            2.5,
        ),
        (vec![tx(0, &[1, 2], &[1, 4, 5])], vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0], 3.0),
    ]
}

/// The hand schedule as slot decisions for `state`'s file size.
pub fn hand_decisions(state: &NetworkState) -> Vec<SlotDecision> {
    let radio = RadioParams::normalized();
    hand_schedule()
        .into_iter()
        .map(|(t, q, r)| manual_decision_at_rate(state, &radio, t, q, r))
        .collect()
}
