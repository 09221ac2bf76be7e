//! Turning a record plus its augmentations into padded id sequences.

use std::collections::BTreeSet;

use super::network::EncodedInput;
use super::params::{Mode, ModelConfig};
use super::vocab::{Vocabulary, AS, CA, CLS, FB, PAD, SEP, SQ};
use crate::augment::{AugmentationKind, AugmentationSet};
use crate::corpus::ArgumentRecord;

pub fn marker(kind: AugmentationKind) -> u32 {
    match kind {
        AugmentationKind::Feedback => FB,
        AugmentationKind::Assumptions => AS,
        AugmentationKind::SimilarQuality => SQ,
        AugmentationKind::CounterArgument => CA,
    }
}

fn pad_to(mut ids: Vec<u32>, len: usize, truncated: &mut usize) -> (Vec<u32>, Vec<bool>) {
    if ids.len() > len {
        *truncated += ids.len() - len;
        ids.truncate(len);
    }
    let mut mask = vec![true; ids.len()];
    mask.resize(len, false);
    ids.resize(len, PAD);
    (ids, mask)
}

/// `[CLS] topic [SEP] argument [SEP]` and, over active present kinds in fixed
/// order, `[marker] text [SEP]` blocks. In dual mode the blocks form `seq2`;
/// in single mode they are appended to `seq1` and `seq2` is empty. Both
/// sequences are cut and padded to `max_seq_len`.
pub fn encode_input(
    record: &ArgumentRecord,
    aug: &AugmentationSet,
    vocab: &Vocabulary,
    config: &ModelConfig,
    active_kinds: &BTreeSet<AugmentationKind>,
) -> EncodedInput {
    let l = config.max_seq_len;
    let mut first = vec![CLS];
    first.extend(vocab.encode(&record.topic));
    first.push(SEP);
    first.extend(vocab.encode(&record.argument));
    first.push(SEP);

    let mut second = Vec::new();
    for kind in AugmentationKind::ALL {
        if !active_kinds.contains(&kind) {
            continue;
        }
        if let Some(text) = aug.get(kind) {
            second.push(marker(kind));
            second.extend(vocab.encode(text));
            second.push(SEP);
        }
    }

    let mut truncated = 0;
    match config.mode {
        Mode::Dual => {
            let (seq1, mask1) = pad_to(first, l, &mut truncated);
            let (seq2, mask2) = pad_to(second, l, &mut truncated);
            EncodedInput {
                seq1,
                mask1,
                seq2,
                mask2,
                truncated,
            }
        }
        Mode::Single => {
            first.extend(second);
            let (seq1, mask1) = pad_to(first, l, &mut truncated);
            EncodedInput {
                seq1,
                mask1,
                seq2: Vec::new(),
                mask2: Vec::new(),
                truncated,
            }
        }
    }
}
