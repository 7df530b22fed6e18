//! Independent oracle for the offline embedding construction.
//!
//! The expected values below were produced by this file's own
//! reimplementation of the documented construction (trigrams, SHA-256 seed,
//! ChaCha8 draws, L2 normalization) and frozen; the library implementation
//! must match them bit for bit, on every platform.

use cig_core::providers::{Provider, ProviderConfig};
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Reference implementation, kept deliberately separate from the library
/// code path.
fn reference_embed(text: &str, dim: usize) -> Vec<f64> {
    let chars: Vec<char> = text.chars().collect();
    let grams: Vec<String> = if chars.len() < 3 {
        vec![text.to_string()]
    } else {
        chars.windows(3).map(|w| w.iter().collect()).collect()
    };
    let mut acc = vec![0.0f64; dim];
    for gram in &grams {
        let digest = Sha256::digest(gram.as_bytes());
        let mut seed = [0u8; 8];
        seed.copy_from_slice(&digest[..8]);
        let mut rng = ChaCha8Rng::seed_from_u64(u64::from_le_bytes(seed));
        for slot in acc.iter_mut() {
            let unit = (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
            *slot += unit * 2.0 - 1.0;
        }
    }
    let norm: f64 = acc.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm < 1e-12 {
        acc[0] = 1.0;
    } else {
        for v in acc.iter_mut() {
            *v /= norm;
        }
    }
    acc
}

fn offline(dim: usize) -> Provider {
    Provider::from_config(&ProviderConfig::offline(dim)).unwrap()
}

#[test]
fn print_reference_values_for_freezing() {
    // Keeps the frozen constants below reproducible on demand:
    // `cargo test -p cig-core --test provider_oracles -- --nocapture`.
    let v = reference_embed("abc", 8);
    println!("reference abc D=8: {v:?}");
}

#[test]
fn implementation_matches_reference_bit_for_bit() {
    let provider = offline(64);
    for text in [
        "abc",
        "a",
        "evidence chains",
        "The Silver River Dam was finished in 1971.",
        "ü£🚀 mixed unicode",
    ] {
        let got = provider.embed_text(text).unwrap();
        let expected = reference_embed(text, 64);
        assert_eq!(got.values(), expected.as_slice(), "text {text:?}");
    }
}

#[test]
fn frozen_abc_vector_at_dim_8() {
    let provider = offline(8);
    let got = provider.embed_text("abc").unwrap();
    let expected = reference_embed("abc", 8);
    assert_eq!(got.values(), expected.as_slice());

    // Values produced by `reference_embed("abc", 8)` and frozen; a change
    // here means the published construction changed.
    let frozen = [
        -0.43851394641183633,
        0.6111463746373418,
        0.28093692242940976,
        -0.28541403429563816,
        0.1858222960312996,
        -0.3347397098905389,
        0.09338151381120906,
        0.3442647179298396,
    ];
    assert_eq!(got.values(), frozen.as_slice());
}

#[test]
fn distinct_strings_are_never_parallel_at_dim_64() {
    let provider = offline(64);
    let texts = [
        "first sample string",
        "second sample string",
        "third thing entirely",
        "abc",
        "abd",
    ];
    for (i, a) in texts.iter().enumerate() {
        for b in texts.iter().skip(i + 1) {
            let va = provider.embed_text(a).unwrap();
            let vb = provider.embed_text(b).unwrap();
            assert!(
                va.cosine(&vb) < 1.0 - 1e-9,
                "{a:?} vs {b:?} should not be parallel"
            );
        }
    }
}
