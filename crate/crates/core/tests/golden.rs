//! Frozen fixtures: bytes produced once by this implementation and checked in.
//! Any change to the coder, the model format or the bitstream layout shows up here.

mod common;

use std::path::PathBuf;

use mlrq::codec::{decode_image, encode_image, train_image_model, Bitstream};
use mlrq::entropy::{ac_decode, ac_encode, FreqTable};
use mlrq::model::{fnv1a64, Model};
use mlrq::trainer::TrainConfig;

const GOLDEN_IMAGE_HASH: u64 = 0x9a9b_28b5_da7d_4a6d;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn golden_table() -> FreqTable {
    FreqTable::from_counts(vec![5, 1, 3, 7, 2, 9, 1, 4]).unwrap()
}

fn golden_symbols() -> Vec<u32> {
    (0u32..300).map(|i| (i * i * 31 + 7 * i) % 8).collect()
}

fn golden_model() -> Model {
    let corpus = common::face_corpus(12, 16, 16, 5);
    let cfg = TrainConfig {
        layer_sizes: vec![8, 4, 4],
        seed: 3,
        ..TrainConfig::default()
    };
    train_image_model(&corpus[..9], &corpus[9..], 4, &cfg).unwrap().0
}

#[test]
#[ignore = "rewrites the checked-in fixtures"]
fn regenerate_fixtures() {
    std::fs::write(
        fixture("ac_golden.bin"),
        ac_encode(&golden_symbols(), &golden_table()).unwrap(),
    )
    .unwrap();
    let model = golden_model();
    model.save(fixture("golden_model.mlrq")).unwrap();
    let img = common::face_like(20, 20, 99);
    let bs = encode_image(&img, &model, 3).unwrap();
    std::fs::write(fixture("golden_stream.mlrq"), bs.to_bytes()).unwrap();
    let out = decode_image(&bs, &model, 3).unwrap();
    println!("decoded image hash: {:#018x}", fnv1a64(out.pixels()));
}

#[test]
fn arithmetic_coder_fixture_decodes() {
    let bytes = std::fs::read(fixture("ac_golden.bin")).unwrap();
    let syms = golden_symbols();
    assert_eq!(ac_decode(&bytes, &golden_table(), syms.len()).unwrap(), syms);
    assert_eq!(ac_encode(&syms, &golden_table()).unwrap(), bytes);
}

#[test]
fn bitstream_fixture_decodes_to_known_image() {
    let model = Model::load(fixture("golden_model.mlrq")).unwrap();
    let bytes = std::fs::read(fixture("golden_stream.mlrq")).unwrap();
    let bs = Bitstream::from_bytes(&bytes).unwrap();
    assert_eq!((bs.width, bs.height, bs.block, bs.layers()), (20, 20, 4, 3));
    let out = decode_image(&bs, &model, 3).unwrap();
    assert_eq!(fnv1a64(out.pixels()), GOLDEN_IMAGE_HASH);
}

#[test]
fn training_and_encoding_reproduce_fixtures() {
    let model = golden_model();
    assert_eq!(model.to_bytes(), std::fs::read(fixture("golden_model.mlrq")).unwrap());
    let bs = encode_image(&common::face_like(20, 20, 99), &model, 3).unwrap();
    assert_eq!(bs.to_bytes(), std::fs::read(fixture("golden_stream.mlrq")).unwrap());
}
