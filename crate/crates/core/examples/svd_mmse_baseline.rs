//! Conventional relaying for comparison: each relay precodes with the right
//! singular vectors of its channel and the next node equalises with MMSE,
//! so the signal is carried unchanged to a destination classifier.
//!
//! cargo run --release --example svd_mmse_baseline
//!
//! Reads the IDX files from `MIMO_OTA_DATA` (default `data/fashion-mnist`).

use std::path::PathBuf;

use mimo_ota::baseline::{calibrate, run_baseline};
use mimo_ota::dataset::{load_fashion_mnist, Split, NUM_CLASSES};
use mimo_ota::ota_sim::{from_db, realization_channels};
use mimo_ota::prototype_net::NetShape;
use mimo_ota::training::{net_accuracy, train, LossConfig, LossKind, TrainConfig};

fn main() -> mimo_ota::Result<()> {
    let root = std::env::var_os("MIMO_OTA_DATA").map_or_else(|| PathBuf::from("data/fashion-mnist"), PathBuf::from);
    let (m, hops, sigma2) = (14, 2, 0.1);
    let train_set = load_fashion_mnist(&root, Split::Train)?.head(10_000).encode(m)?;
    let test_set = load_fashion_mnist(&root, Split::Test)?.head(1_000).encode(m)?;
    // The destination classifier has no hidden hops and is trained without noise.
    let cfg = TrainConfig {
        epochs: 5,
        noise_variance: 0.0,
        eval_every: 0,
        ..TrainConfig::default()
    };
    let net0 = train(&train_set, None, NetShape::dense(0, m, NUM_CLASSES), &cfg, &LossConfig::new(LossKind::L1, 0.0)?)?.params;
    println!("noiseless classifier: {:.4}", net_accuracy(&net0, &test_set, 0.0, 0, 1)?);

    let channels = realization_channels(0, 0, hops, m, sigma2)?;
    for p_db in [-10.0, 0.0, 10.0, 20.0] {
        let rho = from_db(p_db);
        let cal = calibrate(&net0, &channels, rho, &train_set.head(1_000), 0)?;
        let eval = run_baseline(&net0, &channels, rho, &cal, &test_set, 1, 0, 0)?;
        println!("rho {p_db:>5} dB: accuracy {:.4} Pt {:6.2} dB", eval.accuracy, eval.tx_power_db());
    }
    Ok(())
}
