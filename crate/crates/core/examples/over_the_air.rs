//! Deploys a trained network over random Rayleigh channels: one precoder per
//! hop is fitted to the channel, then test images are classified with real
//! channel noise at every relay.
//!
//! cargo run --release --example over_the_air
//!
//! Reads the IDX files from `MIMO_OTA_DATA` (default `data/fashion-mnist`).

use std::path::PathBuf;

use mimo_ota::dataset::{load_fashion_mnist, Split, NUM_CLASSES};
use mimo_ota::ota_sim::{deploy, evaluate, realization_channels};
use mimo_ota::prototype_net::NetShape;
use mimo_ota::training::{estimate_covariances, net_accuracy, train, LossConfig, LossKind, TrainConfig};

fn main() -> mimo_ota::Result<()> {
    let root = std::env::var_os("MIMO_OTA_DATA").map_or_else(|| PathBuf::from("data/fashion-mnist"), PathBuf::from);
    let (m, sigma2) = (14, 0.1);
    let train_set = load_fashion_mnist(&root, Split::Train)?.head(10_000).encode(m)?;
    let test_set = load_fashion_mnist(&root, Split::Test)?.head(1_000).encode(m)?;
    let cfg = TrainConfig {
        epochs: 5,
        noise_variance: sigma2,
        eval_every: 0,
        ..TrainConfig::default()
    };
    let net = train(&train_set, None, NetShape::dense(2, m, NUM_CLASSES), &cfg, &LossConfig::new(LossKind::L2, 0.01)?)?.params;
    println!("prototype network at sigma2 = {sigma2}: {:.4}", net_accuracy(&net, &test_set, sigma2, 0, 1)?);

    // Signal statistics at every hop input, shared by all channel draws.
    let covariances = estimate_covariances(&net, &train_set)?;
    for r in 0..3 {
        let channels = realization_channels(0, r, 2, m, sigma2)?;
        for lambda1 in [0.0, 0.1] {
            let dep = deploy(&net, &channels, lambda1, &covariances)?;
            let eval = evaluate(&dep, &channels, &test_set, 1, 0, r)?;
            println!(
                "realization {r} lambda1 {lambda1:<4} accuracy {:.4} Pt {:6.2} dB",
                eval.accuracy,
                eval.tx_power_db()
            );
        }
    }
    Ok(())
}
