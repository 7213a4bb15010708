//! Trains a two-hop prototype network on Fashion-MNIST with both power
//! regularisers and prints accuracy against received power.
//!
//! cargo run --release --example train_prototype [-- <epochs>]
//!
//! Reads the IDX files from `MIMO_OTA_DATA` (default `data/fashion-mnist`).

use std::path::PathBuf;

use mimo_ota::dataset::{load_fashion_mnist, Split, NUM_CLASSES};
use mimo_ota::ota_sim::to_db;
use mimo_ota::prototype_net::NetShape;
use mimo_ota::training::{mean_received_power, net_accuracy, train, LossConfig, LossKind, TrainConfig};

fn main() -> mimo_ota::Result<()> {
    let root = std::env::var_os("MIMO_OTA_DATA").map_or_else(|| PathBuf::from("data/fashion-mnist"), PathBuf::from);
    let epochs = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(5);
    let m = 49;
    let train_set = load_fashion_mnist(&root, Split::Train)?.head(12_000).encode(m)?;
    let test_set = load_fashion_mnist(&root, Split::Test)?.head(2_000).encode(m)?;
    let cfg = TrainConfig {
        epochs,
        noise_variance: 0.1,
        eval_every: 0,
        ..TrainConfig::default()
    };

    println!("{:>4} {:>7} {:>9} {:>9}", "loss", "lambda", "Pr [dB]", "accuracy");
    for kind in [LossKind::L1, LossKind::L2] {
        for lambda in [0.0, 0.01, 0.1] {
            let outcome = train(&train_set, None, NetShape::dense(2, m, NUM_CLASSES), &cfg, &LossConfig::new(kind, lambda)?)?;
            let acc = net_accuracy(&outcome.params, &test_set, cfg.noise_variance, 0, 1)?;
            let pr = mean_received_power(&outcome.params, &test_set)?;
            println!("{kind:>4} {lambda:>7} {:>9.2} {acc:>9.4}", to_db(pr));
        }
    }
    Ok(())
}
