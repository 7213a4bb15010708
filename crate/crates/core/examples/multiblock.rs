//! Sends a wider signal in several time slots: a 49-wide network carried by
//! 7 antennas in 7 slots, compared with a 7-wide single-slot network.
//!
//! cargo run --release --example multiblock
//!
//! Reads the IDX files from `MIMO_OTA_DATA` (default `data/fashion-mnist`).

use std::path::PathBuf;

use mimo_ota::dataset::{load_fashion_mnist, Split, NUM_CLASSES};
use mimo_ota::multiblock::{train_multiblock, BlockPartition};
use mimo_ota::ota_sim::{deploy, evaluate, realization_channels, to_db};
use mimo_ota::training::{estimate_covariances, mean_received_power, LossConfig, LossKind, TrainConfig};

fn main() -> mimo_ota::Result<()> {
    let root = std::env::var_os("MIMO_OTA_DATA").map_or_else(|| PathBuf::from("data/fashion-mnist"), PathBuf::from);
    let train_raw = load_fashion_mnist(&root, Split::Train)?.head(10_000);
    let test_raw = load_fashion_mnist(&root, Split::Test)?.head(1_000);
    let sigma2 = 0.1;
    let cfg = TrainConfig {
        epochs: 5,
        noise_variance: sigma2,
        eval_every: 0,
        ..TrainConfig::default()
    };
    let loss = LossConfig::new(LossKind::L2, 0.01)?;

    for blocks in [1, 7] {
        let part = BlockPartition::new(blocks, 7)?;
        let train_set = train_raw.encode(part.width())?;
        let test_set = test_raw.encode(part.width())?;
        let net = train_multiblock(&train_set, None, part, 2, NUM_CLASSES, &cfg, &loss)?.params;
        let covariances = estimate_covariances(&net, &train_set)?;
        // The channel is fixed over all slots of one transmission.
        let channels = realization_channels(0, 0, 2, part.block_width, sigma2)?;
        let dep = deploy(&net, &channels, 0.0, &covariances)?;
        let eval = evaluate(&dep, &channels, &test_set, 1, 0, 0)?;
        println!(
            "M = 7, J = {blocks}: {} weights per hop, accuracy {:.4}, Pr {:.2} dB",
            part.hop_param_count(),
            eval.accuracy,
            to_db(mean_received_power(&net, &test_set)?)
        );
    }
    Ok(())
}
