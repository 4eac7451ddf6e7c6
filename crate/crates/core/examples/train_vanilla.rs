//! Trains a three-conv network on synthetic bars and saves a checkpoint.

use multicap::nn::{
    accuracy, train, Checkpoint, LayerSpec, NetworkSpec, ParamStore, SyntheticSpec, TrainConfig,
};

fn main() -> multicap::Result<()> {
    let data = SyntheticSpec {
        noise: 0.4,
        seed: 1,
        ..SyntheticSpec::default()
    }
    .generate()?;
    let net = NetworkSpec::new(
        data.shape,
        vec![
            LayerSpec::conv(3, 1, 6),
            LayerSpec::Relu,
            LayerSpec::max_pool(2),
            LayerSpec::conv(3, 6, 8),
            LayerSpec::Relu,
            LayerSpec::dense(8 * 2 * 2, data.classes),
            LayerSpec::Softmax,
        ],
        data.classes,
    )?;
    let mut params = ParamStore::init(&net, 1);
    println!("{} parameters", net.param_count());

    let cfg = TrainConfig {
        seed: 1,
        ..TrainConfig::default()
    };
    let stats = train(&net, &mut params, &data.train, &cfg, None, |epoch, p| {
        println!(
            "epoch {epoch}: test accuracy {:.3}",
            accuracy(&net, p, &data.test)?
        );
        Ok(false)
    })?;
    println!(
        "losses: {:?}",
        stats
            .epoch_losses
            .iter()
            .map(|l| format!("{l:.3}"))
            .collect::<Vec<_>>()
    );

    let path = std::env::temp_dir().join("multicap-vanilla.ckpt");
    let ckpt = Checkpoint {
        net: net.clone(),
        params,
        seed: 1,
    };
    ckpt.save(&path)?;
    let back = Checkpoint::load(&path)?;
    println!(
        "saved {} ({} payload bytes), reload bit-identical: {}",
        path.display(),
        back.payload_bytes(),
        back.params.bit_eq(&ckpt.params)
    );
    Ok(())
}
