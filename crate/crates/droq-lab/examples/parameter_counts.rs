//! Exact trainable-parameter counts of the Q-function stacks, reproducing
//! the published table values for the MuJoCo observation/action sizes.
//!
//! Run with: cargo run --example parameter_counts

use droq_lab::q_ensemble::{count_parameters, DropoutPlacement, Normalization, QNetConfig};

fn config(obs: usize, act: usize, norm: Normalization) -> QNetConfig {
    QNetConfig {
        obs_dim: obs,
        act_dim: act,
        hidden_width: 256,
        hidden_layers: 2,
        dropout_rate: 0.01,
        normalization: norm,
        dropout_placement: DropoutPlacement::default(),
    }
}

fn main() {
    let envs = [
        ("Hopper-like (obs 11, act 3)", 11, 3),
        ("Walker2d-like (obs 17, act 6)", 17, 6),
        ("Ant-like (obs 27, act 8)", 27, 8),
        ("Humanoid-like (obs 45, act 17)", 45, 17),
    ];
    println!("{:<32} {:>10} {:>10} {:>10} {:>10} {:>10}", "", "DroQ", "REDQ2", "REDQ3", "REDQ5", "REDQ10");
    for (name, obs, act) in envs {
        let droq = count_parameters(&config(obs, act, Normalization::LayerNorm), 2);
        let plain = config(obs, act, Normalization::None);
        println!(
            "{:<32} {:>10} {:>10} {:>10} {:>10} {:>10}",
            name,
            droq,
            count_parameters(&plain, 2),
            count_parameters(&plain, 3),
            count_parameters(&plain, 5),
            count_parameters(&plain, 10),
        );
    }
    println!();
    let droq_hopper = count_parameters(&config(11, 3, Normalization::LayerNorm), 2);
    assert_eq!(droq_hopper, 141_826);
    let plain_hopper = config(11, 3, Normalization::None);
    assert_eq!(count_parameters(&plain_hopper, 10), 698_890);
    assert_eq!(count_parameters(&plain_hopper, 2), 139_778);
    println!("reference values reproduced exactly");
}
