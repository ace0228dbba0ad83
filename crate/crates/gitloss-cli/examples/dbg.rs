use gitloss::data::make_blobs;
use gitloss::loss::LossWeights;
use gitloss::network::{Activation, MlpConfig};
use gitloss::optim::LrSchedule;
use gitloss::rng::SeededRng;
use gitloss_cli::config::OptimizerKind;
use gitloss_cli::trainer::{train_run, TrainSettings};

fn main() {
    let mut rng = SeededRng::new(1);
    let (train, _) = make_blobs(&mut rng, 3, 60, 4, 0.8, 0.05).unwrap();
    let (val, _) = make_blobs(&mut rng, 3, 30, 4, 0.8, 0.05).unwrap();
    for (opt, lr) in [(OptimizerKind::Adam, 0.01), (OptimizerKind::Sgd, 0.005)] {
        let settings = TrainSettings {
            mlp: MlpConfig {
                input_dim: 4,
                hidden_dims: vec![16],
                feature_dim: 2,
                n_classes: 10,
                activation: Activation::Relu,
            },
            weights: LossWeights::new(0.01, 0.01, 0.5).unwrap(),
            optimizer: opt,
            momentum: 0.9,
            schedule: LrSchedule::constant(lr),
            epochs: 25,
            batch_size: 20,
            seed: 7,
        };
        println!("=== {:?} lr={} ===", opt, lr);
        let out = train_run(&train, &val, &settings, |r| {
            if r.epoch % 4 == 0 || r.epoch == 24 {
                println!("  epoch {:2} loss {:9.4} train {:5.1}% val {:5.1}% inter {:8.4} intra {:8.4}",
                    r.epoch, r.mean_loss, r.train_acc_pct, r.val_acc_pct, r.inter_dist, r.intra_dist);
            }
        }).unwrap();
        println!("  final val {:.1}%", out.final_val_acc_pct);
    }
}
