//! Encode bags of words into topic and discourse factors with an untrained
//! encoder, decode them back into word distributions and assign words.
//!
//! cargo run --release --example factor_encoder

use dtdmn::factor::{hard_discourse, reparameterize, sample_discourse, FactorKind};
use dtdmn::model::Dtdmn;
use dtdmn::rng::Streams;
use dtdmn::ModelConfig;
use rand_distr::{Distribution, Gumbel, StandardNormal};

fn main() -> dtdmn::Result<()> {
    let cfg = ModelConfig {
        topics: 3,
        discourse: 2,
        vocab_size: 12,
        latent_dim: 4,
        encoder_hidden: 8,
        hidden: 4,
        memory_dim: 4,
        word_embedding: 4,
        max_len: 6,
        seed: 5,
        ..ModelConfig::default()
    };
    let model = Dtdmn::new(cfg.clone())?;
    let enc = &model.factor;

    let mut bow = vec![0.0; cfg.vocab_size];
    for (w, n) in [(2, 3.0), (5, 1.0), (9, 2.0)] {
        bow[w] = n;
    }
    let (mu, log_sigma, pi) = enc.encode(&model.params, &bow)?;
    println!("mu        {mu:.3?}");
    println!("log_sigma {log_sigma:.3?}");
    println!("pi        {pi:.3?}");

    // deterministic factors, then one stochastic draw
    let z = enc.topic_mixture(&model.params, &mu)?;
    let d = hard_discourse(&pi);
    println!("z (mean)  {z:.3?}");
    println!("d (hard)  {d:?}");

    let mut rng = Streams::new(5).rng("example", &[]);
    let normal: Vec<f64> = (0..cfg.latent_dim)
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    let gumbel_dist = Gumbel::new(0.0, 1.0).expect("valid gumbel");
    let gumbel: Vec<f64> = (0..cfg.discourse)
        .map(|_| gumbel_dist.sample(&mut rng))
        .collect();
    let eps = reparameterize(&mu, &log_sigma, &normal);
    println!("z (draw)  {:.3?}", enc.topic_mixture(&model.params, &eps)?);
    println!(
        "d (draw)  {:.3?}",
        sample_discourse(&pi, cfg.gumbel_temperature, &gumbel)?
    );

    let (beta, _, _) = enc.decode(&model.params, &z, &d)?;
    println!(
        "beta      {beta:.3?} sums to {:.6}",
        beta.iter().sum::<f64>()
    );
    for (kind, n) in [
        (FactorKind::Topic, cfg.topics),
        (FactorKind::Discourse, cfg.discourse),
    ] {
        for k in 0..n {
            let p = enc.word_distribution(&model.params, kind, k)?;
            let top = p.iter().cloned().fold(f64::MIN, f64::max);
            println!("{kind:?} {k}: largest word probability {top:.3}");
        }
    }
    for w in [2, 5, 9] {
        let a = enc.word_assignment(&model.params, w, &z, &d)?;
        println!("word {w}: {:?} ({:.2})", a.kind, a.confidence);
    }
    Ok(())
}
