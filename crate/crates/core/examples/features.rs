//! Log-mel features from synthetic audio: offline extraction, the online
//! frontend fed in 10 ms chunks, and a feature dump round trip. The online
//! frontend always normalizes with running statistics, so it matches the
//! offline path exactly only when that uses them too.

use msa_transducer::features::{
    extract, read_feature_dump, write_feature_dump, FeatureConfig, FeatureDump, OnlineFrontend, SynthConfig, SynthTask,
};
use msa_transducer::numcore::Tensor;

fn main() -> msa_transducer::Result<()> {
    let task = SynthTask::new(SynthConfig::default())?;
    let (pcm, labels) = task.audio(42);
    println!("utterance {:?}: {} samples", task.vocab().decode(&labels), pcm.len());

    for (name, cfg) in [("desk", FeatureConfig::desk()), ("default", FeatureConfig::default())] {
        let offline = extract(&pcm, &cfg)?;
        let mut online = OnlineFrontend::new(&cfg)?;
        let mut rows = Vec::new();
        for chunk in pcm.chunks(160) {
            rows.extend(online.push(chunk)?);
        }
        rows.extend(online.flush()?);
        let streamed = Tensor::from_rows(&rows, cfg.dim())?;
        println!(
            "{name:>8}: {:?} features, offline {:?}, online vs offline max diff {:.2e}",
            offline.shape(),
            cfg.normalize,
            streamed.max_abs_diff(&offline),
        );
    }

    let cfg = FeatureConfig::desk();
    let dump = FeatureDump { features: extract(&pcm, &cfg)?, config_hash: cfg.hash() };
    let path = std::env::temp_dir().join("msa-example-features.f32");
    write_feature_dump(&path, &dump)?;
    let back = read_feature_dump(&path)?;
    println!("dump {} -> fp32 round trip error {:.2e}", path.display(), back.features.max_abs_diff(&dump.features));
    Ok(())
}
