//! Compute scaling of the six layer structures: exact multiply-accumulate
//! counts at T = 256, 512, 1024, the per-frame cost of the streamable ones,
//! and the CSV the `bench` command writes.

use msa_transducer::streaming::{measure_scaling, per_frame_macs, scaling_csv, BenchConfig, Variant};

fn main() -> msa_transducer::Result<()> {
    let cfg = BenchConfig::default();
    let lengths = [256, 512, 1024];
    let mut rows = Vec::new();
    println!("{:<24}{:>16}{:>16}   per-frame MACs after warmup", "variant", "MACs(512)/256", "MACs(1024)/512");
    for v in Variant::ALL {
        let r = measure_scaling(v, &cfg, &lengths)?;
        let per_frame = if v.streamable() {
            let f = per_frame_macs(v, &cfg, 256)?;
            let tail = &f[64..];
            if tail.iter().all(|&m| m == tail[0]) {
                format!("constant {}", tail[0])
            } else {
                format!("varies {}..{}", tail.iter().min().unwrap(), tail.iter().max().unwrap())
            }
        } else {
            "offline only".into()
        };
        println!(
            "{:<24}{:>16.3}{:>16.3}   {per_frame}",
            v.name(),
            r[1].macs as f64 / r[0].macs as f64,
            r[2].macs as f64 / r[1].macs as f64
        );
        rows.extend(r);
    }
    println!();
    print!("{}", scaling_csv(&rows));
    Ok(())
}
