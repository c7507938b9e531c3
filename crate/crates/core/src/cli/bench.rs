use std::fs;
use std::io::Write;

use crate::error::{Error, Result};
use crate::streaming::{fit_r2, measure_scaling, scaling_csv, BenchConfig, ScalingRow, Variant};

use super::{parse_list, report, BenchArgs};

fn variants(spec: &str) -> Result<Vec<Variant>> {
    if spec.trim() == "all" {
        return Ok(Variant::ALL.to_vec());
    }
    let list = spec.split(',').map(str::trim).filter(|s| !s.is_empty()).map(Variant::parse).collect::<Result<Vec<_>>>()?;
    if list.is_empty() {
        return Err(Error::Usage("no variants given".into()));
    }
    Ok(list)
}

/// `bench`: MAC counts per variant and length, written to `bench.csv`.
pub fn cmd_bench(args: &BenchArgs, out: &mut dyn Write) -> Result<Vec<ScalingRow>> {
    let variants = variants(&args.variants)?;
    let mut lengths: Vec<usize> = parse_list("--lengths", &args.lengths)?;
    lengths.sort_unstable();
    lengths.dedup();
    if lengths.len() < 2 {
        return Err(Error::Usage("--lengths needs at least two distinct values".into()));
    }
    if args.d_model == 0 || args.layers == 0 {
        return Err(Error::Usage("--d-model and --layers must be positive".into()));
    }
    let cfg = BenchConfig {
        d_model: args.d_model,
        d_ff: 2 * args.d_model,
        layers: args.layers,
        left: args.left,
        right: args.right,
        seed: args.seed,
        ..BenchConfig::default()
    };
    let mut rows = Vec::new();
    report(out, "variant                 streamable  seq.steps(T)  r2(T)     r2(T^2)   macs ratio per doubling")?;
    for v in variants {
        let r = measure_scaling(v, &cfg, &lengths)?;
        let t: Vec<f64> = r.iter().map(|r| r.t as f64).collect();
        let t2: Vec<f64> = t.iter().map(|t| t * t).collect();
        let macs: Vec<f64> = r.iter().map(|r| r.macs as f64).collect();
        let ratios: Vec<String> = r
            .windows(2)
            .filter(|w| w[1].t == 2 * w[0].t)
            .map(|w| format!("{:.2}", w[1].macs as f64 / w[0].macs as f64))
            .collect();
        let steps = if v.sequential_steps(2) == 2 { "T" } else { "1" };
        report(
            out,
            format!(
                "{:<23} {:<11} {:<13} {:<9.6} {:<9.6} {}",
                v.name(),
                v.streamable(),
                steps,
                fit_r2(&t, &macs),
                fit_r2(&t2, &macs),
                ratios.join(" ")
            ),
        )?;
        rows.extend(r);
    }
    fs::create_dir_all(&args.run_dir).map_err(|e| Error::io(&args.run_dir, e))?;
    let path = args.run_dir.join("bench.csv");
    fs::write(&path, scaling_csv(&rows)).map_err(|e| Error::io(&path, e))?;
    report(out, format!("wrote {}", path.display()))?;
    Ok(rows)
}
