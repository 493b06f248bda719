use spnkit::harness::*;

fn main() {
    let mut configs = Vec::new();
    for seed in 0..200u64 {
        let nv = 2 + (seed as usize % 7);
        let tn = 3 * nv + 4 + (seed as usize % 5) * 8;
        let fan = 2 + (seed as usize % 3);
        configs.push(GenConfig { num_vars: nv, target_nodes: tn, max_fanout: fan, seed, mode: GenMode::Decomposable });
        configs.push(GenConfig { num_vars: nv.max(2), target_nodes: tn, max_fanout: fan, seed, mode: GenMode::ConsistentNondecomposable });
    }
    let t0 = std::time::Instant::now();
    let report = sweep_roundtrip(&configs, 1e-9);
    println!("{} instances: {} passes, {} failures, worst dev {:.3e}, {:?}",
        report.outcomes.len(), report.passes, report.failures, report.worst_deviation, t0.elapsed());
    for o in report.outcomes.iter().filter(|o| !o.passed()).take(6) {
        match (&o.report, &o.error) {
            (_, Some(e)) => println!("  {:?} -> error {}", o.config, e),
            (Some(r), _) => println!("  {:?} -> dev {:.2e} iso={} opsb={} bnb={} sni={} n={} r={}", o.config, r.max_deviation, r.isomorphic_to_normal, r.multiply_ops_bound_holds, r.bn_size_bound_holds, r.size_nonincreasing, r.normal_size, r.recovered_size),
            _ => {}
        }
    }
    let iso = report.outcomes.iter().filter(|o| o.report.as_ref().map_or(false, |r| r.isomorphic_to_normal)).count();
    println!("isomorphic: {iso}/{}", report.outcomes.len());
}
