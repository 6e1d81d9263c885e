use orbiflow_core::verify::standard_residual_suite;

fn main() {
    let outcome = standard_residual_suite(1e-5).unwrap();
    for r in &outcome.reports {
        println!(
            "{:<16} max_res {:>10.3e}  scale {:>9.3e}  tol {:>9.3e}  order {:>6}  floor {}  pass {}  per-res {:?}",
            r.eq.name(),
            r.max_residual,
            r.scale,
            r.tolerance,
            r.convergence_order.map(|p| format!("{p:.2}")).unwrap_or("-".into()),
            r.at_floor,
            r.pass,
            r.per_resolution.iter().map(|(n, v)| format!("{n}:{v:.2e}")).collect::<Vec<_>>(),
        );
    }
    println!("ALL PASS: {}", outcome.all_pass);
}
