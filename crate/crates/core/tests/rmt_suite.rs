use dmf_core::rmt::{run_suite, RmtPlan};
use dmf_core::SeededRng;

#[test]
fn full_suite_passes_for_fixed_seed() {
    let report = run_suite(&RmtPlan::default(), &SeededRng::new(2024)).unwrap();
    for t in &report.tests {
        println!("{} = {:.6} ({} {:.6}) {}", t.name, t.statistic, t.rule(), t.threshold, t.pass);
    }
    println!("cue max bin deviation {:.4}", report.cue_max_bin_deviation);
    for r in &report.cre_hist {
        println!("{:.3} {:.4} {:.4}", r.bin_lo, r.empirical, r.analytic);
    }
    assert!(report.all_pass());
}
