//! `rmt-validate`: runs the random-matrix suite and writes its results.
//!
//! Files written to the output directory:
//! * `rmt_tests.csv`: `name,statistic,rule,threshold,pass`
//! * `rmt_cue_hist.csv`, `rmt_cre_hist.csv`: `bin_lo,bin_hi,empirical,analytic`

use std::path::Path;

use dmf_core::rmt::{run_suite, HistRow, RmtPlan, RmtReport};
use dmf_core::rng::PRNG_NAME;
use dmf_core::SeededRng;

use crate::LabResult;

pub fn rmt_validate(plan: &RmtPlan, seed: u64) -> LabResult<RmtReport> {
    if plan.cue_samples < 100 || plan.cre_samples < 100 {
        return Err(crate::LabError::Config("rmt-validate needs at least 100 samples".into()));
    }
    Ok(run_suite(plan, &SeededRng::new(seed))?)
}

pub fn tests_csv(report: &RmtReport, seed: u64) -> String {
    let mut s = format!("# prng = {PRNG_NAME}\n# seed = {seed}\nname,statistic,rule,threshold,pass\n");
    for t in &report.tests {
        s.push_str(&format!("{},{:e},{},{:e},{}\n", t.name, t.statistic, t.rule(), t.threshold, t.pass));
    }
    s
}

pub fn hist_csv(rows: &[HistRow]) -> String {
    let mut s = String::from("bin_lo,bin_hi,empirical,analytic\n");
    for r in rows {
        s.push_str(&format!("{:e},{:e},{:e},{:e}\n", r.bin_lo, r.bin_hi, r.empirical, r.analytic));
    }
    s
}

/// One line per test plus the informational CUE per-bin deviation.
pub fn report_text(report: &RmtReport) -> String {
    let mut s = String::new();
    for t in &report.tests {
        s.push_str(&format!(
            "{:<34} {:>12.6e} {} {:<12.6e} {}\n",
            t.name,
            t.statistic,
            t.rule(),
            t.threshold,
            if t.pass { "PASS" } else { "FAIL" }
        ));
    }
    s.push_str(&format!(
        "{:<34} {:>12.6e} (informational)\n",
        "cue_max_bin_relative_deviation", report.cue_max_bin_deviation
    ));
    s
}

pub fn write_outputs(report: &RmtReport, seed: u64, out: &Path) -> LabResult<()> {
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("rmt_tests.csv"), tests_csv(report, seed))?;
    std::fs::write(out.join("rmt_cue_hist.csv"), hist_csv(&report.cue_hist))?;
    std::fs::write(out.join("rmt_cre_hist.csv"), hist_csv(&report.cre_hist))?;
    Ok(())
}
