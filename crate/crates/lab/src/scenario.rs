//! Single-trajectory runs.
//!
//! CSV layout: `#`-prefixed metadata lines (generator, seed, reduced target,
//! effective config), then the [`TrajectoryRecord`] header and one row per
//! recorded step. Records are taken at step 0, every `record_stride` steps,
//! and at the final step. Nothing time-dependent is written to the CSV, so
//! identical configs give byte-identical files; wall time only appears in
//! the summary.

use std::io::Write;
use std::time::{Duration, Instant};

use dmf_core::dynamics::{self, LayerStack, TargetSpec};
use dmf_core::ensembles::{gaussian_matrix, initialize};
use dmf_core::monitors::{self, TrajectoryRecord};
use dmf_core::rng::PRNG_NAME;
use dmf_core::{Complex64, Field, FieldTag, Real, SeededRng};

use crate::config::{RunConfig, TargetChoice, DIVERGENCE_NORM};
use crate::{LabError, LabResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RunStatus {
    /// `l_ori < eps_conv` was reached.
    Converged,
    /// The step budget ran out first.
    BudgetExhausted,
    /// A layer norm exceeded the divergence guard or became non-finite.
    Diverged,
}

impl RunStatus {
    pub fn name(self) -> &'static str {
        match self {
            RunStatus::Converged => "converged",
            RunStatus::BudgetExhausted => "budget-exhausted",
            RunStatus::Diverged => "diverged",
        }
    }
}

#[derive(Clone, Debug)]
pub struct RunSummary {
    pub config: RunConfig,
    pub status: RunStatus,
    pub steps_taken: u64,
    pub convergence_step: Option<u64>,
    pub initial_record: TrajectoryRecord,
    pub final_record: TrajectoryRecord,
    pub wall_time: Duration,
}

impl RunSummary {
    pub fn converged(&self) -> bool {
        self.status == RunStatus::Converged
    }

    /// Human-readable summary: outcome, final monitors, timing, generator
    /// and the effective config.
    pub fn to_text(&self) -> String {
        let r = &self.final_record;
        let opt = |x: Option<f64>| x.map_or_else(|| "NA".to_string(), |v| format!("{v:e}"));
        let mut s = String::new();
        s.push_str(&format!("status = {}\n", self.status.name()));
        s.push_str(&format!("steps_taken = {}\n", self.steps_taken));
        s.push_str(&format!(
            "convergence_step = {}\n",
            self.convergence_step.map_or_else(|| "NA".into(), |k| k.to_string())
        ));
        s.push_str(&format!("final_l_ori = {:e}\n", r.l_ori));
        s.push_str(&format!("final_l_reg = {:e}\n", r.l_reg));
        s.push_str(&format!("final_e_delta = {:e}\n", r.e_delta));
        s.push_str(&format!("final_min_half_sum_sv = {}\n", opt(r.min_half_sum_sv())));
        s.push_str(&format!("final_main_sv_min = {}\n", opt(r.main_sv_min)));
        s.push_str(&format!("final_skew_err = {}\n", opt(r.skew_err)));
        s.push_str(&format!("initial_det_ind = {}\n", opt(self.initial_record.det_ind.csv_value())));
        s.push_str(&format!("wall_time_s = {:.3}\n", self.wall_time.as_secs_f64()));
        s.push_str(&format!("prng = {PRNG_NAME}\n"));
        s.push_str("[config]\n");
        s.push_str(&self.config.to_config_text());
        s
    }
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub csv: Vec<u8>,
    pub summary: RunSummary,
}

/// Initial stack and (reduced) target for `cfg`. Layers come from seed
/// substream 0, a random target from substream 1.
pub fn initial_state<T: Field>(cfg: &RunConfig) -> LabResult<(LayerStack<T>, TargetSpec<T>)> {
    let rng = SeededRng::new(cfg.seed);
    let stack = initialize(cfg.d, cfg.n_layers, &cfg.init_scheme::<T>(), &rng.substream(0))?;
    let lit = T::RealField::lit;
    Ok(match &cfg.target {
        TargetChoice::Identity { scale } => (stack, TargetSpec::scaled_identity(cfg.d, lit(*scale))),
        TargetChoice::Diag(v) => {
            let diag: Vec<T::RealField> = v.iter().map(|&x| lit(x)).collect();
            (stack, TargetSpec::diagonal(&diag))
        }
        TargetChoice::RandomGeneral => {
            let sigma = gaussian_matrix::<T>(cfg.d, &mut rng.substream(1));
            let (target, stack) = dynamics::reduce_target(&sigma, &stack)?;
            (stack, target)
        }
    })
}

fn l_ori<T: Field>(stack: &LayerStack<T>, target: &TargetSpec<T>) -> f64 {
    let r = &target.matrix - dynamics::product(stack);
    0.5 * r.norm_squared().as_f64()
}

fn metadata_lines(cfg: &RunConfig, target_diag: &[f64]) -> Vec<String> {
    let mut lines = vec![
        "# dmf-lab trajectory".to_string(),
        format!("# prng = {PRNG_NAME}"),
        format!("# seed = {}", cfg.seed),
        format!(
            "# reduced_target_diag = [{}]",
            target_diag.iter().map(|x| format!("{x:e}")).collect::<Vec<_>>().join(", ")
        ),
    ];
    lines.extend(cfg.to_config_text().lines().map(|l| format!("# config: {l}")));
    lines
}

fn run_typed<T: Field>(
    cfg: &RunConfig,
    sink: Option<&mut dyn Write>,
    observer: &mut dyn FnMut(&TrajectoryRecord),
) -> LabResult<RunSummary> {
    let started = Instant::now();
    let (mut stack, target) = initial_state::<T>(cfg)?;
    let dyn_cfg = cfg.dyn_config::<T>();
    let target_diag: Vec<f64> = target.diag_values().iter().map(|x| x.as_f64()).collect();

    let mut writer = match sink {
        Some(w) => {
            for line in metadata_lines(cfg, &target_diag) {
                writeln!(w, "{line}")?;
            }
            let mut csv = csv::WriterBuilder::new().from_writer(w);
            csv.write_record(TrajectoryRecord::csv_header(cfg.d))
                .map_err(|e| LabError::Io(e.into()))?;
            Some(csv)
        }
        None => None,
    };
    let mut emit = |rec: &TrajectoryRecord| -> LabResult<()> {
        if let Some(w) = writer.as_mut() {
            w.write_record(rec.csv_fields()).map_err(|e| LabError::Io(e.into()))?;
        }
        observer(rec);
        Ok(())
    };

    let (first, mut track) = monitors::record(0, 0.0, &stack, &target, &dyn_cfg, None);
    emit(&first)?;
    let mut status = RunStatus::BudgetExhausted;
    let mut last = first.clone();
    let mut last_step = 0u64;
    let mut convergence_step = None;
    if !cfg.omit_l_ori && first.l_ori < cfg.eps_conv {
        status = RunStatus::Converged;
        convergence_step = Some(0);
    }

    let mut k = 0u64;
    while status == RunStatus::BudgetExhausted && k < cfg.steps {
        k += 1;
        let next = dynamics::step(&stack, &target, &dyn_cfg);
        let diverged = match &next {
            Ok(s) => !s.is_finite() || !(s.max_layer_norm().as_f64() <= DIVERGENCE_NORM),
            Err(dmf_core::Error::NonFinite) => true,
            Err(_) => false,
        };
        if diverged {
            // Keep the last finite state in the final record.
            if let Ok(s) = next {
                if s.is_finite() {
                    stack = s;
                }
            }
            status = RunStatus::Diverged;
        } else {
            stack = next?;
            if !cfg.omit_l_ori && l_ori(&stack, &target) < cfg.eps_conv {
                status = RunStatus::Converged;
                convergence_step = Some(k);
            }
        }
        if k % cfg.record_stride == 0 || status != RunStatus::BudgetExhausted || k == cfg.steps {
            let time = k as f64 * cfg.step;
            let (rec, t) = monitors::record(k, time, &stack, &target, &dyn_cfg, track.as_ref());
            track = t;
            emit(&rec)?;
            last = rec;
            last_step = k;
        }
    }
    if let Some(w) = writer.as_mut() {
        w.flush()?;
    }
    if status == RunStatus::Diverged {
        log::warn!("seed {}: diverged at step {last_step}", cfg.seed);
    }
    Ok(RunSummary {
        config: cfg.clone(),
        status,
        steps_taken: last_step,
        convergence_step,
        initial_record: first,
        final_record: last,
        wall_time: started.elapsed(),
    })
}

/// Runs `cfg`, streaming CSV to `sink` (if any) and every record to
/// `observer`.
pub fn run_with(
    cfg: &RunConfig,
    sink: Option<&mut dyn Write>,
    observer: &mut dyn FnMut(&TrajectoryRecord),
) -> LabResult<RunSummary> {
    cfg.validate()?;
    match cfg.field {
        FieldTag::Real => run_typed::<f64>(cfg, sink, observer),
        FieldTag::Complex => run_typed::<Complex64>(cfg, sink, observer),
    }
}

/// Runs `cfg` with the CSV collected in memory.
pub fn run_scenario(cfg: &RunConfig) -> LabResult<RunOutput> {
    let mut csv = Vec::new();
    let summary = run_with(cfg, Some(&mut csv), &mut |_| {})?;
    Ok(RunOutput { csv, summary })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Preset;

    fn small(preset: Preset) -> RunConfig {
        RunConfig {
            steps: 50,
            record_stride: 10,
            ..preset.config()
        }
    }

    #[test]
    fn records_at_stride_and_end() {
        let cfg = RunConfig {
            steps: 45,
            ..small(Preset::FigH1)
        };
        let mut steps = Vec::new();
        let s = run_with(&cfg, None, &mut |r| steps.push(r.step)).unwrap();
        assert_eq!(steps, vec![0, 10, 20, 30, 40, 45]);
        assert_eq!(s.status, RunStatus::BudgetExhausted);
        assert_eq!(s.steps_taken, 45);
    }

    #[test]
    fn csv_is_deterministic_and_well_formed() {
        let cfg = small(Preset::FigH2);
        let a = run_scenario(&cfg).unwrap();
        let b = run_scenario(&cfg).unwrap();
        assert_eq!(a.csv, b.csv);
        let text = String::from_utf8(a.csv).unwrap();
        let header = text.lines().find(|l| !l.starts_with('#')).unwrap();
        assert!(header.starts_with("step,time,l_ori"));
        let rows = text.lines().filter(|l| !l.starts_with('#')).count() - 1;
        assert_eq!(rows, 6);
        assert!(text.contains("# seed = 0"));
    }

    #[test]
    fn immediate_convergence_at_optimum() {
        let cfg = RunConfig {
            target: TargetChoice::Identity { scale: 0.0 },
            eps_conv: 1.0,
            ..small(Preset::FigH1)
        };
        let s = run_with(&cfg, None, &mut |_| {}).unwrap();
        assert_eq!(s.status, RunStatus::Converged);
        assert_eq!(s.convergence_step, Some(0));
    }

    #[test]
    fn divergence_is_reported() {
        let cfg = RunConfig {
            step: 50.0,
            epsilon: 1.0,
            init: dmf_core::ensembles::InitKind::RandomGaussian,
            pinned_spectrum: None,
            det_sign: None,
            ..small(Preset::FigH1)
        };
        let s = run_with(&cfg, None, &mut |_| {}).unwrap();
        assert_eq!(s.status, RunStatus::Diverged);
    }

    #[test]
    fn random_target_is_reduced() {
        let cfg = RunConfig {
            target: TargetChoice::RandomGeneral,
            ..small(Preset::FigH1)
        };
        let (_, target) = initial_state::<f64>(&cfg).unwrap();
        assert!(target.reduced);
        let out = run_scenario(&cfg).unwrap();
        assert!(out.summary.final_record.half_sum_sv.is_some());
    }
}
